//! Quadrature rules shared by the period, Abel-map and time integrals.

use num_complex::Complex64 as C64;

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `∫_a^b f` by `n`-point Gauss–Legendre.
pub fn gl_integrate<F: FnMut(f64) -> C64>(a: f64, b: f64, n: usize, mut f: F) -> C64 {
    let (x, w) = gauss_legendre(n);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        s += f(c + h * x[i]) * w[i];
    }
    s * h
}

/// Nodes of the first-kind Gauss–Chebyshev rule on `[a, b]`:
/// `∫_a^b g(λ) dλ / √((λ-a)(b-λ)) ≈ (π/n) Σ g(λ_k)`.
pub fn chebyshev_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| {
            let t = ((2 * k - 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos();
            0.5 * (a + b) + 0.5 * (b - a) * t
        })
        .collect()
}

pub fn gauss_chebyshev<F: FnMut(f64) -> C64>(a: f64, b: f64, n: usize, mut g: F) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for l in chebyshev_nodes(a, b, n) {
        s += g(l);
    }
    s * (std::f64::consts::PI / n as f64)
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: FnMut(f64) -> C64>(a: f64, b: f64, f: &mut F) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += s * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    (k * h, ((k - g) * h).norm())
}

/// Subintervals examined before the remaining ones are accepted as they are
/// (guards against integrands whose noise sits above the tolerance).
const GK_BUDGET: usize = 4000;

/// Adaptive Gauss–Kronrod (7/15) with absolute/relative tolerance.
pub fn gauss_kronrod<F: FnMut(f64) -> C64>(a: f64, b: f64, tol: f64, f: F) -> C64 {
    gauss_kronrod_floor(a, b, tol, 0.0, f)
}

/// As [`gauss_kronrod`], additionally accepting a subinterval once its error
/// estimate is below its share of `floor` (the integrand's own noise level
/// integrated over `[a, b]`).
pub fn gauss_kronrod_floor<F: FnMut(f64) -> C64>(a: f64, b: f64, tol: f64, floor: f64, mut f: F) -> C64 {
    let mut stack = vec![(a, b, 0usize)];
    let mut total = C64::new(0.0, 0.0);
    let mut seen = 0usize;
    while let Some((l, r, depth)) = stack.pop() {
        let (v, err) = gk15(l, r, &mut f);
        seen += 1;
        let scale = tol * v.norm().max(1.0) * ((r - l) / (b - a)).abs().max(1e-3);
        let share = floor * ((r - l) / (b - a)).abs();
        if err <= scale || err <= share || depth > 40 || seen > GK_BUDGET {
            total += v;
        } else {
            let m = 0.5 * (l + r);
            stack.push((l, m, depth + 1));
            stack.push((m, r, depth + 1));
        }
    }
    total
}
