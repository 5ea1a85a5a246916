//! Complete elliptic integrals by the arithmetic–geometric mean, Jacobi
//! elliptic functions, and the Lamé potentials used as exactly solvable
//! one- and two-gap test cases.

use crate::ode_core::PeriodicPotential;
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// `K(m)` and `E(m)` for parameter `m = k²`, `0 ≤ m < 1`.
pub fn complete_ke(m: f64) -> (f64, f64) {
    assert!((0.0..1.0).contains(&m), "parameter out of range: {m}");
    let mut a = 1.0;
    let mut b = (1.0 - m).sqrt();
    let mut c = m.sqrt();
    let mut sum = 0.5 * c * c;
    let mut pow = 0.5;
    for _ in 0..64 {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        c = 0.5 * (a - b);
        a = an;
        b = bn;
        pow *= 2.0;
        sum += pow * c * c;
        if c.abs() < 1e-15 * a {
            break;
        }
    }
    let k = PI / (2.0 * a);
    (k, k * (1.0 - sum))
}

pub fn complete_k(m: f64) -> f64 {
    complete_ke(m).0
}

/// Nome `q = exp(-π K'/K)`.
pub fn nome(m: f64) -> f64 {
    (-PI * complete_k(1.0 - m) / complete_k(m)).exp()
}

/// `(sn, cn, dn)(u | m)` by descending Landen transformation.
pub fn jacobi_sn_cn_dn(u: f64, m: f64) -> (f64, f64, f64) {
    if m < 1e-300 {
        return (u.sin(), u.cos(), 1.0);
    }
    let mut a = vec![1.0];
    let mut c = vec![m.sqrt()];
    let mut b = (1.0 - m).sqrt();
    while c.last().unwrap().abs() > 1e-15 * a.last().unwrap() && a.len() < 40 {
        let an = *a.last().unwrap();
        let cn = 0.5 * (an - b);
        let bn = (an * b).sqrt();
        a.push(0.5 * (an + b));
        c.push(cn);
        b = bn;
    }
    let n = a.len() - 1;
    let mut phi = (1u64 << n) as f64 * a[n] * u;
    for j in (1..=n).rev() {
        phi = 0.5 * (phi + (c[j] / a[j] * phi.sin()).asin());
    }
    let (s, co) = phi.sin_cos();
    (s, co, (1.0 - m * s * s).sqrt())
}

/// `k² sn²(s | m)` as a Fourier series on its period `2K`, rescaled to period `t`:
/// returns the non-negative modes of `x ↦ α² k² sn²(αx)`, `α = 2K/t`.
fn k2sn2_modes(m: f64, t: f64, kmax: usize) -> Vec<C64> {
    let (kk, ee) = complete_ke(m);
    let q = nome(m);
    let alpha = 2.0 * kk / t;
    let a2 = alpha * alpha;
    let mut out = vec![C64::new(a2 * (1.0 - ee / kk), 0.0)];
    for n in 1..=kmax {
        let qn = q.powi(n as i32);
        let c = -(PI * PI / (kk * kk)) * n as f64 * qn / (1.0 - qn * qn);
        if c.abs() * a2 < 1e-30 {
            break;
        }
        out.push(C64::new(a2 * c, 0.0));
    }
    out
}

/// One-gap Lamé potential `2α²k²sn²(αx)` with period `t`.
///
/// Band edges are `α²·{m, 1, 1+m}`; the single gap is the first
/// (antiperiodic) one.
pub fn lame1(m: f64, t: f64) -> (PeriodicPotential, Vec<f64>) {
    let modes: Vec<C64> = k2sn2_modes(m, t, 128).into_iter().map(|c| 2.0 * c).collect();
    let a2 = (2.0 * complete_k(m) / t).powi(2);
    (PeriodicPotential::new(t, modes).unwrap(), vec![a2 * m, a2, a2 * (1.0 + m)])
}

/// Two-gap Lamé potential `6α²k²sn²(αx)` with period `t` and its five edges.
pub fn lame2(m: f64, t: f64) -> (PeriodicPotential, Vec<f64>) {
    let modes: Vec<C64> = k2sn2_modes(m, t, 128).into_iter().map(|c| 6.0 * c).collect();
    let a2 = (2.0 * complete_k(m) / t).powi(2);
    let r = (1.0 - m + m * m).sqrt();
    let edges = vec![
        2.0 + 2.0 * m - 2.0 * r,
        1.0 + m,
        1.0 + 4.0 * m,
        4.0 + m,
        2.0 + 2.0 * m + 2.0 * r,
    ];
    (PeriodicPotential::new(t, modes).unwrap(), edges.into_iter().map(|e| a2 * e).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agm_values() {
        // K(1/2) = Γ(1/4)² / (4√π)
        let (k, e) = complete_ke(0.5);
        assert!((k - 1.854_074_677_301_372).abs() < 1e-14);
        assert!((e - 1.350_643_881_047_675).abs() < 1e-14, "{k} {e}");
        let (k0, e0) = complete_ke(0.0);
        assert!((k0 - PI / 2.0).abs() < 1e-15 && (e0 - PI / 2.0).abs() < 1e-15);
        // Legendre relation E K' + E' K - K K' = π/2
        let m = 0.3;
        let (k, e) = complete_ke(m);
        let (kp, ep) = complete_ke(1.0 - m);
        assert!((e * kp + ep * k - k * kp - PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_identities() {
        let m = 0.7;
        let k = complete_k(m);
        let (s, c, d) = jacobi_sn_cn_dn(k, m);
        assert!((s - 1.0).abs() < 1e-12 && c.abs() < 1e-7 && (d - (1.0 - m).sqrt()).abs() < 1e-12);
        for &u in &[0.1, 0.9, 2.3] {
            let (s, c, _) = jacobi_sn_cn_dn(u, m);
            assert!((s * s + c * c - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn lame_series_matches_sn() {
        let m = 0.5;
        let t = PI;
        let (p, _) = lame1(m, t);
        let alpha = 2.0 * complete_k(m) / t;
        for j in 0..13 {
            let x = 0.23 * j as f64;
            let (s, _, _) = jacobi_sn_cn_dn(alpha * x, m);
            let direct = 2.0 * alpha * alpha * m * s * s;
            assert!((p.eval(x) - direct).abs() < 1e-12, "x={x}");
        }
    }
}
