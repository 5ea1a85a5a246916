//! Theta-function description of finite-gap data.
//!
//! Curve `w² = λ ∏_{k=1}^{2g} (λ − E_k)` with `E₀ = 0 < E₁ < … < E_{2g}`
//! (edges are shifted so that `E₀ = 0`; the shift is added back to `u`).
//! Sheet 1 is `w = √λ ∏ √(λ − E_k)` with the `[0, 2π)` root: it is
//! continuous across the gaps and changes sign across the bands.
//!
//! Homology basis:
//!
//! ```text
//!            b_j (sheet 1, counter-clockwise)
//!      .-----------------------------.
//!     (  [E0 E1]  [E2 E3] … [E_{2j−2} E_{2j−1}]  )  ( E_{2j−1} ~~a_j~~ E_{2j} )
//!      '-----------------------------'
//! ```
//!
//! `a_j` is the lift of the `j`-th gap (out along sheet 1, back along
//! sheet 2); `b_j` encircles the bands below it. Then every a-period is
//! imaginary, every b-period real, and `τ` is real and negative definite.
//!
//! Abel maps are based at the branch point `E₀`; the Baker–Akhiezer
//! function and the Its–Matveev formula are evaluated at base point `∞`
//! through the base-independent combination `A(p) − A(𝒫) − K`, with the
//! second-kind integrals regularised at `∞` (`∫ω⁽¹⁾ = √λ + O(λ^{-1/2})`).

use crate::branch::{self, Side};
use crate::error::{HillError, Result};
use crate::spectrum::SpectralData;
use crate::quad;
use crate::C64;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Chebyshev nodes per segment for the period integrals.
pub const DEFAULT_NODES: usize = 256;
/// Relative tolerance of the theta lattice-sum tail.
pub const THETA_TAIL: f64 = 1e-12;
/// Largest lattice (points) the theta sum may use.
const MAX_LATTICE: usize = 4_000_000;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn horner(p: &[C64], x: C64) -> C64 {
    p.iter().rev().fold(C64::new(0.0, 0.0), |acc, &a| acc * x + a)
}

/// Hyperelliptic curve with its periods, normalised differentials and the
/// data entering the theta formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperellipticData {
    /// Original lowest edge (subtracted from `edges`).
    pub shift: f64,
    /// `0 = E₀ < E₁ < … < E_{2g}`.
    pub edges: Vec<f64>,
    pub genus: usize,
    pub nodes: usize,
    /// `a_periods[k][j] = ∮_{a_j} λ^k dλ/w`, `k ≤ g + 1`.
    pub a_periods: Vec<Vec<C64>>,
    /// `b_periods[k][j] = ∮_{b_j} λ^k dλ/w`.
    pub b_periods: Vec<Vec<C64>>,
    /// `ω_i = Σ_k omega_norm[i][k] λ^k dλ/w`, `∮_{a_j} ω_i = 2πi δ_ij`.
    pub omega_norm: Vec<Vec<C64>>,
    pub tau: Vec<Vec<C64>>,
    /// Numerator coefficients of `ω⁽¹⁾` (degree `g`) and `ω⁽³⁾` (degree `g+1`).
    pub omega1_poly: Vec<C64>,
    pub omega3_poly: Vec<C64>,
    /// `Ω⁽¹⁾_j = ∮_{b_j} ω⁽¹⁾`, `Ω⁽³⁾_j = ∮_{b_j} ω⁽³⁾` (real).
    pub omega1: Vec<f64>,
    pub omega3: Vec<f64>,
    /// Riemann constants for base point `E₀`.
    pub k: Vec<C64>,
    /// `A(∞)` for base point `E₀` (along the negative axis).
    pub a_inf: Vec<C64>,
    /// Regularised `∫_{E₀}^{∞} ω⁽¹⁾`, `∫_{E₀}^{∞} ω⁽³⁾` (vanish for real curves).
    pub reg_inf: [C64; 2],
    /// Its–Matveev constant (normalised curve).
    pub c: f64,
    /// Pole divisor `(μ_k, sheet)`, `μ_k` in the closure of gap `k`.
    pub divisor: Vec<(f64, i8)>,
    /// `A(𝒫)` (base `E₀`).
    pub a_divisor: Vec<C64>,
}

/// Builds the curve with [`DEFAULT_NODES`] and the divisor at the lower
/// gap edges (sheet 1).
pub fn build_curve(edges: &[f64]) -> Result<HyperellipticData> {
    build_curve_with(edges, DEFAULT_NODES)
}

pub fn build_curve_with(edges: &[f64], nodes: usize) -> Result<HyperellipticData> {
    if edges.is_empty() || edges.len() % 2 == 0 {
        return Err(HillError::Invalid("a hyperelliptic curve needs 2g + 1 edges".into()));
    }
    let shift = edges[0];
    let e: Vec<f64> = edges.iter().map(|x| x - shift).collect();
    let scale = e.last().copied().unwrap_or(0.0).max(1.0);
    if let Some(w) = e.windows(2).find(|w| !(w[1] - w[0] > 1e-10 * scale)) {
        return Err(HillError::DegenerateCurve { a: w[0] + shift, b: w[1] + shift });
    }
    let g = (e.len() - 1) / 2;
    let mut h = HyperellipticData {
        shift,
        edges: e,
        genus: g,
        nodes,
        a_periods: vec![],
        b_periods: vec![],
        omega_norm: vec![],
        tau: vec![],
        omega1_poly: vec![],
        omega3_poly: vec![],
        omega1: vec![],
        omega3: vec![],
        k: vec![],
        a_inf: vec![],
        reg_inf: [C64::new(0.0, 0.0); 2],
        c: 0.0,
        divisor: vec![],
        a_divisor: vec![],
    };
    // segment integrals of the monomials λ^k, k ≤ g+1
    let seg: Vec<Vec<C64>> = (0..2 * g)
        .map(|i| (0..=g + 1).map(|k| h.segment(i, &monomial(k))).collect())
        .collect();
    h.a_periods = (0..=g + 1).map(|k| (1..=g).map(|j| 2.0 * seg[2 * j - 1][k]).collect()).collect();
    h.b_periods = (0..=g + 1)
        .map(|k| (1..=g).map(|j| -2.0 * (0..j).map(|m| seg[2 * m][k]).sum::<C64>()).collect())
        .collect();
    if g > 0 {
        let am = DMatrix::from_fn(g, g, |k, j| h.a_periods[k][j]);
        let inv = am.try_inverse().ok_or_else(|| singular("a-period matrix"))?;
        let cm = inv * (2.0 * PI * I);
        h.omega_norm = (0..g).map(|i| (0..g).map(|k| cm[(i, k)]).collect()).collect();
        h.tau = (0..g)
            .map(|i| (0..g).map(|j| (0..g).map(|k| h.omega_norm[i][k] * h.b_periods[k][j]).sum()).collect())
            .collect();
    }
    let s1: f64 = h.edges.iter().sum();
    let mut p1 = vec![C64::new(0.0, 0.0); g + 1];
    p1[g] = c(0.5);
    let mut p3 = vec![C64::new(0.0, 0.0); g + 2];
    p3[g + 1] = c(1.5);
    p3[g] = c(-0.75 * s1);
    for p in [&mut p1, &mut p3] {
        if g == 0 {
            break;
        }
        // kill the a-periods with the holomorphic part
        let am = DMatrix::from_fn(g, g, |j, k| h.a_periods[k][j]);
        let rhs = nalgebra::DVector::from_fn(g, |j, _| {
            -(g..p.len()).map(|k| p[k] * h.a_periods[k][j]).sum::<C64>()
        });
        let sol = am.lu().solve(&rhs).ok_or_else(|| singular("second-kind normalisation"))?;
        for k in 0..g {
            p[k] = sol[k];
        }
    }
    h.omega1 = (0..g).map(|j| (0..=g).map(|k| p1[k] * h.b_periods[k][j]).sum::<C64>().re).collect();
    h.omega3 = (0..g).map(|j| (0..=g + 1).map(|k| p3[k] * h.b_periods[k][j]).sum::<C64>().re).collect();
    h.c = if g == 0 { 0.0 } else { 4.0 * p1[g - 1].re + s1 };
    h.omega1_poly = p1;
    h.omega3_poly = p3;
    h.k = riemann_constants_closed(&h);
    h.a_inf = (0..g).map(|i| h.to_infinity(&h.omega_norm[i].clone(), 0)).collect();
    h.reg_inf = [h.to_infinity(&h.omega1_poly.clone(), 1), h.to_infinity(&h.omega3_poly.clone(), 3)];
    let lower: Vec<(f64, i8)> = (1..=g).map(|j| (h.edges[2 * j - 1], 1)).collect();
    h.set_divisor(lower)?;
    Ok(h)
}

fn singular(what: &str) -> HillError {
    HillError::LinearSolveSingular { what: what.into() }
}

fn monomial(k: usize) -> Vec<C64> {
    let mut p = vec![C64::new(0.0, 0.0); k + 1];
    p[k] = c(1.0);
    p
}

impl HyperellipticData {
    fn e(&self) -> &[f64] {
        &self.edges
    }

    /// `w` on sheet 1.
    pub fn w(&self, lambda: C64) -> C64 {
        self.e().iter().map(|&e| branch::sqrt(lambda - e)).product()
    }

    /// `√|∏_{e ∉ skip}(λ − e)|` and the number of edges above `λ`.
    fn reduced_abs(&self, lambda: f64, skip: &[usize]) -> f64 {
        self.e()
            .iter()
            .enumerate()
            .filter(|(i, _)| !skip.contains(i))
            .map(|(_, &e)| (lambda - e).abs())
            .product::<f64>()
            .sqrt()
    }

    /// Phase of `w` on the upper/lower side of segment `(E_i, E_{i+1})`
    /// (`i = 2g` is the last band): `w = phase · √|P|`.
    fn phase(&self, i: usize, side: Side) -> C64 {
        let up = I.powi((2 * self.genus - i) as i32);
        match side {
            Side::Plus => up,
            Side::Minus => up * (if (i + 1) % 2 == 0 { 1.0 } else { -1.0 }),
        }
    }

    /// `∫_{E_i}^{E_{i+1}} p(λ) dλ / w₊(λ)` (Gauss–Chebyshev).
    fn segment(&self, i: usize, p: &[C64]) -> C64 {
        let (a, b) = (self.e()[i], self.e()[i + 1]);
        let ph = self.phase(i, Side::Plus);
        quad::gauss_chebyshev(a, b, self.nodes, |l| horner(p, c(l)) / (ph * self.reduced_abs(l, &[i, i + 1])))
    }

    fn segment_side(&self, i: usize, p: &[C64], side: Side) -> C64 {
        let v = self.segment(i, p);
        if side == Side::Minus && (i + 1) % 2 == 1 {
            -v
        } else {
            v
        }
    }

    /// `∫_{E_i}^{λ} p dζ / w_side` for `λ` in segment `i`.
    fn partial(&self, i: usize, lambda: f64, p: &[C64], side: Side) -> C64 {
        let a = self.e()[i];
        let d = lambda - a;
        if d <= 0.0 {
            return C64::new(0.0, 0.0);
        }
        let ph = self.phase(i, side);
        let r = d.sqrt();
        quad::gauss_kronrod(0.0, 1.0, 1e-14, |s| {
            let z = a + d * s * s;
            2.0 * r * horner(p, c(z)) / (ph * self.reduced_abs(z, &[i]))
        })
    }

    /// `∫_{E₀}^{λ} p dζ / w` on sheet 1: straight segment off the positive
    /// axis, along the chosen side of the real axis otherwise.
    pub fn integral(&self, lambda: C64, side: Option<Side>, p: &[C64]) -> C64 {
        if lambda.im != 0.0 || lambda.re < 0.0 {
            let k = branch::sqrt(lambda);
            let rest = &self.e()[1..];
            return quad::gauss_kronrod(0.0, 1.0, 1e-14, |s| {
                let z = lambda * s * s;
                2.0 * k * horner(p, z) / rest.iter().map(|&e| branch::sqrt(z - e)).product::<C64>()
            });
        }
        let side = side.unwrap_or(Side::Plus);
        let l = lambda.re;
        let seg = self.e().iter().rposition(|&e| e <= l).unwrap_or(0);
        let mut s: C64 = (0..seg).map(|i| self.segment_side(i, p, side)).sum();
        s += self.partial(seg, l, p, side);
        s
    }

    /// `∫_{E₀}^{∞} p/w` along the negative axis, minus `∫ d√λ^reg`
    /// (`reg ∈ {0, 1, 3}`). With `λ = −s²` the regularised integrand is an
    /// even series `Σ a_m s^{-2m}` for `s² > E_{2g}`; it is integrated
    /// numerically up to `S` and term by term beyond.
    fn to_infinity(&self, p: &[C64], reg: i32) -> C64 {
        let g = self.genus;
        let ph = I.powi(2 * g as i32 + 1);
        let rest = &self.e()[1..];
        let f = |s: f64| -> C64 {
            let v = s * s;
            let den: f64 = rest.iter().map(|&e| (v + e).sqrt()).product();
            // λ = −s², dλ = −2s ds, w = ph·s·den
            let f = -2.0 * horner(p, c(-v)) / (ph * den);
            // d/ds of (i s)^reg
            f - match reg {
                1 => I,
                3 => -3.0 * I * v,
                _ => C64::new(0.0, 0.0),
            }
        };
        let top = self.e().last().copied().unwrap_or(0.0);
        let big = 3.0 * top.sqrt() + 1.0;
        let head = quad::gauss_kronrod(0.0, big, 1e-14, f);
        // ∏(1 + e x)^{-1/2} = Σ π_n xⁿ, x = 1/v
        const TERMS: usize = 80;
        let mut pi = vec![0.0; TERMS + p.len() + 1];
        pi[0] = 1.0;
        for &e in rest {
            let mut b = vec![0.0; pi.len()];
            b[0] = 1.0;
            for n in 1..b.len() {
                b[n] = b[n - 1] * (-0.5 - (n - 1) as f64) / n as f64 * e;
            }
            let mut out = vec![0.0; pi.len()];
            for i in 0..pi.len() {
                for j in 0..pi.len() - i {
                    out[i + j] += pi[i] * b[j];
                }
            }
            pi = out;
        }
        // coefficient of v^{-m}: −2/ph Σ_k p_k (−1)^k π_{k−g+m}
        let mut tail = C64::new(0.0, 0.0);
        for m in 1..=TERMS {
            let mut a = C64::new(0.0, 0.0);
            for (k, &pk) in p.iter().enumerate() {
                let n = k as i64 - g as i64 + m as i64;
                if n >= 0 && (n as usize) < pi.len() {
                    a += pk * if k % 2 == 0 { 1.0 } else { -1.0 } * pi[n as usize];
                }
            }
            tail += -2.0 / ph * a * big.powi(1 - 2 * m as i32) / (2 * m - 1) as f64;
        }
        head + tail
    }

    /// Abel map `A(p)` (base `E₀`) of `p = (λ, sheet)`.
    pub fn abel(&self, lambda: C64, sheet: i8, side: Option<Side>) -> Vec<C64> {
        let s = if sheet < 0 { -1.0 } else { 1.0 };
        self.omega_norm.iter().map(|om| s * self.integral(lambda, side, om)).collect()
    }

    /// Regularised `∫_∞^p ω⁽¹⁾` and `∫_∞^p ω⁽³⁾`.
    pub fn second_kind_at(&self, lambda: C64, sheet: i8, side: Option<Side>) -> (C64, C64) {
        let s = if sheet < 0 { -1.0 } else { 1.0 };
        (
            s * self.integral(lambda, side, &self.omega1_poly) - self.reg_inf[0],
            s * self.integral(lambda, side, &self.omega3_poly) - self.reg_inf[1],
        )
    }

    /// Abel image of a gap point `(μ, sheet)` in gap `j` (1-based).
    fn abel_gap_point(&self, mu: f64, sheet: i8) -> Vec<C64> {
        self.abel(c(mu), sheet, Some(Side::Plus))
    }

    /// Installs the pole divisor `(μ_k, sheet_k)`, one point per gap.
    pub fn set_divisor(&mut self, divisor: Vec<(f64, i8)>) -> Result<()> {
        if divisor.len() != self.genus {
            return Err(HillError::Invalid(format!("divisor needs {} points", self.genus)));
        }
        for (j, &(mu, _)) in divisor.iter().enumerate() {
            let (a, b) = (self.e()[2 * j + 1], self.e()[2 * j + 2]);
            if !(mu >= a - 1e-12 && mu <= b + 1e-12) {
                return Err(HillError::Invalid(format!("divisor point {mu} is not in gap {}", j + 1)));
            }
        }
        let mut acc = vec![C64::new(0.0, 0.0); self.genus];
        for &(mu, s) in &divisor {
            for (a, v) in acc.iter_mut().zip(self.abel_gap_point(mu, s)) {
                *a += v;
            }
        }
        self.divisor = divisor;
        self.a_divisor = acc;
        Ok(())
    }

    /// Curve and divisor of resolved spectral data: the nondegenerate edges
    /// and `(μ_{n_k}, σ_{n_k})` (sheet 1 for `σ = 0`).
    pub fn from_spectral(sd: &SpectralData) -> Result<Self> {
        let edges: Vec<f64> = sd.edges.iter().map(|e| e + sd.shift).collect();
        let mut h = build_curve(&edges)?;
        let div = sd.gaps.iter().map(|g| (g.mu, if g.sigma < 0 { -1 } else { 1 })).collect();
        h.set_divisor(div)?;
        Ok(h)
    }

    /// `A(∞) − A(𝒫) − K`: the theta argument of the Its–Matveev formula at
    /// `x = t = 0`.
    pub fn z_infinity(&self) -> Vec<C64> {
        (0..self.genus).map(|j| self.a_inf[j] - self.a_divisor[j] - self.k[j]).collect()
    }

    /// `‖C·A − 2πi I‖_max`.
    pub fn normalization_residual(&self) -> f64 {
        let g = self.genus;
        let mut r: f64 = 0.0;
        for i in 0..g {
            for j in 0..g {
                let v: C64 = (0..g).map(|k| self.omega_norm[i][k] * self.a_periods[k][j]).sum();
                let want = if i == j { 2.0 * PI * I } else { C64::new(0.0, 0.0) };
                r = r.max((v - want).norm());
            }
        }
        r
    }

    /// `max_j |∮_{a_j} ω⁽¹⁾|, |∮_{a_j} ω⁽³⁾|`.
    pub fn second_kind_residual(&self) -> f64 {
        (0..self.genus)
            .map(|j| {
                let a1: C64 = (0..=self.genus).map(|k| self.omega1_poly[k] * self.a_periods[k][j]).sum();
                let a3: C64 = (0..=self.genus + 1).map(|k| self.omega3_poly[k] * self.a_periods[k][j]).sum();
                a1.norm().max(a3.norm())
            })
            .fold(0.0, f64::max)
    }

    pub fn symmetry_residual(&self) -> f64 {
        let g = self.genus;
        (0..g)
            .flat_map(|i| (0..g).map(move |j| (i, j)))
            .map(|(i, j)| (self.tau[i][j] - self.tau[j][i]).norm())
            .fold(0.0, f64::max)
    }

    pub fn theta(&self) -> Result<Theta> {
        Theta::new(&self.tau)
    }
}

/// `K_j = (2πi + τ_jj)/2 − Σ_{ℓ≠j} A_j(E_{2ℓ−1})`: the Riemann constants
/// after the inner integral along `a_ℓ` is done in closed form (the
/// forward and return legs of `a_ℓ` cancel it).
fn riemann_constants_closed(h: &HyperellipticData) -> Vec<C64> {
    let g = h.genus;
    let lower: Vec<Vec<C64>> = (1..=g).map(|l| h.abel(c(h.edges[2 * l - 1]), 1, Some(Side::Plus))).collect();
    (0..g)
        .map(|j| {
            let mut k = 0.5 * (2.0 * PI * I + h.tau[j][j]);
            for l in (0..g).filter(|&l| l != j) {
                k -= lower[l][j];
            }
            k
        })
        .collect()
}

/// `K_j = (2πi + τ_jj)/2 − (1/2πi) Σ_{ℓ≠j} ∮_{a_ℓ} ω_ℓ(p) ∫_{E₀}^p ω_j` by
/// nested quadrature: Chebyshev nodes along both legs of `a_ℓ`, the inner
/// Abel integral from `E₀` to each node.
pub fn riemann_constants(h: &HyperellipticData, nodes: usize) -> Vec<C64> {
    let g = h.genus;
    (0..g)
        .map(|j| {
            let mut k = 0.5 * (2.0 * PI * I + h.tau[j][j]);
            for l in (0..g).filter(|&l| l != j) {
                let seg = 2 * l + 1;
                let (a, b) = (h.edges[seg], h.edges[seg + 1]);
                let ph = h.phase(seg, Side::Plus);
                let om_l = &h.omega_norm[l];
                let om_j = &h.omega_norm[j];
                let base = h.integral(c(a), Some(Side::Plus), om_j);
                let full = h.segment(seg, om_j);
                // out on sheet 1: A = base + F(λ); back on sheet 2 with the
                // orientation reversed: A = base + 2F(b) − F(λ), ω_ℓ → −ω_ℓ
                let v = quad::gauss_chebyshev(a, b, nodes, |lam| {
                    let f = h.partial(seg, lam, om_j, Side::Plus);
                    let w_l = horner(om_l, c(lam)) / (ph * h.reduced_abs(lam, &[seg, seg + 1]));
                    w_l * ((base + f) + (base + 2.0 * full - f))
                });
                k -= v / (2.0 * PI * I);
            }
            k
        })
        .collect()
}

/// `(Ω⁽¹⁾, Ω⁽³⁾)`.
pub fn second_kind_periods(h: &HyperellipticData) -> (Vec<f64>, Vec<f64>) {
    (h.omega1.clone(), h.omega3.clone())
}

/// Lattice sum `θ(z) = Σ_m exp(⟨m,z⟩ + ½⟨m,τm⟩)` with a rigorous tail bound.
#[derive(Debug, Clone)]
pub struct Theta {
    g: usize,
    tau: Vec<Vec<C64>>,
    re_inv: DMatrix<f64>,
    lam_min: f64,
    pub start_cutoff: usize,
}

/// Lattice sums weighted by powers of `⟨m,v⟩` and `⟨m,w⟩`, divided by
/// `e^{log_scale}`.
#[derive(Debug, Clone)]
pub struct ThetaSums {
    pub log_scale: f64,
    /// `s[a][b] = Σ ⟨m,v⟩^a ⟨m,w⟩^b e^{…}`.
    pub s: Vec<Vec<C64>>,
    /// `Σ |e^{…}|` (same scaling).
    pub abs_sum: f64,
    pub cutoff: usize,
}

impl ThetaSums {
    pub fn theta(&self) -> C64 {
        self.s[0][0] * self.log_scale.exp()
    }
    pub fn log_theta(&self) -> C64 {
        self.s[0][0].ln() + self.log_scale
    }
}

impl Theta {
    pub fn new(tau: &[Vec<C64>]) -> Result<Self> {
        let g = tau.len();
        let re = DMatrix::from_fn(g, g, |i, j| 0.5 * (tau[i][j].re + tau[j][i].re));
        let eig = SymmetricEigen::new(-re.clone());
        let lam_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(lam_min > 0.0) {
            return Err(HillError::Invalid("Re τ is not negative definite".into()));
        }
        let re_inv = re.try_inverse().ok_or_else(|| singular("Re τ"))?;
        Ok(Self { g, tau: tau.to_vec(), re_inv, lam_min, start_cutoff: 2 })
    }

    /// `θ(z)`.
    pub fn eval(&self, z: &[C64]) -> Result<C64> {
        Ok(self.sums(z, &[], &[], 0, 0)?.theta())
    }

    /// Weighted sums up to `⟨m,v⟩^{av} ⟨m,w⟩^{aw}`.
    pub fn sums(&self, z: &[C64], v: &[C64], w: &[C64], av: usize, aw: usize) -> Result<ThetaSums> {
        let g = self.g;
        if g == 0 {
            let mut s = vec![vec![C64::new(0.0, 0.0); aw + 1]; av + 1];
            s[0][0] = c(1.0);
            return Ok(ThetaSums { log_scale: 0.0, s, abs_sum: 1.0, cutoff: 0 });
        }
        // centre the lattice on the dominant term
        let rz = nalgebra::DVector::from_fn(g, |i, _| z[i].re);
        let mstar = -(&self.re_inv * &rz);
        let m0: Vec<i64> = mstar.iter().map(|x| x.round() as i64).collect();
        let y: f64 = (0..g)
            .map(|i| {
                let v = rz[i] + (0..g).map(|j| self.tau[i][j].re * m0[j] as f64).sum::<f64>();
                v * v
            })
            .sum::<f64>()
            .sqrt();
        let m0n = m0.iter().map(|&m| (m * m) as f64).sum::<f64>().sqrt();
        let dnorm = v.iter().chain(w.iter()).map(|x| x.norm()).fold(1.0, f64::max);
        let amax = (av + aw) as i32;
        let gf = g as f64;
        let tail = |r: usize| -> f64 {
            let mut t = 0.0;
            let mut k = r + 1;
            loop {
                let kf = k as f64;
                let rad = kf.max(y / self.lam_min);
                let shell = (2.0 * kf + 1.0).powi(g as i32) - (2.0 * kf - 1.0).powi(g as i32);
                let poly = ((m0n + gf.sqrt() * kf) * dnorm).max(1.0).powi(amax);
                let term = shell * poly * (rad * y - 0.5 * self.lam_min * rad * rad).exp();
                t += term;
                if term < 1e-30 * t.max(1e-300) || k > r + 400 {
                    break;
                }
                k += 1;
            }
            t
        };
        let mut r = self.start_cutoff;
        loop {
            if (2 * r + 1).pow(g as u32) > MAX_LATTICE {
                return Err(HillError::CutoffExplosion { limit: MAX_LATTICE });
            }
            if tail(r) < THETA_TAIL {
                break;
            }
            r += 1;
        }
        // the centre term has relative size 1, so a tail below THETA_TAIL
        // is below THETA_TAIL · Σ|terms|
        let n = 2 * r + 1;
        let total = n.pow(g as u32);
        let mut exps = Vec::with_capacity(total);
        let mut ms = Vec::with_capacity(total);
        let mut idx = vec![0usize; g];
        for _ in 0..total {
            let m: Vec<f64> = (0..g).map(|i| (m0[i] + idx[i] as i64 - r as i64) as f64).collect();
            let mut e: C64 = (0..g).map(|i| z[i] * m[i]).sum();
            for i in 0..g {
                for j in 0..g {
                    e += 0.5 * m[i] * self.tau[i][j] * m[j];
                }
            }
            exps.push(e);
            ms.push(m);
            for d in idx.iter_mut() {
                *d += 1;
                if *d < n {
                    break;
                }
                *d = 0;
            }
        }
        let log_scale = exps.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
        let mut s = vec![vec![C64::new(0.0, 0.0); aw + 1]; av + 1];
        let mut abs_sum = 0.0;
        for (e, m) in exps.iter().zip(&ms) {
            let t = (e - log_scale).exp();
            abs_sum += t.norm();
            let mv: C64 = if v.is_empty() { C64::new(0.0, 0.0) } else { (0..g).map(|i| v[i] * m[i]).sum() };
            let mw: C64 = if w.is_empty() { C64::new(0.0, 0.0) } else { (0..g).map(|i| w[i] * m[i]).sum() };
            let mut pv = c(1.0);
            for row in s.iter_mut() {
                let mut pw = c(1.0);
                for cell in row.iter_mut() {
                    *cell += t * pv * pw;
                    pw *= mw;
                }
                pv *= mv;
            }
        }
        Ok(ThetaSums { log_scale, s, abs_sum, cutoff: r })
    }
}

/// `θ(z; τ)` for the curve's Riemann matrix.
pub fn theta(z: &[C64], h: &HyperellipticData) -> Result<C64> {
    h.theta()?.eval(z)
}

/// Log-derivatives `∂^k log f` (k = 1..=n) from `f^{(k)}/f`.
fn log_derivs(r: &[C64]) -> Vec<C64> {
    // r[k] = f^{(k)}/f, r[0] = 1; g^{(n)} = r_n − Σ_{k=0}^{n−2} C(n−1,k) g^{(k+1)} r_{n−1−k}
    let n = r.len() - 1;
    let mut gd = vec![C64::new(0.0, 0.0); n + 1];
    for m in 1..=n {
        let mut v = r[m];
        let mut binom = 1.0;
        for k in 0..m - 1 {
            v -= binom * gd[k + 1] * r[m - 1 - k];
            binom = binom * (m - 1 - k) as f64 / (k + 1) as f64;
        }
        gd[m] = v;
    }
    gd
}

/// `u` and the derivatives entering the KdV residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdvJet {
    pub u: f64,
    pub u_x: f64,
    pub u_xxx: f64,
    pub u_t: f64,
}

/// The normalised potential `u − λ₀` solves KdV in the frame `x + 6λ₀t`.
fn frame(h: &HyperellipticData, x: f64, t: f64) -> f64 {
    x + 6.0 * h.shift * t
}

fn theta_arg(h: &HyperellipticData, x: f64, t: f64) -> (Vec<C64>, Vec<C64>, Vec<C64>) {
    let x = frame(h, x, t);
    let v: Vec<C64> = h.omega1.iter().map(|&o| I * o).collect();
    let w: Vec<C64> = h.omega3.iter().map(|&o| 4.0 * I * o).collect();
    let z: Vec<C64> = h.z_infinity().iter().enumerate().map(|(j, &z)| z + v[j] * x + w[j] * t).collect();
    (z, v, w)
}

/// Relative size below which θ on the Its–Matveev line counts as zero.
pub const THETA_ZERO_TOL: f64 = 1e-10;

/// `u(x,t) = −2 ∂ₓ² log θ(iΩ⁽¹⁾x + 4iΩ⁽³⁾t + A(∞) − A(𝒫) − K) + c`, with the
/// jet `u_x`, `u_xxx`, `u_t` by term-wise differentiation of the lattice sum.
pub fn its_matveev_jet(h: &HyperellipticData, theta: &Theta, x: f64, t: f64) -> Result<KdvJet> {
    let (z, v, w) = theta_arg(h, x, t);
    let s = theta.sums(&z, &v, &w, 5, 1)?;
    if s.s[0][0].norm() < THETA_ZERO_TOL * s.abs_sum {
        return Err(HillError::ThetaZero { value: s.theta().norm() });
    }
    let f0 = s.s[0][0];
    let r: Vec<C64> = (0..=5).map(|a| s.s[a][0] / f0).collect();
    let gx = log_derivs(&r);
    // ∂_t ∂_x² log F
    let (ft, ftx, ftxx) = (s.s[0][1] / f0, s.s[1][1] / f0, s.s[2][1] / f0);
    let (fx, fxx) = (r[1], r[2]);
    let g_txx = ftxx - (2.0 * ftx * fx + ft * fxx) + 2.0 * ft * fx * fx;
    let base = h.c + h.shift;
    let u_x = (-2.0 * gx[3]).re;
    Ok(KdvJet { u: (-2.0 * gx[2]).re + base, u_x, u_xxx: (-2.0 * gx[5]).re, u_t: (-2.0 * g_txx).re + 6.0 * h.shift * u_x })
}

pub fn its_matveev_u(h: &HyperellipticData, x: f64, t: f64) -> Result<f64> {
    Ok(its_matveev_jet(h, &h.theta()?, x, t)?.u)
}

/// `u_t − 6uu_x + u_xxx`.
pub fn kdv_residual(j: &KdvJet) -> f64 {
    j.u_t - 6.0 * j.u * j.u_x + j.u_xxx
}

/// `ψ̆` and its first two `x` log-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BakerAkhiezer {
    pub psi: C64,
    pub log_psi: C64,
    /// `ψ̆ₓ/ψ̆`.
    pub dlog: C64,
    /// `ψ̆ₓₓ/ψ̆`.
    pub d2_over: C64,
}

/// Baker–Akhiezer function at `p = (λ, sheet)` (`λ` in the normalised
/// plane, `x` in the frame `x + 6λ₀t`):
/// `exp(i x ∫_∞^p ω⁽¹⁾ + 4i t ∫_∞^p ω⁽³⁾) θ(Z(p) + V)θ(Z(∞)) / (θ(Z(p))θ(Z(∞) + V))`
/// with `Z(q) = A(q) − A(𝒫) − K`, `V = iΩ⁽¹⁾x + 4iΩ⁽³⁾t`.
pub fn baker_akhiezer_full(
    h: &HyperellipticData,
    theta: &Theta,
    x: f64,
    t: f64,
    lambda: C64,
    sheet: i8,
    side: Option<Side>,
) -> Result<BakerAkhiezer> {
    for (j, &(mu, s)) in h.divisor.iter().enumerate() {
        let on_edge = mu == h.edges[2 * j + 1] || mu == h.edges[2 * j + 2];
        if (lambda - mu).norm() < 1e-8 * mu.abs().max(1.0) && (s == sheet || on_edge) {
            return Err(HillError::OnPoleDivisor);
        }
    }
    let g = h.genus;
    let ap = h.abel(lambda, sheet, side);
    let zinf = h.z_infinity();
    let zp: Vec<C64> = (0..g).map(|j| ap[j] - h.a_divisor[j] - h.k[j]).collect();
    let x = frame(h, x, t);
    let v: Vec<C64> = h.omega1.iter().map(|&o| I * o).collect();
    let w: Vec<C64> = h.omega3.iter().map(|&o| 4.0 * I * o).collect();
    let shift = |z: &[C64]| -> Vec<C64> { (0..g).map(|j| z[j] + v[j] * x + w[j] * t).collect() };
    let num = theta.sums(&shift(&zp), &v, &[], 2, 0)?;
    let den = theta.sums(&shift(&zinf), &v, &[], 2, 0)?;
    let n0 = theta.sums(&zp, &[], &[], 0, 0)?;
    let d0 = theta.sums(&zinf, &[], &[], 0, 0)?;
    if n0.s[0][0].norm() < THETA_ZERO_TOL * n0.abs_sum {
        return Err(HillError::OnPoleDivisor);
    }
    if den.s[0][0].norm() < THETA_ZERO_TOL * den.abs_sum {
        return Err(HillError::ThetaZero { value: den.theta().norm() });
    }
    let (r1, r3) = h.second_kind_at(lambda, sheet, side);
    let log_psi = I * x * r1 + 4.0 * I * t * r3 + num.log_theta() + d0.log_theta() - n0.log_theta() - den.log_theta();
    let ln: Vec<C64> = (0..=2).map(|a| num.s[a][0] / num.s[0][0]).collect();
    let ld: Vec<C64> = (0..=2).map(|a| den.s[a][0] / den.s[0][0]).collect();
    let (gn, gd) = (log_derivs(&ln), log_derivs(&ld));
    let d1 = I * r1 + gn[1] - gd[1];
    let d2 = gn[2] - gd[2];
    Ok(BakerAkhiezer { psi: log_psi.exp(), log_psi, dlog: d1, d2_over: d2 + d1 * d1 })
}

pub fn baker_akhiezer(h: &HyperellipticData, x: f64, t: f64, lambda: C64, sheet: i8) -> Result<C64> {
    Ok(baker_akhiezer_full(h, &h.theta()?, x, t, lambda, sheet, None)?.psi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Periodicity {
    Space,
    Time,
}

/// Outcome of the commensurability search and, when a period exists, the
/// checks on `r = exp(i f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityCertificate {
    pub which: Periodicity,
    /// The phases searched (`Ω⁽¹⁾` or `4Ω⁽³⁾`).
    pub phases: Vec<f64>,
    pub period: Option<f64>,
    /// `phase_j · T / 2π`.
    pub integers: Vec<i64>,
    pub integer_residual: f64,
    /// `max |r₊ r₋ − 1|` on band samples.
    pub jump_residual: f64,
    /// `|log r(λ) − i T √λ^{1 or 3}| · |√λ|` along the test ray.
    pub asymptotic: Vec<f64>,
}

/// Best rational approximation `p/q` of `x` with `q ≤ qmax` (continued
/// fractions), if within `tol`.
fn rational(x: f64, qmax: i64, tol: f64) -> Option<(i64, i64)> {
    let (mut h0, mut h1, mut k0, mut k1) = (0i64, 1i64, 1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        let (h2, k2) = (a as i64 * h1 + h0, a as i64 * k1 + k0);
        if k2 > qmax {
            return None;
        }
        if (x - h2 as f64 / k2 as f64).abs() <= tol * x.abs().max(1.0) {
            return Some((h2, k2));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac.abs() < 1e-300 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Absolute tolerance on `phase_j T / 2π` being an integer. Any ratio has
/// rational approximations with error `1/q²`, so the ratio test alone
/// accepts generic phases at large `q`; the integers themselves must then
/// also be close.
pub const INTEGER_TOL: f64 = 1e-6;

/// Largest denominator of the commensurability search.
pub const MAX_DENOMINATOR: i64 = 1_000_000;

/// Smallest `T > 0` with `phase_j T / 2π ∈ ℤ` for every `j` (denominators up
/// to [`MAX_DENOMINATOR`], tolerance `tol`); with it, `r(λ) = e^{iT∫ω}` is
/// checked for `r₊r₋ = 1` on the bands and for its large-λ behaviour.
pub fn periodicity_certificates(h: &HyperellipticData, which: Periodicity, tol: f64) -> PeriodicityCertificate {
    let phases: Vec<f64> = match which {
        Periodicity::Space => h.omega1.clone(),
        Periodicity::Time => h.omega3.iter().map(|o| 4.0 * o).collect(),
    };
    let mut cert = PeriodicityCertificate {
        which,
        phases: phases.clone(),
        period: None,
        integers: vec![],
        integer_residual: f64::NAN,
        jump_residual: f64::NAN,
        asymptotic: vec![],
    };
    if phases.is_empty() || phases[0] == 0.0 {
        return cert;
    }
    let mut q_all = 1i64;
    for &p in &phases[1..] {
        match rational(p / phases[0], MAX_DENOMINATOR, tol) {
            Some((_, q)) => {
                q_all = q_all / gcd(q_all, q) * q;
                if q_all > MAX_DENOMINATOR {
                    return cert;
                }
            }
            None => return cert,
        }
    }
    let period = 2.0 * PI * q_all as f64 / phases[0].abs();
    let ints: Vec<f64> = phases.iter().map(|p| p * period / (2.0 * PI)).collect();
    cert.integers = ints.iter().map(|v| v.round() as i64).collect();
    cert.integer_residual = ints.iter().map(|v| (v - v.round()).abs()).fold(0.0, f64::max);
    if cert.integer_residual > INTEGER_TOL {
        return cert;
    }
    cert.period = Some(period);
    let r_log = |lambda: C64, side: Option<Side>| -> C64 {
        let (r1, r3) = h.second_kind_at(lambda, 1, side);
        match which {
            Periodicity::Space => I * period * r1,
            Periodicity::Time => 4.0 * I * period * r3,
        }
    };
    let mut jr: f64 = 0.0;
    let e = &h.edges;
    let mut bands: Vec<f64> = (0..=h.genus - 1 + 1).filter(|m| 2 * m + 1 < e.len()).flat_map(|m| {
        let (a, b) = (e[2 * m], e[2 * m + 1]);
        [a + 0.3 * (b - a), a + 0.77 * (b - a)]
    }).collect();
    let top = *e.last().unwrap();
    bands.extend([top + 0.5, top + 3.0, top + 17.0]);
    for lam in bands {
        let s = r_log(c(lam), Some(Side::Plus)) + r_log(c(lam), Some(Side::Minus));
        jr = jr.max((s.exp() - 1.0).norm());
    }
    cert.jump_residual = jr;
    let p = match which {
        Periodicity::Space => 1,
        Periodicity::Time => 3,
    };
    cert.asymptotic = (0..6)
        .map(|j| {
            let lam = C64::new(-10.0 * 4f64.powi(j), 0.0);
            let k = branch::sqrt(lam);
            let want = match p {
                1 => I * period * k,
                _ => 4.0 * I * period * k * k * k,
            };
            (r_log(lam, None) - want).norm() * k.norm()
        })
        .collect();
    cert
}

/// Edges of a genus-1 curve with given `E₁/E₂` ratio: `{0, m, 1}` scaled.
pub fn genus1_tau_oracle(a: f64, b: f64) -> f64 {
    // τ = −2π K(a/b)/K(1 − a/b)
    let m = a / b;
    -2.0 * PI * crate::elliptic::complete_k(m) / crate::elliptic::complete_k(1.0 - m)
}
