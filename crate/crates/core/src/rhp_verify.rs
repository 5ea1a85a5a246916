//! Assembly of `Φ(x,λ) = Ψ(x,λ) B(λ) e^{iσ₃√λx}` and numerical checks of
//! the Riemann–Hilbert conditions: jump, determinant, edge behaviour,
//! asymptotics, growth, and the reconstruction of `u`.
//!
//! Real λ with a side is evaluated at `λ ± i0` (signed zero), which gives
//! the one-sided limits exactly because `Y(x,λ)` is entire. Near a Dirichlet
//! eigenvalue with `σ = ±1` the column carrying the pole is fused with the
//! zero of `f^±` so that `Φ` stays finite there.

use crate::branch::{self, Side};
use crate::error::{HillError, Result};
use crate::floquet::{self, AsymptoticReport};
use crate::ode_core::{self, Hill};
use crate::products::{det2, mul2, norm2, Mat2, RHPData};
use crate::C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

pub const JUMP_TOL: f64 = 1e-6;
pub const DET_TOL: f64 = 1e-8;
pub const EDGE_EXPONENT_MAX: f64 = 0.30;
pub const RECONSTRUCTION_TOL: f64 = 1e-3;

/// Distance to `μ` (relative to `max(1,|μ|)`) below which the pole column is
/// evaluated in fused form.
pub const FUSE_REL: f64 = 1e-5;

/// One evaluated `Φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RHPSolutionSample {
    pub x: f64,
    pub t: Option<f64>,
    pub lambda: C64,
    pub side: Option<Side>,
    pub phi: Mat2,
}

/// `e^z − 1` without cancellation for small `z`.
pub fn expm1(z: C64) -> C64 {
    let em = z.re.exp_m1();
    let (s, c) = z.im.sin_cos();
    let cm1 = -2.0 * (0.5 * z.im).sin().powi(2);
    C64::new(em * c + cm1, (em + 1.0) * s)
}

/// `Φ(x, λ)` at several `x` (one monodromy / one Riccati pair for all).
pub fn assemble_phi_at(h: &Hill, rhp: &RHPData, xs: &[f64], lambda: C64, side: Option<Side>) -> Result<Vec<Mat2>> {
    let z = rhp.point(lambda, side, true)?;
    let scalar = rhp.b_scalar(z);
    let fm = rhp.f_function(crate::products::Which::Minus, z);
    let fp_ = rhp.f_function(crate::products::Which::Plus, z);
    let (b11, b22) = (scalar * fm, scalar * fp_);
    if ode_core::needs_scaling(&h.pot, z) {
        // Ψ e^{iσ₃√λx} directly in reduced form.
        let (p, _) = ode_core::bloch_riccati(&h.pot, z, 1, xs, h.tol)?;
        let (m, _) = ode_core::bloch_riccati(&h.pot, z, -1, xs, h.tol)?;
        return Ok(p
            .iter()
            .zip(&m)
            .map(|(p, m)| {
                let (a, b) = (m.reduced.exp(), p.reduced.exp());
                [[b11 * a, b22 * b], [b11 * m.m * a, b22 * p.m * b]]
            })
            .collect());
    }
    let fp = floquet::floquet_point(h, rhp, lambda, side)?;
    let (rho, rho_inv) = (fp.rho, 1.0 / fp.rho);
    // column coefficient·b for ψ = y₁ + c y₂: returns (b, c·b)
    let column = |r: C64, r_inv: C64, b: C64, which: i8| -> Result<(C64, C64)> {
        let near = rhp
            .sdata
            .gaps
            .iter()
            .find(|g| g.sigma == which && (z - g.mu).norm() < FUSE_REL * g.mu.abs().max(1.0));
        match near {
            Some(g) => {
                let t = rhp.period();
                let mut f_red = C64::new(-(t / (g.n as f64 * PI)).powi(2), 0.0);
                for o in rhp.sdata.gaps.iter().filter(|o| o.sigma == which && o.n != g.n) {
                    f_red *= (t / (o.n as f64 * PI)).powi(2) * (o.mu - z);
                }
                let secant = h.monodromy(0.5 * (z + g.mu), true)?.dl()[0][1];
                Ok((b, (r - fp.y1t) * scalar * f_red / secant))
            }
            None => Ok((b, floquet::bloch_coefficient(&fp, r, r_inv) * b)),
        }
    };
    let (bm, cm) = column(rho_inv, rho, b11, -1)?;
    let (bp, cp) = column(rho, rho_inv, b22, 1)?;
    let ys = ode_core::fundamental_matrices(&h.pot, z, xs, false, h.tol)?;
    let sq = branch::sqrt(z);
    Ok(ys
        .iter()
        .zip(xs)
        .map(|(y, &x)| {
            let e1 = (I * sq * x).exp();
            let e2 = (-I * sq * x).exp();
            [
                [(y.y1() * bm + y.y2() * cm) * e1, (y.y1() * bp + y.y2() * cp) * e2],
                [(y.y1p() * bm + y.y2p() * cm) * e1, (y.y1p() * bp + y.y2p() * cp) * e2],
            ]
        })
        .collect())
}

/// `Φ(x, λ)`; real λ on `ℝ⁺` needs a side.
pub fn assemble_phi(h: &Hill, rhp: &RHPData, x: f64, lambda: C64, side: Option<Side>) -> Result<RHPSolutionSample> {
    let phi = assemble_phi_at(h, rhp, &[x], lambda, side)?[0];
    Ok(RHPSolutionSample { x, t: None, lambda, side, phi })
}

/// Kind of a sampled interval of `ℝ⁺`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalKind {
    Band,
    Gap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResidual {
    pub kind: IntervalKind,
    pub lo: f64,
    pub hi: f64,
    pub max_residual: f64,
    pub worst_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpReport {
    pub x: f64,
    pub t: Option<f64>,
    pub intervals: Vec<IntervalResidual>,
    pub band_max: f64,
    pub gap_max: f64,
    pub passed: bool,
}

/// Bands and gaps of `ℝ⁺` up to `E_{2g} + tail_len`, as in the jump check.
pub fn sample_intervals(rhp: &RHPData, tail_len: f64) -> Vec<(IntervalKind, f64, f64)> {
    let e = rhp.edges();
    let mut out = Vec::new();
    for j in 1..e.len() {
        let kind = if j % 2 == 1 { IntervalKind::Band } else { IntervalKind::Gap };
        out.push((kind, e[j - 1], e[j]));
    }
    let last = *e.last().unwrap();
    out.push((IntervalKind::Band, last, last + tail_len));
    out
}

/// Interior sample points of `(lo, hi)` away from the endpoints.
pub fn interior_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| lo + (hi - lo) * (j as f64 + 0.5) / n as f64).collect()
}

/// `‖Φ₊ − Φ₋V‖ / ‖Φ₋‖` at one real λ. `jump` supplies `V`.
pub fn jump_residual(
    plus: &Mat2,
    minus: &Mat2,
    v: &Mat2,
) -> f64 {
    let mv = mul2(minus, v);
    let mut d = *plus;
    for i in 0..2 {
        for j in 0..2 {
            d[i][j] -= mv[i][j];
        }
    }
    norm2(&d) / norm2(minus)
}

/// Checks `Φ₊ = Φ₋V` on every band and gap (and a stretch of the last band)
/// with `samples` points per interval.
pub fn verify_jump(h: &Hill, rhp: &RHPData, x: f64, samples: usize, tail_len: f64) -> Result<JumpReport> {
    let intervals: Vec<IntervalResidual> = sample_intervals(rhp, tail_len)
        .par_iter()
        .map(|&(kind, lo, hi)| -> Result<IntervalResidual> {
            let mut worst = (0.0f64, lo);
            for lam in interior_points(lo, hi, samples) {
                let z = C64::new(lam, 0.0);
                let p = assemble_phi_at(h, rhp, &[x], z, Some(Side::Plus))?[0];
                let m = assemble_phi_at(h, rhp, &[x], z, Some(Side::Minus))?[0];
                let r = jump_residual(&p, &m, &rhp.jump_v(x, lam)?);
                if !(r <= worst.0) {
                    worst = (r, lam);
                }
            }
            Ok(IntervalResidual { kind, lo, hi, max_residual: worst.0, worst_lambda: worst.1 })
        })
        .collect::<Result<_>>()?;
    Ok(JumpReport::new(x, None, intervals))
}

impl JumpReport {
    pub fn new(x: f64, t: Option<f64>, intervals: Vec<IntervalResidual>) -> Self {
        let max_of = |k: IntervalKind| {
            intervals.iter().filter(|i| i.kind == k).map(|i| i.max_residual).fold(0.0, f64::max)
        };
        let band_max = max_of(IntervalKind::Band);
        let gap_max = max_of(IntervalKind::Gap);
        let passed = intervals.iter().all(|i| i.max_residual <= JUMP_TOL);
        Self { x, t, intervals, band_max, gap_max, passed }
    }
}

/// `max |det Φ − 1|` over the given off-axis points.
pub fn verify_det(h: &Hill, rhp: &RHPData, x: f64, lambdas: &[C64]) -> Result<f64> {
    let devs = lambdas
        .par_iter()
        .map(|&l| Ok((det2(&assemble_phi_at(h, rhp, &[x], l, None)?[0]) - 1.0).norm()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(devs.into_iter().fold(0.0, f64::max))
}

/// `E = M⁻¹ Φ B⁻¹ − I` with `M = [[1, 1], [−i√λ, i√λ]]`.
pub fn asymptotic_defect(h: &Hill, rhp: &RHPData, x: f64, lambda: C64) -> Result<Mat2> {
    let phi = assemble_phi_at(h, rhp, &[x], lambda, None)?[0];
    let z = rhp.point(lambda, None, true)?;
    let scalar = rhp.b_scalar(z);
    let b = [
        scalar * rhp.f_function(crate::products::Which::Minus, z),
        scalar * rhp.f_function(crate::products::Which::Plus, z),
    ];
    let k = branch::sqrt(z);
    let mut pb = phi;
    for row in pb.iter_mut() {
        row[0] /= b[0];
        row[1] /= b[1];
    }
    // M⁻¹ = 1/(2i√λ) [[i√λ, −1], [i√λ, 1]]
    let d = 1.0 / (2.0 * I * k);
    let minv = [[d * I * k, -d], [d * I * k, d]];
    let mut e = mul2(&minv, &pb);
    e[0][0] -= ONE;
    e[1][1] -= ONE;
    Ok(e)
}

/// Checks that `‖E(λ)‖·|√λ|` stays bounded along `ray`.
pub fn verify_asymptotics(h: &Hill, rhp: &RHPData, x: f64, ray: &[C64]) -> Result<AsymptoticReport> {
    let scaled = ray
        .par_iter()
        .map(|&l| Ok(norm2(&asymptotic_defect(h, rhp, x, l)?) * l.norm().sqrt()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(AsymptoticReport::from_residuals(ray.to_vec(), scaled, 0.25))
}

/// Geometric ray `|λ| ∈ [r0, r1]` at angle `theta`.
pub fn ray(theta: f64, r0: f64, r1: f64, n: usize) -> Vec<C64> {
    (0..n)
        .map(|j| {
            let r = r0 * (r1 / r0).powf(j as f64 / (n - 1).max(1) as f64);
            C64::from_polar(r, theta)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub edge: f64,
    pub distances: Vec<f64>,
    pub max_entries: Vec<f64>,
    /// `α` in `max|φ_ij| ~ |λ − E|^{−α}`.
    pub exponent: f64,
    pub passed: bool,
}

/// Fits the growth exponent of `Φ` approaching the edge `E_j` from the
/// upper half plane along the direction `e^{iπ/4}`.
pub fn verify_edge_singularity(h: &Hill, rhp: &RHPData, x: f64, j: usize) -> Result<EdgeReport> {
    let e = *rhp
        .edges()
        .get(j)
        .ok_or_else(|| HillError::Invalid(format!("edge index {j} out of range")))?;
    let scale = e.abs().max(1.0);
    let dir = C64::from_polar(1.0, PI / 4.0);
    let distances: Vec<f64> = (0..8).map(|k| 1e-2 * scale * 0.25f64.powi(k)).collect();
    let max_entries = distances
        .iter()
        .map(|&d| {
            let phi = assemble_phi_at(h, rhp, &[x], e + dir * d, None)?[0];
            Ok(phi.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    // least squares slope of log max vs log d over the four closest points
    let pts: Vec<(f64, f64)> = distances.iter().zip(&max_entries).skip(4).map(|(d, m)| (d.ln(), m.ln())).collect();
    let exponent = -slope(&pts);
    Ok(EdgeReport { edge: e, distances, max_entries, exponent, passed: exponent <= EDGE_EXPONENT_MAX })
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Polynomial extrapolation to `h = 0` (Neville), returning the estimate and
/// the spread of the last two diagonal entries.
pub fn neville_at_zero(hs: &[C64], vals: &[C64]) -> (C64, f64) {
    let n = hs.len();
    let mut p: Vec<C64> = vals.to_vec();
    let mut diag = vec![p[n - 1]];
    for m in 1..n {
        for i in (m..n).rev() {
            p[i] = (hs[i] * p[i - 1] - hs[i - m] * p[i]) / (hs[i] - hs[i - m]);
        }
        diag.push(p[n - 1]);
    }
    let spread = if n > 1 { (diag[n - 1] - diag[n - 2]).norm() } else { f64::INFINITY };
    (p[n - 1], spread)
}

/// `L(x, λ) = √λ (1 − φ₁₁/b₁₁)` at `x ± δ` from the first row of `Φ`.
fn first_row_l(h: &Hill, rhp: &RHPData, xs: &[f64], lambda: C64) -> Result<Vec<C64>> {
    let z = rhp.point(lambda, None, true)?;
    let k = branch::sqrt(z);
    if ode_core::needs_scaling(&h.pot, z) {
        let (m, _) = ode_core::bloch_riccati(&h.pot, z, -1, xs, h.tol)?;
        return Ok(m.iter().map(|m| -k * expm1(m.reduced)).collect());
    }
    let b11 = rhp.b_scalar(z) * rhp.f_function(crate::products::Which::Minus, z);
    let phi = assemble_phi_at(h, rhp, xs, lambda, None)?;
    Ok(phi.iter().map(|p| k * (1.0 - p[0][0] / b11)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub x: f64,
    pub u: f64,
    /// Imaginary part left after extrapolation (should vanish).
    pub imag: f64,
    pub spread: f64,
}

/// `u(x) = 2i ∂_x lim_{λ→∞} √λ (1 − φ₁₁(x,λ)/b₁₁(λ))`, with the limit taken
/// by Neville extrapolation in `1/√λ` along `ray` and the derivative by a
/// central difference with step `1e-4·T`.
pub fn reconstruct_potential(h: &Hill, rhp: &RHPData, x: f64, ray: &[C64]) -> Result<Reconstruction> {
    let d = 1e-4 * h.period();
    let us = ray
        .par_iter()
        .map(|&l| {
            let v = first_row_l(h, rhp, &[x - d, x + d], l)?;
            Ok(2.0 * I * (v[1] - v[0]) / (2.0 * d))
        })
        .collect::<Result<Vec<C64>>>()?;
    let hs: Vec<C64> = ray.iter().map(|&l| 1.0 / branch::sqrt(l)).collect();
    let (u, spread) = neville_at_zero(&hs, &us);
    if !(spread <= 1e-2 * u.norm().max(1.0)) {
        return Err(HillError::ExtrapolationDiverged { spread });
    }
    Ok(Reconstruction { x, u: u.re, imag: u.im, spread })
}

/// Default reconstruction ray: `arg λ = π`, `|λ| = 10²·4^j`, `j = 0..5`.
pub fn default_reconstruction_ray() -> Vec<C64> {
    (0..6).map(|j| C64::new(-1e2 * 4f64.powi(j), 0.0)).collect()
}

/// First rows of `Φ` and `[[1,0],[α,1]]Φ`; their distance (zero by
/// construction) and the reconstructions from both.
pub fn uniqueness_surrogate(h: &Hill, rhp: &RHPData, x: f64, lambda: C64, alpha: C64) -> Result<f64> {
    let phi = assemble_phi_at(h, rhp, &[x], lambda, None)?[0];
    let lower = [[ONE, ZERO], [alpha, ONE]];
    let other = mul2(&lower, &phi);
    Ok((other[0][0] - phi[0][0]).norm() + (other[0][1] - phi[0][1]).norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub radii: Vec<f64>,
    /// `max log max(1,|φ_ij|) / |λ|` on each circle.
    pub rates: Vec<f64>,
    pub passed: bool,
}

/// Sanity check of `|φ_ij| ≤ C e^{c|λ|}` on circles avoiding the real axis.
pub fn growth_sanity(h: &Hill, rhp: &RHPData, x: f64, radii: &[f64], n_angles: usize) -> Result<GrowthReport> {
    let rates = radii
        .par_iter()
        .map(|&r| {
            let mut worst = 0.0f64;
            for j in 0..n_angles {
                let th = 0.1 + (2.0 * PI - 0.2) * j as f64 / (n_angles - 1).max(1) as f64;
                if (th - PI).abs() < 1e-12 || th.sin().abs() < 0.05 {
                    continue;
                }
                let phi = assemble_phi_at(h, rhp, &[x], C64::from_polar(r, th), None)?[0];
                let m = phi.iter().flatten().map(|z| z.norm()).fold(1.0, f64::max);
                worst = worst.max(m.ln() / r);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    let passed = rates.iter().all(|r| r.is_finite() && *r <= 1.0);
    Ok(GrowthReport { radii: radii.to_vec(), rates, passed })
}

/// Everything `verify-rhp` reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhpReport {
    pub jump: Vec<JumpReport>,
    pub det_max: f64,
    pub asymptotics: AsymptoticReport,
    pub edges: Vec<EdgeReport>,
    pub reconstruction: Vec<Reconstruction>,
    pub reconstruction_max_error: f64,
    pub growth: GrowthReport,
    pub passed: bool,
}

/// Runs every check at the given `x` positions.
pub fn verify_all(h: &Hill, rhp: &RHPData, xs: &[f64], samples: usize) -> Result<RhpReport> {
    let t = h.period();
    let span = (rhp.edges().last().unwrap() - rhp.edges()[0]).max(10.0);
    let jump = xs.iter().map(|&x| verify_jump(h, rhp, x, samples, span)).collect::<Result<Vec<_>>>()?;
    let x0 = xs.first().copied().unwrap_or(0.3 * t);
    let offaxis: Vec<C64> = (0..12)
        .map(|j| {
            let th = 0.2 + 0.5 * j as f64;
            C64::from_polar(0.5 + 3.0 * j as f64, th) + rhp.edges()[0]
        })
        .filter(|l| l.im.abs() > 1e-3)
        .collect();
    let det_max = verify_det(h, rhp, x0, &offaxis)?;
    let asymptotics = verify_asymptotics(h, rhp, x0, &ray(PI, 1e2, 1e6, 9))?;
    let edges = (0..rhp.edges().len())
        .map(|j| verify_edge_singularity(h, rhp, x0, j))
        .collect::<Result<Vec<_>>>()?;
    let rray = default_reconstruction_ray();
    let reconstruction = (0..8)
        .map(|j| reconstruct_potential(h, rhp, t * j as f64 / 8.0, &rray))
        .collect::<Result<Vec<_>>>()?;
    let reconstruction_max_error =
        reconstruction.iter().map(|r| (r.u - h.pot.eval(r.x)).abs()).fold(0.0, f64::max);
    let growth = growth_sanity(h, rhp, x0, &[5.0, 50.0, 500.0], 16)?;
    let passed = jump.iter().all(|j| j.passed)
        && det_max <= DET_TOL
        && asymptotics.passed
        && edges.iter().all(|e| e.passed)
        && reconstruction_max_error <= RECONSTRUCTION_TOL
        && growth.passed;
    Ok(RhpReport { jump, det_max, asymptotics, edges, reconstruction, reconstruction_max_error, growth, passed })
}
