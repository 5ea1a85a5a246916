//! Discriminant, multiplier, Bloch–Floquet solutions and asymptotic checks.
//!
//! `Δ` always comes from the ODE. The sign of `√(Δ²−4)` is taken from the
//! product representation in [`RHPData`], which fixes the branch on the
//! whole of `ℂ ∖ σ(L)` including one-sided values on the bands. For
//! `Im√λ·T` large everything is routed through the Riccati form so that no
//! exponentially large entry is ever formed.

use crate::branch::{self, Side};
use crate::error::{HillError, Result};
use crate::ode_core::{self, Hill};
use crate::products::RHPData;
use crate::quad;
use crate::C64;
use serde::{Deserialize, Serialize};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Floquet quantities at one λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloquetPoint {
    pub lambda: C64,
    pub delta: C64,
    /// `|ρ| < 1` off the spectrum.
    pub rho: C64,
    pub sqrt_disc: C64,
    pub y1t: C64,
    pub y2t: C64,
    pub y1pt: C64,
    pub y2pt: C64,
}

/// `Δ(λ) = y₁(T,λ) + y₂'(T,λ)`.
pub fn discriminant(h: &Hill, lambda: C64) -> Result<C64> {
    Ok(h.monodromy(lambda, false)?.trace())
}

/// `(Δ, Δ')` with `Δ' = ∂_λ Δ` from the variational system.
pub fn discriminant_with_derivative(h: &Hill, lambda: C64) -> Result<(C64, C64)> {
    let m = h.monodromy(lambda, true)?;
    let d = m.dl();
    Ok((m.trace(), d[0][0] + d[1][1]))
}

/// `ρ` from `Δ` and the branch of `√(Δ²−4)`, choosing the cancellation-free
/// form (`ρ = (Δ−s)/2` or `2/(Δ+s)`).
pub fn rho_from(delta: C64, s: C64) -> C64 {
    if (delta + s).norm() >= (delta - s).norm() {
        2.0 / (delta + s)
    } else {
        0.5 * (delta - s)
    }
}

/// Picks `±√(Δ²−4)` closest to `hint`, or with `|ρ| ≤ 1` when no hint.
fn oriented_root(delta: C64, hint: Option<C64>) -> C64 {
    let s = (delta * delta - 4.0).sqrt();
    match hint {
        Some(p) => {
            if (s - p).norm() <= (s + p).norm() {
                s
            } else {
                -s
            }
        }
        None => {
            if (delta + s).norm() >= (delta - s).norm() {
                s
            } else {
                -s
            }
        }
    }
}

/// `√(Δ²−4)` on the product branch (positive below `λ₀`).
pub fn sqrt_discriminant(rhp: &RHPData, lambda: C64, side: Option<Side>) -> Result<C64> {
    rhp.sqrt_disc(lambda, side)
}

fn side_point(rhp: &RHPData, lambda: C64, side: Option<Side>) -> Result<()> {
    // the same checks as the products (edges, band interiors without a side)
    rhp.sqrt_disc(lambda, side).map(|_| ())
}

/// Full Floquet point. In the scaled regime `Δ` and `s` may overflow; use
/// [`log_multiplier`] there.
pub fn floquet_point(h: &Hill, rhp: &RHPData, lambda: C64, side: Option<Side>) -> Result<FloquetPoint> {
    let hint = rhp.sqrt_disc(lambda, side)?;
    let m = h.monodromy(lambda, false)?;
    let delta = m.trace();
    let s = oriented_root(delta, Some(hint));
    Ok(FloquetPoint {
        lambda,
        delta,
        rho: rho_from(delta, s),
        sqrt_disc: s,
        y1t: m.y1(),
        y2t: m.y2(),
        y1pt: m.y1p(),
        y2pt: m.y2p(),
    })
}

/// `ρ(λ)`; on a band a side selects the boundary value.
pub fn multiplier(h: &Hill, rhp: &RHPData, lambda: C64, side: Option<Side>) -> Result<C64> {
    if ode_core::needs_scaling(&h.pot, lambda) {
        side_point(rhp, lambda, side)?;
        let (_, l) = ode_core::bloch_riccati(&h.pot, lambda, 1, &[], h.tol)?;
        return Ok(l.exp());
    }
    Ok(floquet_point(h, rhp, lambda, side)?.rho)
}

/// `ρ` off the real axis without product data (the `|ρ| < 1` root).
pub fn multiplier_offaxis(h: &Hill, lambda: C64) -> Result<C64> {
    if ode_core::needs_scaling(&h.pot, lambda) {
        let (_, l) = ode_core::bloch_riccati(&h.pot, lambda, 1, &[], h.tol)?;
        return Ok(l.exp());
    }
    let delta = discriminant(h, lambda)?;
    Ok(rho_from(delta, oriented_root(delta, None)))
}

/// `(ψ⁻, ψ⁺, ψ⁻', ψ⁺')` at `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochValues {
    pub psi_minus: C64,
    pub psi_plus: C64,
    pub dpsi_minus: C64,
    pub dpsi_plus: C64,
}

impl BlochValues {
    /// `ψ⁻ψ⁺' − ψ⁻'ψ⁺`.
    pub fn wronskian(&self) -> C64 {
        self.psi_minus * self.dpsi_plus - self.dpsi_minus * self.psi_plus
    }
}

/// Coefficient `m` in `ψ = y₁ + m y₂` for the eigenvalue `r` of the
/// monodromy (`r_inv = 1/r`), using the better conditioned row.
pub(crate) fn bloch_coefficient(fp: &FloquetPoint, r: C64, r_inv: C64) -> C64 {
    let d1 = fp.y2t;
    let d2 = r_inv - fp.y1t;
    if d1.norm() >= d2.norm() {
        (r - fp.y1t) / d1
    } else {
        -fp.y1pt / d2
    }
}

fn check_dirichlet_pole(rhp: &RHPData, lambda: C64) -> Result<()> {
    for g in &rhp.sdata.gaps {
        if g.sigma != 0 && (lambda - g.mu).norm() < branch::collar(lambda) {
            let column = if g.sigma > 0 { "psi_plus" } else { "psi_minus" };
            return Err(HillError::NearDirichletPole { n: g.n, column });
        }
    }
    Ok(())
}

/// Bloch–Floquet solutions `ψ^± = y₁ + ((ρ^{±1} − y₁(T))/y₂(T)) y₂` at
/// several `x`, normalised by `ψ^±(0) = 1`.
pub fn bloch_solutions_at(
    h: &Hill,
    rhp: &RHPData,
    xs: &[f64],
    lambda: C64,
    side: Option<Side>,
) -> Result<Vec<BlochValues>> {
    check_dirichlet_pole(rhp, lambda)?;
    if ode_core::needs_scaling(&h.pot, lambda) {
        side_point(rhp, lambda, side)?;
        return bloch_scaled(h, xs, lambda);
    }
    let fp = floquet_point(h, rhp, lambda, side)?;
    bloch_from_point(h, &fp, xs)
}

fn bloch_from_point(h: &Hill, fp: &FloquetPoint, xs: &[f64]) -> Result<Vec<BlochValues>> {
    let rho_inv = 1.0 / fp.rho;
    let mp = bloch_coefficient(fp, fp.rho, rho_inv);
    let mm = bloch_coefficient(fp, rho_inv, fp.rho);
    let ys = ode_core::fundamental_matrices(&h.pot, fp.lambda, xs, false, h.tol)?;
    Ok(ys
        .iter()
        .map(|y| BlochValues {
            psi_minus: y.y1() + mm * y.y2(),
            psi_plus: y.y1() + mp * y.y2(),
            dpsi_minus: y.y1p() + mm * y.y2p(),
            dpsi_plus: y.y1p() + mp * y.y2p(),
        })
        .collect())
}

fn bloch_scaled(h: &Hill, xs: &[f64], lambda: C64) -> Result<Vec<BlochValues>> {
    let (p, _) = ode_core::bloch_riccati(&h.pot, lambda, 1, xs, h.tol)?;
    let (m, _) = ode_core::bloch_riccati(&h.pot, lambda, -1, xs, h.tol)?;
    Ok(p.iter()
        .zip(&m)
        .map(|(p, m)| {
            let (a, b) = (m.log_psi.exp(), p.log_psi.exp());
            BlochValues { psi_minus: a, psi_plus: b, dpsi_minus: m.m * a, dpsi_plus: p.m * b }
        })
        .collect())
}

/// Single-point form of [`bloch_solutions_at`].
pub fn bloch_solutions(h: &Hill, rhp: &RHPData, x: f64, lambda: C64, side: Option<Side>) -> Result<BlochValues> {
    Ok(bloch_solutions_at(h, rhp, &[x], lambda, side)?[0])
}

/// Off-axis Bloch solutions without product data.
pub fn bloch_solutions_offaxis(h: &Hill, xs: &[f64], lambda: C64) -> Result<Vec<BlochValues>> {
    if ode_core::needs_scaling(&h.pot, lambda) {
        return bloch_scaled(h, xs, lambda);
    }
    let m = h.monodromy(lambda, false)?;
    let delta = m.trace();
    let s = oriented_root(delta, None);
    let fp = FloquetPoint {
        lambda,
        delta,
        rho: rho_from(delta, s),
        sqrt_disc: s,
        y1t: m.y1(),
        y2t: m.y2(),
        y1pt: m.y1p(),
        y2pt: m.y2p(),
    };
    bloch_from_point(h, &fp, xs)
}

/// `log ρ(λ) = −∫ Δ'/√(Δ²−4)`, continued from a real base point below the
/// spectrum along a path in the half plane of λ (or of the chosen side).
pub fn log_multiplier(h: &Hill, rhp: &RHPData, lambda: C64, side: Option<Side>) -> Result<C64> {
    let eps = branch::collar(lambda);
    let e0 = rhp.sdata.lambda_seq[0];
    if lambda.im.abs() <= eps && lambda.re > e0 && side.is_none() {
        return Err(HillError::PathCrossesSpectrum { at: lambda.re });
    }
    side_point(rhp, lambda, side)?;
    if ode_core::needs_scaling(&h.pot, lambda) {
        return Ok(ode_core::bloch_riccati(&h.pot, lambda, 1, &[], h.tol)?.1);
    }
    let base = C64::new(e0 - 1.0, 0.0);
    let rho_b = multiplier(h, rhp, base, None)?;
    let start = C64::new(rho_b.re.ln(), 0.0);
    if lambda.im.abs() <= eps && lambda.re <= e0 {
        // real and below the spectrum: ρ is real and positive
        return Ok(C64::new(multiplier(h, rhp, lambda, None)?.re.ln(), 0.0));
    }
    let up = match side {
        Some(s) if lambda.im.abs() <= eps => s.sign(),
        _ => lambda.im.signum(),
    };
    let integrand = |z: C64| -> Result<C64> {
        let (d, dd) = discriminant_with_derivative(h, z)?;
        let s = oriented_root(d, Some(rhp.sqrt_disc(z, None)?));
        Ok(-dd / s)
    };
    let mut err = None;
    let mut seg = |a: C64, b: C64| -> C64 {
        let dz = b - a;
        quad::gauss_kronrod(0.0, 1.0, 1e-12, |t| match integrand(a + dz * t) {
            Ok(v) => v * dz,
            Err(e) => {
                err.get_or_insert(e);
                C64::new(0.0, 0.0)
            }
        })
    };
    let total = if lambda.im.abs() > eps {
        seg(base, lambda)
    } else {
        // base → base ± iH → λ ± iH → λ
        let hgt = C64::new(0.0, up * (1.0 + 0.25 * (lambda.re - base.re).abs()));
        let target = C64::new(lambda.re, 0.0);
        seg(base, base + hgt) + seg(base + hgt, target + hgt) + seg(target + hgt, target)
    };
    if let Some(e) = err {
        return Err(e);
    }
    Ok(start + total)
}

/// Growth diagnostics for an asymptotic expansion along a ray.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub lambdas: Vec<C64>,
    /// Residual multiplied by the expected decay rate.
    pub scaled_residuals: Vec<f64>,
    /// Fitted slope of `log(scaled residual)` against `log|λ|`.
    pub slope: f64,
    /// Largest scaled residual.
    pub bound: f64,
    pub passed: bool,
}

impl AsymptoticReport {
    /// Judges boundedness: a slope above `max_slope` is a growth trend.
    pub fn from_residuals(lambdas: Vec<C64>, scaled: Vec<f64>, max_slope: f64) -> Self {
        let bound = scaled.iter().copied().fold(0.0, f64::max);
        let pts: Vec<(f64, f64)> = lambdas
            .iter()
            .zip(&scaled)
            .filter(|(_, &r)| r > 1e-12)
            .map(|(l, r)| (l.norm().ln(), r.ln()))
            .collect();
        let slope = if pts.len() >= 3 {
            let m = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            sxy / sxx
        } else {
            0.0
        };
        let passed = bound.is_finite() && slope <= max_slope;
        Self { lambdas, scaled_residuals: scaled, slope, bound, passed }
    }
}

/// Sector membership `s < arg λ < 2π − s`.
pub fn in_sector(lambda: C64, s: f64) -> bool {
    let a = branch::arg(lambda);
    a > s && a < 2.0 * std::f64::consts::PI - s
}

/// `|ψ⁺e^{−i√λx} − 1 − (1/(2i√λ))∫₀ˣu|·|λ|` along the given points.
pub fn check_bloch_asymptotics(h: &Hill, x: f64, s: f64, ray: &[C64]) -> Result<AsymptoticReport> {
    let mut res = Vec::with_capacity(ray.len());
    for &l in ray {
        if !in_sector(l, s) {
            return Err(HillError::Invalid(format!("λ = {l} is outside the sector")));
        }
        let k = branch::sqrt(l);
        let reduced = if ode_core::needs_scaling(&h.pot, l) {
            let (v, _) = ode_core::bloch_riccati(&h.pot, l, 1, &[x], h.tol)?;
            v[0].reduced.exp()
        } else {
            let b = bloch_solutions_offaxis(h, &[x], l)?[0];
            b.psi_plus * (-I * k * x).exp()
        };
        let first = h.pot.antiderivative(x) / (2.0 * I * k);
        res.push((reduced - 1.0 - first).norm() * l.norm());
    }
    Ok(AsymptoticReport::from_residuals(ray.to_vec(), res, 0.25))
}

/// `|Δ − e^{−i√λT}(1 − Q/(2i√λ))|·|λ|·|e^{i√λT}|` along the given points.
pub fn check_delta_asymptotics(h: &Hill, ray: &[C64]) -> Result<AsymptoticReport> {
    let t = h.period();
    let q = h.pot.q_integral();
    let mut res = Vec::with_capacity(ray.len());
    for &l in ray {
        let k = branch::sqrt(l);
        // Δ·e^{i√λT} = ρ^{-1}e^{i√λT} + ρ e^{i√λT}
        let scaled = if ode_core::needs_scaling(&h.pot, l) {
            let (_, lr) = ode_core::bloch_riccati(&h.pot, l, 1, &[], h.tol)?;
            let w = lr - I * k * t;
            (-w).exp() + (2.0 * I * k * t + w).exp()
        } else {
            discriminant(h, l)? * (I * k * t).exp()
        };
        let want = 1.0 - q / (2.0 * I * k);
        res.push((scaled - want).norm() * l.norm());
    }
    Ok(AsymptoticReport::from_residuals(ray.to_vec(), res, 0.25))
}
