//! Periodic/antiperiodic edges `λ_n`, Dirichlet eigenvalues `μ_n`,
//! signatures `σ_n` and the assembled spectral data `Σ(u)`.
//!
//! Edges are located through the critical points `c_n` of `Δ` on the real
//! line: each gap contains exactly one, and `(-1)^n Δ(c_n) ≥ 2` with equality
//! iff the gap is closed. The roots of `Δ ∓ 2` are then bracketed by
//! consecutive critical points, which never fails for a genuine discriminant.

use crate::error::{HillError, Result};
use crate::ode_core::{Hill, PeriodicPotential, Tol};
use crate::C64;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default relative width below which a gap counts as closed.
pub const DEGENERACY_REL: f64 = 1e-7;

/// Tolerances used while assembling spectral data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    /// Gap width `< degeneracy_rel·max(1,|λ|)` ⇒ degenerate.
    pub degeneracy_rel: f64,
    /// `|μ_n − edge| ≤ sigma_rel·max(1,|μ|)` ⇒ `σ_n = 0`.
    pub sigma_rel: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self { degeneracy_rel: DEGENERACY_REL, sigma_rel: DEGENERACY_REL }
    }
}

/// Integrator tolerance for root finding: near-closed gaps turn an error
/// `δΔ` into an edge error `δΔ/|Δ'|`, so `Δ` is needed to near round-off.
pub const SPECTRUM_TOL: Tol = Tol { rtol: 1e-14, atol: 1e-15 };

fn tight(h: &Hill) -> Hill {
    Hill::with_tol(h.pot.clone(), Tol { rtol: h.tol.rtol.min(SPECTRUM_TOL.rtol), atol: h.tol.atol.min(SPECTRUM_TOL.atol) })
}

fn scaled(rel: f64, l: f64) -> f64 {
    rel * l.abs().max(1.0)
}

/// One open gap `(E_{2k-1}, E_{2k}) = (λ_{2n-1}, λ_{2n})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub k: usize,
    pub n: usize,
    pub mu: f64,
    pub sigma: i8,
}

/// Spectral data after the shift `λ₀ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub period: f64,
    pub n_max: usize,
    /// The original `λ₀`; every stored value has it subtracted.
    pub shift: f64,
    /// `Q = ∫₀ᵀ (u − λ₀)`.
    pub q: f64,
    /// `λ₀, …, λ_{2 n_max}`.
    pub lambda_seq: Vec<f64>,
    /// `μ_1, …, μ_{n_max}`.
    pub mu_seq: Vec<f64>,
    pub sigma_seq: Vec<i8>,
    /// Non-degenerate edges `E₀ < E₁ < …`.
    pub edges: Vec<f64>,
    pub gaps: Vec<GapEntry>,
    pub options: SpectrumOptions,
}

impl SpectralData {
    pub fn genus(&self) -> usize {
        self.gaps.len()
    }

    /// `k ↦ n_k`.
    pub fn gap_index_map(&self) -> Vec<usize> {
        self.gaps.iter().map(|g| g.n).collect()
    }

    /// `Q/T`, the Borg constant of the shifted potential.
    pub fn q_over_t(&self) -> f64 {
        self.q / self.period
    }

    /// Builds data from candidate lists alone (as read from a file). Gaps
    /// not listed are treated as closed at the free, Borg-shifted position.
    pub fn from_candidate(period: f64, q: f64, shift: f64, edges: Vec<f64>, gaps: Vec<GapEntry>) -> Result<Self> {
        if edges.len() != 2 * gaps.len() + 1 {
            return Err(HillError::Invalid(format!(
                "{} edges do not match {} gaps",
                edges.len(),
                gaps.len()
            )));
        }
        let n_max = gaps.iter().map(|g| g.n).max().unwrap_or(0);
        let free = |n: usize| (n as f64 * PI / period).powi(2) + q / period;
        let mut lambda_seq = vec![edges[0]];
        let mut mu_seq = Vec::with_capacity(n_max);
        let mut sigma_seq = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            match gaps.iter().find(|g| g.n == n) {
                Some(g) => {
                    lambda_seq.push(edges[2 * g.k - 1]);
                    lambda_seq.push(edges[2 * g.k]);
                    mu_seq.push(g.mu);
                    sigma_seq.push(g.sigma);
                }
                None => {
                    let e = free(n);
                    lambda_seq.extend([e, e]);
                    mu_seq.push(e);
                    sigma_seq.push(0);
                }
            }
        }
        Ok(Self {
            period,
            n_max,
            shift,
            q,
            lambda_seq,
            mu_seq,
            sigma_seq,
            edges,
            gaps,
            options: SpectrumOptions::default(),
        })
    }

    /// `R = max (E_{2k} − E_{2k−1})`.
    pub fn disc_radius(&self) -> f64 {
        self.gaps
            .iter()
            .map(|g| self.edges[2 * g.k] - self.edges[2 * g.k - 1])
            .fold(0.0, f64::max)
    }
}

fn delta_and_derivative(h: &Hill, l: f64) -> Result<(f64, f64)> {
    let m = h.monodromy(C64::new(l, 0.0), true)?;
    let d = m.dl();
    Ok((m.trace().re, (d[0][0] + d[1][1]).re))
}

/// `Δ - 2s` for `s = ±1` as `s (y₂y₁' - (y₁-s)(y₂'-s))`. Near a closed gap
/// the monodromy is close to `s·I`, so every factor is small and the
/// difference keeps its relative accuracy where `trace - 2s` would cancel.
fn delta_offset_and_derivative(h: &Hill, l: f64, s: f64) -> Result<(f64, f64)> {
    let m = h.monodromy(C64::new(l, 0.0), true)?;
    let d = m.dl();
    let v = m.y2() * m.y1p() - (m.y1() - s) * (m.y2p() - s);
    Ok((s * v.re, (d[0][0] + d[1][1]).re))
}

fn y2_and_derivative(h: &Hill, l: f64) -> Result<(f64, f64)> {
    let m = h.monodromy(C64::new(l, 0.0), true)?;
    Ok((m.y2().re, m.dl()[0][1].re))
}

/// Root of `f` in a sign-changing bracket: bisection down to `1e-6` relative
/// width, then Newton safeguarded by the bracket.
fn bracketed_newton<F>(f: F, mut a: f64, mut b: f64, what: &str) -> Result<f64>
where
    F: Fn(f64) -> Result<(f64, f64)>,
{
    let (mut fa, _) = f(a)?;
    let (fb, _) = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(HillError::RootBracketFailure { lo: a, hi: b, what: what.into() });
    }
    while b - a > 1e-6 * a.abs().max(b.abs()).max(1.0) {
        let m = 0.5 * (a + b);
        let (fm, _) = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..60 {
        let (fx, dx) = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
        } else {
            b = x;
        }
        let mut next = x - fx / dx;
        if !next.is_finite() || next <= a || next >= b {
            next = 0.5 * (a + b);
        }
        let step = (next - x).abs();
        x = next;
        if step <= 1e-14 * x.abs().max(1.0) || b - a <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

/// Illinois false position for the zero of `Δ'` (no second derivative).
fn illinois<F>(f: F, mut a: f64, mut fa: f64, mut b: f64, mut fb: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut side = 0i32;
    for _ in 0..200 {
        let x = (a * fb - b * fa) / (fb - fa);
        if b - a <= 1e-14 * x.abs().max(1.0) {
            return Ok(x);
        }
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fb.signum() {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}

/// Critical points `c_1 … c_count` of `Δ` on the real line.
fn critical_points(h: &Hill, count: usize) -> Result<Vec<f64>> {
    let t = h.period();
    let lo = h.pot.lower_bound();
    let lam = |s: f64| lo + (s * PI / t).powi(2);
    let dd = |l: f64| delta_and_derivative(h, l).map(|v| v.1);
    let mut step = 0.25;
    'refine: for _ in 0..5 {
        let mut found = Vec::with_capacity(count);
        let mut prev = (lam(0.0), dd(lam(0.0))?);
        if prev.1 >= 0.0 {
            return Err(HillError::RootBracketFailure {
                lo: prev.0,
                hi: prev.0,
                what: "Δ' must be negative below the spectrum".into(),
            });
        }
        let mut j = 1usize;
        let block = 32;
        while found.len() < count {
            let pts: Vec<f64> = (j..j + block).map(|i| lam(i as f64 * step)).collect();
            let vals: Vec<Result<f64>> = pts.par_iter().map(|&l| dd(l)).collect();
            for (l, v) in pts.into_iter().zip(vals) {
                let v = v?;
                if v.signum() != prev.1.signum() && v != 0.0 {
                    let n = found.len() + 1;
                    let c = illinois(dd, prev.0, prev.1, l, v)?;
                    let (dc, _) = delta_and_derivative(h, c)?;
                    let sgn = if n % 2 == 0 { 1.0 } else { -1.0 };
                    if sgn * dc < 2.0 - 1e-6 {
                        step *= 0.5;
                        continue 'refine;
                    }
                    found.push(c);
                    if found.len() == count {
                        break;
                    }
                }
                prev = (l, v);
            }
            j += block;
            if j as f64 * step > 4.0 * (count as f64 + 10.0) + 1e4 {
                return Err(HillError::RootBracketFailure {
                    lo: lam(0.0),
                    hi: lam(j as f64 * step),
                    what: "critical points of Δ".into(),
                });
            }
        }
        return Ok(found);
    }
    Err(HillError::RootBracketFailure { lo, hi: lam(count as f64), what: "critical points of Δ".into() })
}

/// Raw (unshifted) periodic spectrum together with the critical points used
/// to bracket it.
struct Edges {
    lambda: Vec<f64>,
    crit: Vec<f64>,
}

fn edges_raw(h: &Hill, n_max: usize) -> Result<Edges> {
    let crit = critical_points(h, n_max + 1)?;
    let lo = h.pot.lower_bound();
    let dm = |target: f64| move |l: f64| delta_offset_and_derivative(h, l, 0.5 * target);
    let lambda0 = bracketed_newton(dm(2.0), lo, crit[0], "λ₀")?;
    let pairs: Vec<Result<(f64, f64)>> = (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let c = crit[n - 1];
            let sgn = if n % 2 == 0 { 1.0 } else { -1.0 };
            let (dc, _) = delta_offset_and_derivative(h, c, sgn)?;
            if sgn * dc <= 0.0 {
                return Ok((c, c));
            }
            let left = if n == 1 { lambda0 } else { crit[n - 2] };
            let a = bracketed_newton(dm(2.0 * sgn), left, c, "λ_{2n-1}")?;
            let b = bracketed_newton(dm(2.0 * sgn), c, crit[n], "λ_{2n}")?;
            // resolved edges are kept even for tiny gaps; the degeneracy
            // threshold is applied when gaps are selected
            Ok((a, b))
        })
        .collect();
    let mut lambda = vec![lambda0];
    for p in pairs {
        let (a, b) = p?;
        lambda.push(a);
        lambda.push(b);
    }
    Ok(Edges { lambda, crit })
}

/// `λ₀ ≤ λ₁ ≤ … ≤ λ_{2 n_max}` (unshifted); closed gaps come back as equal
/// pairs.
pub fn band_edges(h: &Hill, n_max: usize) -> Result<Vec<f64>> {
    let h = &tight(h);
    Ok(edges_raw(h, n_max)?.lambda)
}

fn dirichlet_from(h: &Hill, e: &Edges) -> Result<Vec<f64>> {
    let n_max = (e.lambda.len() - 1) / 2;
    (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let (a, b) = (e.lambda[2 * n - 1], e.lambda[2 * n]);
            let left = if n == 1 { e.lambda[0] } else { e.crit[n - 2] };
            let right = e.crit[n];
            let pad_l = 1e-3 * (a - left).max(1e-6);
            let pad_r = 1e-3 * (right - b).max(1e-6);
            bracketed_newton(|l| y2_and_derivative(h, l), a - pad_l, b + pad_r, "μ_n")
        })
        .collect()
}

/// `μ_1 … μ_{n_max}` (unshifted), the roots of `y₂(T, ·)`.
pub fn dirichlet_eigenvalues(h: &Hill, n_max: usize) -> Result<Vec<f64>> {
    let h = &tight(h);
    let e = edges_raw(h, n_max)?;
    dirichlet_from(h, &e)
}

/// `σ_n = −sgn log|y₂'(T, μ_n)|`, forced to `0` within `sigma_rel` of an
/// edge. `lambda_seq` must be the unshifted edges matching `mu_seq`.
pub fn signatures(h: &Hill, lambda_seq: &[f64], mu_seq: &[f64], sigma_rel: f64) -> Result<Vec<i8>> {
    mu_seq
        .par_iter()
        .enumerate()
        .map(|(i, &mu)| {
            let n = i + 1;
            let tol = scaled(sigma_rel, mu);
            if (mu - lambda_seq[2 * n - 1]).abs() <= tol || (mu - lambda_seq[2 * n]).abs() <= tol {
                return Ok(0);
            }
            let m = h.monodromy(C64::new(mu, 0.0), false)?;
            let l = m.y2p().norm().ln();
            Ok(if l < 0.0 {
                1
            } else if l > 0.0 {
                -1
            } else {
                0
            })
        })
        .collect()
}

/// Assembles `Σ(u)` with `n_max` gaps resolved, normalised to `λ₀ = 0`.
pub fn spectral_data(h: &Hill, n_max: usize, opts: SpectrumOptions) -> Result<SpectralData> {
    let h = &tight(h);
    let mut e = edges_raw(h, n_max)?;
    // gaps below the degeneracy threshold become double points at the
    // critical point of Δ, which the product formulas cancel exactly
    for n in 1..=n_max {
        if e.lambda[2 * n] - e.lambda[2 * n - 1] < scaled(opts.degeneracy_rel, e.crit[n - 1]) {
            e.lambda[2 * n - 1] = e.crit[n - 1];
            e.lambda[2 * n] = e.crit[n - 1];
        }
    }
    let mut mu = dirichlet_from(h, &e)?;
    for n in 1..=n_max {
        if e.lambda[2 * n - 1] == e.lambda[2 * n] {
            mu[n - 1] = e.lambda[2 * n];
        }
    }
    let sigma = signatures(h, &e.lambda, &mu, opts.sigma_rel)?;
    // an edge-sitting μ is snapped onto the edge so products cancel exactly
    for n in 1..=n_max {
        if sigma[n - 1] == 0 {
            let (a, b) = (e.lambda[2 * n - 1], e.lambda[2 * n]);
            mu[n - 1] = if (mu[n - 1] - a).abs() < (mu[n - 1] - b).abs() { a } else { b };
        }
    }
    let shift = e.lambda[0];
    let lambda_seq: Vec<f64> = e.lambda.iter().map(|l| l - shift).collect();
    let mu_seq: Vec<f64> = mu.iter().map(|m| m - shift).collect();
    let mut edges = vec![0.0];
    let mut gaps = Vec::new();
    for n in 1..=n_max {
        let (a, b) = (lambda_seq[2 * n - 1], lambda_seq[2 * n]);
        if b - a >= scaled(opts.degeneracy_rel, b) {
            edges.push(a);
            edges.push(b);
            gaps.push(GapEntry { k: gaps.len() + 1, n, mu: mu_seq[n - 1], sigma: sigma[n - 1] });
        }
    }
    Ok(SpectralData {
        period: h.period(),
        n_max,
        shift,
        q: h.pot.q_integral() - shift * h.period(),
        lambda_seq,
        mu_seq,
        sigma_seq: sigma,
        edges,
        gaps,
        options: opts,
    })
}

/// Least-squares intercept of `λ_{2n} − n²π²/T²` against `1/n` over
/// `n ∈ [n_from, n_max]`; tends to `Q/T`.
pub fn borg_intercept(sd: &SpectralData, n_from: usize) -> f64 {
    let t = sd.period;
    let pts: Vec<(f64, f64)> = (n_from.max(1)..=sd.n_max)
        .map(|n| (1.0 / n as f64, sd.lambda_seq[2 * n] - (n as f64 * PI / t).powi(2)))
        .collect();
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
    my - sxy / sxx * mx
}

/// Outcome of one admissibility condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub conditions: Vec<Condition>,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> Vec<&str> {
        self.conditions.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

/// Checks the six conditions on candidate data `{E_k}, {μ_{n_k}}, {σ_{n_k}}`.
///
/// The two asymptotic conditions (growth and disc separation) only have
/// content for infinitely many gaps; on a finite list they are judged on the
/// available tail: a log–log fit of `E_{2k}` against `n_k` over the last half
/// of the gaps (at least three) must have slope `≥ 1.75`, and the discs over
/// the last half must be pairwise disjoint.
pub fn admissibility_check(edges: &[f64], gaps: &[GapEntry]) -> AdmissibilityReport {
    let mut out = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| {
        out.push(Condition { name: name.into(), passed, detail })
    };
    let bad: Vec<usize> = (1..edges.len()).filter(|&i| !(edges[i] > edges[i - 1])).collect();
    push("ordering", bad.is_empty() && edges.len() == 2 * gaps.len() + 1, format!("out of order at {bad:?}"));

    let edge = |i: usize| edges.get(i).copied().unwrap_or(f64::NAN);
    let outside: Vec<usize> = gaps
        .iter()
        .filter(|g| {
            let tol = 1e-9 * g.mu.abs().max(1.0);
            !(g.mu >= edge(2 * g.k - 1) - tol && g.mu <= edge(2 * g.k) + tol)
        })
        .map(|g| g.k)
        .collect();
    push("mu_in_gap", outside.is_empty(), format!("μ outside gap for k ∈ {outside:?}"));

    let widths: Vec<f64> = gaps.iter().map(|g| edge(2 * g.k) - edge(2 * g.k - 1)).collect();
    let r = widths.iter().copied().fold(0.0, f64::max);
    push("finite_radius", r.is_finite(), format!("R = {r}"));

    let bad_sigma: Vec<usize> = gaps.iter().filter(|g| !(-1..=1).contains(&g.sigma)).map(|g| g.k).collect();
    push("sigma_values", bad_sigma.is_empty(), format!("σ ∉ {{-1,0,1}} for k ∈ {bad_sigma:?}"));

    let pts: Vec<(f64, f64)> = gaps
        .iter()
        .filter(|g| g.n >= 1 && edge(2 * g.k) > 0.0)
        .map(|g| ((g.n as f64).ln(), edge(2 * g.k).ln()))
        .collect();
    // the low gaps still carry the potential's offset: fit the last half
    let pts = &pts[pts.len().saturating_sub((pts.len() / 2).max(3))..];
    if pts.len() >= 3 && pts.iter().any(|p| p.0 != pts[0].0) {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        push("quadratic_growth", slope >= 1.75, format!("fitted exponent {slope:.3}"));
    } else {
        push("quadratic_growth", true, "fewer than three gaps; vacuous".into());
    }

    let centres: Vec<f64> = gaps.iter().map(|g| 0.5 * (edge(2 * g.k) + edge(2 * g.k - 1))).collect();
    let start = centres.len() / 2;
    let mut first_ok = centres.len();
    for i in (0..centres.len()).rev() {
        if centres[i + 1..].iter().all(|c| (c - centres[i]).abs() > 2.0 * r) {
            first_ok = i;
        } else {
            break;
        }
    }
    push(
        "disjoint_discs",
        first_ok <= start,
        format!("discs disjoint from k = {}", first_ok + 1),
    );
    AdmissibilityReport { conditions: out }
}

/// Hermitian eigenvalues of `H_{jl} = ν_j² δ_{jl} + c_{j−l}` on the basis
/// `e^{i(2j+s)πx/T}`, `|j| ≤ k` (`s = 0` periodic, `s = 1` antiperiodic).
fn fourier_block(p: &PeriodicPotential, k: usize, s: i64) -> Vec<f64> {
    let t = p.period;
    let js: Vec<i64> = if s == 0 { (-(k as i64)..=k as i64).collect() } else { (-(k as i64) - 1..=k as i64).collect() };
    let dim = js.len();
    let coeff = |m: i64| -> C64 {
        let a = m.unsigned_abs() as usize;
        match p.coeffs.get(a) {
            Some(c) if m >= 0 => *c,
            Some(c) => c.conj(),
            None => C64::new(0.0, 0.0),
        }
    };
    let h = DMatrix::from_fn(dim, dim, |r, c| {
        let mut v = coeff(js[r] - js[c]);
        if r == c {
            v += ((2 * js[r] + s) as f64 * PI / t).powi(2);
        }
        v
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Oracle for the periodic/antiperiodic spectrum: eigenvalues of the
/// truncated Fourier–Hill matrices, merged and sorted (`λ₀, λ₁, …`).
/// Only the lower part (well inside the truncation) is accurate.
pub fn fourier_hill_edges(p: &PeriodicPotential, k: usize) -> Vec<f64> {
    let mut ev = fourier_block(p, k, 0);
    ev.extend(fourier_block(p, k, 1));
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Oracle for the Dirichlet spectrum on `[0, T]`: Galerkin in the sine basis
/// `sin(jπx/T)`, `j = 1..=dim`, with exact matrix elements of `u`.
pub fn fourier_dirichlet(p: &PeriodicPotential, dim: usize) -> Vec<f64> {
    let t = p.period;
    // (1/T)∫₀ᵀ u(x) cos(pπx/T) dx
    let cos_moment = |pp: i64| -> f64 {
        let pp = pp.abs();
        if pp % 2 == 0 {
            let m = (pp / 2) as usize;
            return match (m, p.coeffs.get(m)) {
                (0, Some(c)) => c.re,
                (_, Some(c)) => c.re,
                _ => 0.0,
            };
        }
        let b = pp as f64 * PI / t;
        let mut acc = 0.0;
        for (m, c) in p.coeffs.iter().enumerate().skip(1) {
            // both ±m: c e^{iax} + c̄ e^{-iax}, ∫ e^{iax}cos(bx) = i·2a/(a²−b²)
            let a = 2.0 * PI * m as f64 / t;
            let f = C64::new(0.0, 2.0 * a / (a * a - b * b));
            acc += 2.0 * (c * f).re;
        }
        acc / t
    };
    let h = DMatrix::from_fn(dim, dim, |r, c| {
        let (j, l) = (r as i64 + 1, c as i64 + 1);
        let mut v = cos_moment(j - l) - cos_moment(j + l);
        if r == c {
            v += (j as f64 * PI / t).powi(2);
        }
        v
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}
