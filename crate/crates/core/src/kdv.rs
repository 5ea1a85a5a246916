//! KdV dynamics of the spectral data.
//!
//! `u_t − 6uu_x + u_xxx = 0` is integrated by an integrating-factor RK4
//! Fourier method ([`KdVHistory`]); its field supplies `u(0,t)`, `u_x(0,t)`
//! and the potential at intermediate times. On top of it:
//!
//! * the Dubrovin flow of the Dirichlet points of the open gaps, in the
//!   interior chart `μ` or, near a gap edge, in the angle chart
//!   `μ = m + h cos θ` (`σ = sgn sin θ`), where the flow is smooth;
//! * `α^±(t,λ)`, `e^±(t,λ) = exp ∫α^±` with the moving pole peeled off;
//! * `Φ̆(x,t,λ)` and the reconstruction of `u(x,t)`.
//!
//! All spectral quantities live in the normalised λ-plane of the initial
//! data (`λ₀ = 0`); the actual potential enters only through `u(0,t)`,
//! `u_x(0,t)` and the Hill operator of `u(·,t) − λ₀`.

use crate::branch::{self, Side};
use crate::error::{HillError, Result};
use crate::floquet;
use crate::ode_core::{self, Hill, PeriodicPotential, Tol};
use crate::products::{Mat2, RHPData, Which};
use crate::quad;
use crate::rhp_verify::{self, expm1, Reconstruction};
use crate::spectrum;
use crate::C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Sampled field `u(x_j, t)` on `x_j = jT/N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdVField {
    pub period: f64,
    pub t: f64,
    pub samples: Vec<f64>,
}

impl KdVField {
    pub fn new(period: f64, t: f64, samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 8 || samples.len() % 2 != 0 {
            return Err(HillError::Invalid("KdV field needs an even number ≥ 8 of samples".into()));
        }
        Ok(Self { period, t, samples })
    }

    pub fn from_potential(p: &PeriodicPotential, n: usize) -> Result<Self> {
        Self::new(p.period, 0.0, p.sample(n))
    }

    pub fn to_potential(&self) -> Result<PeriodicPotential> {
        PeriodicPotential::from_samples(self.period, &self.samples)
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    /// `∫_0^T u²` (trapezoid, exact for the resolved modes).
    pub fn momentum(&self) -> f64 {
        self.period * self.samples.iter().map(|u| u * u).sum::<f64>() / self.samples.len() as f64
    }
}

/// Fourier machinery for the reference solver.
struct Spectral {
    n: usize,
    period: f64,
    k: Vec<f64>,
    keep: Vec<bool>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).field("period", &self.period).finish()
    }
}

impl Spectral {
    fn new(n: usize, period: f64) -> Self {
        let mut planner = FftPlanner::new();
        let w = 2.0 * PI / period;
        let idx = |j: usize| if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
        let k = (0..n).map(|j| w * idx(j) as f64).collect();
        // 2/3 rule: keep |j| < N/3
        let keep = (0..n).map(|j| 3 * idx(j).unsigned_abs() < n as u64).collect();
        Self { n, period, k, keep, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    fn to_hat(&self, u: &[f64]) -> Vec<C64> {
        let mut b: Vec<C64> = u.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.fwd.process(&mut b);
        b
    }

    fn to_real(&self, uh: &[C64]) -> Vec<f64> {
        let mut b = uh.to_vec();
        self.inv.process(&mut b);
        b.iter().map(|z| z.re / self.n as f64).collect()
    }

    /// `3ik·F[u²]` on the kept modes.
    fn nonlinear(&self, uh: &[C64]) -> Vec<C64> {
        let u = self.to_real(uh);
        let sq: Vec<f64> = u.iter().map(|v| v * v).collect();
        let mut h = self.to_hat(&sq);
        for j in 0..self.n {
            h[j] = if self.keep[j] { 3.0 * I * self.k[j] * h[j] } else { C64::new(0.0, 0.0) };
        }
        h
    }

    /// One integrating-factor RK4 step for `û_t = i k³ û + 3ik F[u²]`.
    fn step(&self, v: &[C64], dt: f64) -> Vec<C64> {
        let e: Vec<C64> = self.k.iter().map(|k| C64::from_polar(1.0, k * k * k * dt)).collect();
        let e2: Vec<C64> = self.k.iter().map(|k| C64::from_polar(1.0, 0.5 * k * k * k * dt)).collect();
        let n = self.n;
        let a: Vec<C64> = self.nonlinear(v).into_iter().map(|z| z * dt).collect();
        let arg: Vec<C64> = (0..n).map(|j| e2[j] * (v[j] + 0.5 * a[j])).collect();
        let b: Vec<C64> = self.nonlinear(&arg).into_iter().map(|z| z * dt).collect();
        let arg: Vec<C64> = (0..n).map(|j| e2[j] * v[j] + 0.5 * b[j]).collect();
        let c: Vec<C64> = self.nonlinear(&arg).into_iter().map(|z| z * dt).collect();
        let arg: Vec<C64> = (0..n).map(|j| e[j] * v[j] + e2[j] * c[j]).collect();
        let d: Vec<C64> = self.nonlinear(&arg).into_iter().map(|z| z * dt).collect();
        (0..n)
            .map(|j| {
                if self.keep[j] {
                    e[j] * v[j] + (e[j] * a[j] + 2.0 * e2[j] * (b[j] + c[j]) + d[j]) / 6.0
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .collect()
    }

    /// Largest discarded coefficient relative to the largest one.
    fn tail(&self, uh: &[C64]) -> f64 {
        let big = uh.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        let t = (0..self.n).filter(|&j| !self.keep[j]).map(|j| uh[j].norm()).fold(0.0, f64::max);
        t / big
    }

    /// `∂ˣ^order u(0)`.
    fn derivative_at_origin(&self, uh: &[C64], order: i32) -> f64 {
        (0..self.n).map(|j| (uh[j] * (I * self.k[j]).powi(order)).re).sum::<f64>() / self.n as f64
    }

    fn potential(&self, uh: &[C64]) -> PeriodicPotential {
        let kmax = (self.n - 1) / 3;
        let c = (0..=kmax).map(|j| uh[j] / self.n as f64).collect();
        let mut p = PeriodicPotential::new(self.period, c).expect("period is positive");
        p.trim(1e-17);
        p
    }
}

/// Threshold on the discarded Fourier tail.
pub const RESOLUTION_TAIL: f64 = 1e-12;

/// Reference evolution with every step kept, so the field (and `u(0,t)`)
/// is available at any intermediate time by a partial step.
#[derive(Debug)]
pub struct KdVHistory {
    sp: Spectral,
    pub dt: f64,
    pub t_end: f64,
    hats: Vec<Vec<C64>>,
}

impl KdVHistory {
    pub fn run(u0: &KdVField, t_end: f64, steps: usize) -> Result<Self> {
        if !(t_end >= 0.0) || steps == 0 {
            return Err(HillError::Invalid("t_end must be ≥ 0 and steps > 0".into()));
        }
        let sp = Spectral::new(u0.samples.len(), u0.period);
        let mut h = sp.to_hat(&u0.samples);
        let tail = sp.tail(&h);
        if tail > RESOLUTION_TAIL {
            return Err(HillError::ResolutionLoss { tail });
        }
        for j in 0..sp.n {
            if !sp.keep[j] {
                h[j] = C64::new(0.0, 0.0);
            }
        }
        let dt = t_end / steps as f64;
        let mut hats = Vec::with_capacity(steps + 1);
        hats.push(h);
        for i in 0..steps {
            let next = sp.step(&hats[i], dt);
            if next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(HillError::ResolutionLoss { tail: f64::INFINITY });
            }
            hats.push(next);
        }
        Ok(Self { sp, dt, t_end, hats })
    }

    fn hat_at(&self, t: f64) -> Result<Vec<C64>> {
        if !(t >= -1e-14 && t <= self.t_end * (1.0 + 1e-12) + 1e-14) {
            return Err(HillError::Invalid(format!("t = {t} outside the evolved span [0, {}]", self.t_end)));
        }
        if self.dt == 0.0 {
            return Ok(self.hats[0].clone());
        }
        let i = ((t / self.dt).floor().max(0.0) as usize).min(self.hats.len() - 1);
        let rem = t - i as f64 * self.dt;
        if rem.abs() <= 1e-15 * self.t_end.max(1.0) {
            return Ok(self.hats[i].clone());
        }
        Ok(self.sp.step(&self.hats[i], rem))
    }

    pub fn field_at(&self, t: f64) -> Result<KdVField> {
        KdVField::new(self.sp.period, t, self.sp.to_real(&self.hat_at(t)?))
    }

    /// Trigonometric interpolant of the field at `t`.
    pub fn potential_at(&self, t: f64) -> Result<PeriodicPotential> {
        Ok(self.sp.potential(&self.hat_at(t)?))
    }

    /// `(u(0,t), u_x(0,t))`.
    pub fn origin_values(&self, t: f64) -> Result<(f64, f64)> {
        let h = self.hat_at(t)?;
        Ok((self.sp.derivative_at_origin(&h, 0), self.sp.derivative_at_origin(&h, 1)))
    }

    /// Discarded-tail diagnostic of the final field.
    pub fn final_tail(&self) -> f64 {
        let h = self.hats.last().unwrap();
        let big = h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        let kmax = (self.sp.n - 1) / 3;
        // the top quarter of the kept band; a resolved field is negligible there
        let lo = (3 * kmax) / 4;
        (lo..=kmax).map(|j| h[j].norm()).fold(0.0, f64::max) / big
    }
}

/// Reference solution of `u_t = 6uu_x − u_xxx` at `t_end`.
pub fn reference_kdv(u0: &KdVField, t_end: f64, steps: usize) -> Result<KdVField> {
    let h = KdVHistory::run(u0, t_end, steps)?;
    let mut f = h.field_at(t_end)?;
    f.t = u0.t + t_end;
    Ok(f)
}

/// Which chart a gap's Dirichlet point is integrated in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    Interior,
    Edge,
}

/// Distance to a gap edge (relative to the gap width) below which the angle
/// chart is used; the switch back happens at twice this.
pub const CHART_SWITCH_REL: f64 = 1e-3;

/// `μ_n(t)` for every open gap, sampled on the integrator's chunk grid with
/// the angle `θ` (and `θ_t`) kept for Hermite interpolation in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletTrajectory {
    /// `λ₀` of the initial data (μ below are in the normalised plane).
    pub shift: f64,
    /// Gap index `n` of each tracked gap.
    pub gaps: Vec<usize>,
    /// `(λ_{2n−1}, λ_{2n})` of each tracked gap.
    pub bounds: Vec<(f64, f64)>,
    pub times: Vec<f64>,
    /// `mu[i][j]`: time `i`, gap `j`.
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<i8>>,
    pub chart: Vec<Vec<Chart>>,
    /// Unwrapped angle with `μ = m + h cos θ`, `σ = sgn sin θ`.
    pub theta: Vec<Vec<f64>>,
    pub dtheta: Vec<Vec<f64>>,
}

fn sigma_of(theta: f64) -> i8 {
    let s = theta.sin();
    if s.abs() < 1e-13 {
        0
    } else if s > 0.0 {
        1
    } else {
        -1
    }
}

fn theta_of(mu: f64, sigma: i8, a: f64, b: f64, near: f64) -> f64 {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    let base = ((mu - m) / h).clamp(-1.0, 1.0).acos();
    let th = if sigma < 0 { 2.0 * PI - base } else { base };
    th + 2.0 * PI * ((near - th) / (2.0 * PI)).round()
}

impl DirichletTrajectory {
    fn locate(&self, t: f64) -> usize {
        match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            p => (p - 1).min(self.times.len().saturating_sub(2)),
        }
    }

    /// `(θ, θ_t)` of gap `j` at time `t` (cubic Hermite).
    pub fn theta_at(&self, j: usize, t: f64) -> (f64, f64) {
        if self.times.len() == 1 {
            return (self.theta[0][j], self.dtheta[0][j]);
        }
        let i = self.locate(t);
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (y0, y1) = (self.theta[i][j], self.theta[i + 1][j]);
        let (d0, d1) = (self.dtheta[i][j] * h, self.dtheta[i + 1][j] * h);
        let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
        let h10 = s * s * s - 2.0 * s * s + s;
        let h01 = -2.0 * s * s * s + 3.0 * s * s;
        let h11 = s * s * s - s * s;
        let v = h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1;
        let dv = (6.0 * s * s - 6.0 * s) * y0
            + (3.0 * s * s - 4.0 * s + 1.0) * d0
            + (-6.0 * s * s + 6.0 * s) * y1
            + (3.0 * s * s - 2.0 * s) * d1;
        (v, dv / h)
    }

    /// `(n, μ_n(t), σ_n(t))` for every tracked gap.
    pub fn state_at(&self, t: f64) -> Vec<(usize, f64, i8)> {
        (0..self.gaps.len())
            .map(|j| {
                let (a, b) = self.bounds[j];
                let th = self.theta_at(j, t).0;
                (self.gaps[j], 0.5 * (a + b) + 0.5 * (b - a) * th.cos(), sigma_of(th))
            })
            .collect()
    }

    /// `dμ_j/dt` at `t`.
    pub fn mu_dot_at(&self, j: usize, t: f64) -> f64 {
        let (a, b) = self.bounds[j];
        let (th, dth) = self.theta_at(j, t);
        -0.5 * (b - a) * th.sin() * dth
    }

    /// Times in `(0, t)` where gap `j`'s point touches an edge (σ flips).
    pub fn crossings(&self, j: usize, t: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let end = self.locate(t) + 1;
        for i in 0..end.min(self.times.len() - 1) {
            let (a, b) = (self.times[i], self.times[i + 1].min(t));
            if b <= a {
                continue;
            }
            let (ka, kb) = ((self.theta_at(j, a).0 / PI).floor(), (self.theta_at(j, b).0 / PI).floor());
            if ka == kb {
                continue;
            }
            // one crossing per chunk: θ moves far less than π across a chunk
            let target = ka.max(kb) * PI;
            let f = |s: f64| self.theta_at(j, s).0 - target;
            let (mut lo, mut hi) = (a, b);
            let flo = f(lo);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if (f(mid) > 0.0) == (flo > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        out
    }

    /// Number of σ sign changes of gap `j` over the recorded span.
    pub fn sigma_flips(&self, j: usize) -> usize {
        self.crossings(j, *self.times.last().unwrap()).len()
    }
}

/// `G = (4μ + 2u(0,t)) S(μ) / y₂λ(μ)` (actual λ = normalised + `shift`),
/// the angle-chart rate `θ_t = −G`.
fn angle_rate(rhp_t: &RHPData, n: usize, mu: f64, u0: f64) -> f64 {
    let lam = mu + rhp_t.sdata.shift;
    (4.0 * lam + 2.0 * u0) * rhp_t.sqrt_disc_gap_reduced(n, mu) / rhp_t.y2_lambda_at_mu(n)
}

/// Dubrovin velocities
/// `μ_{nt} = −σ_n (4μ_n + 2u(0,t)) (ρ(μ_n) − ρ(μ_n)^{−1}) / y₂λ(μ_n)`
/// for the open gaps listed in `state` (`(n, μ_n, σ_n)`); closed gaps do
/// not move.
pub fn dubrovin_rhs(rhp: &RHPData, u0t: f64, state: &[(usize, f64, i8)]) -> Result<Vec<f64>> {
    let rhp_t = rhp.with_dirichlet(state);
    state
        .iter()
        .map(|&(n, mu, sigma)| {
            let (a, b) = rhp.edge_pair(n);
            if b - a <= 0.0 {
                return Ok(0.0);
            }
            if (mu - a).min(b - mu) < CHART_SWITCH_REL * (b - a) {
                return Err(HillError::EdgeChartRequired { n });
            }
            let g = angle_rate(&rhp_t, n, mu, u0t);
            Ok(sigma as f64 * g * ((mu - a) * (b - mu)).sqrt())
        })
        .collect()
}

/// The same velocity from the ODE at the actual potential of time `t`
/// (`h_t` is the normalised Hill operator): `−(4μ + 2u(0,t))(y₂'(T) −
/// y₁(T))/y₂λ(T)`. Independent of the products; used as a cross-check.
pub fn dubrovin_rhs_ode(h_t: &Hill, shift: f64, u0t: f64, mu: f64) -> Result<f64> {
    let m = h_t.monodromy(C64::new(mu, 0.0), true)?;
    let y2l = m.dl()[0][1].re;
    Ok(-(4.0 * (mu + shift) + 2.0 * u0t) * (m.y2p().re - m.y1().re) / y2l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub tol: f64,
    pub switch_rel: f64,
    /// Upper bound on the recording step.
    pub max_chunk: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, switch_rel: CHART_SWITCH_REL, max_chunk: 1e-3 }
    }
}

/// Integrates the Dubrovin system over `[0, t_end]` with `u(0,t)` from the
/// reference field, switching each gap between the interior and the angle
/// chart.
pub fn evolve_dirichlet(hist: &KdVHistory, rhp: &RHPData, t_end: f64, opts: EvolveOptions) -> Result<DirichletTrajectory> {
    let gaps: Vec<usize> = rhp.sdata.gaps.iter().map(|g| g.n).collect();
    let bounds: Vec<(f64, f64)> = gaps.iter().map(|&n| rhp.edge_pair(n)).collect();
    let ng = gaps.len();
    let near_edge = |mu: f64, j: usize, f: f64| {
        let (a, b) = bounds[j];
        (mu - a).min(b - mu) < f * opts.switch_rel * (b - a)
    };
    // per gap: chart, value (μ or θ), σ for the interior chart, last θ
    let mut chart = vec![Chart::Interior; ng];
    let mut val = vec![0.0; ng];
    let mut sig = vec![0i8; ng];
    let mut last_theta = vec![0.0; ng];
    for (j, g) in rhp.sdata.gaps.iter().enumerate() {
        let (a, b) = bounds[j];
        last_theta[j] = theta_of(g.mu, g.sigma, a, b, 0.0);
        if g.sigma == 0 || near_edge(g.mu, j, 1.0) {
            chart[j] = Chart::Edge;
            val[j] = last_theta[j];
        } else {
            val[j] = g.mu;
            sig[j] = g.sigma;
        }
    }
    let decode = |chart: &[Chart], val: &[f64], sig: &[i8]| -> Vec<(usize, f64, i8)> {
        (0..ng)
            .map(|j| {
                let (a, b) = bounds[j];
                match chart[j] {
                    Chart::Interior => (gaps[j], val[j], sig[j]),
                    Chart::Edge => (gaps[j], 0.5 * (a + b) + 0.5 * (b - a) * val[j].cos(), sigma_of(val[j])),
                }
            })
            .collect()
    };
    let rates = |state: &[(usize, f64, i8)], t: f64| -> Result<Vec<f64>> {
        let (u0, _) = hist.origin_values(t)?;
        let rhp_t = rhp.with_dirichlet(state);
        Ok(state.iter().map(|&(n, mu, _)| angle_rate(&rhp_t, n, mu, u0)).collect())
    };

    let mut traj = DirichletTrajectory {
        shift: rhp.sdata.shift,
        gaps: gaps.clone(),
        bounds: bounds.clone(),
        times: vec![],
        mu: vec![],
        sigma: vec![],
        chart: vec![],
        theta: vec![],
        dtheta: vec![],
    };
    let mut record = |t: f64, chart: &[Chart], val: &[f64], sig: &[i8], last: &mut [f64]| -> Result<()> {
        let st = decode(chart, val, sig);
        let g = rates(&st, t)?;
        let th: Vec<f64> = (0..ng)
            .map(|j| match chart[j] {
                Chart::Edge => val[j],
                Chart::Interior => {
                    let (a, b) = bounds[j];
                    theta_of(val[j], sig[j], a, b, last[j])
                }
            })
            .collect();
        last.copy_from_slice(&th);
        traj.times.push(t);
        traj.mu.push(st.iter().map(|s| s.1).collect());
        traj.sigma.push(st.iter().map(|s| s.2).collect());
        traj.chart.push(chart.to_vec());
        traj.theta.push(th);
        traj.dtheta.push(g.iter().map(|g| -g).collect());
        Ok(())
    };
    record(0.0, &chart, &val, &sig, &mut last_theta)?;

    let tol = Tol { rtol: opts.tol, atol: opts.tol };
    let mut t = 0.0;
    let mut hstep = 0.0;
    while t < t_end * (1.0 - 1e-14) && ng > 0 {
        let g0 = rates(&decode(&chart, &val, &sig), t)?;
        let gmax = g0.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let chunk = (t_end - t).min(opts.max_chunk).min(t_end / 100.0).min(0.02 / gmax.max(1e-300));
        let mut err: Option<HillError> = None;
        let (c2, s2) = (chart.clone(), sig.clone());
        let mut rhs = |tau: f64, y: &[f64], dy: &mut [f64]| {
            let st = decode(&c2, y, &s2);
            match rates(&st, tau) {
                Ok(g) => {
                    for j in 0..ng {
                        dy[j] = match c2[j] {
                            Chart::Edge => -g[j],
                            Chart::Interior => {
                                let (a, b) = bounds[j];
                                let mu = y[j];
                                s2[j] as f64 * g[j] * ((mu - a) * (b - mu)).max(0.0).sqrt()
                            }
                        };
                    }
                }
                Err(e) => {
                    err.get_or_insert(e);
                    dy.iter_mut().for_each(|d| *d = 0.0);
                }
            }
        };
        ode_core::integrate(&mut rhs, t, t + chunk, &mut val, tol, &mut hstep)?;
        if let Some(e) = err {
            return Err(e);
        }
        t += chunk;
        for j in 0..ng {
            let (a, b) = bounds[j];
            match chart[j] {
                Chart::Interior if near_edge(val[j], j, 1.0) => {
                    chart[j] = Chart::Edge;
                    val[j] = theta_of(val[j], sig[j], a, b, last_theta[j]);
                }
                Chart::Edge => {
                    let mu = 0.5 * (a + b) + 0.5 * (b - a) * val[j].cos();
                    if !near_edge(mu, j, 2.0) {
                        let s = sigma_of(val[j]);
                        if s == 0 {
                            return Err(HillError::ChartSwitchFailure { n: gaps[j] });
                        }
                        chart[j] = Chart::Interior;
                        sig[j] = s;
                        val[j] = mu;
                    }
                }
                _ => {}
            }
        }
        if g0.iter().any(|g| !g.is_finite()) {
            return Err(HillError::ChartSwitchFailure { n: gaps[0] });
        }
        record(t, &chart, &val, &sig, &mut last_theta)?;
    }
    if ng == 0 {
        traj.times.push(t_end);
        for f in [&mut traj.mu, &mut traj.theta, &mut traj.dtheta] {
            f.push(vec![]);
        }
        traj.sigma.push(vec![]);
        traj.chart.push(vec![]);
    }
    Ok(traj)
}

/// The potential and the spectral data at one time.
#[derive(Debug, Clone)]
pub struct TimeSlice {
    pub t: f64,
    /// Hill operator of `u(·,t) − λ₀`.
    pub hill: Hill,
    pub u0: f64,
    pub ux0: f64,
    /// Initial data with `μ_n(t)`, `σ_n(t)` substituted.
    pub rhp: RHPData,
}

pub fn time_slice(hist: &KdVHistory, traj: &DirichletTrajectory, rhp: &RHPData, t: f64) -> Result<TimeSlice> {
    let pot = hist.potential_at(t)?.shifted(-rhp.sdata.shift);
    let (u0, ux0) = hist.origin_values(t)?;
    Ok(TimeSlice { t, hill: Hill::new(pot), u0, ux0, rhp: rhp.with_dirichlet(&traj.state_at(t)) })
}

/// `α^±(t,λ) = (4λ + 2u(0,t)) (ρ^{±1} − y₁(T,t,λ))/y₂(T,t,λ) − u_x(0,t)`.
pub fn alpha_pm(ts: &TimeSlice, lambda: C64, sign: i32, side: Option<Side>) -> Result<C64> {
    let want = if sign > 0 { 1 } else { -1 };
    for g in ts.rhp.sdata.gaps.iter().filter(|g| g.sigma == want) {
        if (lambda - g.mu).norm() < branch::collar(lambda) {
            return Err(HillError::NearPole { at: g.mu });
        }
    }
    let z = ts.rhp.point(lambda, side, false)?;
    let psi_x0 = if ode_core::needs_scaling(&ts.hill.pot, z) {
        ode_core::bloch_riccati(&ts.hill.pot, z, sign, &[0.0], ts.hill.tol)?.0[0].m
    } else {
        let fp = floquet::floquet_point(&ts.hill, &ts.rhp, lambda, side)?;
        let (r, ri) = if sign > 0 { (fp.rho, 1.0 / fp.rho) } else { (1.0 / fp.rho, fp.rho) };
        floquet::bloch_coefficient(&fp, r, ri)
    };
    Ok((4.0 * (z + ts.rhp.sdata.shift) + 2.0 * ts.u0) * psi_x0 - ts.ux0)
}

/// Quadrature tolerance for `∫ α dt`.
pub const E_QUAD_TOL: f64 = 1e-10;

/// `4√λ³ + 6λ₀√λ` in the normalised plane: the large-λ growth of `∓iα^±`.
/// `u − λ₀` solves KdV only in the frame `y = x + 6λ₀t`, so the exponent of
/// `Φ̆` is `√λ y + 4√λ³t` there and this is its `t`-rate.
pub fn phase_rate(z: C64, shift: f64) -> C64 {
    4.0 * branch::sqrt_cubed(z) + 6.0 * shift * branch::sqrt(z)
}

/// `e^±(t,λ) e^{∓i(4√λ³ + 6λ₀√λ)t}` (finite for large λ where `e^±` itself
/// is not).
///
/// `∫_0^t (α^± ∓ 4i√λ³) dτ` is taken by adaptive Gauss–Kronrod with the
/// pole `−μ_{nτ}/(λ − μ_n(τ))` of every gap with `σ_n(τ) = ±1` removed and
/// integrated exactly: `∏ (λ − μ_n(b))/(λ − μ_n(a))` over the sub-intervals
/// between edge contacts.
pub fn e_pm_reduced(
    hist: &KdVHistory,
    traj: &DirichletTrajectory,
    rhp: &RHPData,
    t: f64,
    lambda: C64,
    sign: i32,
    side: Option<Side>,
) -> Result<C64> {
    if t == 0.0 {
        return Ok(C64::new(1.0, 0.0));
    }
    let z = rhp.point(lambda, side, false)?;
    let phase = sign as f64 * I * phase_rate(z, rhp.sdata.shift);
    let want = if sign > 0 { 1 } else { -1 };
    let mut cuts = vec![0.0, t];
    for j in 0..traj.gaps.len() {
        cuts.extend(traj.crossings(j, t));
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let mut total = C64::new(0.0, 0.0);
    let mut ratio = C64::new(1.0, 0.0);
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = traj.state_at(0.5 * (a + b));
        let active: Vec<usize> = (0..traj.gaps.len()).filter(|&j| mid[j].2 == want).collect();
        for &j in &active {
            let (ma, mb) = (traj.state_at(a)[j].1, traj.state_at(b)[j].1);
            ratio *= (z - mb) / (z - ma);
        }
        let mut err: Option<HillError> = None;
        // α is formed at size |phase| and cancels down to O(1/√λ)
        let floor = 1e-10 * phase.norm() * (b - a);
        let v = quad::gauss_kronrod_floor(a, b, E_QUAD_TOL, floor, |tau| {
            let f = || -> Result<C64> {
                let ts = time_slice(hist, traj, rhp, tau)?;
                let st = traj.state_at(tau);
                let mut g = alpha_pm(&ts, lambda, sign, side)? - phase;
                for &j in &active {
                    g += traj.mu_dot_at(j, tau) / (z - st[j].1);
                }
                Ok(g)
            };
            f().unwrap_or_else(|e| {
                err.get_or_insert(e);
                C64::new(0.0, 0.0)
            })
        });
        if let Some(e) = err {
            return Err(e);
        }
        total += v;
    }
    Ok(total.exp() * ratio)
}

/// `e^±(t,λ) = exp ∫_0^t α^±(τ,λ) dτ`.
pub fn e_pm(
    hist: &KdVHistory,
    traj: &DirichletTrajectory,
    rhp: &RHPData,
    t: f64,
    lambda: C64,
    sign: i32,
    side: Option<Side>,
) -> Result<C64> {
    let z = rhp.point(lambda, side, false)?;
    let red = e_pm_reduced(hist, traj, rhp, t, lambda, sign, side)?;
    Ok(red * (sign as f64 * I * phase_rate(z, rhp.sdata.shift) * t).exp())
}

/// `Φ̆(x,t,λ) = [ψ̆⁻ ψ̆⁺; ψ̆ₓ⁻ ψ̆ₓ⁺] B(0,λ) e^{iσ₃(√λ(x + 6λ₀t) + 4√λ³t)}`,
/// `ψ̆^± = ψ^± e^±` (the `6λ₀t` shift is the frame of the normalised plane).
pub fn assemble_phi_kdv(
    hist: &KdVHistory,
    traj: &DirichletTrajectory,
    rhp: &RHPData,
    x: f64,
    t: f64,
    lambda: C64,
    side: Option<Side>,
) -> Result<Mat2> {
    let ts = time_slice(hist, traj, rhp, t)?;
    let z = rhp.point(lambda, side, true)?;
    for g in ts.rhp.sdata.gaps.iter().filter(|g| g.sigma != 0) {
        if (lambda - g.mu).norm() < branch::collar(lambda) {
            return Err(HillError::NearPole { at: g.mu });
        }
    }
    let [b11, b22] = rhp.b_matrix(lambda, side)?;
    let em = e_pm_reduced(hist, traj, rhp, t, lambda, -1, side)?;
    let ep = e_pm_reduced(hist, traj, rhp, t, lambda, 1, side)?;
    let (c1, c2) = (b11 * em, b22 * ep);
    if ode_core::needs_scaling(&ts.hill.pot, z) {
        let (p, _) = ode_core::bloch_riccati(&ts.hill.pot, z, 1, &[x], ts.hill.tol)?;
        let (m, _) = ode_core::bloch_riccati(&ts.hill.pot, z, -1, &[x], ts.hill.tol)?;
        let (a, b) = (m[0].reduced.exp(), p[0].reduced.exp());
        return Ok([[c1 * a, c2 * b], [c1 * m[0].m * a, c2 * p[0].m * b]]);
    }
    let fp = floquet::floquet_point(&ts.hill, &ts.rhp, lambda, side)?;
    let (rho, ri) = (fp.rho, 1.0 / fp.rho);
    let mm = floquet::bloch_coefficient(&fp, ri, rho);
    let mp = floquet::bloch_coefficient(&fp, rho, ri);
    let y = ode_core::fundamental_matrix(&ts.hill.pot, z, x, false, ts.hill.tol)?;
    let k = branch::sqrt(z);
    let (e1, e2) = ((I * k * x).exp(), (-I * k * x).exp());
    Ok([
        [(y.y1() + mm * y.y2()) * c1 * e1, (y.y1() + mp * y.y2()) * c2 * e2],
        [(y.y1p() + mm * y.y2p()) * c1 * e1, (y.y1p() + mp * y.y2p()) * c2 * e2],
    ])
}

/// `u(x,t) = 2i ∂_x lim √λ (1 − b₁₁(0,λ)^{−1} φ̆₁₁(x,t,λ))` along `ray`
/// (which must lie in the scaled regime, e.g. the default reconstruction
/// ray), in actual (unshifted) units.
pub fn reconstruct_kdv(
    hist: &KdVHistory,
    traj: &DirichletTrajectory,
    rhp: &RHPData,
    x: f64,
    t: f64,
    ray: &[C64],
) -> Result<Reconstruction> {
    let ts = time_slice(hist, traj, rhp, t)?;
    let d = 1e-4 * rhp.period();
    let us = ray
        .par_iter()
        .map(|&l| {
            let z = rhp.point(l, None, true)?;
            if !ode_core::needs_scaling(&ts.hill.pot, z) {
                return Err(HillError::Invalid(format!("reconstruction ray point {l} is not in the scaled regime")));
            }
            let em = e_pm_reduced(hist, traj, rhp, t, l, -1, None)?;
            let (m, _) = ode_core::bloch_riccati(&ts.hill.pot, z, -1, &[x - d, x + d], ts.hill.tol)?;
            let k = branch::sqrt(z);
            // √λ(1 − e^{W}E) at x ± d
            let lv: Vec<C64> = m.iter().map(|m| -k * expm1(m.reduced + em.ln())).collect();
            Ok(2.0 * I * (lv[1] - lv[0]) / (2.0 * d))
        })
        .collect::<Result<Vec<C64>>>()?;
    let hs: Vec<C64> = ray.iter().map(|&l| 1.0 / branch::sqrt(l)).collect();
    let (u, spread) = rhp_verify::neville_at_zero(&hs, &us);
    if !(spread <= 1e-2 * u.norm().max(1.0)) {
        return Err(HillError::ExtrapolationDiverged { spread });
    }
    Ok(Reconstruction { x, u: u.re + rhp.sdata.shift, imag: u.im, spread })
}

/// Edge drift under the reference flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsospectralityReport {
    pub times: Vec<f64>,
    pub edges0: Vec<f64>,
    /// `max_n |λ_n(t) − λ_n(0)|` per time.
    pub drift: Vec<f64>,
    pub max_drift: f64,
}

/// Recomputes `λ_0 … λ_{2 n_gaps}` from the reference field at each time.
pub fn isospectrality_report(u0: &KdVField, t_list: &[f64], n_gaps: usize, steps_per_unit: usize) -> Result<IsospectralityReport> {
    let t_max = t_list.iter().cloned().fold(0.0, f64::max);
    let steps = ((t_max * steps_per_unit as f64).ceil() as usize).max(1);
    let hist = KdVHistory::run(u0, t_max, steps)?;
    let edges_at = |t: f64| -> Result<Vec<f64>> {
        let h = Hill::with_tol(hist.potential_at(t)?, spectrum::SPECTRUM_TOL);
        spectrum::band_edges(&h, n_gaps)
    };
    let edges0 = edges_at(0.0)?;
    let drift = t_list
        .par_iter()
        .map(|&t| {
            let e = edges_at(t)?;
            Ok(e.iter().zip(&edges0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_drift = drift.iter().cloned().fold(0.0, f64::max);
    Ok(IsospectralityReport { times: t_list.to_vec(), edges0, drift, max_drift })
}

/// Dirichlet eigenvalues (normalised plane) of the reference field at `t`.
pub fn dirichlet_oracle(hist: &KdVHistory, shift: f64, t: f64, n_max: usize) -> Result<Vec<f64>> {
    let h = Hill::with_tol(hist.potential_at(t)?, spectrum::SPECTRUM_TOL);
    Ok(spectrum::dirichlet_eigenvalues(&h, n_max)?.into_iter().map(|m| m - shift).collect())
}

/// Residue of `α^±` at `μ_n(t)` by the trapezoid rule on a circle of
/// radius `r` (spectrally accurate for a simple pole).
pub fn alpha_residue(ts: &TimeSlice, center: f64, r: f64, sign: i32, n_nodes: usize) -> Result<C64> {
    let vals = (0..n_nodes)
        .map(|j| {
            let w = C64::from_polar(r, 2.0 * PI * (j as f64 + 0.5) / n_nodes as f64);
            Ok(alpha_pm(ts, center + w, sign, None)? * w)
        })
        .collect::<Result<Vec<C64>>>()?;
    Ok(vals.iter().sum::<C64>() / n_nodes as f64)
}

/// Fitted local exponent of `|f(λ)|` at `center` from offsets `center + i d`.
pub fn local_exponent(ds: &[f64], vals: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = ds.iter().zip(vals).map(|(d, v)| (d.ln(), v.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Jump residual of `Φ̆` against `V̆(x + 6λ₀t, t, λ)` at real `λ`.
pub fn jump_residual_kdv(
    hist: &KdVHistory,
    traj: &DirichletTrajectory,
    rhp: &RHPData,
    x: f64,
    t: f64,
    lambda: f64,
) -> Result<f64> {
    let z = C64::new(lambda, 0.0);
    let p = assemble_phi_kdv(hist, traj, rhp, x, t, z, Some(Side::Plus))?;
    let m = assemble_phi_kdv(hist, traj, rhp, x, t, z, Some(Side::Minus))?;
    let y = x + 6.0 * rhp.sdata.shift * t;
    Ok(rhp_verify::jump_residual(&p, &m, &rhp.jump_v_kdv(y, t, lambda)?))
}

/// `f^±` at `λ` for the data at time `t` (Dirichlet points moved).
pub fn f_at(ts: &TimeSlice, which: Which, lambda: C64) -> C64 {
    ts.rhp.f_function(which, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic;
    use crate::products::TailMode;

    const M: f64 = 0.5;

    fn cnoidal() -> (PeriodicPotential, f64) {
        let (pot, _) = elliptic::lame1(M, PI);
        let a2 = (2.0 * elliptic::complete_k(M) / PI).powi(2);
        (pot.translated(0.3 * PI), 4.0 * (1.0 + M) * a2)
    }

    #[test]
    fn trivial_fields_stay_put() {
        let z = KdVField::new(PI, 0.0, vec![0.0; 64]).unwrap();
        assert!(reference_kdv(&z, 0.1, 50).unwrap().samples.iter().all(|&v| v == 0.0));
        let c = KdVField::new(PI, 0.0, vec![1.5; 64]).unwrap();
        let f = reference_kdv(&c, 0.1, 50).unwrap();
        assert!(f.samples.iter().all(|&v| (v - 1.5).abs() < 1e-13));
    }

    #[test]
    fn cnoidal_wave_translates() {
        let (pot, speed) = cnoidal();
        let u0 = KdVField::from_potential(&pot, 128).unwrap();
        let t = 0.05;
        let f = reference_kdv(&u0, t, 2000).unwrap();
        let exact = pot.translated(speed * t).sample(128);
        let err = f.samples.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        assert!((f.mean() - u0.mean()).abs() < 1e-12);
        assert!((f.momentum() - u0.momentum()).abs() < 1e-9 * u0.momentum());
    }

    #[test]
    fn unresolved_data_is_rejected() {
        let v: Vec<f64> = (0..32).map(|j| if j == 0 { 1.0 } else { 0.0 }).collect();
        let f = KdVField::new(PI, 0.0, v).unwrap();
        assert!(matches!(KdVHistory::run(&f, 0.01, 10), Err(HillError::ResolutionLoss { .. })));
    }

    fn setup(t_end: f64) -> (Hill, RHPData, KdVHistory) {
        let (pot, _) = cnoidal();
        let (h, rhp) = RHPData::normalized(pot.clone(), 12, 200, TailMode::FreeTail).unwrap();
        let hist = KdVHistory::run(&KdVField::from_potential(&pot, 128).unwrap(), t_end, (t_end * 40000.0) as usize).unwrap();
        (h, rhp, hist)
    }

    #[test]
    fn dubrovin_products_match_ode_form() {
        let (h, rhp, hist) = setup(0.01);
        let (u0, _) = hist.origin_values(0.0).unwrap();
        let st: Vec<_> = rhp.sdata.gaps.iter().map(|g| (g.n, g.mu, g.sigma)).collect();
        let v = dubrovin_rhs(&rhp, u0, &st).unwrap();
        for (k, g) in rhp.sdata.gaps.iter().enumerate() {
            let w = dubrovin_rhs_ode(&h, rhp.sdata.shift, u0, g.mu).unwrap();
            assert!((v[k] - w).abs() < 1e-7 * w.abs().max(1.0), "{} vs {w}", v[k]);
            assert!(v[k] != 0.0);
        }
        // odd in σ
        let flipped: Vec<_> = st.iter().map(|&(n, m, s)| (n, m, -s)).collect();
        let vf = dubrovin_rhs(&rhp, u0, &flipped).unwrap();
        assert!((v[0] + vf[0]).abs() < 1e-14 * v[0].abs());
    }

    #[test]
    fn free_data_has_no_motion() {
        let p = PeriodicPotential::zero(PI);
        let (_, rhp) = RHPData::normalized(p.clone(), 6, 50, TailMode::FreeTail).unwrap();
        let hist = KdVHistory::run(&KdVField::from_potential(&p, 32).unwrap(), 0.05, 20).unwrap();
        assert!(dubrovin_rhs(&rhp, 0.0, &[]).unwrap().is_empty());
        let tr = evolve_dirichlet(&hist, &rhp, 0.05, EvolveOptions::default()).unwrap();
        assert!(tr.gaps.is_empty());
    }

    #[test]
    fn dubrovin_follows_dirichlet_eigenvalues() {
        let t_end = 0.1;
        let (_, rhp, hist) = setup(t_end);
        let tr = evolve_dirichlet(&hist, &rhp, t_end, EvolveOptions::default()).unwrap();
        for &t in &[0.02, 0.05, 0.1] {
            let oracle = dirichlet_oracle(&hist, rhp.sdata.shift, t, 1).unwrap()[0];
            let mu = tr.state_at(t)[0].1;
            assert!((mu - oracle).abs() < 1e-5, "t={t}: {mu} vs {oracle}");
            let (a, b) = tr.bounds[0];
            assert!(mu >= a - 1e-12 && mu <= b + 1e-12);
        }
    }

    #[test]
    fn alpha_of_zero_potential() {
        let p = PeriodicPotential::zero(PI);
        let (h, rhp) = RHPData::normalized(p.clone(), 6, 50, TailMode::FreeTail).unwrap();
        let ts = TimeSlice { t: 0.0, hill: h, u0: 0.0, ux0: 0.0, rhp };
        for &l in &[C64::new(-3.0, 1.0), C64::new(10.0, 2.0), C64::new(-400.0, 0.0)] {
            let k = branch::sqrt(l);
            for s in [1, -1] {
                let a = alpha_pm(&ts, l, s, None).unwrap();
                let want = s as f64 * 4.0 * I * k * k * k;
                assert!((a - want).norm() < 1e-8 * want.norm(), "{a} {want}");
            }
        }
    }

    #[test]
    fn e_at_time_zero_and_free() {
        let p = PeriodicPotential::zero(PI);
        let (_, rhp) = RHPData::normalized(p.clone(), 6, 50, TailMode::FreeTail).unwrap();
        let hist = KdVHistory::run(&KdVField::from_potential(&p, 32).unwrap(), 0.05, 20).unwrap();
        let tr = evolve_dirichlet(&hist, &rhp, 0.05, EvolveOptions::default()).unwrap();
        let l = C64::new(-2.0, 1.5);
        assert_eq!(e_pm(&hist, &tr, &rhp, 0.0, l, 1, None).unwrap(), C64::new(1.0, 0.0));
        let k = branch::sqrt(l);
        for s in [1, -1] {
            let e = e_pm(&hist, &tr, &rhp, 0.05, l, s, None).unwrap();
            let want = (s as f64 * 4.0 * I * k * k * k * 0.05).exp();
            assert!((e - want).norm() < 1e-8 * want.norm(), "{e} {want}");
        }
    }

    #[test]
    fn residue_equals_minus_mu_dot() {
        let t_end = 0.03;
        let (_, rhp, hist) = setup(t_end);
        let tr = evolve_dirichlet(&hist, &rhp, t_end, EvolveOptions::default()).unwrap();
        let t = 0.02;
        let ts = time_slice(&hist, &tr, &rhp, t).unwrap();
        let (n, mu, sigma) = tr.state_at(t)[0];
        assert!(sigma != 0);
        let oracle = dirichlet_oracle(&hist, rhp.sdata.shift, t, 1).unwrap()[0];
        let (a, b) = rhp.edge_pair(n);
        let r = 0.05 * (mu - a).min(b - mu);
        let res = alpha_residue(&ts, mu, r, sigma as i32, 64).unwrap();
        let (u0, _) = hist.origin_values(t).unwrap();
        let h_t = Hill::new(hist.potential_at(t).unwrap().shifted(-rhp.sdata.shift));
        let mudot = dubrovin_rhs_ode(&h_t, rhp.sdata.shift, u0, oracle).unwrap();
        assert!((res.re + mudot).abs() < 1e-5 * mudot.abs() && res.im.abs() < 1e-5 * mudot.abs(), "{res} vs {}", -mudot);
    }

    #[test]
    fn phi_kdv_at_time_zero_is_phi() {
        let (h, rhp, hist) = setup(0.01);
        let tr = evolve_dirichlet(&hist, &rhp, 0.01, EvolveOptions::default()).unwrap();
        for &l in &[C64::new(1.3, 0.7), C64::new(-5.0, 0.0), C64::new(3.0, -2.0)] {
            let a = assemble_phi_kdv(&hist, &tr, &rhp, 0.8, 0.0, l, None).unwrap();
            let b = rhp_verify::assemble_phi(&h, &rhp, 0.8, l, None).unwrap().phi;
            for i in 0..2 {
                for j in 0..2 {
                    assert!((a[i][j] - b[i][j]).norm() < 1e-9 * b[i][j].norm().max(1.0));
                }
            }
        }
    }
}
