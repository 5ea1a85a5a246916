//! Hill's equation `-y'' + u y = λ y` for complex λ.
//!
//! Potentials are stored as trigonometric polynomials; the fundamental matrix
//! `Y(x,λ) = [[y₁, y₂], [y₁', y₂']]` with `Y(0,λ) = I` is integrated by an
//! adaptive Gragg–Bulirsch–Stoer extrapolation scheme (order up to 16), which
//! comfortably reaches the `1e-11` relative tolerance the root finders need.
//! When `Im √λ · T` is large the entries overflow in relative precision, so the
//! Bloch solutions are instead obtained from the Riccati equation for their
//! logarithmic derivative with the phase `e^{±i√λx}` factored out.

use crate::branch;
use crate::error::{HillError, Result};
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Real `T`-periodic potential `u(x) = Σ_{k=-K}^{K} c_k e^{2πikx/T}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPotential {
    pub period: f64,
    /// `c_0, c_1, …, c_K`; negative modes are the conjugates.
    pub coeffs: Vec<C64>,
    /// Original samples `(x, u(x))` when the potential was lifted from a grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_grid: Option<Vec<(f64, f64)>>,
}

impl PeriodicPotential {
    /// Builds from non-negative modes; `c_0` is forced real.
    pub fn new(period: f64, coeffs: Vec<C64>) -> Result<Self> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(HillError::Invalid(format!("period must be positive, got {period}")));
        }
        let mut coeffs = if coeffs.is_empty() { vec![C64::new(0.0, 0.0)] } else { coeffs };
        coeffs[0].im = 0.0;
        Ok(Self { period, coeffs, sample_grid: None })
    }

    /// Builds from `(k, c_k)` pairs for any sign of `k`; conjugate symmetry is
    /// required within `1e-12` and the average of each pair is kept.
    pub fn from_modes(period: f64, modes: &[(i64, C64)]) -> Result<Self> {
        let kmax = modes.iter().map(|(k, _)| k.unsigned_abs() as usize).max().unwrap_or(0);
        let mut pos = vec![C64::new(0.0, 0.0); kmax + 1];
        let mut neg = vec![None::<C64>; kmax + 1];
        for &(k, c) in modes {
            if k >= 0 {
                pos[k as usize] += c;
            } else {
                let e = neg[(-k) as usize].get_or_insert(C64::new(0.0, 0.0));
                *e += c;
            }
        }
        for k in 1..=kmax {
            match neg[k] {
                Some(cn) => {
                    let cp = pos[k];
                    if (cp - cn.conj()).norm() > 1e-12 * (1.0 + cp.norm()) {
                        return Err(HillError::Invalid(format!(
                            "mode {k}: c_-k must equal conj(c_k) for a real potential"
                        )));
                    }
                    pos[k] = 0.5 * (cp + cn.conj());
                }
                None => {
                    // A one-sided list is read as the positive half of a real series.
                }
            }
        }
        if pos[0].im.abs() > 1e-12 {
            return Err(HillError::Invalid("c_0 must be real".into()));
        }
        Self::new(period, pos)
    }

    /// Trigonometric interpolant of uniform samples `u(jT/M)`, `j = 0..M-1`.
    pub fn from_samples(period: f64, samples: &[f64]) -> Result<Self> {
        let m = samples.len();
        if m < 3 {
            return Err(HillError::Invalid("need at least 3 samples".into()));
        }
        let mut buf: Vec<C64> = samples.iter().map(|&v| C64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        let kmax = (m - 1) / 2;
        let mut coeffs: Vec<C64> = (0..=kmax).map(|k| buf[k] / m as f64).collect();
        if m % 2 == 0 {
            // Split the Nyquist mode evenly between ±M/2.
            coeffs.push(buf[m / 2] / (2.0 * m as f64));
        }
        let mut p = Self::new(period, coeffs)?;
        p.sample_grid = Some(
            samples.iter().enumerate().map(|(j, &v)| (j as f64 * period / m as f64, v)).collect(),
        );
        p.trim(1e-17);
        Ok(p)
    }

    pub fn zero(period: f64) -> Self {
        Self::new(period, vec![C64::new(0.0, 0.0)]).unwrap()
    }

    pub fn constant(period: f64, c: f64) -> Self {
        Self::new(period, vec![C64::new(c, 0.0)]).unwrap()
    }

    /// Mathieu potential `2q cos 2x` on `T = π`.
    pub fn mathieu(q: f64) -> Self {
        Self::new(PI, vec![C64::new(0.0, 0.0), C64::new(q, 0.0)]).unwrap()
    }

    /// Drops trailing modes below `eps` (absolute).
    pub fn trim(&mut self, eps: f64) {
        while self.coeffs.len() > 1 && self.coeffs.last().unwrap().norm() < eps {
            self.coeffs.pop();
        }
    }

    pub fn kmax(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Mean value `c_0 = Q/T`.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// `Q = ∫_0^T u`.
    pub fn q_integral(&self) -> f64 {
        self.period * self.mean()
    }

    #[inline]
    fn omega(&self) -> f64 {
        2.0 * PI / self.period
    }

    /// `u(x)` by Fourier synthesis; periodic extension is exact.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let c = &self.coeffs;
        if c.len() == 1 {
            return c[0].re;
        }
        let z = C64::from_polar(1.0, self.omega() * x);
        let mut zk = z;
        let mut s = C64::new(0.0, 0.0);
        for ck in &c[1..] {
            s += ck * zk;
            zk *= z;
        }
        c[0].re + 2.0 * s.re
    }

    /// `∂ˣ^order u(x)`.
    pub fn eval_derivative(&self, x: f64, order: u32) -> f64 {
        if order == 0 {
            return self.eval(x);
        }
        let w = self.omega();
        let mut s = C64::new(0.0, 0.0);
        for (k, ck) in self.coeffs.iter().enumerate().skip(1) {
            let f = (I * (k as f64 * w)).powu(order);
            s += ck * f * C64::from_polar(1.0, k as f64 * w * x);
        }
        2.0 * s.re
    }

    /// `∫_0^x u`.
    pub fn antiderivative(&self, x: f64) -> f64 {
        let w = self.omega();
        let mut s = C64::new(0.0, 0.0);
        for (k, ck) in self.coeffs.iter().enumerate().skip(1) {
            let kw = k as f64 * w;
            s += ck * (C64::from_polar(1.0, kw * x) - 1.0) / (I * kw);
        }
        self.mean() * x + 2.0 * s.re
    }

    /// `u + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.coeffs[0].re += c;
        p.sample_grid = None;
        p
    }

    /// `x ↦ u(x + x0)`.
    pub fn translated(&self, x0: f64) -> Self {
        let w = self.omega();
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * C64::from_polar(1.0, k as f64 * w * x0))
            .collect();
        Self { period: self.period, coeffs, sample_grid: None }
    }

    /// Samples on a uniform grid of `m` points.
    pub fn sample(&self, m: usize) -> Vec<f64> {
        (0..m).map(|j| self.eval(j as f64 * self.period / m as f64)).collect()
    }

    /// Lower bound for `inf u` (every λ below it is below the spectrum).
    pub fn lower_bound(&self) -> f64 {
        let tail: f64 = self.coeffs.iter().skip(1).map(|c| 2.0 * c.norm()).sum();
        let grid = self.sample(256).into_iter().fold(f64::INFINITY, f64::min);
        grid.max(self.mean() - tail) - 1e-9 * (1.0 + tail)
    }
}

/// Integrator tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tol {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tol {
    fn default() -> Self {
        Self { rtol: 1e-11, atol: 1e-12 }
    }
}

const ROWS: usize = 8;
const SEQ: [usize; ROWS] = [2, 4, 6, 8, 10, 12, 14, 16];

/// Adaptive Gragg–Bulirsch–Stoer integration of `y' = f(x, y)` from `x0` to
/// `x1` (either direction). `h` carries the step size between calls; pass
/// `0.0` to let the integrator pick one. Returns the number of accepted steps.
pub fn integrate<F>(f: &mut F, x0: f64, x1: f64, y: &mut [f64], tol: Tol, h: &mut f64) -> Result<usize>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    let span = x1 - x0;
    if span == 0.0 {
        return Ok(0);
    }
    let dir = span.signum();
    let mut step = if *h > 0.0 { h.min(span.abs()) } else { (span.abs() / 4.0).min(0.5) };
    let mut x = x0;
    let mut dy0 = vec![0.0; n];
    let mut tab = vec![vec![0.0; n]; ROWS * ROWS];
    let (mut zm, mut zc, mut zn, mut dz) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut accepted = 0usize;
    let mut rejects = 0usize;
    while (x1 - x) * dir > 1e-15 * x1.abs().max(1.0) {
        let last = step >= (x1 - x).abs();
        let hh = if last { (x1 - x).abs() } else { step };
        let hs = dir * hh;
        f(x, y, &mut dy0);
        let mut done: Option<(usize, f64)> = None;
        let mut last_err = f64::INFINITY;
        for j in 0..ROWS {
            // Modified midpoint with Gragg smoothing.
            let m = SEQ[j];
            let sub = hs / m as f64;
            for i in 0..n {
                zm[i] = y[i];
                zc[i] = y[i] + sub * dy0[i];
            }
            for k in 1..m {
                f(x + k as f64 * sub, &zc, &mut dz);
                for i in 0..n {
                    zn[i] = zm[i] + 2.0 * sub * dz[i];
                }
                std::mem::swap(&mut zm, &mut zc);
                std::mem::swap(&mut zc, &mut zn);
            }
            f(x + hs, &zc, &mut dz);
            {
                let row = &mut tab[j * ROWS];
                for i in 0..n {
                    row[i] = 0.5 * (zc[i] + zm[i] + sub * dz[i]);
                }
            }
            for k in 1..=j {
                let r = (SEQ[j] as f64 / SEQ[j - k] as f64).powi(2) - 1.0;
                for i in 0..n {
                    let a = tab[j * ROWS + k - 1][i];
                    let b = tab[(j - 1) * ROWS + k - 1][i];
                    tab[j * ROWS + k][i] = a + (a - b) / r;
                }
            }
            if j >= 2 {
                let mut acc = 0.0;
                for i in 0..n {
                    let a = tab[j * ROWS + j][i];
                    let b = tab[j * ROWS + j - 1][i];
                    let sc = tol.atol + tol.rtol * a.abs().max(y[i].abs());
                    acc += ((a - b) / sc).powi(2);
                }
                let err = (acc / n as f64).sqrt();
                last_err = err;
                if !err.is_finite() {
                    break;
                }
                if err <= 1.0 {
                    done = Some((j, err));
                    break;
                }
            }
        }
        match done {
            Some((j, err)) => {
                let row = &tab[j * ROWS + j];
                y.copy_from_slice(row);
                x = if last { x1 } else { x + hs };
                accepted += 1;
                let fac = (0.94 * (0.65 / err.max(1e-30)).powf(1.0 / (2 * j + 1) as f64)).clamp(0.25, 4.0);
                let pref = match j {
                    0..=4 => fac,
                    5 => fac.min(1.2),
                    _ => fac.min(0.7),
                };
                if !last {
                    step = hh * pref;
                }
            }
            None => {
                rejects += 1;
                let fac = if last_err.is_finite() {
                    (0.9 * (1.0 / last_err).powf(1.0 / 15.0)).clamp(0.1, 0.5)
                } else {
                    0.1
                };
                step = hh * fac;
                if step < 1e-13 * x.abs().max(1.0) || rejects > 10_000 {
                    return Err(HillError::IntegratorFailure { x, h: step });
                }
            }
        }
        for v in y.iter() {
            if !v.is_finite() {
                return Err(HillError::IntegratorFailure { x, h: step });
            }
        }
    }
    *h = step;
    Ok(accepted)
}

/// `Y(x, λ)` and optionally `∂Y/∂λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalMatrix {
    pub x: f64,
    pub lambda: C64,
    /// `[[y₁, y₂], [y₁', y₂']]`.
    pub entries: [[C64; 2]; 2],
    pub d_lambda_entries: Option<[[C64; 2]; 2]>,
}

impl FundamentalMatrix {
    pub fn y1(&self) -> C64 {
        self.entries[0][0]
    }
    pub fn y2(&self) -> C64 {
        self.entries[0][1]
    }
    pub fn y1p(&self) -> C64 {
        self.entries[1][0]
    }
    pub fn y2p(&self) -> C64 {
        self.entries[1][1]
    }
    pub fn det(&self) -> C64 {
        let e = &self.entries;
        e[0][0] * e[1][1] - e[0][1] * e[1][0]
    }
    pub fn trace(&self) -> C64 {
        self.entries[0][0] + self.entries[1][1]
    }
    pub fn dl(&self) -> [[C64; 2]; 2] {
        self.d_lambda_entries.expect("λ-derivative was not requested")
    }
}

fn mat_mul(a: &[[C64; 2]; 2], b: &[[C64; 2]; 2]) -> [[C64; 2]; 2] {
    let mut c = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn hill_rhs(p: &PeriodicPotential, lambda: C64, with_dl: bool) -> impl FnMut(f64, &[f64], &mut [f64]) + '_ {
    move |x, y, dy| {
        let q = C64::new(p.eval(x), 0.0) - lambda;
        for col in 0..2 {
            let o = 4 * col;
            let yv = C64::new(y[o], y[o + 1]);
            let pv = C64::new(y[o + 2], y[o + 3]);
            let acc = q * yv;
            dy[o] = pv.re;
            dy[o + 1] = pv.im;
            dy[o + 2] = acc.re;
            dy[o + 3] = acc.im;
            if with_dl {
                let o2 = 8 + o;
                let dyv = C64::new(y[o2], y[o2 + 1]);
                let dpv = C64::new(y[o2 + 2], y[o2 + 3]);
                let acc2 = q * dyv - yv;
                dy[o2] = dpv.re;
                dy[o2 + 1] = dpv.im;
                dy[o2 + 2] = acc2.re;
                dy[o2 + 3] = acc2.im;
            }
        }
    }
}

fn initial_state(with_dl: bool) -> Vec<f64> {
    let mut y = vec![0.0; if with_dl { 16 } else { 8 }];
    y[0] = 1.0; // y1(0) = 1
    y[6] = 1.0; // y2'(0) = 1
    y
}

fn unpack(x: f64, lambda: C64, y: &[f64], with_dl: bool) -> FundamentalMatrix {
    let c = |o: usize| C64::new(y[o], y[o + 1]);
    let entries = [[c(0), c(4)], [c(2), c(6)]];
    let d = if with_dl { Some([[c(8), c(12)], [c(10), c(14)]]) } else { None };
    FundamentalMatrix { x, lambda, entries, d_lambda_entries: d }
}

/// `Y(x, λ)` for `x ∈ [0, T]`; larger `x` are reduced with `Y(x+T) = Y(x)Y(T)`.
pub fn fundamental_matrix(p: &PeriodicPotential, lambda: C64, x: f64, with_dlambda: bool, tol: Tol) -> Result<FundamentalMatrix> {
    Ok(fundamental_matrices(p, lambda, &[x], with_dlambda, tol)?.remove(0))
}

/// `Y(x_j, λ)` for several `x_j` in one sweep.
pub fn fundamental_matrices(
    p: &PeriodicPotential,
    lambda: C64,
    xs: &[f64],
    with_dlambda: bool,
    tol: Tol,
) -> Result<Vec<FundamentalMatrix>> {
    let t = p.period;
    let mut reduced: Vec<(usize, f64, i64)> = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let n = (x / t).floor() as i64;
            let mut r = x - n as f64 * t;
            let mut n = n;
            if r >= t * (1.0 - 1e-14) {
                r = t;
                n -= 0;
            }
            if r < 0.0 {
                r = 0.0;
            }
            if n < 0 {
                // Negative x: Y(x) = Y(x + |n|T) M^{-|n|}; handled below.
            }
            (i, r, { n })
        })
        .collect();
    reduced.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let need_monodromy = reduced.iter().any(|r| r.2 != 0);
    let mut out = vec![None; xs.len()];
    let mut y = initial_state(with_dlambda);
    let mut h = 0.0;
    let mut xc = 0.0;
    let mut rhs = hill_rhs(p, lambda, with_dlambda);
    let mut locals = Vec::with_capacity(reduced.len());
    for &(i, r, n) in &reduced {
        integrate(&mut rhs, xc, r, &mut y, tol, &mut h)?;
        xc = r;
        locals.push((i, n, unpack(r, lambda, &y, with_dlambda)));
    }
    let mono = if need_monodromy {
        integrate(&mut rhs, xc, t, &mut y, tol, &mut h)?;
        Some(unpack(t, lambda, &y, with_dlambda))
    } else {
        None
    };
    for (i, n, local) in locals {
        let fm = if n == 0 {
            local
        } else {
            compose(&local, mono.as_ref().unwrap(), n)
        };
        out[i] = Some(FundamentalMatrix { x: xs[i], ..fm });
    }
    Ok(out.into_iter().map(|o| o.unwrap()).collect())
}

/// `Y(r)·M^n` together with its λ-derivative (product rule).
fn compose(local: &FundamentalMatrix, mono: &FundamentalMatrix, n: i64) -> FundamentalMatrix {
    let inv = |m: &[[C64; 2]; 2]| {
        let d = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]
    };
    let (base, dbase) = if n > 0 {
        (mono.entries, mono.d_lambda_entries)
    } else {
        let bi = inv(&mono.entries);
        // d(M⁻¹) = -M⁻¹ dM M⁻¹
        let db = mono.d_lambda_entries.map(|dm| {
            let t = mat_mul(&bi, &mat_mul(&dm, &bi));
            [[-t[0][0], -t[0][1]], [-t[1][0], -t[1][1]]]
        });
        (bi, db)
    };
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let mut pw = [[one, zero], [zero, one]];
    let mut dpw = [[zero; 2]; 2];
    for _ in 0..n.unsigned_abs() {
        if let Some(db) = dbase {
            let a = mat_mul(&dpw, &base);
            let b = mat_mul(&pw, &db);
            for i in 0..2 {
                for j in 0..2 {
                    dpw[i][j] = a[i][j] + b[i][j];
                }
            }
        }
        pw = mat_mul(&pw, &base);
    }
    let entries = mat_mul(&local.entries, &pw);
    let d = match (local.d_lambda_entries, dbase) {
        (Some(dl), Some(_)) => {
            let a = mat_mul(&dl, &pw);
            let b = mat_mul(&local.entries, &dpw);
            let mut r = [[zero; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    r[i][j] = a[i][j] + b[i][j];
                }
            }
            Some(r)
        }
        _ => None,
    };
    FundamentalMatrix { x: local.x, lambda: local.lambda, entries, d_lambda_entries: d }
}

/// A Hill operator: potential, tolerances and a monodromy memo.
///
/// The memo is keyed on the bit pattern of λ and guarded by a mutex, so a
/// `Hill` can be shared across rayon workers during a sweep.
#[derive(Debug)]
pub struct Hill {
    pub pot: PeriodicPotential,
    pub tol: Tol,
    cache: Mutex<HashMap<(u64, u64, bool), FundamentalMatrix>>,
}

impl Clone for Hill {
    fn clone(&self) -> Self {
        Self::with_tol(self.pot.clone(), self.tol)
    }
}

impl Hill {
    pub fn new(pot: PeriodicPotential) -> Self {
        Self::with_tol(pot, Tol::default())
    }

    pub fn with_tol(pot: PeriodicPotential, tol: Tol) -> Self {
        Self { pot, tol, cache: Mutex::new(HashMap::new()) }
    }

    pub fn period(&self) -> f64 {
        self.pot.period
    }

    /// `Y(T, λ)`; memoised per λ (with or without the λ-derivative).
    pub fn monodromy(&self, lambda: C64, with_dlambda: bool) -> Result<FundamentalMatrix> {
        let key = (lambda.re.to_bits(), lambda.im.to_bits(), with_dlambda);
        if let Some(m) = self.cache.lock().unwrap().get(&key) {
            return Ok(*m);
        }
        let m = fundamental_matrix(&self.pot, lambda, self.pot.period, with_dlambda, self.tol)?;
        let mut c = self.cache.lock().unwrap();
        if c.len() > 20_000 {
            c.clear();
        }
        c.insert(key, m);
        Ok(m)
    }

    pub fn fundamental(&self, lambda: C64, x: f64, with_dlambda: bool) -> Result<FundamentalMatrix> {
        fundamental_matrix(&self.pot, lambda, x, with_dlambda, self.tol)
    }

    pub fn clear_cache(&self) {
        self.cache.lock().unwrap().clear();
    }
}

/// `Y(T, λ)` (uncached convenience form).
pub fn monodromy(p: &PeriodicPotential, lambda: C64) -> Result<FundamentalMatrix> {
    fundamental_matrix(p, lambda, p.period, false, Tol::default())
}

/// Threshold on `Im√λ · T` above which the scaled (Riccati) form is used.
pub const SCALED_THRESHOLD: f64 = 15.0;

/// Whether entries of `Y(T,λ)` lose relative precision for this λ.
pub fn needs_scaling(p: &PeriodicPotential, lambda: C64) -> bool {
    branch::sqrt(lambda).im * p.period > SCALED_THRESHOLD
}

/// Bloch solution in logarithmic form: `ψ(x) = exp(log_psi)`, `ψ'(x) = m·ψ(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogBloch {
    pub x: f64,
    /// `log ψ(x) = ± i√λ x + ∫_0^x v`.
    pub log_psi: C64,
    /// `∫_0^x v`, the part left after removing the phase.
    pub reduced: C64,
    /// `m(x) = ψ'(x)/ψ(x)`.
    pub m: C64,
}

/// Bloch solutions `ψ^±` (sign `+1` / `-1`) from the Riccati equation
/// `v' = u ∓ 2i√λ v - v²` for `m = ±i√λ + v`.
///
/// `ψ⁺` decays to the right so it is integrated backwards; `ψ⁻` forwards.
/// A full period of transient is run first so the periodic solution is
/// selected to `e^{-2 Im√λ T}`. Returns the values at `xs ⊂ [0, T]` and
/// `log ρ^{±1} = ∫_0^T m`.
pub fn bloch_riccati(p: &PeriodicPotential, lambda: C64, sign: i32, xs: &[f64], tol: Tol) -> Result<(Vec<LogBloch>, C64)> {
    let t = p.period;
    let s = branch::sqrt(lambda) * sign as f64;
    let is = I * s;
    let mut rhs = |x: f64, y: &[f64], dy: &mut [f64]| {
        let v = C64::new(y[0], y[1]);
        let dv = C64::new(p.eval(x), 0.0) - 2.0 * is * v - v * v;
        dy[0] = dv.re;
        dy[1] = dv.im;
        dy[2] = y[0];
        dy[3] = y[1];
    };
    let guess = |x: f64| C64::new(p.eval(x), 0.0) / (2.0 * is);
    let mut h = 0.0;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut vals = vec![(C64::new(0.0, 0.0), C64::new(0.0, 0.0)); xs.len()];
    let total;
    if sign > 0 {
        let g = guess(2.0 * t);
        let mut y = vec![g.re, g.im, 0.0, 0.0];
        integrate(&mut rhs, 2.0 * t, t, &mut y, tol, &mut h)?;
        y[2] = 0.0;
        y[3] = 0.0;
        order.sort_by(|&a, &b| xs[b].partial_cmp(&xs[a]).unwrap());
        let mut xc = t;
        for &i in &order {
            integrate(&mut rhs, xc, xs[i], &mut y, tol, &mut h)?;
            xc = xs[i];
            // ∫_T^x v is accumulated; keep v and the partial integral.
            vals[i] = (C64::new(y[0], y[1]), C64::new(y[2], y[3]));
        }
        integrate(&mut rhs, xc, 0.0, &mut y, tol, &mut h)?;
        let i0 = C64::new(y[2], y[3]); // ∫_T^0 v = -∫_0^T v
        total = -i0;
        for v in vals.iter_mut() {
            // ∫_0^x v = ∫_T^x v - ∫_T^0 v
            v.1 -= i0;
        }
    } else {
        let g = guess(-t);
        let mut y = vec![g.re, g.im, 0.0, 0.0];
        integrate(&mut rhs, -t, 0.0, &mut y, tol, &mut h)?;
        y[2] = 0.0;
        y[3] = 0.0;
        order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
        let mut xc = 0.0;
        for &i in &order {
            integrate(&mut rhs, xc, xs[i], &mut y, tol, &mut h)?;
            xc = xs[i];
            vals[i] = (C64::new(y[0], y[1]), C64::new(y[2], y[3]));
        }
        integrate(&mut rhs, xc, t, &mut y, tol, &mut h)?;
        total = C64::new(y[2], y[3]);
    }
    let out = xs
        .iter()
        .zip(vals)
        .map(|(&x, (v, w))| LogBloch { x, log_psi: is * x + w, reduced: w, m: is + v })
        .collect();
    Ok((out, is * t + total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn eval_examples() {
        assert_eq!(PeriodicPotential::zero(PI).eval(1.3), 0.0);
        assert_eq!(PeriodicPotential::constant(PI, 1.0).eval(0.7), 1.0);
        let m = PeriodicPotential::mathieu(0.3);
        assert!((m.eval(0.0) - 0.6).abs() < 1e-15);
        assert!((m.eval(0.4) - 0.6 * (0.8f64).cos()).abs() < 1e-14);
    }

    #[test]
    fn free_particle_closed_forms() {
        let p = PeriodicPotential::zero(PI);
        let y = fundamental_matrix(&p, c(4.0, 0.0), PI, false, Tol::default()).unwrap();
        let id = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((y.entries[i][j] - id[i][j]).norm() < 1e-10);
            }
        }
        let y = fundamental_matrix(&p, c(0.0, 0.0), 1.0, false, Tol::default()).unwrap();
        assert!((y.y1() - 1.0).norm() < 1e-12 && (y.y2() - 1.0).norm() < 1e-12);
        assert!(y.y1p().norm() < 1e-12 && (y.y2p() - 1.0).norm() < 1e-12);
        let m = monodromy(&p, c(1.0, 0.0)).unwrap();
        assert!((m.y1() + 1.0).norm() < 1e-10 && m.y2().norm() < 1e-10);
        let m = monodromy(&p, c(2.0, 0.0)).unwrap();
        let s = 2f64.sqrt();
        assert!((m.y1() - (s * PI).cos()).norm() < 1e-10);
        assert!((m.y2() - (s * PI).sin() / s).norm() < 1e-10);
        assert!((m.y1p() + s * (s * PI).sin()).norm() < 1e-10);
    }

    /// Independent fixed-step classical RK4 on the same system.
    fn rk4_oracle(p: &PeriodicPotential, lambda: C64, x: f64, steps: usize) -> [[C64; 2]; 2] {
        let mut y = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        let h = x / steps as f64;
        let f = |xx: f64, y: [[C64; 2]; 2]| {
            let q = c(p.eval(xx), 0.0) - lambda;
            [[y[1][0], y[1][1]], [q * y[0][0], q * y[0][1]]]
        };
        let add = |a: [[C64; 2]; 2], b: [[C64; 2]; 2], s: f64| {
            let mut r = a;
            for i in 0..2 {
                for j in 0..2 {
                    r[i][j] = a[i][j] + b[i][j] * s;
                }
            }
            r
        };
        for k in 0..steps {
            let xx = k as f64 * h;
            let k1 = f(xx, y);
            let k2 = f(xx + h / 2.0, add(y, k1, h / 2.0));
            let k3 = f(xx + h / 2.0, add(y, k2, h / 2.0));
            let k4 = f(xx + h, add(y, k3, h));
            for i in 0..2 {
                for j in 0..2 {
                    y[i][j] += (k1[i][j] + 2.0 * k2[i][j] + 2.0 * k3[i][j] + k4[i][j]) * (h / 6.0);
                }
            }
        }
        y
    }

    #[test]
    fn mathieu_against_step_halving_oracle() {
        let p = PeriodicPotential::mathieu(0.5);
        let lam = c(1.0, 0.5);
        let y = fundamental_matrix(&p, lam, PI, false, Tol::default()).unwrap();
        assert!((y.det() - 1.0).norm() < 1e-10);
        let a = rk4_oracle(&p, lam, PI, 4000);
        let b = rk4_oracle(&p, lam, PI, 8000);
        // Richardson-corrected RK4 (order 4).
        for i in 0..2 {
            for j in 0..2 {
                let r = b[i][j] + (b[i][j] - a[i][j]) / 15.0;
                assert!((y.entries[i][j] - r).norm() < 1e-10, "{i}{j}");
            }
        }
    }

    #[test]
    fn dlambda_matches_finite_difference() {
        let p = PeriodicPotential::mathieu(0.3);
        let lam = c(2.3, 0.4);
        let y = fundamental_matrix(&p, lam, PI, true, Tol::default()).unwrap();
        let h = 1e-5;
        let yp = fundamental_matrix(&p, lam + h, PI, false, Tol::default()).unwrap();
        let ym = fundamental_matrix(&p, lam - h, PI, false, Tol::default()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let fd = (yp.entries[i][j] - ym.entries[i][j]) / (2.0 * h);
                let d = y.dl()[i][j];
                assert!((fd - d).norm() <= 1e-6 * d.norm().max(1.0));
            }
        }
    }

    #[test]
    fn composition_beyond_one_period() {
        let p = PeriodicPotential::mathieu(0.2);
        let lam = c(0.7, 0.1);
        let x = 2.5 * PI;
        let direct = {
            // Integrate straight through without reduction.
            let mut y = initial_state(true);
            let mut h = 0.0;
            integrate(&mut hill_rhs(&p, lam, true), 0.0, x, &mut y, Tol::default(), &mut h).unwrap();
            unpack(x, lam, &y, true)
        };
        let red = fundamental_matrix(&p, lam, x, true, Tol::default()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((direct.entries[i][j] - red.entries[i][j]).norm() < 1e-9);
                assert!((direct.dl()[i][j] - red.dl()[i][j]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn samples_roundtrip() {
        let p = PeriodicPotential::mathieu(0.4).translated(0.3);
        let s = p.sample(32);
        let q = PeriodicPotential::from_samples(PI, &s).unwrap();
        for k in 0..20 {
            let x = 0.17 * k as f64;
            assert!((p.eval(x) - q.eval(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn riccati_matches_direct_bloch() {
        // Moderate λ where both representations are accurate.
        let p = PeriodicPotential::mathieu(0.3);
        let lam = c(-30.0, 5.0);
        let (vals, log_rho) = bloch_riccati(&p, lam, 1, &[0.4, 1.1], Tol::default()).unwrap();
        let m = fundamental_matrix(&p, lam, PI, false, Tol::default()).unwrap();
        let rho = log_rho.exp();
        assert!(rho.norm() < 1.0);
        assert!((rho + 1.0 / rho - m.trace()).norm() < 1e-8 * m.trace().norm());
        let ratio = (rho - m.y1()) / m.y2();
        for v in vals {
            let y = fundamental_matrix(&p, lam, v.x, false, Tol::default()).unwrap();
            let psi = y.y1() + ratio * y.y2();
            assert!((psi - v.log_psi.exp()).norm() < 1e-8 * psi.norm());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn wronskian_is_conserved(re in -20.0f64..60.0, im in -5.0f64..5.0, x in 0.0f64..PI) {
            let p = PeriodicPotential::mathieu(0.5);
            let y = fundamental_matrix(&p, c(re, im), x, false, Tol::default()).unwrap();
            prop_assert!((y.det() - 1.0).norm() < 1e-9 * y.entries[0][0].norm().max(1.0));
        }

        #[test]
        fn constant_shift_identity(cst in -3.0f64..3.0, re in -10.0f64..30.0, im in -2.0f64..2.0) {
            let a = monodromy(&PeriodicPotential::constant(PI, cst), c(re, im)).unwrap();
            let b = monodromy(&PeriodicPotential::zero(PI), c(re - cst, im)).unwrap();
            for i in 0..2 { for j in 0..2 {
                prop_assert!((a.entries[i][j] - b.entries[i][j]).norm() < 1e-8 * b.entries[i][j].norm().max(1.0));
            }}
        }

        #[test]
        fn periodic_evaluation(x in -10.0f64..10.0) {
            let p = PeriodicPotential::mathieu(0.7).translated(0.2);
            prop_assert!((p.eval(x) - p.eval(x + PI)).abs() < 1e-12);
        }
    }
}
