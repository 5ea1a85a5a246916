//! Canonical products over the spectrum and the ingredients of the
//! Riemann–Hilbert problem built from them.
//!
//! Gaps `n ≤ n_max` use resolved data. Beyond that the factors use the
//! surrogate `s_n = n²π²/T² + Q/T + c₂/n²` (closed gaps, `μ_n = s_n`), with
//! `c₂` fitted on the last resolved gap. Explicit factors run to
//! `M ≥ N_trunc`; with [`TailMode::FreeTail`] the rest is summed in closed
//! form via `log ∏_{n>M}(1 − a/n² + b/n⁴) = −Σ_k p_k ζ(2k, M+1)/k`.
//!
//! One-sided values on `ℝ⁺` are exact: a real λ is given a signed-zero
//! imaginary part and [`branch::arg`] resolves the side.

use crate::branch::{self, Side};
use crate::error::{HillError, Result};
use crate::ode_core::Hill;
use crate::spectrum::{self, SpectralData, SpectrumOptions};
use crate::C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// What happens beyond the explicit factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailMode {
    /// Products stop at `N_trunc`.
    None,
    /// Surrogate factors are continued to infinity analytically.
    FreeTail,
}

/// Which of `f⁺`, `f⁻`, `f⁰`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    Plus,
    Minus,
    Zero,
}

pub type Mat2 = [[C64; 2]; 2];

/// Product accumulator that rescales to avoid intermediate overflow.
#[derive(Debug, Clone, Copy)]
struct Acc {
    m: C64,
    e: f64,
}

impl Acc {
    fn new(z: C64) -> Self {
        Self { m: z, e: 0.0 }
    }

    fn mul(&mut self, z: C64) {
        self.m *= z;
        let n = self.m.norm();
        if !(1e-150..=1e150).contains(&n) && n > 0.0 && n.is_finite() {
            self.e += n.ln();
            self.m /= n;
        }
    }

    fn mul_exp(&mut self, l: C64) {
        self.e += l.re;
        self.m *= C64::from_polar(1.0, l.im);
    }

    fn value(self) -> C64 {
        if self.m == C64::new(0.0, 0.0) {
            return self.m;
        }
        self.m * self.e.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parity {
    All,
    Even,
    Odd,
}

impl Parity {
    fn admits(self, n: usize) -> bool {
        match self {
            Parity::All => true,
            Parity::Even => n % 2 == 0,
            Parity::Odd => n % 2 == 1,
        }
    }
}

const BERNOULLI: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// `q^s ζ(s, q)` by Euler–Maclaurin (`s > 1`, `q ≥ 1`).
fn hurwitz_scaled(s: f64, q: f64) -> f64 {
    const N: usize = 12;
    let mut sum = 0.0;
    for j in 0..N {
        sum += (q / (q + j as f64)).powf(s);
    }
    let w = q + N as f64;
    let r = (q / w).powf(s);
    sum += r * w / (s - 1.0) + 0.5 * r;
    let mut poch = s; // s(s+1)…(s+2j−2)
    let mut fact = 2.0; // (2j)!
    let mut wp = 1.0 / w; // w^{1−2j}
    for (j, b) in BERNOULLI.iter().enumerate() {
        let jj = j + 1;
        let t = r * b / fact * poch * wp;
        sum += t;
        if t.abs() < 1e-18 * sum.abs() {
            break;
        }
        poch *= (s + 2.0 * jj as f64 - 1.0) * (s + 2.0 * jj as f64);
        fact *= (2 * jj + 1) as f64 * (2 * jj + 2) as f64;
        wp /= w * w;
    }
    sum
}

/// `Σ_{n>M, n∈parity} log(1 − a/n² + b/n⁴)`; requires `(M+1)² ≥ 4|r|` for
/// both roots `r` of `r² − a r + b`.
fn tail_log(a: C64, b: f64, m: usize, parity: Parity) -> C64 {
    let q0 = (m + 1) as f64;
    let m0 = m / 2 + 1;
    let n0 = 2.0 * m0 as f64;
    let x = a / (q0 * q0);
    let y = b / q0.powi(4);
    let (mut p_prev, mut p) = (C64::new(2.0, 0.0), x);
    let mut total = C64::new(0.0, 0.0);
    for k in 1..400 {
        let s = 2.0 * k as f64;
        let all = hurwitz_scaled(s, q0);
        let even = (q0 / n0).powf(s) * hurwitz_scaled(s, m0 as f64);
        let w = match parity {
            Parity::All => all,
            Parity::Even => even,
            Parity::Odd => all - even,
        };
        let term = p * w / k as f64;
        total -= term;
        if k > 2 && term.norm() <= 1e-17 * total.norm().max(1e-300) {
            break;
        }
        let next = x * p - y * p_prev;
        p_prev = p;
        p = next;
    }
    total
}

/// Everything needed to evaluate `B`, `f^{±,0}`, `V`, `V̆`, `Ṽ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RHPData {
    pub sdata: SpectralData,
    pub n_trunc: usize,
    pub tail_mode: TailMode,
    /// `R = max (E_{2k} − E_{2k−1})`.
    pub disc_radius: f64,
    /// `(c₂, c₄)` of the surrogate for `μ_n` and for the closed edges.
    c_mu: [f64; 2],
    c_edge: [f64; 2],
}

impl RHPData {
    pub fn new(sdata: SpectralData, n_trunc: usize, tail_mode: TailMode) -> Result<Self> {
        if n_trunc < sdata.n_max {
            return Err(HillError::Invalid(format!("N_trunc = {n_trunc} < n_max = {}", sdata.n_max)));
        }
        let t = sdata.period;
        let beta = sdata.q_over_t();
        let n = sdata.n_max;
        let (mut c_mu, mut c_edge) = ([0.0; 2], [0.0; 2]);
        let closed = |n: usize| sdata.lambda_seq[2 * n - 1] == sdata.lambda_seq[2 * n];
        if n >= 5 && closed(n) && closed(n - 1) {
            // x − free = c₂/n² + c₄/n⁴ through the last two resolved gaps
            let fit = |f: &dyn Fn(usize) -> f64| -> [f64; 2] {
                let free = |k: usize| (k as f64 * PI / t).powi(2) + beta;
                let (a, b) = ((n - 1) as f64, n as f64);
                let (ra, rb) = (f(n - 1) - free(n - 1), f(n) - free(n));
                // ra = c2/a² + c4/a⁴, rb = c2/b² + c4/b⁴
                let c4 = (ra * a * a - rb * b * b) / (1.0 / (a * a) - 1.0 / (b * b));
                [rb * b * b - c4 / (b * b), c4]
            };
            c_mu = fit(&|k| sdata.mu_seq[k - 1]);
            c_edge = fit(&|k| sdata.lambda_seq[2 * k]);
        }
        Ok(Self { disc_radius: sdata.disc_radius(), sdata, n_trunc, tail_mode, c_mu, c_edge })
    }

    /// Resolves `n_max` gaps of `h` and builds the products on top.
    pub fn from_potential(h: &Hill, n_max: usize, n_trunc: usize, tail_mode: TailMode) -> Result<Self> {
        let sd = spectrum::spectral_data(h, n_max, SpectrumOptions::default())?;
        Self::new(sd, n_trunc.max(n_max), tail_mode)
    }

    /// Spectral data of `pot` together with the Hill operator of the shifted
    /// potential `u − λ₀`, so that both refer to the same λ-plane.
    pub fn normalized(
        pot: crate::ode_core::PeriodicPotential,
        n_max: usize,
        n_trunc: usize,
        tail_mode: TailMode,
    ) -> Result<(Hill, Self)> {
        let rhp = Self::from_potential(&Hill::new(pot.clone()), n_max, n_trunc, tail_mode)?;
        Ok((Hill::new(pot.shifted(-rhp.sdata.shift)), rhp))
    }

    pub fn period(&self) -> f64 {
        self.sdata.period
    }

    fn surrogate(&self, n: usize, c: [f64; 2]) -> f64 {
        let nn = (n * n) as f64;
        (n as f64 * PI / self.period()).powi(2) + self.sdata.q_over_t() + c[0] / nn + c[1] / (nn * nn)
    }

    /// `μ_n` for any `n ≥ 1` (resolved or surrogate).
    pub fn mu(&self, n: usize) -> f64 {
        if n <= self.sdata.n_max {
            self.sdata.mu_seq[n - 1]
        } else {
            self.surrogate(n, self.c_mu)
        }
    }

    /// `(λ_{2n−1}, λ_{2n})` for any `n ≥ 1`.
    pub fn edge_pair(&self, n: usize) -> (f64, f64) {
        if n <= self.sdata.n_max {
            (self.sdata.lambda_seq[2 * n - 1], self.sdata.lambda_seq[2 * n])
        } else {
            let e = self.surrogate(n, self.c_edge);
            (e, e)
        }
    }

    /// `σ_n` (surrogate gaps are closed, `σ = 0`).
    pub fn sigma(&self, n: usize) -> i8 {
        if n <= self.sdata.n_max {
            self.sdata.sigma_seq[n - 1]
        } else {
            0
        }
    }

    /// `μ_1 … μ_{N_trunc}`.
    pub fn full_mu(&self) -> Vec<f64> {
        (1..=self.n_trunc).map(|n| self.mu(n)).collect()
    }

    /// `λ_0 … λ_{2 N_trunc}`.
    pub fn full_edges(&self) -> Vec<f64> {
        let mut v = vec![self.sdata.lambda_seq[0]];
        for n in 1..=self.n_trunc {
            let (a, b) = self.edge_pair(n);
            v.extend([a, b]);
        }
        v
    }

    /// Number of explicit factors for this λ.
    fn explicit(&self, lambda: C64) -> usize {
        match self.tail_mode {
            TailMode::None => self.n_trunc,
            TailMode::FreeTail => {
                let t = self.period();
                let a = (t / PI).powi(2) * (lambda - self.sdata.q_over_t()).norm();
                let b = (t / PI).powi(2) * self.c_mu[0].abs().max(self.c_edge[0].abs());
                let need = (2.0 * (a + b.sqrt() + 1.0).sqrt()).ceil() as usize + 2;
                self.n_trunc.max(need).min(50_000_000)
            }
        }
    }

    /// `log ∏_{n>M, parity} (T²/n²π²)(s_n − λ)` for the surrogate `s_n`.
    /// (`c₄/n⁶` is dropped beyond `M ≥ N_trunc`.)
    fn tail(&self, lambda: C64, m: usize, c: [f64; 2], parity: Parity) -> C64 {
        if self.tail_mode == TailMode::None {
            return C64::new(0.0, 0.0);
        }
        let k = (self.period() / PI).powi(2);
        tail_log((lambda - self.sdata.q_over_t()) * k, c[0] * k, m, parity)
    }

    fn factor(&self, n: usize, z: f64, lambda: C64) -> C64 {
        (self.period() / (n as f64 * PI)).powi(2) * (z - lambda)
    }

    /// `y₂(T, λ) = T ∏ (T²/n²π²)(μ_n − λ)`.
    pub fn y2_product(&self, lambda: C64) -> C64 {
        let m = self.explicit(lambda);
        let mut acc = Acc::new(C64::new(self.period(), 0.0));
        for n in 1..=m {
            acc.mul(self.factor(n, self.mu(n), lambda));
        }
        acc.mul_exp(self.tail(lambda, m, self.c_mu, Parity::All));
        acc.value()
    }

    /// `Δ(λ) − 2` (`sign = −1`, even gaps) or `Δ(λ) + 2` (`sign = +1`, odd
    /// gaps):
    /// `Δ−2 = T²(λ₀−λ) ∏_{n even} (T⁴/n⁴π⁴)(λ_{2n−1}−λ)(λ_{2n}−λ)`,
    /// `Δ+2 = 4 ∏_{n odd} (…)`.
    pub fn delta_pm2_product(&self, sign: i32, lambda: C64) -> C64 {
        let t = self.period();
        let (parity, lead) = if sign < 0 {
            (Parity::Even, (self.sdata.lambda_seq[0] - lambda) * t * t)
        } else {
            (Parity::Odd, C64::new(4.0, 0.0))
        };
        let m = self.explicit(lambda);
        let mut acc = Acc::new(lead);
        for n in (1..=m).filter(|&n| parity.admits(n)) {
            let (a, b) = self.edge_pair(n);
            acc.mul(self.factor(n, a, lambda) * self.factor(n, b, lambda));
        }
        acc.mul_exp(2.0 * self.tail(lambda, m, self.c_edge, parity));
        acc.value()
    }

    /// `f⁺`, `f⁻` (finite, over open gaps with `σ = ±1`) or `f⁰` (with the
    /// factor `T`, over every `σ_n = 0` including the tail).
    pub fn f_function(&self, which: Which, lambda: C64) -> C64 {
        match which {
            Which::Plus | Which::Minus => {
                let want = if which == Which::Plus { 1 } else { -1 };
                let mut acc = Acc::new(C64::new(1.0, 0.0));
                for g in self.sdata.gaps.iter().filter(|g| g.sigma == want) {
                    acc.mul(self.factor(g.n, g.mu, lambda));
                }
                acc.value()
            }
            Which::Zero => {
                let m = self.explicit(lambda);
                let mut acc = Acc::new(C64::new(self.period(), 0.0));
                for n in (1..=m).filter(|&n| self.sigma(n) == 0) {
                    acc.mul(self.factor(n, self.mu(n), lambda));
                }
                acc.mul_exp(self.tail(lambda, m, self.c_mu, Parity::All));
                acc.value()
            }
        }
    }

    /// `√f⁰ = √T ∏_{σ_n=0} (−i)(T/nπ)√(λ−μ_n)`.
    pub fn sqrt_f0(&self, lambda: C64, side: Option<Side>) -> Result<C64> {
        let z = self.point(lambda, side, false)?;
        let t = self.period();
        let m = self.explicit(z);
        let mut acc = Acc::new(C64::new(t.sqrt(), 0.0));
        for n in (1..=m).filter(|&n| self.sigma(n) == 0) {
            acc.mul(-I * (t / (n as f64 * PI)) * branch::sqrt(z - self.mu(n)));
        }
        acc.mul_exp(0.5 * self.tail(z, m, self.c_mu, Parity::All));
        Ok(acc.value())
    }

    /// The same data with the Dirichlet points of some open gaps moved:
    /// `(n, μ_n, σ_n)` triples (the band edges are untouched).
    pub fn with_dirichlet(&self, moved: &[(usize, f64, i8)]) -> Self {
        let mut out = self.clone();
        for &(n, mu, sigma) in moved {
            out.sdata.mu_seq[n - 1] = mu;
            out.sdata.sigma_seq[n - 1] = sigma;
            if let Some(g) = out.sdata.gaps.iter_mut().find(|g| g.n == n) {
                g.mu = mu;
                g.sigma = sigma;
            }
        }
        out
    }

    /// `∂_λ y₂(T, λ)` at `λ = μ_n`:
    /// `T (−T²/n²π²) ∏_{m≠n} (T²/m²π²)(μ_m − μ_n)`.
    pub fn y2_lambda_at_mu(&self, n: usize) -> f64 {
        let z = C64::new(self.mu(n), 0.0);
        let m = self.explicit(z);
        let mut acc = Acc::new(C64::new(-self.period() * (self.period() / (n as f64 * PI)).powi(2), 0.0));
        for k in (1..=m).filter(|&k| k != n) {
            acc.mul(self.factor(k, self.mu(k), z));
        }
        acc.mul_exp(self.tail(z, m, self.c_mu, Parity::All));
        acc.value().re
    }

    /// `S(λ) = √(Δ²−4) / √((λ−a)(b−λ))` for the open gap `(a, b)` with index
    /// `n`: real, smooth and nonvanishing on the closed gap.
    pub fn sqrt_disc_gap_reduced(&self, n: usize, lambda: f64) -> f64 {
        let z = C64::new(lambda, 0.0);
        let t = self.period();
        let m = self.explicit(z);
        let mut acc = Acc::new(-2.0 * I * t * branch::sqrt(z - self.sdata.lambda_seq[0]));
        for k in 1..=m {
            let c = -(t / (k as f64 * PI)).powi(2);
            if k == n {
                acc.mul(C64::new(c, 0.0));
            } else {
                let (a, b) = self.edge_pair(k);
                acc.mul(c * branch::sqrt(z - a) * branch::sqrt(z - b));
            }
        }
        acc.mul_exp(self.tail(z, m, self.c_edge, Parity::All));
        // √(z−a)√(z−b) = i√((λ−a)(b−λ)) inside the gap
        (I * acc.value()).re
    }

    /// Nondegenerate edges `E_j` (including `E₀`).
    pub fn edges(&self) -> &[f64] {
        &self.sdata.edges
    }

    /// Whether real `λ` lies in a band interior `(E_{2k−2}, E_{2k−1})`.
    pub fn in_band(&self, lambda: f64) -> bool {
        let e = self.edges();
        if lambda <= e[0] {
            return false;
        }
        let above = e.iter().filter(|&&x| x < lambda).count();
        above % 2 == 1
    }

    /// Index `k` of the band `(E_{2k−2}, E_{2k−1})` or gap `(E_{2k−1}, E_{2k})`
    /// containing real `λ > E₀`, and whether it is a band.
    fn locate(&self, lambda: f64) -> Result<(usize, bool)> {
        let e = self.edges();
        if let Some(&x) = e.iter().find(|&&x| (x - lambda).abs() <= branch::collar(C64::new(lambda, 0.0))) {
            return Err(HillError::OnEdge { lambda: x });
        }
        let below = e.iter().filter(|&&x| x < lambda).count();
        if below == 0 {
            return Err(HillError::Invalid(format!("λ = {lambda} lies below E₀")));
        }
        Ok(if below % 2 == 1 { (below / 2 + 1, true) } else { (below / 2, false) })
    }

    /// Maps `(λ, side)` to the evaluation point: a real λ with a side gets a
    /// signed-zero imaginary part. Without a side, λ within ε of a band
    /// interior (or, when `whole_axis`, of any positive real) is an error, as
    /// is λ within ε of an edge.
    pub(crate) fn point(&self, lambda: C64, side: Option<Side>, whole_axis: bool) -> Result<C64> {
        let eps = branch::collar(lambda);
        if let Some(&e) = self.edges().iter().find(|&&e| (lambda - e).norm() <= eps) {
            return Err(HillError::BranchPoint { edge: e });
        }
        match side {
            Some(s) if lambda.im.abs() <= eps => Ok(C64::new(lambda.re, s.sign() * 0.0)),
            Some(_) => Ok(lambda),
            None => {
                let near_axis = lambda.im.abs() <= eps && lambda.re > self.edges()[0];
                if near_axis && (whole_axis || self.in_band(lambda.re)) {
                    Err(HillError::OnSpectrum { re: lambda.re, im: lambda.im })
                } else {
                    Ok(lambda)
                }
            }
        }
    }

    /// `√(Δ²−4) = −2iT√(λ−λ₀) ∏ (−T²/n²π²)√(λ−λ_{2n−1})√(λ−λ_{2n})`;
    /// positive below `λ₀`, holomorphic off the bands.
    pub fn sqrt_disc(&self, lambda: C64, side: Option<Side>) -> Result<C64> {
        let z = self.point(lambda, side, false)?;
        let t = self.period();
        let m = self.explicit(z);
        let mut acc = Acc::new(-2.0 * I * t * branch::sqrt(z - self.sdata.lambda_seq[0]));
        for n in 1..=m {
            let (a, b) = self.edge_pair(n);
            let c = -(t / (n as f64 * PI)).powi(2);
            acc.mul(c * branch::sqrt(z - a) * branch::sqrt(z - b));
        }
        acc.mul_exp(self.tail(z, m, self.c_edge, Parity::All));
        Ok(acc.value())
    }

    /// `⁴√(Δ²−4) = √(2T) e^{−iπ/4} ⁴√(λ−λ₀) ∏ (−i)(T/nπ) ⁴√(λ−λ_{2n−1}) ⁴√(λ−λ_{2n})`.
    pub fn quartic_root_disc(&self, lambda: C64, side: Option<Side>) -> Result<C64> {
        let z = self.point(lambda, side, true)?;
        let t = self.period();
        let m = self.explicit(z);
        let lead = (2.0 * t).sqrt() * C64::from_polar(1.0, -PI / 4.0) * branch::qrt(z - self.sdata.lambda_seq[0]);
        let mut acc = Acc::new(lead);
        for n in 1..=m {
            let (a, b) = self.edge_pair(n);
            acc.mul(-I * (t / (n as f64 * PI)) * branch::qrt(z - a) * branch::qrt(z - b));
        }
        acc.mul_exp(0.5 * self.tail(z, m, self.c_edge, Parity::All));
        Ok(acc.value())
    }

    /// The scalar part of `B`: `i√f⁰/⁴√(Δ²−4)` with every closed gap (and the
    /// whole tail) cancelled factor by factor.
    pub(crate) fn b_scalar(&self, z: C64) -> C64 {
        let t = self.period();
        let mut acc =
            Acc::new(I * C64::from_polar(FRAC_1_SQRT_2, PI / 4.0) / branch::qrt(z - self.sdata.lambda_seq[0]));
        for g in &self.sdata.gaps {
            let c = -I * (t / (g.n as f64 * PI));
            let (a, b) = (self.edges()[2 * g.k - 1], self.edges()[2 * g.k]);
            let mut f = 1.0 / (c * branch::qrt(z - a) * branch::qrt(z - b));
            if g.sigma == 0 {
                f *= c * branch::sqrt(z - g.mu);
            }
            acc.mul(f);
        }
        acc.value()
    }

    /// Diagonal `(b₁₁, b₂₂)` of `B(λ) = (i√f⁰/⁴√(Δ²−4)) diag(f⁻, f⁺)`.
    pub fn b_matrix(&self, lambda: C64, side: Option<Side>) -> Result<[C64; 2]> {
        let z = self.point(lambda, side, true)?;
        let s = self.b_scalar(z);
        Ok([s * self.f_function(Which::Minus, z), s * self.f_function(Which::Plus, z)])
    }

    /// `B` evaluated literally from `√f⁰`, `f^±` and `⁴√(Δ²−4)` without the
    /// factor-wise cancellation; used as a consistency check.
    pub fn b_matrix_unfused(&self, lambda: C64, side: Option<Side>) -> Result<[C64; 2]> {
        let s = I * self.sqrt_f0(lambda, side)? / self.quartic_root_disc(lambda, side)?;
        let z = self.point(lambda, side, true)?;
        Ok([s * self.f_function(Which::Minus, z), s * self.f_function(Which::Plus, z)])
    }

    /// `m(λ) = #{k : μ_{n_k} ≤ λ, σ_{n_k} = 0}`.
    pub fn m_count(&self, lambda: f64) -> usize {
        self.sdata.gaps.iter().filter(|g| g.sigma == 0 && g.mu <= lambda).count()
    }

    fn jump_with(&self, lambda: f64, gap_phase: impl Fn(usize) -> C64) -> Result<Mat2> {
        let (k, band) = self.locate(lambda)?;
        let m = self.m_count(lambda);
        let z = C64::new(lambda, 0.0);
        let zero = C64::new(0.0, 0.0);
        if band {
            let s = if (k + m - 1) % 2 == 0 { 1.0 } else { -1.0 };
            let r = self.f_function(Which::Plus, z) / self.f_function(Which::Minus, z);
            Ok([[zero, s * I * r], [s * I / r, zero]])
        } else {
            let s = if (k + m) % 2 == 0 { 1.0 } else { -1.0 };
            let e = gap_phase(k);
            Ok([[s * e, zero], [zero, s / e]])
        }
    }

    /// `V(x, λ)` on `ℝ⁺ ∖ {E_j}`.
    pub fn jump_v(&self, x: f64, lambda: f64) -> Result<Mat2> {
        self.jump_with(lambda, |_| C64::from_polar(1.0, 2.0 * lambda.sqrt() * x))
    }

    /// `V̆(x, t, λ)`: the gap exponential gains `e^{8iσ₃√λ³ t}`.
    pub fn jump_v_kdv(&self, x: f64, t: f64, lambda: f64) -> Result<Mat2> {
        let s = lambda.sqrt();
        self.jump_with(lambda, |_| C64::from_polar(1.0, 2.0 * s * x + 8.0 * s * s * s * t))
    }

    /// `Ṽ(x, λ)`: the gap exponential is `e^{(2i n_k π/T)σ₃ x}`.
    pub fn jump_v_xi(&self, x: f64, lambda: f64) -> Result<Mat2> {
        let t = self.period();
        self.jump_with(lambda, |k| C64::from_polar(1.0, 2.0 * self.sdata.gaps[k - 1].n as f64 * PI * x / t))
    }
}

/// `det` of a 2×2 matrix.
pub fn det2(m: &Mat2) -> C64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// `a·b` for 2×2 matrices.
pub fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// Frobenius norm.
pub fn norm2(m: &Mat2) -> f64 {
    m.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic;
    use crate::ode_core::PeriodicPotential;

    fn free(n_trunc: usize) -> RHPData {
        let h = Hill::new(PeriodicPotential::zero(PI));
        RHPData::from_potential(&h, 4, n_trunc, TailMode::FreeTail).unwrap()
    }

    #[test]
    fn hurwitz_against_direct_sum() {
        for &(s, q) in &[(2.0, 1.0), (4.0, 3.0), (6.0, 50.0), (40.0, 7.0)] {
            let direct: f64 = (0..200_000).map(|j| (q / (q + j as f64)).powf(s)).sum::<f64>();
            let tailfix = if s == 2.0 { q * q / (q + 200_000.0) } else { 0.0 };
            let h = hurwitz_scaled(s, q);
            assert!((h - direct - tailfix).abs() < 1e-9 * h, "{s} {q}: {h} {direct}");
        }
    }

    #[test]
    fn tail_log_against_explicit_sum() {
        let a = C64::new(37.0, -12.0);
        let b = 3.5;
        for par in [Parity::All, Parity::Even, Parity::Odd] {
            let direct: C64 = (21..400_000usize)
                .filter(|&n| par.admits(n))
                .map(|n| {
                    let x = 1.0 / (n * n) as f64;
                    (1.0 - a * x + b * x * x).ln()
                })
                .sum();
            let rest = if par == Parity::All { 1.0 / 400_000.0 } else { 0.5 / 400_000.0 };
            let direct = direct - a * rest;
            let t = tail_log(a, b, 20, par);
            assert!((t - direct).norm() < 1e-9, "{par:?}: {t} {direct}");
        }
    }

    #[test]
    fn free_products_are_closed_forms() {
        let r = free(200);
        let l = C64::new(0.25, 0.0);
        assert!((r.y2_product(l) - 2.0).norm() < 1e-10);
        let l = C64::new(-2.0, 0.7);
        let s = branch::sqrt(l);
        let delta = 2.0 * (PI * s).cos();
        assert!((r.delta_pm2_product(-1, l) - (delta - 2.0)).norm() < 1e-10 * delta.norm());
        assert!((r.delta_pm2_product(1, l) - (delta + 2.0)).norm() < 1e-10 * delta.norm());
        let sd = r.sqrt_disc(C64::new(-1.0, 0.0), None).unwrap();
        assert!(sd.im.abs() < 1e-12 && (sd.re - (delta_sq(-1.0))).abs() < 1e-9);
        let q = r.quartic_root_disc(C64::new(-2.0, 0.0), None).unwrap();
        assert!(q.im.abs() < 1e-12 && q.re > 0.0);
        assert!((q.powi(4) - (delta_sq(-2.0)).powi(2)).norm() < 1e-8 * q.norm().powi(4));
        assert_eq!(r.f_function(Which::Plus, l), C64::new(1.0, 0.0));
        assert!((r.f_function(Which::Zero, l) - r.y2_product(l)).norm() < 1e-12 * r.y2_product(l).norm());
        assert_eq!(r.m_count(30.0), 0);
    }

    fn delta_sq(l: f64) -> f64 {
        let d = 2.0 * (PI * (-l).sqrt()).cosh();
        (d * d - 4.0).sqrt()
    }

    #[test]
    fn free_b_is_scalar_and_truncation_free() {
        let a = free(200);
        let b = free(400);
        let l = C64::new(-3.0, 1.0);
        let ba = a.b_matrix(l, None).unwrap();
        let bb = b.b_matrix(l, None).unwrap();
        assert_eq!(ba[0], ba[1]);
        assert!((ba[0] - bb[0]).norm() < 1e-14);
        let un = a.b_matrix_unfused(l, None).unwrap();
        assert!((un[0] - ba[0]).norm() < 1e-8 * ba[0].norm());
        let want = 1.0 / (4.0 * (-l)).sqrt();
        assert!((ba[0].powi(4) - want * want).norm() < 1e-12);
    }

    #[test]
    fn mathieu_products_match_ode() {
        let h = Hill::new(PeriodicPotential::mathieu(0.1));
        let r = RHPData::from_potential(&h, 20, 200, TailMode::FreeTail).unwrap();
        for l in [C64::new(-5.0, 0.0), C64::new(-3.0, 0.0), C64::new(12.0, 30.0), C64::new(40.0, -20.0)] {
            let m = h.monodromy(l + r.sdata.shift, false).unwrap();
            let rel = |a: C64, b: C64| (a - b).norm() / b.norm();
            assert!(rel(r.y2_product(l), m.y2()) < 1e-8, "y2 at {l}");
            assert!(rel(r.delta_pm2_product(-1, l), m.trace() - 2.0) < 1e-8);
            assert!(rel(r.delta_pm2_product(1, l), m.trace() + 2.0) < 1e-8);
            let sd = r.sqrt_disc(l, None).unwrap();
            let d = m.trace();
            assert!(rel(sd * sd, d * d - 4.0) < 1e-8);
            let q = r.quartic_root_disc(l, None).unwrap();
            assert!(rel(q * q, sd) < 1e-10);
        }
    }

    #[test]
    fn partition_and_jump_determinants() {
        let (p, _) = elliptic::lame2(0.5, PI);
        let h = Hill::new(p.translated(0.3 * PI));
        let r = RHPData::from_potential(&h, 8, 200, TailMode::FreeTail).unwrap();
        assert_eq!(r.sdata.genus(), 2);
        let l = C64::new(2.0, 0.4);
        let prod = r.f_function(Which::Plus, l) * r.f_function(Which::Minus, l) * r.f_function(Which::Zero, l);
        assert!((prod - r.y2_product(l)).norm() < 1e-10 * prod.norm());
        let f0 = r.f_function(Which::Zero, l);
        let s0 = r.sqrt_f0(l, None).unwrap();
        assert!((s0 * s0 - f0).norm() < 1e-10 * f0.norm());
        let b = r.b_matrix(l, None).unwrap();
        let bu = r.b_matrix_unfused(l, None).unwrap();
        assert!((b[0] - bu[0]).norm() < 1e-8 * b[0].norm());
        assert!((b[0] / b[1] - r.f_function(Which::Minus, l) / r.f_function(Which::Plus, l)).norm() < 1e-12);
        let e = r.edges().to_vec();
        for lam in [0.5 * (e[0] + e[1]), 0.5 * (e[1] + e[2]), 0.5 * (e[2] + e[3]), 0.5 * (e[3] + e[4]), e[4] + 3.0] {
            for v in [r.jump_v(0.7, lam).unwrap(), r.jump_v_kdv(0.7, 0.2, lam).unwrap(), r.jump_v_xi(0.7, lam).unwrap()] {
                assert!((det2(&v) - 1.0).norm() < 1e-12);
            }
            let a = r.jump_v(0.4, lam).unwrap();
            let b = r.jump_v_kdv(0.4, 0.0, lam).unwrap();
            assert_eq!(a, b);
        }
        let gap = 0.5 * (e[1] + e[2]);
        let v = r.jump_v(0.0, gap).unwrap();
        assert!((v[0][0].norm() - 1.0).abs() < 1e-15 && v[0][1].norm() == 0.0);
        let v = r.jump_v_xi(PI, gap).unwrap();
        assert!((v[0][0] - v[1][1]).norm() < 1e-12);
        assert!(matches!(r.jump_v(0.0, e[1]), Err(HillError::OnEdge { .. })));
    }
    #[test]
    fn dirichlet_helpers_against_ode() {
        let (p, _) = elliptic::lame2(0.5, PI);
        let (h, r) = RHPData::normalized(p.translated(0.3 * PI), 8, 200, TailMode::FreeTail).unwrap();
        for g in &r.sdata.gaps {
            let m = h.monodromy(C64::new(g.mu, 0.0), true).unwrap();
            let ode = m.dl()[0][1].re;
            assert!((r.y2_lambda_at_mu(g.n) - ode).abs() < 1e-6 * ode.abs(), "{} {ode}", r.y2_lambda_at_mu(g.n));
            let (a, b) = r.edge_pair(g.n);
            for lam in [a + 0.2 * (b - a), a + 0.7 * (b - a)] {
                let s = r.sqrt_disc(C64::new(lam, 0.0), None).unwrap();
                let red = r.sqrt_disc_gap_reduced(g.n, lam) * ((lam - a) * (b - lam)).sqrt();
                assert!((s.re - red).abs() < 1e-6 * red.abs() && s.im.abs() < 1e-6 * red.abs(), "{s} {red}");
            }
        }
        let g = r.sdata.gaps[0];
        let moved = r.with_dirichlet(&[(g.n, g.mu + 1e-3, -g.sigma)]);
        assert_eq!(moved.sdata.gaps[0].sigma, -g.sigma);
        assert!((moved.sdata.gaps[0].mu - g.mu - 1e-3).abs() < 1e-15);
    }
}
