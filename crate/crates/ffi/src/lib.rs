//! C ABI for `hillspec`.
//!
//! Objects are opaque handles created by `hs_*_new` functions and released
//! with the matching `hs_*_free`. Every fallible call returns an
//! [`HsStatus`]; the message of the last failure on the calling thread is
//! available from [`hs_last_error`]. Panics never cross the boundary.

use hillspec::finite_gap::{self, HyperellipticData, Periodicity, Theta};
use hillspec::floquet;
use hillspec::ode_core::{Hill, PeriodicPotential};
use hillspec::products::{RHPData, TailMode};
use hillspec::{elliptic, rhp_verify, HillError, C64};
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Status codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    OnSpectrum = 10,
    NearPole = 11,
    BranchPoint = 12,
    IntegratorFailure = 13,
    RootBracketFailure = 14,
    ExtrapolationDiverged = 15,
    ResolutionLoss = 16,
    DegenerateCurve = 20,
    LinearSolveSingular = 21,
    CutoffExplosion = 22,
    ThetaZero = 23,
    OnPoleDivisor = 24,
    Other = 98,
    Panic = 99,
}

/// Which period a certificate looks for.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsPeriodicity {
    Space = 0,
    Time = 1,
}

/// A real periodic potential.
pub struct HsPotential {
    inner: PeriodicPotential,
}

/// Spectral data of a potential together with its (shifted) Hill operator.
pub struct HsSpectral {
    hill: Hill,
    rhp: RHPData,
}

/// A hyperelliptic curve with its theta function.
pub struct HsCurve {
    data: HyperellipticData,
    theta: Theta,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &HillError) -> HsStatus {
    match e {
        HillError::OnSpectrum { .. } | HillError::OnEdge { .. } => HsStatus::OnSpectrum,
        HillError::NearDirichletPole { .. } | HillError::NearPole { .. } => HsStatus::NearPole,
        HillError::BranchPoint { .. } => HsStatus::BranchPoint,
        HillError::IntegratorFailure { .. } => HsStatus::IntegratorFailure,
        HillError::RootBracketFailure { .. } => HsStatus::RootBracketFailure,
        HillError::ExtrapolationDiverged { .. } => HsStatus::ExtrapolationDiverged,
        HillError::ResolutionLoss { .. } => HsStatus::ResolutionLoss,
        HillError::DegenerateCurve { .. } => HsStatus::DegenerateCurve,
        HillError::LinearSolveSingular { .. } => HsStatus::LinearSolveSingular,
        HillError::CutoffExplosion { .. } => HsStatus::CutoffExplosion,
        HillError::ThetaZero { .. } => HsStatus::ThetaZero,
        HillError::OnPoleDivisor => HsStatus::OnPoleDivisor,
        HillError::Invalid(_) | HillError::Config(_) => HsStatus::InvalidArgument,
        _ => HsStatus::Other,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (HsStatus, String)>>(f: F) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HsStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(msg);
            HsStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (HsStatus, String)>;
}

impl<T> IntoFfi<T> for hillspec::Result<T> {
    fn ffi(self) -> Result<T, (HsStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null() -> (HsStatus, String) {
    (HsStatus::NullPointer, "null pointer argument".into())
}

fn invalid(msg: &str) -> (HsStatus, String) {
    (HsStatus::InvalidArgument, msg.into())
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, (HsStatus, String)> {
    p.as_ref().ok_or_else(null)
}

unsafe fn write<T>(p: *mut T, v: T) -> Result<(), (HsStatus, String)> {
    if p.is_null() {
        return Err(null());
    }
    p.write(v);
    Ok(())
}

unsafe fn slice<'a, T>(p: *const T, n: usize) -> Result<&'a [T], (HsStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Copies `v` into `buf` (capacity `cap`), always storing the full length.
unsafe fn fill(v: &[f64], buf: *mut f64, cap: usize, len: *mut usize) -> Result<(), (HsStatus, String)> {
    write(len, v.len())?;
    if v.len() > cap {
        return Err((HsStatus::BufferTooSmall, format!("need {} entries", v.len())));
    }
    if !v.is_empty() {
        if buf.is_null() {
            return Err(null());
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
    }
    Ok(())
}

/// Message of the last failed call on this thread (empty if none). The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version (static string).
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// `u(x) = Σ_{k=-K}^{K} c_k e^{2πikx/T}` from the non-negative modes
/// `c_k = re[k] + i im[k]`, `0 ≤ k < n`.
///
/// # Safety
/// `re` and `im` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_potential_from_modes(
    period: f64,
    re: *const f64,
    im: *const f64,
    n: usize,
    out: *mut *mut HsPotential,
) -> HsStatus {
    guard(|| {
        let (re, im) = (slice(re, n)?, slice(im, n)?);
        let coeffs = re.iter().zip(im).map(|(a, b)| C64::new(*a, *b)).collect();
        let inner = PeriodicPotential::new(period, coeffs).ffi()?;
        write(out, Box::into_raw(Box::new(HsPotential { inner })))
    })
}

/// Trigonometric interpolant of `n` uniform samples `u(jT/n)`.
///
/// # Safety
/// `samples` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_potential_from_samples(
    period: f64,
    samples: *const f64,
    n: usize,
    out: *mut *mut HsPotential,
) -> HsStatus {
    guard(|| {
        let inner = PeriodicPotential::from_samples(period, slice(samples, n)?).ffi()?;
        write(out, Box::into_raw(Box::new(HsPotential { inner })))
    })
}

/// Lamé potential `g(g+1)α²m sn²(αx)` of genus `g ∈ {1, 2}`, parameter `m`,
/// period `period`, translated by `shift`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_potential_lame(
    genus: u32,
    m: f64,
    period: f64,
    shift: f64,
    out: *mut *mut HsPotential,
) -> HsStatus {
    guard(|| {
        if !(m > 0.0 && m < 1.0 && period > 0.0) {
            return Err(invalid("need 0 < m < 1 and period > 0"));
        }
        let p = match genus {
            1 => elliptic::lame1(m, period).0,
            2 => elliptic::lame2(m, period).0,
            _ => return Err(invalid("genus must be 1 or 2")),
        };
        write(out, Box::into_raw(Box::new(HsPotential { inner: p.translated(shift) })))
    })
}

/// # Safety
/// `p` must come from an `hs_potential_*` constructor (or be null) and not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_potential_free(p: *mut HsPotential) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// `u(x)`.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_potential_eval(p: *const HsPotential, x: f64, out: *mut f64) -> HsStatus {
    guard(|| write(out, deref(p)?.inner.eval(x)))
}

/// `Δ(λ)` for complex `λ`.
///
/// # Safety
/// `p` must be a live handle; `out_re`, `out_im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_discriminant(
    p: *const HsPotential,
    lambda_re: f64,
    lambda_im: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> HsStatus {
    guard(|| {
        let h = Hill::new(deref(p)?.inner.clone());
        let d = floquet::discriminant(&h, C64::new(lambda_re, lambda_im)).ffi()?;
        write(out_re, d.re)?;
        write(out_im, d.im)
    })
}

/// Spectral data with `n_max` resolved gaps and `n_trunc` product factors
/// (free tail).
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_spectral_new(
    p: *const HsPotential,
    n_max: usize,
    n_trunc: usize,
    out: *mut *mut HsSpectral,
) -> HsStatus {
    guard(|| {
        if n_max == 0 {
            return Err(invalid("n_max must be positive"));
        }
        let (hill, rhp) = RHPData::normalized(deref(p)?.inner.clone(), n_max, n_trunc.max(n_max), TailMode::FreeTail).ffi()?;
        write(out, Box::into_raw(Box::new(HsSpectral { hill, rhp })))
    })
}

/// # Safety
/// `s` must come from [`hs_spectral_new`] (or be null) and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_spectral_free(s: *mut HsSpectral) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// `λ₀` (the lowest edge; every other value is reported unshifted).
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_spectral_shift(s: *const HsSpectral, out: *mut f64) -> HsStatus {
    guard(|| write(out, deref(s)?.rhp.sdata.shift))
}

/// Nondegenerate edges `E₀ < … < E_{2g}`. `len` receives the count even
/// when `cap` is too small ([`HsStatus::BufferTooSmall`]).
///
/// # Safety
/// `s` must be a live handle; `buf` must have room for `cap` doubles; `len`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_spectral_edges(s: *const HsSpectral, buf: *mut f64, cap: usize, len: *mut usize) -> HsStatus {
    guard(|| {
        let s = deref(s)?;
        let e: Vec<f64> = s.rhp.edges().iter().map(|e| e + s.rhp.sdata.shift).collect();
        fill(&e, buf, cap, len)
    })
}

/// Dirichlet data of the open gaps: `μ_{n_k}` into `mu`, `σ_{n_k}` (as
/// −1, 0, 1) into `sigma`.
///
/// # Safety
/// `mu` and `sigma` must have room for `cap` entries; `len` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hs_spectral_dirichlet(
    s: *const HsSpectral,
    mu: *mut f64,
    sigma: *mut i32,
    cap: usize,
    len: *mut usize,
) -> HsStatus {
    guard(|| {
        let s = deref(s)?;
        let m: Vec<f64> = s.rhp.sdata.gaps.iter().map(|g| g.mu + s.rhp.sdata.shift).collect();
        fill(&m, mu, cap, len)?;
        if !m.is_empty() {
            if sigma.is_null() {
                return Err(null());
            }
            for (i, g) in s.rhp.sdata.gaps.iter().enumerate() {
                sigma.add(i).write(g.sigma as i32);
            }
        }
        Ok(())
    })
}

/// `y₂(T, λ)` from the canonical product (unshifted `λ`).
///
/// # Safety
/// `s` must be a live handle; `out_re`, `out_im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_spectral_y2(
    s: *const HsSpectral,
    lambda_re: f64,
    lambda_im: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> HsStatus {
    guard(|| {
        let s = deref(s)?;
        let v = s.rhp.y2_product(C64::new(lambda_re - s.rhp.sdata.shift, lambda_im));
        write(out_re, v.re)?;
        write(out_im, v.im)
    })
}

/// `u(x)` recovered from the Riemann–Hilbert solution, in the frame of the
/// original potential.
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_reconstruct(s: *const HsSpectral, x: f64, out: *mut f64) -> HsStatus {
    guard(|| {
        let s = deref(s)?;
        let r = rhp_verify::reconstruct_potential(&s.hill, &s.rhp, x, &rhp_verify::default_reconstruction_ray()).ffi()?;
        write(out, r.u + s.rhp.sdata.shift)
    })
}

/// Curve `w² = ∏(λ − E_k)` from `2g + 1` increasing edges; the pole divisor
/// sits at the lower gap edges.
///
/// # Safety
/// `edges` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_curve_new(edges: *const f64, n: usize, out: *mut *mut HsCurve) -> HsStatus {
    guard(|| {
        let data = finite_gap::build_curve(slice(edges, n)?).ffi()?;
        let theta = data.theta().ffi()?;
        write(out, Box::into_raw(Box::new(HsCurve { data, theta })))
    })
}

/// Curve and divisor of the spectral data of `s`.
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_curve_from_spectral(s: *const HsSpectral, out: *mut *mut HsCurve) -> HsStatus {
    guard(|| {
        let data = HyperellipticData::from_spectral(&deref(s)?.rhp.sdata).ffi()?;
        let theta = data.theta().ffi()?;
        write(out, Box::into_raw(Box::new(HsCurve { data, theta })))
    })
}

/// # Safety
/// `c` must come from an `hs_curve_*` constructor (or be null) and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_curve_free(c: *mut HsCurve) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// Genus `g`.
///
/// # Safety
/// `c` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_curve_genus(c: *const HsCurve, out: *mut usize) -> HsStatus {
    guard(|| write(out, deref(c)?.data.genus))
}

/// Riemann matrix, row-major, real and imaginary parts (`g²` each).
///
/// # Safety
/// `re`, `im` must have room for `cap` doubles; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_curve_tau(c: *const HsCurve, re: *mut f64, im: *mut f64, cap: usize, len: *mut usize) -> HsStatus {
    guard(|| {
        let t = &deref(c)?.data.tau;
        let flat: Vec<C64> = t.iter().flatten().copied().collect();
        fill(&flat.iter().map(|z| z.re).collect::<Vec<_>>(), re, cap, len)?;
        fill(&flat.iter().map(|z| z.im).collect::<Vec<_>>(), im, cap, len)
    })
}

/// Its–Matveev potential `u(x, t)`.
///
/// # Safety
/// `c` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_curve_u(c: *const HsCurve, x: f64, t: f64, out: *mut f64) -> HsStatus {
    guard(|| {
        let c = deref(c)?;
        write(out, finite_gap::its_matveev_jet(&c.data, &c.theta, x, t).ffi()?.u)
    })
}

/// Smallest common period of the theta solution (`found` = 0 when the
/// phases are not commensurate within the search bound).
///
/// # Safety
/// `c` must be a live handle; `period` and `found` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_curve_period(
    c: *const HsCurve,
    which: HsPeriodicity,
    tol: f64,
    period: *mut f64,
    found: *mut i32,
) -> HsStatus {
    guard(|| {
        let which = match which {
            HsPeriodicity::Space => Periodicity::Space,
            HsPeriodicity::Time => Periodicity::Time,
        };
        let cert = finite_gap::periodicity_certificates(&deref(c)?.data, which, tol);
        write(period, cert.period.unwrap_or(f64::NAN))?;
        write(found, cert.period.is_some() as i32)
    })
}
