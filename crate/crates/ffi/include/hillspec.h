#ifndef HILLSPEC_H
#define HILLSPEC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Which period a certificate looks for.
typedef enum {
  HS_PERIODICITY_SPACE = 0,
  HS_PERIODICITY_TIME = 1,
} HsPeriodicity;

// Status codes.
typedef enum {
  HS_STATUS_OK = 0,
  HS_STATUS_NULL_POINTER = 1,
  HS_STATUS_INVALID_ARGUMENT = 2,
  HS_STATUS_BUFFER_TOO_SMALL = 3,
  HS_STATUS_ON_SPECTRUM = 10,
  HS_STATUS_NEAR_POLE = 11,
  HS_STATUS_BRANCH_POINT = 12,
  HS_STATUS_INTEGRATOR_FAILURE = 13,
  HS_STATUS_ROOT_BRACKET_FAILURE = 14,
  HS_STATUS_EXTRAPOLATION_DIVERGED = 15,
  HS_STATUS_RESOLUTION_LOSS = 16,
  HS_STATUS_DEGENERATE_CURVE = 20,
  HS_STATUS_LINEAR_SOLVE_SINGULAR = 21,
  HS_STATUS_CUTOFF_EXPLOSION = 22,
  HS_STATUS_THETA_ZERO = 23,
  HS_STATUS_ON_POLE_DIVISOR = 24,
  HS_STATUS_OTHER = 98,
  HS_STATUS_PANIC = 99,
} HsStatus;

// A hyperelliptic curve with its theta function.
typedef struct HsCurve HsCurve;

// A real periodic potential.
typedef struct HsPotential HsPotential;

// Spectral data of a potential together with its (shifted) Hill operator.
typedef struct HsSpectral HsSpectral;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread (empty if none). The
// pointer stays valid until the next failing call on the same thread.
const char *hs_last_error(void);

// Library version (static string).
const char *hs_version(void);

// `u(x) = Σ_{k=-K}^{K} c_k e^{2πikx/T}` from the non-negative modes
// `c_k = re[k] + i im[k]`, `0 ≤ k < n`.
//
// # Safety
// `re` and `im` must point to `n` readable doubles; `out` must be writable.
HsStatus hs_potential_from_modes(double period,
                                 const double *re,
                                 const double *im,
                                 uintptr_t n,
                                 HsPotential **out);

// Trigonometric interpolant of `n` uniform samples `u(jT/n)`.
//
// # Safety
// `samples` must point to `n` readable doubles; `out` must be writable.
HsStatus hs_potential_from_samples(double period,
                                   const double *samples,
                                   uintptr_t n,
                                   HsPotential **out);

// Lamé potential `g(g+1)α²m sn²(αx)` of genus `g ∈ {1, 2}`, parameter `m`,
// period `period`, translated by `shift`.
//
// # Safety
// `out` must be writable.
HsStatus hs_potential_lame(uint32_t genus,
                           double m,
                           double period,
                           double shift,
                           HsPotential **out);

// # Safety
// `p` must come from an `hs_potential_*` constructor (or be null) and not
// be used afterwards.
void hs_potential_free(HsPotential *p);

// `u(x)`.
//
// # Safety
// `p` must be a live handle; `out` must be writable.
HsStatus hs_potential_eval(const HsPotential *p, double x, double *out);

// `Δ(λ)` for complex `λ`.
//
// # Safety
// `p` must be a live handle; `out_re`, `out_im` must be writable.
HsStatus hs_discriminant(const HsPotential *p,
                         double lambda_re,
                         double lambda_im,
                         double *out_re,
                         double *out_im);

// Spectral data with `n_max` resolved gaps and `n_trunc` product factors
// (free tail).
//
// # Safety
// `p` must be a live handle; `out` must be writable.
HsStatus hs_spectral_new(const HsPotential *p,
                         uintptr_t n_max,
                         uintptr_t n_trunc,
                         HsSpectral **out);

// # Safety
// `s` must come from [`hs_spectral_new`] (or be null) and not be used
// afterwards.
void hs_spectral_free(HsSpectral *s);

// `λ₀` (the lowest edge; every other value is reported unshifted).
//
// # Safety
// `s` must be a live handle; `out` must be writable.
HsStatus hs_spectral_shift(const HsSpectral *s, double *out);

// Nondegenerate edges `E₀ < … < E_{2g}`. `len` receives the count even
// when `cap` is too small ([`HsStatus::BufferTooSmall`]).
//
// # Safety
// `s` must be a live handle; `buf` must have room for `cap` doubles; `len`
// must be writable.
HsStatus hs_spectral_edges(const HsSpectral *s, double *buf, uintptr_t cap, uintptr_t *len);

// Dirichlet data of the open gaps: `μ_{n_k}` into `mu`, `σ_{n_k}` (as
// −1, 0, 1) into `sigma`.
//
// # Safety
// `mu` and `sigma` must have room for `cap` entries; `len` must be
// writable.
HsStatus hs_spectral_dirichlet(const HsSpectral *s,
                               double *mu,
                               int32_t *sigma,
                               uintptr_t cap,
                               uintptr_t *len);

// `y₂(T, λ)` from the canonical product (unshifted `λ`).
//
// # Safety
// `s` must be a live handle; `out_re`, `out_im` must be writable.
HsStatus hs_spectral_y2(const HsSpectral *s,
                        double lambda_re,
                        double lambda_im,
                        double *out_re,
                        double *out_im);

// `u(x)` recovered from the Riemann–Hilbert solution, in the frame of the
// original potential.
//
// # Safety
// `s` must be a live handle; `out` must be writable.
HsStatus hs_reconstruct(const HsSpectral *s, double x, double *out);

// Curve `w² = ∏(λ − E_k)` from `2g + 1` increasing edges; the pole divisor
// sits at the lower gap edges.
//
// # Safety
// `edges` must point to `n` readable doubles; `out` must be writable.
HsStatus hs_curve_new(const double *edges, uintptr_t n, HsCurve **out);

// Curve and divisor of the spectral data of `s`.
//
// # Safety
// `s` must be a live handle; `out` must be writable.
HsStatus hs_curve_from_spectral(const HsSpectral *s, HsCurve **out);

// # Safety
// `c` must come from an `hs_curve_*` constructor (or be null) and not be
// used afterwards.
void hs_curve_free(HsCurve *c);

// Genus `g`.
//
// # Safety
// `c` must be a live handle; `out` must be writable.
HsStatus hs_curve_genus(const HsCurve *c, uintptr_t *out);

// Riemann matrix, row-major, real and imaginary parts (`g²` each).
//
// # Safety
// `re`, `im` must have room for `cap` doubles; `len` must be writable.
HsStatus hs_curve_tau(const HsCurve *c, double *re, double *im, uintptr_t cap, uintptr_t *len);

// Its–Matveev potential `u(x, t)`.
//
// # Safety
// `c` must be a live handle; `out` must be writable.
HsStatus hs_curve_u(const HsCurve *c, double x, double t, double *out);

// Smallest common period of the theta solution (`found` = 0 when the
// phases are not commensurate within the search bound).
//
// # Safety
// `c` must be a live handle; `period` and `found` must be writable.
HsStatus hs_curve_period(const HsCurve *c,
                         HsPeriodicity which,
                         double tol,
                         double *period,
                         int32_t *found);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HILLSPEC_H */
