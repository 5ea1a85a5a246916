//! The single branch convention used throughout: `arg z ∈ [0, 2π)`.
//!
//! With this choice `√z` has non-negative imaginary part and the cut of every
//! elementary root `(λ - E)^{1/p}` runs along `[E, ∞)`. Boundary values from
//! the upper half plane see `arg → 0⁺`, from the lower half plane `arg → 2π⁻`.

use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// Which side of the positive real axis a boundary value is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

/// Argument in `[0, 2π)`. Signed zero in the imaginary part selects the side
/// on the positive axis: `+0.0` gives `0`, `-0.0` gives `2π⁻`.
#[inline]
pub fn arg(z: C64) -> f64 {
    let a = z.im.atan2(z.re);
    if a < 0.0 || (a == 0.0 && z.im.is_sign_negative() && z.re > 0.0) {
        a + 2.0 * PI
    } else {
        a
    }
}

/// `z^{1/p}` with the `[0, 2π)` argument.
#[inline]
pub fn root(z: C64, p: u32) -> C64 {
    let r = z.norm();
    if r == 0.0 {
        return C64::new(0.0, 0.0);
    }
    C64::from_polar(r.powf(1.0 / p as f64), arg(z) / p as f64)
}

#[inline]
pub fn sqrt(z: C64) -> C64 {
    root(z, 2)
}

#[inline]
pub fn qrt(z: C64) -> C64 {
    root(z, 4)
}

/// `√λ³ = (√λ)³`, the exponent of the KdV time flow.
#[inline]
pub fn sqrt_cubed(z: C64) -> C64 {
    let s = sqrt(z);
    s * s * s
}

/// Boundary-value point `λ ± iδ` with the default collar
/// `δ = 1e-9·max(1, |λ|)`.
pub fn offset(lambda: f64, side: Side, scale: f64) -> C64 {
    C64::new(lambda, side.sign() * scale * 1e-9 * lambda.abs().max(1.0))
}

/// Default ε-collar for "on spectrum / at a pole" detection.
#[inline]
pub fn collar(z: C64) -> f64 {
    1e-8 * z.norm().max(1.0)
}

/// One Richardson step for a boundary value approached linearly in `δ`:
/// `f(λ ± i0) ≈ 2 f(λ ± iδ/2) − f(λ ± iδ)`.
pub fn boundary_value<F, T>(lambda: f64, side: Side, mut f: F) -> T
where
    F: FnMut(C64) -> T,
    T: std::ops::Mul<f64, Output = T> + std::ops::Sub<Output = T>,
{
    let a = f(offset(lambda, side, 1.0));
    let b = f(offset(lambda, side, 0.5));
    b * 2.0 - a
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn positive_axis_sides() {
        let above = sqrt(C64::new(4.0, 1e-14));
        let below = sqrt(C64::new(4.0, -1e-14));
        assert!((above - 2.0).norm() < 1e-12);
        assert!((below + 2.0).norm() < 1e-12);
        assert!((sqrt(C64::new(4.0, -0.0)) + 2.0).norm() < 1e-12);
        assert!((sqrt(C64::new(4.0, 0.0)) - 2.0).norm() < 1e-12);
    }

    #[test]
    fn negative_axis_is_continuous() {
        let a = sqrt(C64::new(-9.0, 1e-12));
        let b = sqrt(C64::new(-9.0, -1e-12));
        assert!((a - b).norm() < 1e-10);
        assert!((a - C64::new(0.0, 3.0)).norm() < 1e-10);
    }

    proptest! {
        #[test]
        fn sqrt_in_upper_half_plane(re in -1e3f64..1e3, im in -1e3f64..1e3) {
            let z = C64::new(re, im);
            let s = sqrt(z);
            prop_assert!(s.im >= -1e-12);
            prop_assert!((s * s - z).norm() <= 1e-12 * z.norm().max(1.0));
        }

        #[test]
        fn quartic_root_squares_to_sqrt(re in -1e3f64..1e3, im in -1e3f64..1e3) {
            let z = C64::new(re, im);
            let q = qrt(z);
            prop_assert!((q * q - sqrt(z)).norm() <= 1e-12 * z.norm().max(1.0));
        }
    }
}
