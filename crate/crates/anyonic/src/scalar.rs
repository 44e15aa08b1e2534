//! Scalar types for category data.

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Real floating point type used for F-symbols and R-symbols.
///
/// Implemented for `f32` and `f64`. Dense linear algebra downstream of the
/// category layer runs in `f64` only.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Smallest tolerance that is meaningful for identities evaluated in this type.
    fn default_tol() -> Self;
}

impl Real for f32 {
    fn default_tol() -> Self {
        1e-4
    }
}

impl Real for f64 {
    fn default_tol() -> Self {
        1e-10
    }
}

/// Principal square root of a real number, returned as a complex value.
///
/// Negative inputs map onto the positive imaginary axis.
pub fn principal_sqrt<T: Real>(x: T) -> Complex<T> {
    if x >= T::zero() {
        Complex::new(x.sqrt(), T::zero())
    } else {
        Complex::new(T::zero(), (-x).sqrt())
    }
}

/// Principal square root of a complex number (branch cut along the negative real axis,
/// negative reals map to the positive imaginary axis).
pub fn principal_sqrt_c<T: Real>(z: Complex<T>) -> Complex<T> {
    if z.im == T::zero() {
        principal_sqrt(z.re)
    } else {
        z.sqrt()
    }
}

pub fn cast_complex<T: Real, U: Real>(z: Complex<T>) -> Complex<U> {
    Complex::new(U::lit(z.re.as_f64()), U::lit(z.im.as_f64()))
}
