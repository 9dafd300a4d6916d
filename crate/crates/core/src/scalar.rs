//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the solver and diagnostics are generic over (`f32`, `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion of a count or index.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon scaled check used by the positivity tolerance.
    #[inline]
    fn tiny() -> Self {
        Self::epsilon() * Self::epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Volume of the unit ball in `n` dimensions for n = 1, 2, 3.
pub fn unit_ball_volume<T: Real>(n: u32) -> T {
    match n {
        1 => T::lit(2.0),
        2 => T::PI(),
        3 => T::lit(4.0) * T::PI() / T::lit(3.0),
        _ => {
            // Γ-function route for completeness; only n ∈ {2, 3} is used by the model.
            let nf = n as f64;
            let v = std::f64::consts::PI.powf(nf / 2.0) / gamma_half_integer(nf / 2.0 + 1.0);
            T::lit(v)
        }
    }
}

fn gamma_half_integer(x: f64) -> f64 {
    // x is an integer or half-integer > 0
    if (x - 1.0).abs() < 1e-12 {
        1.0
    } else if (x - 0.5).abs() < 1e-12 {
        std::f64::consts::PI.sqrt()
    } else {
        (x - 1.0) * gamma_half_integer(x - 1.0)
    }
}
