//! Scalar abstraction: everything numeric is generic over [`Real`], which
//! f32 and f64 satisfy. Combinatorial quantities are computed exactly in
//! integer arithmetic elsewhere and converted through [`Real::from_u128`].

use num_traits::{Float, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display, LowerExp};

/// Floating-point scalar usable throughout the crate.
pub trait Real:
    Float + FromPrimitive + NumAssign + Debug + Display + LowerExp + Send + Sync + 'static
{
    /// Lossy conversion from an exact unsigned integer (counts, factorials).
    fn of_u128(n: u128) -> Self {
        Self::from_u128(n).expect("integer out of scalar range")
    }

    /// Lossy conversion from an exact signed integer (recurrence prefactors).
    fn of_i128(n: i128) -> Self {
        Self::from_i128(n).expect("integer out of scalar range")
    }

    /// Lossy conversion from usize (mesh sizes, quadrature counts).
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("integer out of scalar range")
    }
}

impl Real for f32 {}
impl Real for f64 {}
