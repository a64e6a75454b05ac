use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

/// Floating point scalar the channel and rate model is written against.
pub trait Real: Float + FromPrimitive + Debug + Default + Send + Sync + 'static {
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn sq<T: Real>(v: T) -> T {
    v * v
}

pub(crate) fn dist2<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    sq(a[0] - b[0]) + sq(a[1] - b[1])
}
