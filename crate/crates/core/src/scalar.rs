//! Generic floating-point scalar: f64 for tests and oracles, f32 for
//! faster training loops.

use num_traits::{Float, NumAssignOps};
use std::fmt::{Debug, Display};
use std::iter::Sum;

pub trait Scalar:
    Float + NumAssignOps + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn from_float(v: f64) -> Self;
    fn to_float(self) -> f64;
}

impl Scalar for f32 {
    fn from_float(v: f64) -> Self {
        v as f32
    }
    fn to_float(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_float(v: f64) -> Self {
        v
    }
    fn to_float(self) -> f64 {
        self
    }
}
