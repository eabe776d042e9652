use std::fmt;
use std::str::FromStr;

use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    /// Leaky ReLU with negative slope 0.2.
    LeakyRelu,
    Tanh,
    None,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Relu => v.max(T::zero()),
            Activation::LeakyRelu => {
                if v > T::zero() {
                    v
                } else {
                    v * T::of(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => v.tanh(),
            Activation::None => v,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::of(LEAKY_SLOPE)
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::None => T::one(),
        }
    }

    /// True if the activation has a derivative discontinuity at zero.
    pub fn has_kink(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky-relu",
            Activation::Tanh => "tanh",
            Activation::None => "none",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "leaky-relu" | "leaky_relu" => Ok(Activation::LeakyRelu),
            "tanh" => Ok(Activation::Tanh),
            "none" => Ok(Activation::None),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

/// Elementwise activation.
pub fn activation<T: Scalar>(x: &Tensor<T>, kind: Activation) -> Tensor<T> {
    x.map(|v| kind.apply(v))
}

pub(crate) fn activation_backward<T: Scalar>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    dy: &Tensor<T>,
    kind: Activation,
) -> Tensor<T> {
    let mut dx = dy.clone();
    for ((g, &xv), &yv) in dx.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
        *g = *g * kind.derivative(xv, yv);
    }
    dx
}
