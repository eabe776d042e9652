//! Recorded forward passes and reverse-mode differentiation over them.

use super::activation::{activation_backward, Activation};
use super::conv::conv2d_backward;
use super::model::Param;
use super::norm::instance_norm_backward;
use super::pad::{reflection_pad2d_backward, upsample_nearest_backward};
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// The operation that produced a tape value. Value `i` was produced by op `i`.
#[derive(Clone, Debug)]
pub(crate) enum Op {
    Input,
    Conv { input: usize, weight: usize, bias: Option<usize>, stride: usize, pad: usize },
    Upsample { input: usize, factor: usize },
    ReflectionPad { input: usize, pad: usize },
    InstanceNorm { input: usize, inv_std: Vec<f64>, overridden: bool },
    Activation { input: usize, kind: Activation },
    Add { lhs: usize, rhs: usize },
}

/// Ordered record of executed ops with the values backward needs.
///
/// Untaped (inference) passes use the same structure but drop values as soon
/// as they are consumed.
pub struct Tape<'m, T> {
    params: &'m [Param<T>],
    values: Vec<Option<Tensor<T>>>,
    ops: Vec<Op>,
    keep: bool,
}

/// Which gradients [`backward_with`] should produce.
#[derive(Clone, Copy, Debug)]
pub struct BackwardOptions {
    pub params: bool,
    pub input: bool,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        BackwardOptions { params: true, input: true }
    }
}

/// Gradients of a seeded loss with respect to the tape's parameters and input.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    /// Indexed like the model's parameters; `None` when not requested.
    pub params: Vec<Option<Tensor<T>>>,
    pub input: Option<Tensor<T>>,
}

impl<'m, T: Scalar> Tape<'m, T> {
    pub(crate) fn new(params: &'m [Param<T>], input: Tensor<T>, keep: bool) -> Self {
        Tape { params, values: vec![Some(input)], ops: vec![Op::Input], keep }
    }

    pub(crate) fn params(&self) -> &'m [Param<T>] {
        self.params
    }

    pub(crate) fn value(&self, id: usize) -> &Tensor<T> {
        self.values[id].as_ref().expect("tape value used after release")
    }

    pub(crate) fn push(&mut self, op: Op, value: Tensor<T>) -> usize {
        self.values.push(Some(value));
        self.ops.push(op);
        self.values.len() - 1
    }

    /// Frees a value in inference mode; no-op when recording.
    pub(crate) fn release(&mut self, id: usize) {
        if !self.keep {
            self.values[id] = None;
        }
    }

    pub(crate) fn output(&mut self, id: usize) -> Tensor<T> {
        if self.keep {
            self.value(id).clone()
        } else {
            self.values[id].take().expect("tape output already released")
        }
    }

    /// Number of recorded ops, excluding the input.
    pub fn len(&self) -> usize {
        self.ops.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Smallest |pre-activation| over all kinked activations (ReLU family).
    /// Finite-difference checks are unreliable when this is tiny.
    pub fn min_kink_distance(&self) -> f64 {
        self.ops
            .iter()
            .filter_map(|op| match op {
                Op::Activation { input, kind } if kind.has_kink() => self.values[*input].as_ref(),
                _ => None,
            })
            .flat_map(|t| t.data().iter().map(|v| v.as_f64().abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Reverse pass: all parameter gradients and the input gradient.
pub fn backward<T: Scalar>(tape: &Tape<'_, T>, seed: &Tensor<T>) -> Result<Gradients<T>> {
    backward_with(tape, seed, BackwardOptions::default())
}

/// Reverse pass visiting ops in exact reverse execution order.
pub fn backward_with<T: Scalar>(tape: &Tape<'_, T>, seed: &Tensor<T>, opts: BackwardOptions) -> Result<Gradients<T>> {
    if tape.is_empty() {
        return Err(Error::EmptyTape);
    }
    if !tape.keep {
        return Err(Error::invalid("backward requires a recorded (taped) forward pass"));
    }
    let last = tape.values.len() - 1;
    seed.expect_shape(tape.value(last).shape(), "backward seed")?;

    let mut grads: Vec<Option<Tensor<T>>> = vec![None; tape.values.len()];
    grads[last] = Some(seed.clone());
    let mut param_grads: Vec<Option<Tensor<T>>> = vec![None; tape.params.len()];

    fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
        match slot {
            Some(acc) => acc.add_assign(&g),
            None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }
    let wants = |id: usize| id != 0 || opts.input;

    for id in (1..tape.values.len()).rev() {
        let Some(dy) = grads[id].take() else { continue };
        match &tape.ops[id] {
            Op::Input => unreachable!("only value 0 is an input"),
            &Op::Conv { input, weight, bias, stride, pad } => {
                let g = conv2d_backward(
                    tape.value(input),
                    &tape.params[weight].value,
                    bias.is_some(),
                    stride,
                    pad,
                    &dy,
                    wants(input),
                    opts.params,
                )?;
                if let Some(dx) = g.dx {
                    accumulate(&mut grads[input], dx)?;
                }
                if let Some(dw) = g.dw {
                    accumulate(&mut param_grads[weight], dw)?;
                }
                if let (Some(b), Some(db)) = (bias, g.db) {
                    let shape = tape.params[b].value.shape();
                    accumulate(&mut param_grads[b], Tensor::new(shape, db)?)?;
                }
            }
            &Op::Upsample { input, factor } => {
                if wants(input) {
                    let dx = upsample_nearest_backward(&dy, tape.value(input).shape(), factor);
                    accumulate(&mut grads[input], dx)?;
                }
            }
            &Op::ReflectionPad { input, pad } => {
                if wants(input) {
                    let dx = reflection_pad2d_backward(&dy, tape.value(input).shape(), pad);
                    accumulate(&mut grads[input], dx)?;
                }
            }
            Op::InstanceNorm { input, inv_std, overridden } => {
                if wants(*input) {
                    let dx = instance_norm_backward(tape.value(id), &dy, inv_std, *overridden);
                    accumulate(&mut grads[*input], dx)?;
                }
            }
            &Op::Activation { input, kind } => {
                if wants(input) {
                    let dx = activation_backward(tape.value(input), tape.value(id), &dy, kind);
                    accumulate(&mut grads[input], dx)?;
                }
            }
            &Op::Add { lhs, rhs } => {
                if wants(rhs) {
                    accumulate(&mut grads[rhs], dy.clone())?;
                }
                if wants(lhs) {
                    accumulate(&mut grads[lhs], dy)?;
                }
            }
        }
    }

    let input = if opts.input { Some(grads[0].take().unwrap_or_else(|| Tensor::zeros(tape.value(0).shape()))) } else { None };
    let params = if opts.params {
        param_grads
            .into_iter()
            .zip(tape.params)
            .map(|(g, p)| Some(g.unwrap_or_else(|| Tensor::zeros(p.value.shape()))))
            .collect()
    } else {
        vec![None; tape.params.len()]
    };
    for g in params.iter().flatten().chain(input.as_ref()) {
        if !g.is_finite() {
            return Err(Error::NonFinite("backward"));
        }
    }
    Ok(Gradients { params, input })
}
