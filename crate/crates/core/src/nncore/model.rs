//! Layer specifications, parameter storage and the forward pass.

use rand::Rng;

use super::activation::{activation, Activation};
use super::conv::conv2d;
use super::norm::{instance_norm_forward, ChannelStats, DEFAULT_EPS};
use super::pad::{reflection_pad2d, upsample_nearest};
use super::scalar::Scalar;
use super::tape::{Op, Tape};
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

/// Standard deviation of the normal weight initialization.
pub const INIT_STD: f64 = 0.02;

/// One entry of a sequential model.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// Zero-padded cross-correlation.
    Conv { c_in: usize, c_out: usize, kernel: usize, stride: usize, pad: usize, bias: bool },
    /// Nearest upsample by `factor`, then 3×3 stride-1 pad-1 conv.
    UpsampleConv { c_in: usize, c_out: usize, factor: usize, bias: bool },
    InstanceNorm { channels: usize, eps: f64 },
    Activation(Activation),
    ReflectionPad(usize),
    /// `x + IN(conv(pad(relu(IN(conv(pad(x)))))))` with 3×3 kernels and
    /// reflect padding 1.
    ResidualBlock { channels: usize },
}

impl LayerSpec {
    pub fn conv(c_in: usize, c_out: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        LayerSpec::Conv { c_in, c_out, kernel, stride, pad, bias: true }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Conv { c_in, c_out, kernel, stride, .. } => {
                if kernel == 0 || stride == 0 || c_in == 0 || c_out == 0 {
                    return Err(Error::invalid(format!("invalid conv layer {self:?}")));
                }
            }
            LayerSpec::UpsampleConv { c_in, c_out, factor, .. } => {
                if factor < 2 || c_in == 0 || c_out == 0 {
                    return Err(Error::invalid(format!("invalid upsample layer {self:?}")));
                }
            }
            LayerSpec::InstanceNorm { channels, eps } => {
                if channels == 0 || eps.is_nan() || eps <= 0.0 {
                    return Err(Error::invalid(format!("invalid instance norm {self:?}")));
                }
            }
            LayerSpec::ResidualBlock { channels: 0 } => {
                return Err(Error::invalid("residual block needs channels >= 1"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Number of instance-norm layers this entry contributes.
    pub fn norm_layers(&self) -> usize {
        match self {
            LayerSpec::InstanceNorm { .. } => 1,
            LayerSpec::ResidualBlock { .. } => 2,
            _ => 0,
        }
    }

    fn param_shapes(&self, idx: usize) -> Vec<(String, Shape)> {
        match *self {
            LayerSpec::Conv { c_in, c_out, kernel, bias, .. } => {
                let mut v = vec![(format!("{idx}.conv.weight"), Shape::new(c_out, c_in, kernel, kernel))];
                if bias {
                    v.push((format!("{idx}.conv.bias"), Shape::new(1, 1, 1, c_out)));
                }
                v
            }
            LayerSpec::UpsampleConv { c_in, c_out, bias, .. } => {
                let mut v = vec![(format!("{idx}.upconv.weight"), Shape::new(c_out, c_in, 3, 3))];
                if bias {
                    v.push((format!("{idx}.upconv.bias"), Shape::new(1, 1, 1, c_out)));
                }
                v
            }
            LayerSpec::ResidualBlock { channels: c } => vec![
                (format!("{idx}.res.conv1.weight"), Shape::new(c, c, 3, 3)),
                (format!("{idx}.res.conv2.weight"), Shape::new(c, c, 3, 3)),
            ],
            _ => Vec::new(),
        }
    }
}

/// A named weight tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T = f32> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Ordered layer stack plus its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T = f32> {
    layers: Vec<LayerSpec>,
    params: Vec<Param<T>>,
}

/// Names and shapes of every parameter a layer stack needs, in model order.
pub fn parameter_layout(layers: &[LayerSpec]) -> Vec<(String, Shape)> {
    layers.iter().enumerate().flat_map(|(i, l)| l.param_shapes(i)).collect()
}

impl<T: Scalar> Model<T> {
    /// Weights drawn from N(0, 0.02), biases zero.
    pub fn init(layers: Vec<LayerSpec>, rng: &mut impl Rng) -> Result<Self> {
        for l in &layers {
            l.validate()?;
        }
        let params = parameter_layout(&layers)
            .into_iter()
            .map(|(name, shape)| {
                let value =
                    if name.ends_with(".bias") { Tensor::zeros(shape) } else { Tensor::randn(shape, INIT_STD, rng) };
                Param { name, value }
            })
            .collect();
        Ok(Model { layers, params })
    }

    pub fn from_params(layers: Vec<LayerSpec>, params: Vec<Param<T>>) -> Result<Self> {
        for l in &layers {
            l.validate()?;
        }
        let layout = parameter_layout(&layers);
        if layout.len() != params.len() {
            return Err(Error::shape(format!("model needs {} parameters, got {}", layout.len(), params.len())));
        }
        for ((name, shape), p) in layout.iter().zip(&params) {
            if *name != p.name || *shape != p.value.shape() {
                return Err(Error::shape(format!(
                    "parameter '{}' {} does not match expected '{name}' {shape}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(Model { layers, params })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Number of instance-norm layers, i.e. the length of a stats override.
    pub fn num_norm_layers(&self) -> usize {
        self.layers.iter().map(LayerSpec::norm_layers).sum()
    }

    /// Channel count of every instance-norm layer, in execution order.
    pub fn norm_channels(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| match *l {
                LayerSpec::InstanceNorm { channels, .. } => vec![channels],
                LayerSpec::ResidualBlock { channels } => vec![channels, channels],
                _ => Vec::new(),
            })
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            layers: self.layers.clone(),
            params: self.params.iter().map(|p| Param { name: p.name.clone(), value: p.value.cast() }).collect(),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(x.clone(), None, None, false).map(|(y, _)| y)
    }

    /// Forward pass with optional per-norm-layer statistics overrides and an
    /// optional sink receiving the statistics each norm layer observed.
    pub fn forward_with(
        &self,
        x: &Tensor<T>,
        overrides: Option<&[ChannelStats]>,
        recorder: Option<&mut Vec<ChannelStats>>,
    ) -> Result<Tensor<T>> {
        self.run(x.clone(), overrides, recorder, false).map(|(y, _)| y)
    }

    /// Forward pass that records everything backward needs.
    pub fn forward_taped(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tape<'_, T>)> {
        self.run(x.clone(), None, None, true)
    }

    pub fn forward_taped_with(
        &self,
        x: &Tensor<T>,
        overrides: Option<&[ChannelStats]>,
    ) -> Result<(Tensor<T>, Tape<'_, T>)> {
        self.run(x.clone(), overrides, None, true)
    }

    fn run(
        &self,
        x: Tensor<T>,
        overrides: Option<&[ChannelStats]>,
        mut recorder: Option<&mut Vec<ChannelStats>>,
        keep: bool,
    ) -> Result<(Tensor<T>, Tape<'_, T>)> {
        if let Some(o) = overrides {
            if o.len() != self.num_norm_layers() {
                return Err(Error::shape(format!(
                    "stats override has {} layers, model has {} norm layers",
                    o.len(),
                    self.num_norm_layers()
                )));
            }
        }
        let mut tape = Tape::new(&self.params, x, keep);
        let mut cur = 0;
        let mut param = 0;
        let mut norm = 0;
        let mut step = |tape: &mut Tape<'_, T>, cur: usize, layer: &LayerSpec, norm: &mut usize| -> Result<usize> {
            match *layer {
                LayerSpec::Conv { stride, pad, bias, .. } => {
                    let w = param;
                    let b = bias.then_some(param + 1);
                    param += 1 + bias as usize;
                    conv_op(tape, cur, w, b, stride, pad)
                }
                LayerSpec::UpsampleConv { factor, bias, .. } => {
                    let w = param;
                    let b = bias.then_some(param + 1);
                    param += 1 + bias as usize;
                    let up = upsample_nearest(tape.value(cur), factor)?;
                    let up = tape.push(Op::Upsample { input: cur, factor }, up);
                    let out = conv_op(tape, up, w, b, 1, 1)?;
                    tape.release(up);
                    Ok(out)
                }
                LayerSpec::InstanceNorm { eps, .. } => {
                    let o = overrides.map(|o| &o[*norm]);
                    *norm += 1;
                    norm_op(tape, cur, eps, o, recorder.as_deref_mut())
                }
                LayerSpec::Activation(kind) => {
                    let y = activation(tape.value(cur), kind).check_finite("activation")?;
                    Ok(tape.push(Op::Activation { input: cur, kind }, y))
                }
                LayerSpec::ReflectionPad(p) => {
                    let y = reflection_pad2d(tape.value(cur), p)?;
                    Ok(tape.push(Op::ReflectionPad { input: cur, pad: p }, y))
                }
                LayerSpec::ResidualBlock { .. } => {
                    let (w1, w2) = (param, param + 1);
                    param += 2;
                    let o1 = overrides.map(|o| &o[*norm]);
                    let o2 = overrides.map(|o| &o[*norm + 1]);
                    *norm += 2;
                    residual_op(tape, cur, [w1, w2], [o1, o2], recorder.as_deref_mut())
                }
            }
        };
        for layer in &self.layers {
            let next = step(&mut tape, cur, layer, &mut norm)?;
            tape.release(cur);
            cur = next;
        }
        let out = tape.output(cur);
        Ok((out, tape))
    }
}

fn residual_op<T: Scalar>(
    tape: &mut Tape<'_, T>,
    skip: usize,
    weights: [usize; 2],
    overrides: [Option<&ChannelStats>; 2],
    mut recorder: Option<&mut Vec<ChannelStats>>,
) -> Result<usize> {
    // Runs `f` on `h` and frees `h` unless it is the skip input.
    fn then<'m, T: Scalar>(
        tape: &mut Tape<'m, T>,
        h: usize,
        skip: usize,
        f: impl FnOnce(&mut Tape<'m, T>, usize) -> Result<usize>,
    ) -> Result<usize> {
        let n = f(tape, h)?;
        if h != skip {
            tape.release(h);
        }
        Ok(n)
    }
    let mut h = skip;
    for (i, (w, o)) in weights.into_iter().zip(overrides).enumerate() {
        h = then(tape, h, skip, pad_op)?;
        h = then(tape, h, skip, |t, h| conv_op(t, h, w, None, 1, 0))?;
        h = then(tape, h, skip, |t, h| norm_op(t, h, DEFAULT_EPS, o, recorder.as_deref_mut()))?;
        if i == 0 {
            h = then(tape, h, skip, |t, h| {
                let y = activation(t.value(h), Activation::Relu);
                Ok(t.push(Op::Activation { input: h, kind: Activation::Relu }, y))
            })?;
        }
    }
    let sum = tape.value(skip).add(tape.value(h))?.check_finite("residual add")?;
    let out = tape.push(Op::Add { lhs: skip, rhs: h }, sum);
    tape.release(h);
    Ok(out)
}

fn pad_op<T: Scalar>(tape: &mut Tape<'_, T>, input: usize) -> Result<usize> {
    let y = reflection_pad2d(tape.value(input), 1)?;
    Ok(tape.push(Op::ReflectionPad { input, pad: 1 }, y))
}

fn conv_op<T: Scalar>(
    tape: &mut Tape<'_, T>,
    input: usize,
    weight: usize,
    bias: Option<usize>,
    stride: usize,
    pad: usize,
) -> Result<usize> {
    let params = tape.params();
    let b = bias.map(|b| params[b].value.data());
    let y = conv2d(tape.value(input), &params[weight].value, b, stride, pad)?;
    Ok(tape.push(Op::Conv { input, weight, bias, stride, pad }, y))
}

fn norm_op<T: Scalar>(
    tape: &mut Tape<'_, T>,
    input: usize,
    eps: f64,
    stats_override: Option<&ChannelStats>,
    recorder: Option<&mut Vec<ChannelStats>>,
) -> Result<usize> {
    let f = instance_norm_forward(tape.value(input), eps, stats_override)?;
    if let Some(r) = recorder {
        r.push(f.input_stats);
    }
    Ok(tape.push(Op::InstanceNorm { input, inv_std: f.inv_std, overridden: stats_override.is_some() }, f.output))
}
