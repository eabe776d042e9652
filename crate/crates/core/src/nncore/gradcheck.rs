//! Finite-difference verification of analytic gradients (f64 only).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation::Activation;
use super::model::{LayerSpec, Model};
use super::norm::{ChannelStats, DEFAULT_EPS};
use super::tape::backward;
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Pass threshold for the maximum relative error.
pub const GRAD_TOLERANCE: f64 = 1e-6;

/// Inputs whose kinked pre-activations sit closer than this to zero are
/// redrawn: a finite-difference stencil straddling the kink is meaningless.
const KINK_MARGIN: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    scaled_relative_error(analytic, numeric, 0.0)
}

/// `|a - n| / max(|a|, |n|, scale, 1e-12)`. The checks pass the mean absolute
/// analytic gradient of the tensor as `scale`, so entries whose true
/// derivative is close to zero are judged against the tensor's gradient
/// magnitude instead of amplifying round-off.
pub fn scaled_relative_error(analytic: f64, numeric: f64, scale: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(scale).max(1e-12)
}

fn mean_abs(t: &Tensor<f64>) -> f64 {
    t.data().iter().map(|v| v.abs()).sum::<f64>() / t.len().max(1) as f64
}

/// Fourth-order central difference of `f` at `x0`.
pub fn numeric_derivative(mut f: impl FnMut(f64) -> Result<f64>, x0: f64, step: f64) -> Result<f64> {
    let (p1, m1) = (f(x0 + step)?, f(x0 - step)?);
    let (p2, m2) = (f(x0 + 2.0 * step)?, f(x0 - 2.0 * step)?);
    let d = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * step);
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::NonFinite("finite difference"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter (or `input`) and flat index holding the worst entry.
    pub worst: String,
    pub checked: usize,
}

impl GradCheckReport {
    fn new() -> Self {
        GradCheckReport { max_rel_error: 0.0, worst: String::new(), checked: 0 }
    }

    fn record(&mut self, what: impl FnOnce() -> String, analytic: f64, numeric: f64, scale: f64) {
        let e = scaled_relative_error(analytic, numeric, scale);
        self.checked += 1;
        if e > self.max_rel_error || self.worst.is_empty() {
            self.max_rel_error = e;
            self.worst = what();
        }
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error < GRAD_TOLERANCE
    }
}

/// Checks a scalar function of a tensor against its claimed gradient.
pub fn grad_check_fn(
    x: &Tensor<f64>,
    analytic: &Tensor<f64>,
    step: f64,
    mut f: impl FnMut(&Tensor<f64>) -> Result<f64>,
) -> Result<GradCheckReport> {
    analytic.expect_shape(x.shape(), "grad_check_fn")?;
    let mut report = GradCheckReport::new();
    let scale = mean_abs(analytic);
    let mut probe = x.clone();
    for i in 0..x.len() {
        let x0 = x.data()[i];
        let numeric = numeric_derivative(
            |v| {
                probe.data_mut()[i] = v;
                f(&probe)
            },
            x0,
            step,
        )?;
        probe.data_mut()[i] = x0;
        report.record(|| format!("x[{i}]"), analytic.data()[i], numeric, scale);
    }
    Ok(report)
}

/// Checks every parameter and input gradient of `model` at `x` for the loss
/// `sum(model(x) * projection)`.
pub fn grad_check_model(
    model: &Model<f64>,
    x: &Tensor<f64>,
    overrides: Option<&[ChannelStats]>,
    projection: &Tensor<f64>,
    step: f64,
) -> Result<GradCheckReport> {
    let loss = |m: &Model<f64>, x: &Tensor<f64>| -> Result<f64> {
        let y = m.forward_with(x, overrides, None)?;
        Ok(y.data().iter().zip(projection.data()).map(|(a, b)| a * b).sum())
    };
    let (_, tape) = model.forward_taped_with(x, overrides)?;
    let grads = backward(&tape, projection)?;
    drop(tape);

    let mut report = grad_check_fn(x, grads.input.as_ref().expect("input gradient"), step, |xp| loss(model, xp))?;
    report.worst = format!("input {}", report.worst);

    let mut probe = model.clone();
    for (pi, g) in grads.params.iter().enumerate() {
        let g = g.as_ref().expect("parameter gradient");
        let scale = mean_abs(g);
        for i in 0..g.len() {
            let x0 = model.params()[pi].value.data()[i];
            let numeric = numeric_derivative(
                |v| {
                    probe.params_mut()[pi].value.data_mut()[i] = v;
                    loss(&probe, x)
                },
                x0,
                step,
            )?;
            probe.params_mut()[pi].value.data_mut()[i] = x0;
            report.record(|| format!("{}[{i}]", model.params()[pi].name), g.data()[i], numeric, scale);
        }
    }
    Ok(report)
}

/// One entry of the layer gradient suite.
#[derive(Clone, Debug)]
pub struct LayerCase {
    pub name: String,
    pub shape: Shape,
    pub report: GradCheckReport,
}

fn layer_cases(shape: Shape) -> Vec<(&'static str, Vec<LayerSpec>, bool)> {
    let c = shape.channels;
    vec![
        ("conv2d", vec![LayerSpec::conv(c, 3, 3, 1, 1)], false),
        ("conv2d-strided", vec![LayerSpec::conv(c, 2, 4, 2, 1)], false),
        ("upsample_conv", vec![LayerSpec::UpsampleConv { c_in: c, c_out: 2, factor: 2, bias: true }], false),
        ("instance_norm", vec![LayerSpec::InstanceNorm { channels: c, eps: DEFAULT_EPS }], false),
        ("instance_norm-override", vec![LayerSpec::InstanceNorm { channels: c, eps: DEFAULT_EPS }], true),
        ("relu", vec![LayerSpec::Activation(Activation::Relu)], false),
        ("leaky-relu", vec![LayerSpec::Activation(Activation::LeakyRelu)], false),
        ("tanh", vec![LayerSpec::Activation(Activation::Tanh)], false),
        ("reflection_pad", vec![LayerSpec::ReflectionPad(2)], false),
        ("residual_block", vec![LayerSpec::ResidualBlock { channels: c }], false),
    ]
}

/// Shapes exercised by the suite (up to 2×4×8×8).
pub const SUITE_SHAPES: [[usize; 4]; 5] = [[1, 2, 5, 5], [1, 3, 4, 4], [2, 2, 6, 6], [1, 4, 8, 8], [2, 4, 8, 8]];

/// Runs the finite-difference check for every layer kind over
/// [`SUITE_SHAPES`]. Deterministic for a given `seed`.
pub fn layer_suite(seed: u64, step: f64) -> Result<Vec<LayerCase>> {
    let mut out = Vec::new();
    for (si, dims) in SUITE_SHAPES.iter().enumerate() {
        let shape = Shape::from(*dims);
        for (ci, (name, layers, with_override)) in layer_cases(shape).into_iter().enumerate() {
            let case_seed = seed ^ ((si as u64) << 32) ^ ((ci as u64) << 16);
            let report = check_stack(&layers, shape, with_override, case_seed, step)?;
            out.push(LayerCase { name: name.to_string(), shape, report });
        }
    }
    Ok(out)
}

/// Draws weights, inputs and a projection for `layers` and checks them,
/// redrawing (up to 64 times) while a kinked activation sits too close to
/// its kink.
pub fn check_stack(
    layers: &[LayerSpec],
    shape: Shape,
    with_override: bool,
    seed: u64,
    step: f64,
) -> Result<GradCheckReport> {
    for attempt in 0..64u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let mut model = Model::<f64>::init(layers.to_vec(), &mut rng)?;
        // Unit-scale weights keep gradients well above round-off.
        for p in model.params_mut() {
            p.value = Tensor::randn(p.value.shape(), 0.5, &mut rng);
        }
        let x = Tensor::<f64>::randn(shape, 1.0, &mut rng);
        let overrides: Option<Vec<ChannelStats>> = with_override.then(|| {
            (0..model.num_norm_layers())
                .map(|_| {
                    let c = shape.channels;
                    let mean = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let var = (0..c).map(|_| rng.gen_range(0.5..2.0)).collect();
                    ChannelStats::per_channel(mean, var).expect("valid stats")
                })
                .collect()
        });
        let (y, tape) = model.forward_taped_with(&x, overrides.as_deref())?;
        if tape.min_kink_distance() < KINK_MARGIN {
            continue;
        }
        drop(tape);
        let projection = Tensor::<f64>::randn(y.shape(), 1.0, &mut rng);
        return grad_check_model(&model, &x, overrides.as_deref(), &projection, step);
    }
    Err(Error::invalid("could not draw a kink-free gradient check input"))
}
