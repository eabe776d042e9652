//! Least-squares adversarial loss and L1 cycle loss, with their gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nncore::gradcheck::{grad_check_fn, GradCheckReport, SUITE_SHAPES};
use crate::nncore::{Scalar, Shape, Tensor};

/// A scalar loss and its gradient with respect to the first argument.
#[derive(Clone, Debug)]
pub struct LossGrad<T = f32> {
    pub value: f64,
    pub grad: Tensor<T>,
}

/// `mean((pred - label)^2)` with label 1 for real, 0 for fake.
pub fn gan_loss<T: Scalar>(pred: &Tensor<T>, target_real: bool) -> Result<f64> {
    gan_loss_grad(pred, target_real).map(|l| l.value)
}

pub fn gan_loss_grad<T: Scalar>(pred: &Tensor<T>, target_real: bool) -> Result<LossGrad<T>> {
    if pred.is_empty() {
        return Err(Error::Empty("gan_loss prediction"));
    }
    let label = if target_real { 1.0 } else { 0.0 };
    let n = pred.len() as f64;
    let value = pred.data().iter().map(|v| (v.as_f64() - label).powi(2)).sum::<f64>() / n;
    let grad = pred.map(|v| T::of(2.0 * (v.as_f64() - label) / n));
    finite(value, grad, "gan_loss")
}

/// `lambda * mean(|rec - real|)`.
pub fn cycle_loss<T: Scalar>(rec: &Tensor<T>, real: &Tensor<T>, lambda: f64) -> Result<f64> {
    l1_loss_grad(rec, real, lambda).map(|l| l.value)
}

/// `lambda * mean(|a - b|)` and its gradient with respect to `a`. The
/// subgradient at `a == b` is taken as zero.
pub fn l1_loss_grad<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, lambda: f64) -> Result<LossGrad<T>> {
    a.expect_shape(b.shape(), "cycle_loss")?;
    if a.is_empty() {
        return Err(Error::Empty("cycle_loss input"));
    }
    let n = a.len() as f64;
    let value = lambda * a.data().iter().zip(b.data()).map(|(x, y)| (x.as_f64() - y.as_f64()).abs()).sum::<f64>() / n;
    let scale = lambda / n;
    let grad = a.zip_map(b, |x, y| {
        let d = (x - y).as_f64();
        T::of(if d > 0.0 {
            scale
        } else if d < 0.0 {
            -scale
        } else {
            0.0
        })
    })?;
    finite(value, grad, "cycle_loss")
}

fn finite<T: Scalar>(value: f64, grad: Tensor<T>, op: &'static str) -> Result<LossGrad<T>> {
    if !value.is_finite() {
        return Err(Error::NonFinite(op));
    }
    Ok(LossGrad { value, grad: grad.check_finite(op)? })
}

/// One finite-difference check of a loss function.
#[derive(Clone, Debug)]
pub struct LossCase {
    pub name: String,
    pub shape: Shape,
    pub report: GradCheckReport,
}

/// Minimum `|rec - real|` for cycle-loss checks; the stencil must not straddle
/// the kink of `|.|`.
const L1_MARGIN: f64 = 1e-3;

/// Finite-difference checks of both losses (and both GAN labels) over the
/// shared suite shapes.
pub fn loss_suite(seed: u64, step: f64) -> Result<Vec<LossCase>> {
    let mut out = Vec::new();
    for (si, dims) in SUITE_SHAPES.iter().enumerate() {
        let shape = Shape::from(*dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((si as u64) << 40) ^ 0x6c6f7373);
        let pred = Tensor::<f64>::randn(shape, 1.0, &mut rng);
        for real in [true, false] {
            let g = gan_loss_grad(&pred, real)?;
            let report = grad_check_fn(&pred, &g.grad, step, |p| gan_loss(p, real))?;
            let name = if real { "gan_loss-real" } else { "gan_loss-fake" };
            out.push(LossCase { name: name.into(), shape, report });
        }
        let target = Tensor::<f64>::randn(shape, 1.0, &mut rng);
        let offset = Tensor::<f64>::randn(shape, 1.0, &mut rng)
            .map(|d| if d.abs() < L1_MARGIN { d.signum() * (L1_MARGIN + d.abs()) } else { d });
        let rec = target.add(&offset)?;
        let g = l1_loss_grad(&rec, &target, 10.0)?;
        let report = grad_check_fn(&rec, &g.grad, step, |r| cycle_loss(r, &target, 10.0))?;
        out.push(LossCase { name: "cycle_loss".into(), shape, report });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::gradcheck::FD_STEP;

    fn full(v: f32) -> Tensor {
        Tensor::full([1, 1, 2, 3], v)
    }

    #[test]
    fn gan_loss_examples() {
        assert_eq!(gan_loss(&full(1.0), true).unwrap(), 0.0);
        assert_eq!(gan_loss(&full(0.0), true).unwrap(), 1.0);
        assert_eq!(gan_loss(&full(0.0), false).unwrap(), 0.0);
        assert!(matches!(gan_loss(&Tensor::<f32>::zeros([0, 1, 1, 1]), true), Err(Error::Empty(_))));
    }

    #[test]
    fn cycle_loss_examples() {
        let real = Tensor::<f64>::from_fn([1, 3, 2, 2], |[_, c, y, x]| (c + y + x) as f64 * 0.1);
        assert_eq!(cycle_loss(&real, &real, 10.0).unwrap(), 0.0);
        let rec = real.map(|v| v + 0.1);
        assert!((cycle_loss(&rec, &real, 10.0).unwrap() - 1.0).abs() < 1e-12);
        let a = cycle_loss(&rec, &real, 3.0).unwrap();
        let b = cycle_loss(&rec, &real, 6.0).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
        assert!(cycle_loss(&rec, &full(0.0).cast(), 1.0).is_err());
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        for case in loss_suite(7, FD_STEP).unwrap() {
            assert!(case.report.max_rel_error < 1e-6, "{} {}: {:?}", case.name, case.shape, case.report);
        }
    }
}
