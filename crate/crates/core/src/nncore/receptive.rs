use super::model::LayerSpec;
use crate::error::{Error, Result};

/// Receptive field size and cumulative stride (in input pixels) of a stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReceptiveField {
    pub rf: usize,
    pub jump: usize,
}

/// Kernel/stride recurrence: `rf += (k - 1) * jump; jump *= stride`, starting
/// from `rf = jump = 1`.
///
/// Residual blocks count as two 3×3 stride-1 convs. Padding, normalization and
/// activations do not change the field. An upsampling stage divides the jump
/// by its factor before its 3×3 conv, which requires the jump to be divisible.
pub fn receptive_field(specs: &[LayerSpec]) -> Result<ReceptiveField> {
    let mut rf = 1;
    let mut jump = 1;
    for spec in specs {
        match *spec {
            LayerSpec::Conv { kernel, stride, .. } => {
                rf += (kernel - 1) * jump;
                jump *= stride;
            }
            LayerSpec::ResidualBlock { .. } => rf += 4 * jump,
            LayerSpec::UpsampleConv { factor, .. } => {
                if factor == 0 || jump % factor != 0 {
                    return Err(Error::UnsupportedLayer(format!(
                        "upsample by {factor} at cumulative stride {jump}"
                    )));
                }
                jump /= factor;
                rf += 2 * jump;
            }
            LayerSpec::InstanceNorm { .. } | LayerSpec::Activation(_) | LayerSpec::ReflectionPad(_) => {}
        }
    }
    Ok(ReceptiveField { rf, jump })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(k: usize, s: usize) -> LayerSpec {
        LayerSpec::conv(1, 1, k, s, 0)
    }

    #[test]
    fn recurrence_examples() {
        assert_eq!(receptive_field(&[conv(3, 1)]).unwrap().rf, 3);
        assert_eq!(receptive_field(&[conv(3, 1), conv(3, 1)]).unwrap().rf, 5);
        let r = receptive_field(&[conv(7, 1), conv(3, 2), conv(3, 2)]).unwrap();
        assert_eq!(r, ReceptiveField { rf: 13, jump: 4 });
    }

    #[test]
    fn residual_block_is_two_three_by_three_convs() {
        let a = receptive_field(&[LayerSpec::ResidualBlock { channels: 4 }]).unwrap();
        let b = receptive_field(&[conv(3, 1), conv(3, 1)]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn upsample_needs_divisible_jump() {
        let up = LayerSpec::UpsampleConv { c_in: 1, c_out: 1, factor: 2, bias: true };
        assert!(matches!(receptive_field(std::slice::from_ref(&up)), Err(Error::UnsupportedLayer(_))));
        let r = receptive_field(&[conv(3, 2), up]).unwrap();
        assert_eq!(r, ReceptiveField { rf: 5, jump: 1 });
    }
}
