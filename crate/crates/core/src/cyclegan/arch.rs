//! Generator and discriminator layer stacks.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nncore::{Activation, LayerSpec, Model, DEFAULT_EPS};

/// ResNet-style encoder / residual trunk / decoder generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub base_channels: usize,
    pub n_residual_blocks: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { base_channels: 32, n_residual_blocks: 11 }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_residual_blocks < 1 {
            return Err(Error::Config("generator needs at least one residual block".into()));
        }
        if self.base_channels < 8 {
            return Err(Error::Config(format!("generator base_channels must be >= 8, got {}", self.base_channels)));
        }
        Ok(())
    }

    /// Spatial sizes must be multiples of this.
    pub const SIZE_MULTIPLE: usize = 4;
}

/// PatchGAN discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiscriminatorConfig {
    pub base_channels: usize,
    /// Number of stride-2 downsampling convs.
    pub n_layers: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig { base_channels: 64, n_layers: 3 }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.n_layers == 0 {
            return Err(Error::Config(format!("invalid discriminator config {self:?}")));
        }
        Ok(())
    }
}

const RGB: usize = 3;

fn norm(channels: usize) -> LayerSpec {
    LayerSpec::InstanceNorm { channels, eps: DEFAULT_EPS }
}

fn conv_nb(c_in: usize, c_out: usize, kernel: usize, stride: usize, pad: usize) -> LayerSpec {
    LayerSpec::Conv { c_in, c_out, kernel, stride, pad, bias: false }
}

/// Layer stack of the generator. Convs that feed an instance norm carry no
/// bias (the norm would cancel it).
pub fn generator_layers(cfg: &GeneratorConfig) -> Result<Vec<LayerSpec>> {
    cfg.validate()?;
    let b = cfg.base_channels;
    let relu = LayerSpec::Activation(Activation::Relu);
    let mut l = vec![LayerSpec::ReflectionPad(3), conv_nb(RGB, b, 7, 1, 0), norm(b), relu.clone()];
    for (c_in, c_out) in [(b, 2 * b), (2 * b, 4 * b)] {
        l.extend([conv_nb(c_in, c_out, 3, 2, 1), norm(c_out), relu.clone()]);
    }
    l.extend((0..cfg.n_residual_blocks).map(|_| LayerSpec::ResidualBlock { channels: 4 * b }));
    for (c_in, c_out) in [(4 * b, 2 * b), (2 * b, b)] {
        l.extend([LayerSpec::UpsampleConv { c_in, c_out, factor: 2, bias: false }, norm(c_out), relu.clone()]);
    }
    l.extend([LayerSpec::ReflectionPad(3), LayerSpec::conv(b, RGB, 7, 1, 0), LayerSpec::Activation(Activation::Tanh)]);
    Ok(l)
}

/// Layer stack of the discriminator: `n_layers` 4×4 stride-2 convs doubling
/// the width, one 4×4 stride-1 conv, then a 4×4 stride-1 conv to one channel.
pub fn discriminator_layers(cfg: &DiscriminatorConfig) -> Result<Vec<LayerSpec>> {
    cfg.validate()?;
    let leaky = LayerSpec::Activation(Activation::LeakyRelu);
    let mut l = Vec::new();
    let mut c = cfg.base_channels;
    l.extend([LayerSpec::conv(RGB, c, 4, 2, 1), leaky.clone()]);
    for _ in 1..cfg.n_layers {
        l.extend([conv_nb(c, 2 * c, 4, 2, 1), norm(2 * c), leaky.clone()]);
        c *= 2;
    }
    l.extend([conv_nb(c, 2 * c, 4, 1, 1), norm(2 * c), leaky]);
    l.push(LayerSpec::conv(2 * c, 1, 4, 1, 1));
    Ok(l)
}

pub fn build_generator(cfg: &GeneratorConfig, rng: &mut impl Rng) -> Result<Model> {
    Model::init(generator_layers(cfg)?, rng)
}

pub fn build_discriminator(cfg: &DiscriminatorConfig, rng: &mut impl Rng) -> Result<Model> {
    Model::init(discriminator_layers(cfg)?, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{receptive_field, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_generator_parameter_count() {
        let b = 8;
        let expected = 3 * b * 49
            + b * 2 * b * 9
            + 2 * b * 4 * b * 9
            + 2 * (4 * b) * (4 * b) * 9
            + 4 * b * 2 * b * 9
            + 2 * b * b * 9
            + b * 3 * 49
            + 3;
        let g = build_generator(&GeneratorConfig { base_channels: b, n_residual_blocks: 1 }, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(g.num_parameters(), expected);
    }

    #[test]
    fn generator_preserves_shape_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = build_generator(&GeneratorConfig { base_channels: 8, n_residual_blocks: 2 }, &mut rng).unwrap();
        let x = Tensor::randn([1, 3, 32, 32], 1.0, &mut rng);
        let y = g.forward(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn discriminator_patch_map_and_receptive_field() {
        let cfg = DiscriminatorConfig::default();
        assert_eq!(receptive_field(&discriminator_layers(&cfg).unwrap()).unwrap().rf, 70);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = build_discriminator(&DiscriminatorConfig { base_channels: 8, n_layers: 3 }, &mut rng).unwrap();
        let y = d.forward(&Tensor::randn([1, 3, 64, 64], 1.0, &mut rng)).unwrap();
        assert_eq!((y.shape().channels, y.shape().height, y.shape().width), (1, 6, 6));
    }

    #[test]
    fn zero_weight_discriminator_scores_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = build_discriminator(&DiscriminatorConfig { base_channels: 8, n_layers: 2 }, &mut rng).unwrap();
        for p in d.params_mut() {
            p.value = Tensor::zeros(p.value.shape());
        }
        let y = d.forward(&Tensor::randn([1, 3, 32, 32], 1.0, &mut rng)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_configs() {
        assert!(generator_layers(&GeneratorConfig { base_channels: 4, n_residual_blocks: 1 }).is_err());
        assert!(generator_layers(&GeneratorConfig { base_channels: 8, n_residual_blocks: 0 }).is_err());
        assert!(discriminator_layers(&DiscriminatorConfig { base_channels: 0, n_layers: 3 }).is_err());
    }
}
