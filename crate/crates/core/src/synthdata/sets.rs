//! Unpaired training tiles and paired evaluation slides.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::field::{gen_feature_field, FeatureField};
use super::render::{render_domain_a, render_domain_b, DomainParams};
use crate::error::{Error, Result};
use crate::tiling::Slide;

/// What a field seed is used for; stored in its two low bits so seeds for
/// different roles never collide.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedRole {
    TrainA = 0,
    TrainB = 1,
    Eval = 2,
}

impl SeedRole {
    pub fn of(seed: u64) -> SeedRole {
        match seed & 3 {
            0 => SeedRole::TrainA,
            1 => SeedRole::TrainB,
            _ => SeedRole::Eval,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn field_seed(seed: u64, index: u64, role: SeedRole) -> u64 {
    (splitmix(splitmix(seed) ^ index) << 2) | role as u64
}

/// Side of the source slides that training tiles are cut from.
pub const TRAIN_SOURCE_SIZE: usize = 256;
/// Default evaluation slide side.
pub const DEFAULT_EVAL_SIZE: usize = 768;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub tiles_a: Vec<Slide>,
    pub tiles_b: Vec<Slide>,
    /// Field seeds of the source slides for each domain.
    pub seeds_a: Vec<u64>,
    pub seeds_b: Vec<u64>,
}

pub fn make_training_set(n_tiles: usize, tile_size: usize, seed: u64) -> Result<TrainingSet> {
    make_training_set_with(n_tiles, tile_size, seed, &DomainParams::default())
}

/// Cuts `n_tiles` overlapping tiles (stride `tile_size / 2`) per domain from
/// source slides rendered on independent fields, shuffled deterministically.
pub fn make_training_set_with(n_tiles: usize, tile_size: usize, seed: u64, params: &DomainParams) -> Result<TrainingSet> {
    if n_tiles < 2 {
        return Err(Error::invalid(format!("need at least 2 training tiles, got {n_tiles}")));
    }
    if tile_size < 4 {
        return Err(Error::invalid(format!("tile size {tile_size} too small")));
    }
    params.validate()?;
    let source = TRAIN_SOURCE_SIZE.max(tile_size);
    let (tiles_a, seeds_a) = cut_tiles(n_tiles, tile_size, source, seed, SeedRole::TrainA, |f| render_domain_a(f, params))?;
    let (tiles_b, seeds_b) =
        cut_tiles(n_tiles, tile_size, source, seed, SeedRole::TrainB, |f| render_domain_b(f, params).slide)?;
    Ok(TrainingSet { tiles_a, tiles_b, seeds_a, seeds_b })
}

fn cut_tiles(
    n: usize,
    tile: usize,
    source: usize,
    seed: u64,
    role: SeedRole,
    render: impl Fn(&FeatureField) -> Slide,
) -> Result<(Vec<Slide>, Vec<u64>)> {
    let stride = (tile / 2).max(1);
    let per_axis = (source - tile) / stride + 1;
    let per_slide = per_axis * per_axis;
    let n_sources = n.div_ceil(per_slide);
    let mut tiles = Vec::with_capacity(n_sources * per_slide);
    let mut seeds = Vec::with_capacity(n_sources);
    for i in 0..n_sources {
        let fs = field_seed(seed, i as u64, role);
        let slide = render(&gen_feature_field(fs, source, source)?);
        for ty in 0..per_axis {
            for tx in 0..per_axis {
                tiles.push(slide.crop(tx * stride, ty * stride, tile, tile)?);
            }
        }
        seeds.push(fs);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ role as u64));
    tiles.shuffle(&mut rng);
    tiles.truncate(n);
    Ok((tiles, seeds))
}

/// Pixel-aligned A/B slides rendered from one field.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSlidePair {
    pub slide_a: Slide,
    pub slide_b: Slide,
    pub field: FeatureField,
    pub true_density_b: f64,
}

impl SynthSlidePair {
    pub fn from_field(field: FeatureField, params: &DomainParams) -> Self {
        let slide_a = render_domain_a(&field, params);
        let b = render_domain_b(&field, params);
        SynthSlidePair { slide_a, slide_b: b.slide, field, true_density_b: b.true_density }
    }

    /// `seed,true_density_b,mean_blob_density` with one data row.
    pub fn sidecar_csv(&self) -> String {
        let mut s = String::from("seed,true_density_b,mean_blob_density\n");
        let _ = writeln!(s, "{},{},{}", self.field.seed, self.true_density_b, self.field.mean_density());
        s
    }
}

pub fn make_eval_set(m_pairs: usize, width: usize, height: usize, seed: u64) -> Result<Vec<SynthSlidePair>> {
    make_eval_set_with(m_pairs, width, height, seed, &DomainParams::default())
}

pub fn make_eval_set_with(
    m_pairs: usize,
    width: usize,
    height: usize,
    seed: u64,
    params: &DomainParams,
) -> Result<Vec<SynthSlidePair>> {
    if m_pairs == 0 {
        return Err(Error::invalid("need at least one evaluation pair"));
    }
    params.validate()?;
    (0..m_pairs as u64)
        .map(|i| {
            let field = gen_feature_field(field_seed(seed, i, SeedRole::Eval), width, height)?;
            Ok(SynthSlidePair::from_field(field, params))
        })
        .collect()
}
