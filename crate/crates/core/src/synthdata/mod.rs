//! Procedural two-domain slides linked through a shared feature field.

mod field;
mod render;
mod sets;

pub use field::{det_cos, det_sin, gen_feature_field, FeatureField, FIELD_COMPONENTS, MAX_WAVELENGTH, MIN_WAVELENGTH};
pub use render::{
    render_domain_a, render_domain_a_counted, render_domain_b, DomainB, DomainParams, Rgb, MIN_PALETTE_DISTANCE,
};
pub use sets::{
    field_seed, make_eval_set, make_eval_set_with, make_training_set, make_training_set_with, SeedRole,
    SynthSlidePair, TrainingSet, DEFAULT_EVAL_SIZE, TRAIN_SOURCE_SIZE,
};
