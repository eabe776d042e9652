//! CycleGAN: networks, losses, image pool, ADAM, training steps and
//! checkpoints.

mod adam;
mod arch;
mod checkpoint;
mod loss;
mod pool;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use arch::{
    build_discriminator, build_generator, discriminator_layers, generator_layers, DiscriminatorConfig, GeneratorConfig,
};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION,
};
pub use loss::{cycle_loss, gan_loss, gan_loss_grad, l1_loss_grad, loss_suite, LossCase, LossGrad};
pub use pool::{ImagePool, DEFAULT_POOL_CAPACITY};
pub use train::{
    batch_indices, discriminator_pass, generator_pass, CycleGan, DiscriminatorPass, GeneratorPass, LossReport,
    NetGrads, Networks, Replica, TrainHyper, NETWORK_NAMES,
};
