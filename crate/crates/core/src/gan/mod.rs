//! The enhancement networks and their losses.

mod blocks;
pub mod discriminator;
pub mod generator;
pub mod loss;

pub use discriminator::{Discriminator, DiscriminatorCache, DiscriminatorConfig};
pub use generator::{Generator, GeneratorCache, GeneratorConfig};
pub use loss::{
    adversarial_loss_with_grad, bce, discriminator_loss, discriminator_loss_batch, discriminator_loss_with_grad,
    generator_loss, generator_loss_with_grad, GeneratorLoss, GeneratorLossGrad, LossWeights,
};
