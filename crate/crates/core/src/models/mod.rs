//! Generator, critic and auxiliary classifier, plus their objectives.

mod critic;
mod generator;
pub mod layers;
pub mod losses;
mod params;

use ndarray::{Array2, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use critic::{ClassifierNet, CriticNet, TrunkArch};
pub use generator::{one_hot, GeneratorArch, GeneratorNet};
pub use layers::Phase;
pub use losses::{
    classifier_loss, critic_loss, cross_entropy_from_probs, generator_adv_loss, generator_total_loss,
    gradient_penalty, CriticLoss, GeneratorLoss,
};
pub use params::ParamSet;

use crate::autograd::Array;
use crate::error::{Error, Result};

/// `batch x z_dim` i.i.d. standard normal draws.
pub fn sample_latent(batch: usize, z_dim: usize, seed: u64) -> Result<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_latent_with(batch, z_dim, &mut rng)
}

pub fn sample_latent_with(batch: usize, z_dim: usize, rng: &mut impl rand::Rng) -> Result<Array2<f64>> {
    if batch == 0 || z_dim == 0 {
        return Err(Error::InvalidArgument("latent batch and dimension must be positive".into()));
    }
    Ok(Array2::from_shape_simple_fn((batch, z_dim), || StandardNormal.sample(rng)))
}

/// `[N,S,S,3]` in [-1,1] <-> `[N,3,S,S]`
pub fn nhwc_to_nchw(a: &Array) -> Array {
    a.view().permuted_axes(IxDyn(&[0, 3, 1, 2])).as_standard_layout().into_owned()
}

pub fn nchw_to_nhwc(a: &Array) -> Array {
    a.view().permuted_axes(IxDyn(&[0, 2, 3, 1])).as_standard_layout().into_owned()
}
