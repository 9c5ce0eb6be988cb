use ndarray::IxDyn;

use super::params::ParamSet;
use crate::autograd::{self as ag, Array, Var};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LEAKY_SLOPE: f64 = 0.2;

/// Whether batch normalization uses batch statistics or running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Per-channel statistics of one batch-norm layer for one forward pass.
#[derive(Debug, Clone)]
pub struct BnStats {
    pub layer: usize,
    pub mean: Array,
    /// Unbiased variance.
    pub var: Array,
}

/// `x [N,F] @ w [F,O] + b [O]`
pub fn linear(x: &Var, w: &Var, b: Option<&Var>) -> Var {
    let y = ag::matmul(x, w);
    match b {
        Some(b) => add_channel_bias(&y, b),
        None => y,
    }
}

/// Adds a per-channel bias `b [C]` to `x [N,C,...]`.
pub fn add_channel_bias(x: &Var, b: &Var) -> Var {
    let shape = x.shape().to_vec();
    let mut bshape = vec![1; shape.len()];
    bshape[1] = shape[1];
    ag::add(x, &ag::broadcast_to(&ag::reshape(b, &bshape), &shape))
}

fn channel_shape(x: &Var) -> Vec<usize> {
    let mut s = vec![1; x.shape().len()];
    s[1] = x.shape()[1];
    s
}

/// Batch normalization over every axis except the channel axis 1.
///
/// In [`Phase::Train`] the batch statistics are used and also returned so
/// the caller can fold them into the running estimates.
pub fn batch_norm(
    x: &Var,
    gamma: &Var,
    beta: &Var,
    running_mean: &Array,
    running_var: &Array,
    phase: Phase,
    layer: usize,
) -> (Var, Option<BnStats>) {
    let shape = x.shape().to_vec();
    let cshape = channel_shape(x);
    let count = (x.value().len() / shape[1]) as f64;
    let bc = |v: &Var| ag::broadcast_to(&ag::reshape(v, &cshape), &shape);
    let (normalized, stats) = match phase {
        Phase::Train => {
            let mean = ag::scale(&ag::sum_to(x, &cshape), 1.0 / count);
            let centered = ag::sub(x, &ag::broadcast_to(&mean, &shape));
            let var = ag::scale(&ag::sum_to(&ag::mul(&centered, &centered), &cshape), 1.0 / count);
            let inv_std = ag::powf(&ag::add_scalar(&var, BN_EPS), -0.5);
            let unbiased = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            let stats = BnStats {
                layer,
                mean: mean.value().to_shape(IxDyn(&[shape[1]])).unwrap().to_owned(),
                var: var.value().to_shape(IxDyn(&[shape[1]])).unwrap().to_owned() * unbiased,
            };
            (ag::mul(&centered, &ag::broadcast_to(&inv_std, &shape)), Some(stats))
        }
        Phase::Eval => {
            let mean = Var::constant(running_mean.clone());
            let inv_std = Var::constant(running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt()));
            (ag::mul(&ag::sub(x, &bc(&mean)), &bc(&inv_std)), None)
        }
    };
    (ag::add(&ag::mul(&normalized, &bc(gamma)), &bc(beta)), stats)
}

/// Folds batch statistics into running estimates stored as
/// `bn{layer}.running_mean` / `bn{layer}.running_var`.
pub fn absorb_stats(buffers: &mut ParamSet, stats: &[BnStats]) {
    for s in stats {
        for (suffix, batch) in [("running_mean", &s.mean), ("running_var", &s.var)] {
            let key = format!("bn{}.{suffix}", s.layer);
            let run = buffers.get_mut(&key).unwrap_or_else(|| panic!("missing buffer {key}"));
            run.zip_mut_with(batch, |r, &b| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b);
        }
    }
}

/// [N,C,H,W] -> [N, C*H*W]
pub fn flatten(x: &Var) -> Var {
    let n = x.shape()[0];
    let rest: usize = x.shape()[1..].iter().product();
    ag::reshape(x, &[n, rest])
}
