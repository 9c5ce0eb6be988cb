use ndarray::{Array2, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, BnStats, Phase};
use super::params::{normal_init, ones, zeros, ParamSet};
use crate::autograd::{self as ag, Array, ConvGeom, Var};
use crate::color::ColorClass;
use crate::error::{Error, Result};

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorArch {
    pub z_dim: usize,
    /// Feature channels: the dense projection produces `channels[0]` maps of
    /// `base_size`², each later entry is one doubling transposed-conv stage,
    /// and a final stage maps to RGB.
    pub channels: Vec<usize>,
    pub base_size: usize,
}

impl GeneratorArch {
    /// z(100) + one-hot(12) -> 4x4x256 -> 8x8x128 -> 16x16x64 -> 32x32x3
    pub fn standard(z_dim: usize) -> Self {
        GeneratorArch { z_dim, channels: vec![256, 128, 64], base_size: 4 }
    }

    /// Same topology with every width divided by `div`.
    pub fn scaled(z_dim: usize, div: usize) -> Self {
        let mut a = Self::standard(z_dim);
        a.channels.iter_mut().for_each(|c| *c = (*c / div).max(1));
        a
    }

    pub fn image_size(&self) -> usize {
        self.base_size << self.channels.len()
    }
}

/// Transposed-convolution generator with a tanh head. The class enters as a
/// one-hot code next to z; `z·Wz + c·Wc` is the dense layer applied to the
/// concatenation `[z, c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNet {
    pub arch: GeneratorArch,
    pub params: ParamSet,
    pub buffers: ParamSet,
}

impl GeneratorNet {
    pub fn new(arch: GeneratorArch, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        let mut buffers = ParamSet::new();
        let c0 = arch.channels[0];
        let dense_out = c0 * arch.base_size * arch.base_size;
        params.push("dense_z.w", normal_init(&[arch.z_dim, dense_out], INIT_STD, rng));
        params.push("dense_c.w", normal_init(&[ColorClass::COUNT, dense_out], INIT_STD, rng));
        let mut add_bn = |params: &mut ParamSet, i: usize, c: usize| {
            params.push(format!("bn{i}.gamma"), ones(&[c]));
            params.push(format!("bn{i}.beta"), zeros(&[c]));
            buffers.push(format!("bn{i}.running_mean"), zeros(&[c]));
            buffers.push(format!("bn{i}.running_var"), ones(&[c]));
        };
        add_bn(&mut params, 0, c0);
        for i in 1..arch.channels.len() {
            let (cin, cout) = (arch.channels[i - 1], arch.channels[i]);
            params.push(format!("up{i}.w"), normal_init(&[cin, cout, 4, 4], INIT_STD, rng));
            add_bn(&mut params, i, cout);
        }
        let last = *arch.channels.last().unwrap();
        params.push("out.w", normal_init(&[last, 3, 4, 4], INIT_STD, rng));
        params.push("out.b", zeros(&[3]));
        GeneratorNet { arch, params, buffers }
    }

    /// `z [N, z_dim]`, `onehot [N, 12]` -> images `[N, 3, S, S]` in [-1, 1].
    pub fn forward(&self, p: &[Var], z: &Var, onehot: &Var, phase: Phase) -> (Var, Vec<BnStats>) {
        let a = &self.arch;
        let n = z.shape()[0];
        let mut stats = Vec::new();
        let bn = |x: &Var, i: usize, gamma: &Var, beta: &Var, stats: &mut Vec<BnStats>| {
            let rm = self.buffers.get(&format!("bn{i}.running_mean")).unwrap();
            let rv = self.buffers.get(&format!("bn{i}.running_var")).unwrap();
            let (y, s) = layers::batch_norm(x, gamma, beta, rm, rv, phase, i);
            stats.extend(s);
            y
        };
        let h = ag::add(&ag::matmul(z, &p[0]), &ag::matmul(onehot, &p[1]));
        let mut h = ag::reshape(&h, &[n, a.channels[0], a.base_size, a.base_size]);
        h = ag::relu(&bn(&h, 0, &p[2], &p[3], &mut stats));
        let mut idx = 4;
        let mut size = a.base_size;
        for i in 1..a.channels.len() {
            size *= 2;
            h = ag::conv_transpose2d(&h, &p[idx], ConvGeom::HALVING, (size, size));
            h = ag::relu(&bn(&h, i, &p[idx + 1], &p[idx + 2], &mut stats));
            idx += 3;
        }
        size *= 2;
        h = ag::conv_transpose2d(&h, &p[idx], ConvGeom::HALVING, (size, size));
        h = layers::add_channel_bias(&h, &p[idx + 1]);
        (ag::tanh(&h), stats)
    }

    /// Inference-mode generation (running batch-norm statistics, no graph).
    pub fn generate(&self, z: &Array2<f64>, classes: &[ColorClass]) -> Result<Array> {
        if z.nrows() != classes.len() {
            return Err(Error::InvalidArgument(format!(
                "latent batch of {} does not match {} class codes",
                z.nrows(),
                classes.len()
            )));
        }
        if z.ncols() != self.arch.z_dim {
            return Err(Error::InvalidArgument(format!(
                "latent dimension {} != {}",
                z.ncols(),
                self.arch.z_dim
            )));
        }
        Ok(ag::no_grad(|| {
            let p = self.params.bind_frozen();
            let zv = Var::constant(z.clone().into_dyn());
            let (out, _) = self.forward(&p, &zv, &Var::constant(one_hot(classes)), Phase::Eval);
            out.value().clone()
        }))
    }
}

/// `[N, 12]` one-hot rows.
pub fn one_hot(classes: &[ColorClass]) -> Array {
    let mut a = Array::zeros(IxDyn(&[classes.len(), ColorClass::COUNT]));
    for (i, c) in classes.iter().enumerate() {
        a[[i, c.code()]] = 1.0;
    }
    a
}
