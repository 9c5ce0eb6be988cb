use rand::Rng;
use serde::{Deserialize, Serialize};

use super::generator::INIT_STD;
use super::layers::{self, BnStats, Phase, LEAKY_SLOPE};
use super::params::{normal_init, ones, zeros, ParamSet};
use crate::autograd::{self as ag, ConvGeom, Var};
use crate::color::ColorClass;

/// Strided convolution trunk shared by the critic and the classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrunkArch {
    pub image_size: usize,
    /// Output channels of each halving conv stage.
    pub channels: Vec<usize>,
}

impl TrunkArch {
    /// 32x32x3 -> 16x16x64 -> 8x8x128 -> 4x4x256
    pub fn standard() -> Self {
        TrunkArch { image_size: 32, channels: vec![64, 128, 256] }
    }

    pub fn scaled(div: usize) -> Self {
        let mut a = Self::standard();
        a.channels.iter_mut().for_each(|c| *c = (*c / div).max(1));
        a
    }

    pub fn final_features(&self) -> usize {
        let s = self.image_size >> self.channels.len();
        s * s * self.channels.last().copied().unwrap_or(3)
    }
}

/// Wasserstein critic: conv stages with leaky ReLU and no normalization, so
/// each score depends on its own input only.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub arch: TrunkArch,
    pub params: ParamSet,
}

impl CriticNet {
    pub fn new(arch: TrunkArch, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        let mut cin = 3;
        for (i, &c) in arch.channels.iter().enumerate() {
            params.push(format!("conv{i}.w"), normal_init(&[c, cin, 4, 4], INIT_STD, rng));
            params.push(format!("conv{i}.b"), zeros(&[c]));
            cin = c;
        }
        params.push("head.w", normal_init(&[arch.final_features(), 1], INIT_STD, rng));
        params.push("head.b", zeros(&[1]));
        CriticNet { arch, params }
    }

    /// `[N,3,S,S]` -> scores `[N,1]`
    pub fn forward(&self, p: &[Var], x: &Var) -> Var {
        let mut h = x.clone();
        for i in 0..self.arch.channels.len() {
            h = ag::conv2d(&h, &p[2 * i], ConvGeom::HALVING);
            h = layers::add_channel_bias(&h, &p[2 * i + 1]);
            h = ag::leaky_relu(&h, LEAKY_SLOPE);
        }
        let k = 2 * self.arch.channels.len();
        layers::linear(&layers::flatten(&h), &p[k], Some(&p[k + 1]))
    }
}

/// Auxiliary classifier: the critic trunk with batch normalization after
/// every conv stage but the first, ending in 12 logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierNet {
    pub arch: TrunkArch,
    pub params: ParamSet,
    pub buffers: ParamSet,
}

impl ClassifierNet {
    pub fn new(arch: TrunkArch, rng: &mut impl Rng) -> Self {
        let mut params = ParamSet::new();
        let mut buffers = ParamSet::new();
        let mut cin = 3;
        for (i, &c) in arch.channels.iter().enumerate() {
            params.push(format!("conv{i}.w"), normal_init(&[c, cin, 4, 4], INIT_STD, rng));
            if i == 0 {
                params.push(format!("conv{i}.b"), zeros(&[c]));
            } else {
                params.push(format!("bn{i}.gamma"), ones(&[c]));
                params.push(format!("bn{i}.beta"), zeros(&[c]));
                buffers.push(format!("bn{i}.running_mean"), zeros(&[c]));
                buffers.push(format!("bn{i}.running_var"), ones(&[c]));
            }
            cin = c;
        }
        params.push("head.w", normal_init(&[arch.final_features(), ColorClass::COUNT], INIT_STD, rng));
        params.push("head.b", zeros(&[ColorClass::COUNT]));
        ClassifierNet { arch, params, buffers }
    }

    /// `[N,3,S,S]` -> logits `[N,12]`
    pub fn forward(&self, p: &[Var], x: &Var, phase: Phase) -> (Var, Vec<BnStats>) {
        let mut stats = Vec::new();
        let mut h = x.clone();
        let mut idx = 0;
        for i in 0..self.arch.channels.len() {
            h = ag::conv2d(&h, &p[idx], ConvGeom::HALVING);
            if i == 0 {
                h = layers::add_channel_bias(&h, &p[idx + 1]);
            } else {
                let rm = self.buffers.get(&format!("bn{i}.running_mean")).unwrap();
                let rv = self.buffers.get(&format!("bn{i}.running_var")).unwrap();
                let (y, s) = layers::batch_norm(&h, &p[idx + 1], &p[idx + 2], rm, rv, phase, i);
                stats.extend(s);
                h = y;
                idx += 1;
            }
            idx += 2;
            h = ag::leaky_relu(&h, LEAKY_SLOPE);
        }
        (layers::linear(&layers::flatten(&h), &p[idx], Some(&p[idx + 1])), stats)
    }

    /// Class probabilities in inference mode, `[N, 12]`.
    pub fn probabilities(&self, x: &crate::autograd::Array) -> crate::autograd::Array {
        ag::no_grad(|| {
            let p = self.params.bind_frozen();
            let (logits, _) = self.forward(&p, &Var::constant(x.clone()), Phase::Eval);
            ag::log_softmax(&logits).value().mapv(f64::exp)
        })
    }
}
