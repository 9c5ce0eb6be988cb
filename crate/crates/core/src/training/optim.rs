use serde::{Deserialize, Serialize};

use crate::autograd::Array;
use crate::models::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Adam with bias correction; one moment pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
    pub m: ParamSet,
    pub v: ParamSet,
}

impl Adam {
    pub fn new(cfg: AdamConfig, like: &ParamSet) -> Self {
        let mut m = ParamSet::new();
        let mut v = ParamSet::new();
        for (name, value) in like.names().iter().zip(like.values()) {
            m.push(name.clone(), Array::zeros(value.raw_dim()));
            v.push(name.clone(), Array::zeros(value.raw_dim()));
        }
        Adam { cfg, t: 0, m, v }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Array]) {
        assert_eq!(grads.len(), params.len(), "one gradient per parameter tensor");
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.values_mut().iter_mut())
            .zip(self.v.values_mut().iter_mut())
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, IxDyn};

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = ParamSet::new();
        p.push("w", arr1(&[1.0, -1.0, 0.5]).into_dyn());
        let cfg = AdamConfig { lr: 0.1, beta1: 0.5, beta2: 0.9, eps: 1e-12 };
        let mut adam = Adam::new(cfg, &p);
        adam.step(&mut p, &[arr1(&[3.0, -0.2, 0.0]).into_dyn()]);
        let w = p.get("w").unwrap();
        assert!((w[0] - 0.9).abs() < 1e-9);
        assert!((w[1] - (-0.9)).abs() < 1e-9);
        assert_eq!(w[2], 0.5);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = ParamSet::new();
        p.push("x", Array::from_elem(IxDyn(&[2]), 5.0));
        let mut adam = Adam::new(AdamConfig { lr: 0.05, beta1: 0.5, beta2: 0.9, eps: 1e-8 }, &p);
        for _ in 0..2000 {
            let g = p.get("x").unwrap().mapv(|x| 2.0 * x);
            adam.step(&mut p, &[g]);
        }
        assert!(p.get("x").unwrap().iter().all(|x| x.abs() < 1e-2));
    }
}
