//! Objectives of the three networks.
//!
//! Critic: `-E[D(x)] + E[D(x̂)] + λ E[(‖∇_u D(u)‖₂ - 1)²]` with
//! `u = α x + (1 - α) x̂`, one `α ~ U(0,1)` per sample.
//! Generator: `-E[D(x̂)]` plus a weighted classifier cross-entropy on the
//! conditioning labels. Classifier: `-E[log Q(y|x)]`.

use std::rc::Rc;

use ndarray::{Array2, IxDyn};

use crate::autograd::{self as ag, Array, Var};
use crate::color::ColorClass;
use crate::error::{Error, Result};

/// Added under the square root of the gradient norm.
pub const GP_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CriticLoss {
    pub total: Var,
    /// `-mean(D(x)) + mean(D(x̂))`
    pub wasserstein: f64,
    /// Unweighted penalty `mean((‖∇D(u)‖ - 1)²)`.
    pub penalty: f64,
}

/// Critic objective. `score` maps an image batch to `[N,1]` (or `[N]`)
/// scores and must record its graph so the input gradient can be
/// differentiated again.
pub fn critic_loss(
    score: &dyn Fn(&Var) -> Var,
    real: &Array,
    fake: &Array,
    lambda: f64,
    alphas: &[f64],
) -> Result<CriticLoss> {
    if real.shape() != fake.shape() {
        return Err(Error::InvalidArgument(format!(
            "real batch {:?} and fake batch {:?} differ",
            real.shape(),
            fake.shape()
        )));
    }
    let n = real.shape()[0];
    if alphas.len() != n {
        return Err(Error::InvalidArgument(format!("{} interpolation weights for {n} samples", alphas.len())));
    }
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("gradient penalty weight must be non-negative".into()));
    }
    let d_real = ag::mean_all(&score(&Var::constant(real.clone())));
    let d_fake = ag::mean_all(&score(&Var::constant(fake.clone())));
    let wasserstein = ag::sub(&d_fake, &d_real);

    let (penalty, total) = if lambda > 0.0 {
        let pen = gradient_penalty(score, real, fake, alphas);
        let v = pen.item();
        (v, ag::add(&wasserstein, &ag::scale(&pen, lambda)))
    } else {
        (0.0, wasserstein.clone())
    };
    Ok(CriticLoss { wasserstein: wasserstein.item(), penalty, total })
}

/// `mean((‖∇_u D(u)‖₂ - 1)²)` over per-sample interpolates. The inner
/// derivative needs a recorded graph, so this runs with gradients enabled
/// even inside [`ag::no_grad`].
pub fn gradient_penalty(score: &dyn Fn(&Var) -> Var, real: &Array, fake: &Array, alphas: &[f64]) -> Var {
    ag::with_grad_mode(true, || penalty_term(score, real, fake, alphas))
}

fn penalty_term(score: &dyn Fn(&Var) -> Var, real: &Array, fake: &Array, alphas: &[f64]) -> Var {
    let shape = real.shape().to_vec();
    let n = shape[0];
    let mut per_sample = vec![1; shape.len()];
    per_sample[0] = n;
    let alpha = Array::from_shape_vec(IxDyn(&per_sample), alphas.to_vec()).unwrap();
    let alpha = alpha.broadcast(IxDyn(&shape)).unwrap();
    let mixed = &alpha * real + &alpha.mapv(|a| 1.0 - a) * fake;
    let u = Var::param(mixed);
    let du = ag::sum_all(&score(&u));
    let norms = match ag::grad(&du, &[&u], true).pop().flatten() {
        Some(g) => ag::sqrt(&ag::add_scalar(&ag::sum_to(&ag::mul(&g, &g), &per_sample), GP_NORM_EPS)),
        None => Var::constant(Array::zeros(IxDyn(&per_sample))),
    };
    let dev = ag::add_scalar(&norms, -1.0);
    ag::mean_all(&ag::mul(&dev, &dev))
}

/// `-mean(D(x̂))`
pub fn generator_adv_loss(fake_scores: &Var) -> Var {
    ag::neg(&ag::mean_all(fake_scores))
}

fn check_labels(labels: &[usize]) -> Result<()> {
    match labels.iter().find(|&&l| l >= ColorClass::COUNT) {
        Some(&bad) => Err(Error::InvalidClassCode(bad)),
        None => Ok(()),
    }
}

/// Mean cross-entropy of class `logits [N,12]` against integer labels.
pub fn classifier_loss(logits: &Var, labels: &[usize]) -> Result<Var> {
    check_labels(labels)?;
    let n = logits.shape()[0];
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!("{} labels for {n} rows", labels.len())));
    }
    let c = logits.shape()[1];
    let mut mask = Array::zeros(IxDyn(&[n, c]));
    for (i, &l) in labels.iter().enumerate() {
        mask[[i, l]] = 1.0;
    }
    let picked = ag::mul_const(&ag::log_softmax(logits), Rc::new(mask));
    Ok(ag::scale(&ag::sum_all(&picked), -1.0 / n as f64))
}

/// Mean cross-entropy computed directly from probability rows.
pub fn cross_entropy_from_probs(probs: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(labels)?;
    if labels.len() != probs.nrows() || labels.is_empty() {
        return Err(Error::InvalidArgument("label count must match a non-empty probability batch".into()));
    }
    let total: f64 = labels.iter().enumerate().map(|(i, &l)| -probs[[i, l]].ln()).sum();
    Ok(total / labels.len() as f64)
}

#[derive(Debug, Clone)]
pub struct GeneratorLoss {
    pub total: Var,
    pub adversarial: f64,
    pub classification: f64,
}

/// `-mean(D(x̂)) + w_cls · CE(Q(x̂), c)`
pub fn generator_total_loss(fake_scores: &Var, fake_logits: &Var, labels: &[usize], w_cls: f64) -> Result<GeneratorLoss> {
    let adv = generator_adv_loss(fake_scores);
    let cls = classifier_loss(fake_logits, labels)?;
    let total = if w_cls == 0.0 { adv.clone() } else { ag::add(&adv, &ag::scale(&cls, w_cls)) };
    Ok(GeneratorLoss { adversarial: adv.item(), classification: cls.item(), total })
}
