//! The adversarial training loop: `n_critic` critic updates, then one
//! generator update, then one classifier update, repeated.

mod checkpoint;
mod config;
mod log;
mod optim;
mod samples;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{
    checkpoint_name, resolve_checkpoint, write_checkpoint, Counters, ModelBundle, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
    LATEST_MARKER,
};
pub use config::{DataSource, TrainConfig};
pub use log::{export_loss_csv, read_loss_csv, LossLog, LossRow, LOSS_CSV_HEADER};
pub use optim::{Adam, AdamConfig};
pub use samples::{derive_seed, encode_png, sample_class, snapshot_samples, tile_grid, write_samples, SampleGrids};

use crate::autograd::{self as ag, Array, Var};
use crate::dataset::{self, Batch, BatchStream, LabeledCorpus};
use crate::error::{Error, Result};
use crate::models::layers::absorb_stats;
use crate::models::{
    classifier_loss, critic_loss, generator_total_loss, nhwc_to_nchw, one_hot, sample_latent_with, ParamSet, Phase,
};

pub const LOSS_CSV: &str = "loss.csv";
pub const CONFIG_ECHO: &str = "config.txt";
pub const SAMPLES_DIR: &str = "samples";

fn gradients(loss: &Var, leaves: &[Var], params: &ParamSet) -> Vec<Array> {
    let refs: Vec<&Var> = leaves.iter().collect();
    ag::grad(loss, &refs, false)
        .into_iter()
        .zip(params.values())
        .map(|(g, p)| g.map(|g| g.value().clone()).unwrap_or_else(|| Array::zeros(p.raw_dim())))
        .collect()
}

/// Owns the bundle and all training randomness. Each call to
/// [`Trainer::cycle`] performs one generator step.
pub struct Trainer<'a> {
    pub bundle: ModelBundle,
    pub log: LossLog,
    stream: BatchStream<'a>,
    latent_rng: ChaCha8Rng,
    alpha_rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(bundle: ModelBundle, corpus: &'a LabeledCorpus) -> Result<Self> {
        let c = &bundle.config;
        c.validate()?;
        if corpus.is_empty() {
            return Err(Error::InvalidArgument("training needs a non-empty corpus".into()));
        }
        Ok(Trainer {
            stream: BatchStream::new(corpus, c.batch_size, c.data_seed)?,
            latent_rng: ChaCha8Rng::seed_from_u64(c.latent_seed),
            alpha_rng: ChaCha8Rng::seed_from_u64(c.alpha_seed),
            log: LossLog::new(),
            bundle,
        })
    }

    pub fn completed_epochs(&self) -> u64 {
        self.stream.completed_epochs()
    }

    /// True once the epoch budget or the generator-step cap is reached.
    pub fn finished(&self) -> bool {
        let c = &self.bundle.config;
        self.completed_epochs() >= c.epochs
            || (c.max_generator_steps > 0 && self.bundle.counters.generator_steps >= c.max_generator_steps)
    }

    fn non_finite(&self, what: &'static str) -> Error {
        Error::NonFinite {
            what,
            step: self.bundle.counters.critic_steps,
            gen_step: self.bundle.counters.generator_steps,
        }
    }

    fn fakes(&mut self, batch: &Batch) -> Result<Array> {
        let g = &self.bundle.generator;
        let z = sample_latent_with(batch.len(), g.arch.z_dim, &mut self.latent_rng)?;
        Ok(ag::no_grad(|| {
            let p = g.params.bind_frozen();
            let (x, _) = g.forward(&p, &Var::constant(z.into_dyn()), &Var::constant(one_hot(&batch.classes)), Phase::Train);
            x.value().clone()
        }))
    }

    fn critic_step(&mut self) -> Result<Batch> {
        let batch = self.stream.next().expect("batch stream is endless");
        let real = nhwc_to_nchw(&batch.images);
        let fake = self.fakes(&batch)?;
        let alphas: Vec<f64> = (0..batch.len()).map(|_| self.alpha_rng.random::<f64>()).collect();
        let lambda = self.bundle.config.lambda_gp;
        let critic = &self.bundle.critic;
        let p = critic.params.bind();
        let score = |x: &Var| critic.forward(&p, x);
        let loss = critic_loss(&score, &real, &fake, lambda, &alphas)?;
        let d_loss = loss.total.item();
        self.bundle.counters.critic_steps += 1;
        if !d_loss.is_finite() {
            return Err(self.non_finite("critic loss"));
        }
        let grads = gradients(&loss.total, &p, &critic.params);
        self.bundle.opt_d.step(&mut self.bundle.critic.params, &grads);
        self.log.push(LossRow {
            step: self.bundle.counters.critic_steps,
            epoch: batch.epoch,
            d_loss,
            g_loss: None,
            q_loss_real: None,
            q_loss_fake: None,
        })?;
        Ok(batch)
    }

    /// Returns `(total, classification term)`.
    fn generator_step(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        let labels = batch.class_codes();
        let b = &self.bundle;
        let z = sample_latent_with(batch.len(), b.generator.arch.z_dim, &mut self.latent_rng)?;
        let pg = b.generator.params.bind();
        let (fake, g_stats) = b.generator.forward(
            &pg,
            &Var::constant(z.into_dyn()),
            &Var::constant(one_hot(&batch.classes)),
            Phase::Train,
        );
        let scores = b.critic.forward(&b.critic.params.bind_frozen(), &fake);
        let (logits, _) = b.classifier.forward(&b.classifier.params.bind_frozen(), &fake, Phase::Train);
        let loss = generator_total_loss(&scores, &logits, &labels, b.config.w_cls)?;
        let total = loss.total.item();
        if !total.is_finite() {
            return Err(self.non_finite("generator loss"));
        }
        let grads = gradients(&loss.total, &pg, &b.generator.params);
        self.bundle.opt_g.step(&mut self.bundle.generator.params, &grads);
        absorb_stats(&mut self.bundle.generator.buffers, &g_stats);
        Ok((total, loss.classification))
    }

    fn classifier_step(&mut self, batch: &Batch) -> Result<f64> {
        let q = &self.bundle.classifier;
        let p = q.params.bind();
        let (logits, stats) = q.forward(&p, &Var::constant(nhwc_to_nchw(&batch.images)), Phase::Train);
        let loss = classifier_loss(&logits, &batch.class_codes())?;
        let v = loss.item();
        if !v.is_finite() {
            return Err(self.non_finite("classifier loss"));
        }
        let grads = gradients(&loss, &p, &q.params);
        self.bundle.opt_q.step(&mut self.bundle.classifier.params, &grads);
        absorb_stats(&mut self.bundle.classifier.buffers, &stats);
        Ok(v)
    }

    /// One generator step: `n_critic` critic updates on fresh batches, a
    /// generator update, and a classifier update on the last real batch.
    pub fn cycle(&mut self) -> Result<()> {
        let mut last = None;
        for _ in 0..self.bundle.config.n_critic {
            last = Some(self.critic_step()?);
        }
        let batch = last.expect("n_critic >= 1");
        let (g_loss, q_fake) = self.generator_step(&batch)?;
        let q_real = self.classifier_step(&batch)?;
        self.bundle.counters.generator_steps += 1;
        self.bundle.counters.epoch = self.stream.epoch();
        let row = self.log.last_mut().expect("critic rows precede");
        row.g_loss = Some(g_loss);
        row.q_loss_real = Some(q_real);
        row.q_loss_fake = Some(q_fake);
        Ok(())
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub log: LossLog,
    pub checkpoints: Vec<PathBuf>,
}

/// Loads or synthesizes the corpus a config names.
pub fn load_corpus(source: &DataSource) -> Result<LabeledCorpus> {
    match source {
        DataSource::Synthetic { per_class, seed } => dataset::synth_corpus(*per_class, *seed),
        DataSource::Path(p) => dataset::build_corpus(dataset::load_icons(p)?, crate::color::label_rgb),
    }
}

/// Trains fresh networks. With `config.out_dir` set, writes the config echo,
/// checkpoints, sample grids and the loss CSV there. On a non-finite loss
/// the loss CSV is still written and earlier checkpoints are kept.
pub fn train(config: &TrainConfig, corpus: &LabeledCorpus) -> Result<TrainOutcome> {
    let bundle = ModelBundle::new(config.clone())?;
    let mut trainer = Trainer::new(bundle, corpus)?;
    let out = config.out_dir.as_deref();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CONFIG_ECHO), config.to_text())?;
    }
    let mut checkpoints = Vec::new();
    let result = run(&mut trainer, out, &mut checkpoints);
    if let Some(dir) = out {
        export_loss_csv(&trainer.log, &dir.join(LOSS_CSV))?;
    }
    result?;
    Ok(TrainOutcome { bundle: trainer.bundle, log: trainer.log, checkpoints })
}

fn run(t: &mut Trainer, out: Option<&Path>, checkpoints: &mut Vec<PathBuf>) -> Result<()> {
    let cfg = t.bundle.config.clone();
    let mut epochs_done = t.completed_epochs();
    while !t.finished() {
        t.cycle()?;
        let Some(dir) = out else { continue };
        let step = t.bundle.counters.generator_steps;
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            checkpoints.push(write_checkpoint(&t.bundle, dir)?);
        }
        while epochs_done < t.completed_epochs() {
            epochs_done += 1;
            if cfg.sample_every > 0 && epochs_done % cfg.sample_every == 0 {
                let grids = snapshot_samples(&t.bundle, epochs_done, cfg.samples_per_class, cfg.sample_seed)?;
                write_samples(&grids, &dir.join(SAMPLES_DIR))?;
            }
        }
    }
    if let Some(dir) = out {
        let step = t.bundle.counters.generator_steps;
        let saved = checkpoints.last().is_some_and(|p| p.ends_with(checkpoint_name(step)));
        if step > 0 && !saved {
            checkpoints.push(write_checkpoint(&t.bundle, dir)?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth_corpus;

    fn tiny(epochs: u64, max_steps: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            epochs,
            max_generator_steps: max_steps,
            z_dim: 4,
            g_channels: vec![4, 3, 2],
            d_channels: vec![2, 2],
            q_channels: vec![2, 2],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_is_vacuous() {
        let corpus = synth_corpus(1, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { out_dir: Some(dir.path().into()), ..tiny(0, 0) };
        let out = train(&cfg, &corpus).unwrap();
        assert!(out.log.is_empty());
        assert!(out.checkpoints.is_empty());
        assert_eq!(out.bundle, ModelBundle::new(cfg).unwrap());
    }

    #[test]
    fn update_ratio_and_row_semantics() {
        let corpus = synth_corpus(2, 0).unwrap();
        let out = train(&tiny(100, 4), &corpus).unwrap();
        assert_eq!(out.bundle.counters.generator_steps, 4);
        assert_eq!(out.bundle.counters.critic_steps, 20);
        assert_eq!(out.log.len(), 20);
        for (i, r) in out.log.rows().iter().enumerate() {
            assert_eq!(r.step, i as u64 + 1);
            assert_eq!(r.g_loss.is_some(), (i + 1) % 5 == 0);
            assert_eq!(r.q_loss_fake.is_some(), r.g_loss.is_some());
        }
        assert_eq!(out.bundle.opt_d.t, 20);
        assert_eq!(out.bundle.opt_g.t, 4);
        assert_eq!(out.bundle.opt_q.t, 4);
    }

    #[test]
    fn epoch_budget_stops_at_cycle_boundary() {
        // 24 icons in batches of 8: 3 batches per epoch, 5 per cycle.
        let corpus = synth_corpus(2, 0).unwrap();
        let out = train(&tiny(2, 0), &corpus).unwrap();
        assert_eq!(out.bundle.counters.generator_steps, 2);
        assert_eq!(out.log.rows().last().unwrap().epoch, 3);
    }

    #[test]
    fn outputs_written() {
        let corpus = synth_corpus(1, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            out_dir: Some(dir.path().into()),
            checkpoint_every: 2,
            samples_per_class: 1,
            ..tiny(100, 3)
        };
        let out = train(&cfg, &corpus).unwrap();
        let names: Vec<_> = out.checkpoints.iter().map(|p| p.file_name().unwrap().to_owned()).collect();
        assert_eq!(names, ["ckpt_2.bin", "ckpt_3.bin"]);
        assert_eq!(resolve_checkpoint(dir.path()).unwrap(), dir.path().join("ckpt_3.bin"));
        assert_eq!(ModelBundle::load(&out.checkpoints[1]).unwrap(), out.bundle);
        assert_eq!(read_loss_csv(&dir.path().join(LOSS_CSV)).unwrap(), out.log);
        assert_eq!(TrainConfig::parse(&std::fs::read_to_string(dir.path().join(CONFIG_ECHO)).unwrap()).unwrap(), cfg);
        assert!(dir.path().join("samples/epoch_0001_sheet.png").exists());
        assert!(dir.path().join("samples/epoch_0001_red.png").exists());
    }

    #[test]
    fn non_finite_aborts_with_step() {
        let corpus = synth_corpus(1, 0).unwrap();
        let cfg = tiny(100, 3);
        let mut bundle = ModelBundle::new(cfg).unwrap();
        bundle.critic.params.values_mut()[0].fill(f64::NAN);
        let mut t = Trainer::new(bundle, &corpus).unwrap();
        match t.cycle() {
            Err(Error::NonFinite { step: 1, gen_step: 0, .. }) => {}
            other => panic!("expected non-finite abort, got {other:?}"),
        }
    }
}
