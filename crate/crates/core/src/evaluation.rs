//! Conditioning quality: precision, recall and F1 of the most prominent
//! generated color per class, and the per-class top-3 color shares.

use std::collections::BTreeMap;

use image::RgbImage;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::color::{self, canonical_shade, ColorClass, ColorLabel};
use crate::dataset::{normalize, render_shape, SynthShape};
use crate::error::{Error, Result};
use crate::models::GeneratorNet;
use crate::training::{derive_seed, sample_class, ModelBundle, TrainConfig};

/// Default logos generated per class.
pub const EVAL_PER_CLASS: usize = 64;

/// Published per-class `(precision, recall, f1)` of the full-scale model
/// (400 epochs over the complete icon corpus), two decimals as printed.
pub const REFERENCE_FULL_SCALE: [(ColorClass, f64, f64, f64); 12] = [
    (ColorClass::Black, 0.95, 0.86, 0.90),
    (ColorClass::Blue, 0.73, 0.69, 0.71),
    (ColorClass::Brown, 0.63, 0.47, 0.55),
    (ColorClass::Cyan, 0.98, 0.66, 0.79),
    (ColorClass::Gray, 0.57, 0.50, 0.53),
    (ColorClass::Green, 1.00, 0.80, 0.89),
    (ColorClass::Orange, 0.96, 0.80, 0.87),
    (ColorClass::Pink, 0.95, 0.30, 0.45),
    (ColorClass::Purple, 0.65, 0.41, 0.50),
    (ColorClass::Red, 0.84, 0.92, 0.88),
    (ColorClass::White, 0.24, 0.83, 0.38),
    (ColorClass::Yellow, 0.96, 0.78, 0.86),
];

/// The printed average row of [`REFERENCE_FULL_SCALE`].
pub const REFERENCE_FULL_SCALE_AVERAGE: (f64, f64, f64) = (0.79, 0.67, 0.69);

/// Anything that can produce images conditioned on a class.
pub trait ConditionalSampler {
    fn sample(&self, class: ColorClass, n: usize, seed: u64) -> Result<Vec<RgbImage>>;
}

impl ConditionalSampler for GeneratorNet {
    fn sample(&self, class: ColorClass, n: usize, seed: u64) -> Result<Vec<RgbImage>> {
        sample_class(self, class, n, seed)
    }
}

impl ConditionalSampler for ModelBundle {
    fn sample(&self, class: ColorClass, n: usize, seed: u64) -> Result<Vec<RgbImage>> {
        sample_class(&self.generator, class, n, seed)
    }
}

/// Emits solid shapes in the requested class's canonical shade.
#[derive(Debug, Clone, Copy, Default)]
pub struct CanonicalSampler;

impl ConditionalSampler for CanonicalSampler {
    fn sample(&self, class: ColorClass, n: usize, seed: u64) -> Result<Vec<RgbImage>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = [SynthShape::Circle, SynthShape::Square, SynthShape::Triangle];
        Ok((0..n)
            .map(|_| {
                let shape = *shapes.choose(&mut rng).unwrap();
                render_shape(shape, canonical_shade(class), &mut rng)
            })
            .collect())
    }
}

/// Ignores the requested class and always draws the same one.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSampler(pub ColorClass);

impl ConditionalSampler for ConstantSampler {
    fn sample(&self, _class: ColorClass, n: usize, seed: u64) -> Result<Vec<RgbImage>> {
        CanonicalSampler.sample(self.0, n, seed)
    }
}

/// `matrix[conditioned][extracted]` over the 12 classes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    matrix: [[usize; ColorClass::COUNT]; ColorClass::COUNT],
}

impl ConfusionCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_matrix(matrix: [[usize; ColorClass::COUNT]; ColorClass::COUNT]) -> Self {
        ConfusionCounts { matrix }
    }

    pub fn add(&mut self, conditioned: ColorClass, extracted: ColorClass) {
        self.matrix[conditioned.code()][extracted.code()] += 1;
    }

    pub fn get(&self, conditioned: ColorClass, extracted: ColorClass) -> usize {
        self.matrix[conditioned.code()][extracted.code()]
    }

    pub fn matrix(&self) -> &[[usize; ColorClass::COUNT]; ColorClass::COUNT] {
        &self.matrix
    }

    /// Logos conditioned on `c`.
    pub fn row_sum(&self, c: ColorClass) -> usize {
        self.matrix[c.code()].iter().sum()
    }

    /// Logos whose extracted primary color is `c`.
    pub fn column_sum(&self, c: ColorClass) -> usize {
        self.matrix.iter().map(|row| row[c.code()]).sum()
    }

    pub fn total(&self) -> usize {
        self.matrix.iter().flatten().sum()
    }

    pub fn diagonal_sum(&self) -> usize {
        (0..ColorClass::COUNT).map(|i| self.matrix[i][i]).sum()
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Correct / extracted as `c`; `None` when nothing was extracted as `c`.
pub fn precision(counts: &ConfusionCounts, c: ColorClass) -> Option<f64> {
    ratio(counts.get(c, c), counts.column_sum(c))
}

/// Correct / conditioned on `c`; `None` when nothing was conditioned on `c`.
pub fn recall(counts: &ConfusionCounts, c: ColorClass) -> Option<f64> {
    ratio(counts.get(c, c), counts.row_sum(c))
}

/// Harmonic mean; 0 when both inputs are 0, `None` if either is undefined.
pub fn f1(p: Option<f64>, r: Option<f64>) -> Option<f64> {
    let (p, r) = (p?, r?);
    Some(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
}

/// Shares of each class among the `3 · n` top-3 slots of each conditioned
/// class. Every conditioned class gets an entry for all 12 classes.
pub fn top3_distribution(
    top3: &BTreeMap<ColorClass, Vec<[ColorClass; 3]>>,
) -> BTreeMap<ColorClass, BTreeMap<ColorClass, f64>> {
    top3.iter()
        .map(|(&cond, logos)| {
            let mut counts = [0usize; ColorClass::COUNT];
            for c in logos.iter().flatten() {
                counts[c.code()] += 1;
            }
            let slots = 3 * logos.len();
            let shares =
                ColorClass::ALL.iter().map(|&c| (c, ratio(counts[c.code()], slots).unwrap_or(0.0))).collect();
            (cond, shares)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: ColorClass,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Unweighted means over the classes whose metric is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Mean of the per-class F1 scores.
    pub f1: Option<f64>,
    pub skipped_precision: usize,
    pub skipped_recall: usize,
    pub skipped_f1: usize,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
    for v in values {
        match v {
            Some(v) => {
                sum += v;
                n += 1;
            }
            None => skipped += 1,
        }
    }
    ((n > 0).then(|| sum / n as f64), skipped)
}

impl Averages {
    pub fn from_metrics(per_class: &[ClassMetrics]) -> Averages {
        let (precision, skipped_precision) = mean_defined(per_class.iter().map(|m| m.precision));
        let (recall, skipped_recall) = mean_defined(per_class.iter().map(|m| m.recall));
        let (f1, skipped_f1) = mean_defined(per_class.iter().map(|m| m.f1));
        Averages { precision, recall, f1, skipped_precision, skipped_recall, skipped_f1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub checkpoint: Option<String>,
    pub seed: u64,
    pub n_per_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: RunMetadata,
    pub per_class: Vec<ClassMetrics>,
    pub average: Averages,
    /// Rows are conditioned classes, columns extracted classes, both in
    /// class-code order.
    pub confusion: ConfusionCounts,
    pub top3_distribution: BTreeMap<ColorClass, BTreeMap<ColorClass, f64>>,
}

impl EvalReport {
    pub fn from_counts(
        counts: ConfusionCounts,
        top3: &BTreeMap<ColorClass, Vec<[ColorClass; 3]>>,
        metadata: RunMetadata,
    ) -> EvalReport {
        let per_class: Vec<ClassMetrics> = ColorClass::ALL
            .iter()
            .map(|&class| {
                let (p, r) = (precision(&counts, class), recall(&counts, class));
                ClassMetrics { class, precision: p, recall: r, f1: f1(p, r) }
            })
            .collect();
        EvalReport {
            average: Averages::from_metrics(&per_class),
            per_class,
            confusion: counts,
            top3_distribution: top3_distribution(top3),
            metadata,
        }
    }

    pub fn metrics(&self, class: ColorClass) -> &ClassMetrics {
        &self.per_class[class.code()]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Generates `n_per_class` logos per class, labels each, and scores the
/// extracted primary color against the conditioning class. Class `c` is
/// sampled with seed `derive_seed(seed, code(c))`.
pub fn evaluate_generation(
    sampler: &dyn ConditionalSampler,
    n_per_class: usize,
    seed: u64,
    checkpoint: Option<String>,
) -> Result<EvalReport> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be at least 1".into()));
    }
    let mut counts = ConfusionCounts::new();
    let mut top3 = BTreeMap::new();
    for class in ColorClass::ALL {
        let images = sampler.sample(class, n_per_class, derive_seed(seed, class.code() as u64))?;
        if images.len() != n_per_class {
            return Err(Error::InvalidArgument(format!(
                "sampler returned {} images for {class}, expected {n_per_class}",
                images.len()
            )));
        }
        let labels: Vec<ColorLabel> = images.iter().map(color::label_rgb).collect::<Result<_>>()?;
        for l in &labels {
            counts.add(class, l.primary);
        }
        top3.insert(class, labels.iter().map(|l| l.top3).collect::<Vec<_>>());
    }
    Ok(EvalReport::from_counts(counts, &top3, RunMetadata { checkpoint, seed, n_per_class }))
}

/// Pre-tanh activation that lands on `v` after tanh and byte rounding.
fn atanh_target(byte: u8) -> f64 {
    normalize(byte).clamp(-0.999, 0.999).atanh()
}

/// A bundle whose generator ignores `z` and paints every pixel in the
/// conditioning class's canonical shade. The transposed convolutions use
/// only the two central taps per axis, which is exact nearest-neighbour
/// upsampling; batch norm runs with identity statistics.
pub fn canonical_oracle_bundle() -> Result<ModelBundle> {
    const OFFSET: f64 = 10.0;
    let config = TrainConfig {
        z_dim: 8,
        g_channels: vec![3, 3, 3],
        d_channels: vec![2],
        q_channels: vec![2],
        ..TrainConfig::default()
    };
    let mut bundle = ModelBundle::new(config)?;
    let g = &mut bundle.generator;
    let spatial = g.arch.base_size * g.arch.base_size;
    let identity_up = |w: &mut crate::autograd::Array| {
        w.fill(0.0);
        for c in 0..3 {
            for kh in 1..=2 {
                for kw in 1..=2 {
                    w[[c, c, kh, kw]] = 1.0;
                }
            }
        }
    };
    for (name, value) in g.params.names().to_vec().iter().zip(g.params.values_mut()) {
        match name.as_str() {
            "dense_z.w" => value.fill(0.0),
            "dense_c.w" => {
                for class in ColorClass::ALL {
                    let shade = canonical_shade(class);
                    for (ch, byte) in [shade.r, shade.g, shade.b].into_iter().enumerate() {
                        for s in 0..spatial {
                            value[[class.code(), ch * spatial + s]] = atanh_target(byte) + OFFSET;
                        }
                    }
                }
            }
            "out.b" => value.fill(-OFFSET),
            n if n.ends_with(".gamma") => value.fill(1.0),
            n if n.ends_with(".beta") => value.fill(0.0),
            _ => identity_up(value),
        }
    }
    for (name, value) in g.buffers.names().to_vec().iter().zip(g.buffers.values_mut()) {
        if name.ends_with("running_var") {
            value.fill(1.0 - crate::models::layers::BN_EPS);
        } else {
            value.fill(0.0);
        }
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_recall_examples() {
        let mut m = [[0; 12]; 12];
        m[0][0] = 19;
        m[3][0] = 1;
        m[0][5] = 9;
        let c = ConfusionCounts::from_matrix(m);
        assert_eq!(precision(&c, ColorClass::Black), Some(0.95));
        assert!((recall(&c, ColorClass::Black).unwrap() - 19.0 / 28.0).abs() < 1e-12);
        assert_eq!(precision(&c, ColorClass::Blue), None);
        assert_eq!(recall(&c, ColorClass::Cyan), Some(0.0));
        let mut m = [[0; 12]; 12];
        m[0][0] = 55;
        m[0][1] = 9;
        assert!((recall(&ConfusionCounts::from_matrix(m), ColorClass::Black).unwrap() - 0.859375).abs() < 1e-12);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1(Some(1.0), Some(1.0)), Some(1.0));
        assert_eq!(f1(Some(0.0), Some(0.0)), Some(0.0));
        assert_eq!(f1(None, Some(0.5)), None);
        assert!((f1(Some(0.95), Some(0.86)).unwrap() - 0.90).abs() <= 0.005);
    }

    #[test]
    fn averages_skip_undefined() {
        let m = |p, r| ClassMetrics { class: ColorClass::Red, precision: p, recall: r, f1: f1(p, r) };
        let a = Averages::from_metrics(&[m(Some(1.0), Some(0.5)), m(None, Some(0.0)), m(Some(0.5), Some(1.0))]);
        assert_eq!(a.precision, Some(0.75));
        assert_eq!(a.skipped_precision, 1);
        assert_eq!(a.recall, Some(0.5));
        assert_eq!(a.skipped_f1, 1);
        assert_eq!(Averages::from_metrics(&[m(None, None)]).precision, None);
    }

    #[test]
    fn top3_fixture() {
        use ColorClass::*;
        let mut t = BTreeMap::new();
        t.insert(Red, vec![[Red, White, Black], [Red, White, Pink], [White, Red, Red], [Red, Red, Red]]);
        t.insert(Blue, vec![[Blue, Blue, Blue]]);
        let d = top3_distribution(&t);
        // 12 slots: red 7, white 3, black 1, pink 1
        assert!((d[&Red][&Red] - 7.0 / 12.0).abs() < 1e-12);
        assert!((d[&Red][&White] - 0.25).abs() < 1e-12);
        assert!((d[&Red][&Pink] - 1.0 / 12.0).abs() < 1e-12);
        assert_eq!(d[&Red][&Green], 0.0);
        assert_eq!(d[&Blue][&Blue], 1.0);
        for shares in d.values() {
            assert!((shares.values().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_bundle_paints_canonical_shades() {
        let b = canonical_oracle_bundle().unwrap();
        for class in ColorClass::ALL {
            let imgs = b.sample(class, 2, 7).unwrap();
            let want = canonical_shade(class);
            for img in imgs {
                assert!(img.pixels().all(|p| p.0 == [want.r, want.g, want.b]), "{class}");
            }
        }
    }

    #[test]
    fn report_json_uses_null_markers() {
        let report = evaluate_generation(&ConstantSampler(ColorClass::Red), 2, 0, None).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert!(v["per_class"][0]["precision"].is_null());
        assert_eq!(v["per_class"][0]["recall"], 0.0);
        assert_eq!(v["average"]["skipped_precision"], 11);
        assert!(v["top3_distribution"]["blue"]["red"].as_f64().unwrap() >= 1.0 / 3.0);
        assert_eq!(v["top3_distribution"]["blue"]["green"], 0.0);
        let back: EvalReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, report);
    }
}
