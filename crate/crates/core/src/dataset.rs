//! Icon corpora: loading, labeling, synthetic generation and batching.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::ops::Index;
use std::path::{Path, PathBuf};

use image::{DynamicImage, RgbImage};
use ndarray::IxDyn;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Array;
use crate::color::{self, canonical_shade, check_icon_size, ColorClass, ColorLabel, Rgb, ICON_PIXELS, ICON_SIZE};
use crate::error::{Error, Result};

pub const CONTAINER_BIN: &str = "icons.bin";
pub const CONTAINER_JSON: &str = "icons.json";
const ICON_BYTES: usize = ICON_PIXELS * 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Icon {
    pub id: String,
    pixels: RgbImage,
}

impl Icon {
    pub fn new(id: impl Into<String>, pixels: RgbImage) -> Result<Icon> {
        let id = id.into();
        check_icon_size(pixels.width(), pixels.height(), Some(&id))?;
        Ok(Icon { id, pixels })
    }

    pub fn pixels(&self) -> &RgbImage {
        &self.pixels
    }

    /// `[32, 32, 3]` values in [-1, 1].
    pub fn normalized(&self) -> Array {
        Array::from_shape_vec(
            IxDyn(&[ICON_SIZE as usize, ICON_SIZE as usize, 3]),
            self.pixels.as_raw().iter().map(|&p| normalize(p)).collect(),
        )
        .unwrap()
    }
}

pub fn normalize(p: u8) -> f64 {
    p as f64 / 127.5 - 1.0
}

pub fn denormalize(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// `[32, 32, 3]` (or `[3, 32, 32]` with `channels_first`) values in [-1, 1]
/// back to bytes.
pub fn to_image(a: ndarray::ArrayViewD<f64>, channels_first: bool) -> RgbImage {
    let s = ICON_SIZE;
    RgbImage::from_fn(s, s, |x, y| {
        let px = |c: usize| {
            let v = if channels_first { a[[c, y as usize, x as usize]] } else { a[[y as usize, x as usize, c]] };
            denormalize(v)
        };
        image::Rgb([px(0), px(1), px(2)])
    })
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct ContainerMeta {
    count: usize,
    shape: [usize; 3],
    dtype: String,
}

/// Reads a directory of 32x32 PNGs (sorted by file name) or a packed
/// `icons.bin` + `icons.json` container (path to either file or to a
/// directory holding them).
pub fn load_icons(path: &Path) -> Result<Vec<Icon>> {
    if path.is_dir() {
        if path.join(CONTAINER_JSON).is_file() && path.join(CONTAINER_BIN).is_file() {
            return load_container(&path.join(CONTAINER_BIN));
        }
        return load_png_dir(path);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") | Some("json") => load_container(&path.with_file_name(CONTAINER_BIN)),
        _ => Err(Error::Malformed { path: path.to_path_buf(), message: "not a PNG directory or icon container".into() }),
    }
}

fn load_png_dir(dir: &Path) -> Result<Vec<Icon>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    files
        .iter()
        .map(|f| {
            let id = f.file_name().unwrap().to_string_lossy().into_owned();
            let img = image::open(f).map_err(|e| Error::Malformed { path: f.clone(), message: e.to_string() })?;
            check_icon_size(img.width(), img.height(), Some(&id))?;
            Icon::new(id, flatten_dynamic(&img))
        })
        .collect()
}

fn flatten_dynamic(img: &DynamicImage) -> RgbImage {
    if img.color().has_alpha() {
        color::alpha_flatten(&img.to_rgba8()).expect("size checked")
    } else {
        img.to_rgb8()
    }
}

fn load_container(bin: &Path) -> Result<Vec<Icon>> {
    let json = bin.with_file_name(CONTAINER_JSON);
    let malformed = |path: &Path, message: String| Error::Malformed { path: path.to_path_buf(), message };
    let meta: ContainerMeta = serde_json::from_str(&fs::read_to_string(&json)?).map_err(|e| malformed(&json, e.to_string()))?;
    if meta.dtype != "u8" || meta.shape != [32, 32, 3] {
        return Err(malformed(&json, format!("unsupported dtype {:?} / shape {:?}", meta.dtype, meta.shape)));
    }
    let bytes = fs::read(bin)?;
    if bytes.len() != meta.count * ICON_BYTES {
        return Err(malformed(bin, format!("expected {} bytes for {} icons, found {}", meta.count * ICON_BYTES, meta.count, bytes.len())));
    }
    bytes
        .chunks_exact(ICON_BYTES)
        .enumerate()
        .map(|(i, chunk)| Icon::new(format!("{i:06}"), RgbImage::from_raw(ICON_SIZE, ICON_SIZE, chunk.to_vec()).unwrap()))
        .collect()
}

/// Writes `icons.bin` and `icons.json` into `dir`.
pub fn save_container(icons: &[Icon], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut bytes = Vec::with_capacity(icons.len() * ICON_BYTES);
    for icon in icons {
        bytes.extend_from_slice(icon.pixels.as_raw());
    }
    fs::write(dir.join(CONTAINER_BIN), bytes)?;
    let meta = ContainerMeta { count: icons.len(), shape: [32, 32, 3], dtype: "u8".into() };
    fs::write(dir.join(CONTAINER_JSON), serde_json::to_string(&meta)?)?;
    Ok(())
}

/// Per-class icon counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassHistogram(pub [usize; ColorClass::COUNT]);

impl ClassHistogram {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn add(&mut self, class: ColorClass) {
        self.0[class.code()] += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = (ColorClass, usize)> + '_ {
        ColorClass::ALL.iter().map(move |&c| (c, self.0[c.code()]))
    }
}

impl Index<ColorClass> for ClassHistogram {
    type Output = usize;
    fn index(&self, c: ColorClass) -> &usize {
        &self.0[c.code()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    pub icons: Vec<Icon>,
    pub labels: BTreeMap<String, ColorLabel>,
    pub histogram: ClassHistogram,
}

impl LabeledCorpus {
    pub fn len(&self) -> usize {
        self.icons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.icons.is_empty()
    }

    pub fn label(&self, index: usize) -> &ColorLabel {
        &self.labels[&self.icons[index].id]
    }

    pub fn class_of(&self, index: usize) -> ColorClass {
        self.label(index).primary
    }

    /// Histogram recomputed from the label map.
    pub fn recount(&self) -> ClassHistogram {
        let mut h = ClassHistogram::default();
        for l in self.labels.values() {
            h.add(l.primary);
        }
        h
    }

    pub fn write_labels_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<(&str, &ColorLabel)> = self.icons.iter().map(|i| (i.id.as_str(), &self.labels[&i.id])).collect();
        write_labels_csv(rows, path)
    }
}

pub const LABEL_CSV_HEADER: [&str; 11] =
    ["image_id", "primary", "top1", "top2", "top3", "c1_rgb", "c2_rgb", "c3_rgb", "count1", "count2", "count3"];

pub fn write_labels_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a ColorLabel)>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LABEL_CSV_HEADER)?;
    for (id, label) in rows {
        let e = &label.palette.entries;
        let entry = |i: usize| e.get(i).or(e.first()).expect("non-empty palette");
        let mut rec = vec![id.to_string(), label.primary.to_string()];
        rec.extend(label.top3.iter().map(|c| c.to_string()));
        rec.extend((0..3).map(|i| entry(i).centroid.hex()));
        rec.extend((0..3).map(|i| if i < e.len() { e[i].count.to_string() } else { "0".into() }));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a label CSV back into `(image_id, label)` rows.
pub fn read_labels_csv(path: &Path) -> Result<Vec<(String, ColorLabel)>> {
    let mut r = csv::Reader::from_path(path)?;
    let bad = |msg: String| Error::Malformed { path: path.to_path_buf(), message: msg };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 11 {
            return Err(bad(format!("expected 11 fields, got {}", rec.len())));
        }
        let class = |i: usize| rec[i].parse::<ColorClass>();
        let rgb = |i: usize| Rgb::from_hex(&rec[i]).ok_or_else(|| bad(format!("bad color {:?}", &rec[i])));
        let count = |i: usize| rec[i].parse::<usize>().map_err(|e| bad(e.to_string()));
        let entries = (0..3)
            .map(|i| Ok(color::PaletteEntry { centroid: rgb(5 + i)?, count: count(8 + i)? }))
            .collect::<Result<Vec<_>>>()?;
        out.push((
            rec[0].to_string(),
            ColorLabel { primary: class(1)?, top3: [class(2)?, class(3)?, class(4)?], palette: color::Palette { entries } },
        ));
    }
    Ok(out)
}

/// Labels every icon with `labeler` and tallies the class histogram.
pub fn build_corpus(icons: Vec<Icon>, labeler: impl Fn(&RgbImage) -> Result<ColorLabel>) -> Result<LabeledCorpus> {
    let mut labels = BTreeMap::new();
    let mut histogram = ClassHistogram::default();
    let mut seen = HashSet::new();
    for icon in &icons {
        if !seen.insert(icon.id.clone()) {
            return Err(Error::InvalidArgument(format!("duplicate icon id {:?}", icon.id)));
        }
        let label = labeler(&icon.pixels).map_err(|e| Error::Labeling { id: icon.id.clone(), source: Box::new(e) })?;
        histogram.add(label.primary);
        labels.insert(icon.id.clone(), label);
    }
    Ok(LabeledCorpus { icons, labels, histogram })
}

/// Minimum share of the canvas covered by a synthetic shape.
pub const SYNTH_MIN_COVERAGE: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthShape {
    Circle,
    Square,
    Triangle,
}

fn shape_mask(shape: SynthShape, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let s = ICON_SIZE as usize;
    let inside: Box<dyn Fn(f64, f64) -> bool> = match shape {
        SynthShape::Circle => {
            let r = rng.random_range(15.0..18.0);
            let cx = 16.0 + rng.random_range(-1.5..1.5);
            let cy = 16.0 + rng.random_range(-1.5..1.5);
            Box::new(move |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r * r)
        }
        SynthShape::Square => {
            let side = rng.random_range(26..=32) as f64;
            let x0 = rng.random_range(0..=(32 - side as usize)) as f64;
            let y0 = rng.random_range(0..=(32 - side as usize)) as f64;
            Box::new(move |x, y| x >= x0 && x < x0 + side && y >= y0 && y < y0 + side)
        }
        SynthShape::Triangle => {
            // Apex near the top edge, base below the canvas; clipped by the
            // frame it still reads as a triangle.
            let apex = (16.0 + rng.random_range(-2.0..2.0), rng.random_range(-2.0..1.0));
            let base_y = rng.random_range(40.0..46.0);
            let half = rng.random_range(26.0..32.0);
            Box::new(move |x, y| {
                if y < apex.1 || y > base_y {
                    return false;
                }
                let t = (y - apex.1) / (base_y - apex.1);
                (x - apex.0).abs() <= t * half
            })
        }
    };
    (0..s * s).map(|i| inside((i % s) as f64 + 0.5, (i / s) as f64 + 0.5)).collect()
}

/// Renders one solid shape of `shade` on white.
pub fn render_shape(shape: SynthShape, shade: Rgb, rng: &mut ChaCha8Rng) -> RgbImage {
    let min = (SYNTH_MIN_COVERAGE * ICON_PIXELS as f64).ceil() as usize;
    let mask = loop {
        let m = shape_mask(shape, rng);
        if m.iter().filter(|&&b| b).count() >= min {
            break m;
        }
    };
    let s = ICON_SIZE;
    RgbImage::from_fn(s, s, |x, y| {
        if mask[(y * s + x) as usize] {
            shade.into()
        } else {
            image::Rgb([255, 255, 255])
        }
    })
}

/// Desk-scale labeled corpus: `n_per_class` solid shapes of each class's
/// canonical shade. Every icon is checked against the labeler.
pub fn synth_corpus(n_per_class: usize, seed: u64) -> Result<LabeledCorpus> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = [SynthShape::Circle, SynthShape::Square, SynthShape::Triangle];
    let mut icons = Vec::with_capacity(n_per_class * ColorClass::COUNT);
    let mut intended = Vec::with_capacity(icons.capacity());
    for class in ColorClass::ALL {
        let shade = canonical_shade(class);
        for j in 0..n_per_class {
            let shape = *shapes.choose(&mut rng).unwrap();
            icons.push(Icon::new(format!("{class}_{j:04}"), render_shape(shape, shade, &mut rng))?);
            intended.push(class);
        }
    }
    let corpus = build_corpus(icons, color::label_rgb)?;
    for (icon, class) in corpus.icons.iter().zip(intended) {
        let got = corpus.labels[&icon.id].primary;
        if got != class {
            return Err(Error::SelfCheck { class: class.to_string(), seed, got: got.to_string() });
        }
    }
    Ok(corpus)
}

/// A batch in the generator's value range.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `[B, 32, 32, 3]` in [-1, 1].
    pub images: Array,
    pub classes: Vec<ColorClass>,
    /// Corpus positions of the batch items.
    pub indices: Vec<usize>,
    pub epoch: u64,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class_codes(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.code()).collect()
    }
}

/// Endless epoch-shuffled batches over a corpus. Each epoch visits every
/// item once; the last batch of an epoch may be short.
pub struct BatchStream<'a> {
    corpus: &'a LabeledCorpus,
    normalized: Vec<Array>,
    batch_size: usize,
    order: Vec<usize>,
    pos: usize,
    epoch: u64,
    rng: ChaCha8Rng,
}

impl<'a> BatchStream<'a> {
    pub fn new(corpus: &'a LabeledCorpus, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if corpus.is_empty() {
            return Err(Error::InvalidArgument("cannot batch an empty corpus".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut rng);
        Ok(BatchStream {
            corpus,
            normalized: corpus.icons.iter().map(Icon::normalized).collect(),
            batch_size,
            order,
            pos: 0,
            epoch: 0,
            rng,
        })
    }

    /// Epoch of the next batch to be emitted.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Epochs whose every batch has been emitted.
    pub fn completed_epochs(&self) -> u64 {
        self.epoch + u64::from(self.pos >= self.order.len())
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.corpus.len().div_ceil(self.batch_size)
    }
}

impl Iterator for BatchStream<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
            self.epoch += 1;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        let epoch = self.epoch;
        self.pos = end;
        let s = ICON_SIZE as usize;
        let mut images = Array::zeros(IxDyn(&[indices.len(), s, s, 3]));
        for (row, &i) in indices.iter().enumerate() {
            images.index_axis_mut(ndarray::Axis(0), row).assign(&self.normalized[i]);
        }
        let classes = indices.iter().map(|&i| self.corpus.class_of(i)).collect();
        Some(Batch { images, classes, indices, epoch })
    }
}
