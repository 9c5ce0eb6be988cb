//! k-means over RGB pixels.
//!
//! Pixels are processed in color-sorted order, so results do not depend on
//! where a color sits in the image. The reference path is full-batch Lloyd
//! iteration over the weighted set of distinct colors, which is equivalent to
//! running Lloyd over every pixel.

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Palette, PaletteEntry, Rgb};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KMeansMode {
    /// Lloyd iterations over all pixels.
    Full,
    /// Sculley-style mini-batch updates; counts come from a final full
    /// assignment pass.
    MiniBatch { batch_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub mode: KMeansMode,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64, max_iters: usize) -> Self {
        KMeansParams { k, seed, max_iters, mode: KMeansMode::Full }
    }
}

pub fn kmeans_palette(image: &RgbImage, k: usize, seed: u64, max_iters: usize) -> Result<Palette> {
    let pixels: Vec<Rgb> = image.pixels().map(|p| Rgb::from(*p)).collect();
    kmeans_pixels(&pixels, KMeansParams::new(k, seed, max_iters))
}

struct Distinct {
    colors: Vec<[f64; 3]>,
    weights: Vec<usize>,
    /// Index of the first occurrence of each color in the sorted pixel list.
    first_index: Vec<usize>,
}

fn distinct_colors(pixels: &[Rgb]) -> Distinct {
    let mut sorted = pixels.to_vec();
    sorted.sort_unstable();
    let mut d = Distinct { colors: Vec::new(), weights: Vec::new(), first_index: Vec::new() };
    let mut prev: Option<Rgb> = None;
    for (i, c) in sorted.into_iter().enumerate() {
        if prev == Some(c) {
            *d.weights.last_mut().unwrap() += 1;
        } else {
            d.colors.push([c.r as f64, c.g as f64, c.b as f64]);
            d.weights.push(1);
            d.first_index.push(i);
            prev = Some(c);
        }
    }
    d
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Index of the nearest center; ties go to the lowest index.
fn nearest(c: &[f64; 3], centers: &[[f64; 3]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, center) in centers.iter().enumerate() {
        let d = dist2(c, center);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Farthest-point seeding. The first center is the color of a seed-selected
/// pixel in sorted order; each further center is the color farthest from
/// the chosen ones, ties to the lowest sorted pixel index.
fn seed_centers(d: &Distinct, n_pixels: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let pick = rng.random_range(0..n_pixels);
    let first = d.first_index.partition_point(|&fi| fi <= pick) - 1;
    let mut centers = vec![d.colors[first]];
    let mut min_d: Vec<f64> = d.colors.iter().map(|c| dist2(c, &centers[0])).collect();
    while centers.len() < k {
        let mut best = 0;
        for (i, &v) in min_d.iter().enumerate() {
            if v > min_d[best] {
                best = i;
            }
        }
        let c = d.colors[best];
        centers.push(c);
        for (m, col) in min_d.iter_mut().zip(&d.colors) {
            *m = m.min(dist2(col, &c));
        }
    }
    centers
}

fn assign(d: &Distinct, centers: &[[f64; 3]]) -> Vec<usize> {
    d.colors.iter().map(|c| nearest(c, centers)).collect()
}

fn counts_for(d: &Distinct, assignment: &[usize], k: usize) -> Vec<usize> {
    let mut counts = vec![0usize; k];
    for (&a, &w) in assignment.iter().zip(&d.weights) {
        counts[a] += w;
    }
    counts
}

/// Moves empty clusters onto the centroid of the most populous cluster.
fn reseed_empty(centers: &mut [[f64; 3]], counts: &[usize]) {
    let mut biggest = 0;
    for (j, &c) in counts.iter().enumerate() {
        if c > counts[biggest] {
            biggest = j;
        }
    }
    let target = centers[biggest];
    for (j, &c) in counts.iter().enumerate() {
        if c == 0 {
            centers[j] = target;
        }
    }
}

fn lloyd(d: &Distinct, mut centers: Vec<[f64; 3]>, max_iters: usize) -> Vec<[f64; 3]> {
    let k = centers.len();
    let mut assignment = assign(d, &centers);
    for _ in 0..max_iters {
        let mut sums = vec![[0.0f64; 3]; k];
        let mut counts = vec![0usize; k];
        for ((c, &a), &w) in d.colors.iter().zip(&assignment).zip(&d.weights) {
            for ch in 0..3 {
                sums[a][ch] += c[ch] * w as f64;
            }
            counts[a] += w;
        }
        for j in 0..k {
            if counts[j] > 0 {
                for ch in 0..3 {
                    centers[j][ch] = sums[j][ch] / counts[j] as f64;
                }
            }
        }
        reseed_empty(&mut centers, &counts);
        let next = assign(d, &centers);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    centers
}

fn minibatch(
    pixels: &[Rgb],
    mut centers: Vec<[f64; 3]>,
    max_iters: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<[f64; 3]> {
    let mut sorted = pixels.to_vec();
    sorted.sort_unstable();
    let as_f = |c: Rgb| [c.r as f64, c.g as f64, c.b as f64];
    let mut seen = vec![0usize; centers.len()];
    for _ in 0..max_iters {
        let batch: Vec<[f64; 3]> = (0..batch_size).map(|_| as_f(sorted[rng.random_range(0..sorted.len())])).collect();
        let nearest_idx: Vec<usize> = batch.iter().map(|x| nearest(x, &centers)).collect();
        for (x, &j) in batch.iter().zip(&nearest_idx) {
            seen[j] += 1;
            let eta = 1.0 / seen[j] as f64;
            for ch in 0..3 {
                centers[j][ch] = (1.0 - eta) * centers[j][ch] + eta * x[ch];
            }
        }
    }
    centers
}

fn to_rgb(c: &[f64; 3]) -> Rgb {
    let q = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    Rgb::new(q(c[0]), q(c[1]), q(c[2]))
}

/// Clusters `pixels` into `params.k` colors.
///
/// Always returns exactly k entries whose counts sum to `pixels.len()`,
/// sorted by count descending (ties keep center order). Degenerate inputs
/// with fewer than k distinct colors yield zero-count duplicates of the
/// most populous centroid.
pub fn kmeans_pixels(pixels: &[Rgb], params: KMeansParams) -> Result<Palette> {
    if params.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if pixels.is_empty() {
        return Err(Error::InvalidArgument("cannot cluster an empty image".into()));
    }
    if params.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let d = distinct_colors(pixels);
    let centers = seed_centers(&d, pixels.len(), params.k, &mut rng);
    let mut centers = match params.mode {
        KMeansMode::Full => lloyd(&d, centers, params.max_iters),
        KMeansMode::MiniBatch { batch_size } => {
            if batch_size == 0 {
                return Err(Error::InvalidArgument("mini-batch size must be at least 1".into()));
            }
            minibatch(pixels, centers, params.max_iters, batch_size, &mut rng)
        }
    };
    let assignment = assign(&d, &centers);
    let counts = counts_for(&d, &assignment, params.k);
    reseed_empty(&mut centers, &counts);

    let mut entries: Vec<PaletteEntry> = centers
        .iter()
        .zip(&counts)
        .map(|(c, &count)| PaletteEntry { centroid: to_rgb(c), count })
        .collect();
    // Stable: equal counts keep center order.
    entries.sort_by(|a, b| b.count.cmp(&a.count));
    Ok(Palette { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(pixels: &[Rgb], k: usize) -> Palette {
        kmeans_pixels(pixels, KMeansParams::new(k, 0, 100)).unwrap()
    }

    /// Exhaustive oracle: best partition of a small pixel set into at most k
    /// groups by within-cluster sum of squares.
    fn brute_force_sse(pixels: &[Rgb], k: usize) -> f64 {
        let n = pixels.len();
        let mut best = f64::INFINITY;
        let total = k.pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let mut groups = vec![Vec::new(); k];
            for p in pixels {
                groups[c % k].push(*p);
                c /= k;
            }
            let sse: f64 = groups
                .iter()
                .filter(|g| !g.is_empty())
                .map(|g| {
                    let m = [0, 1, 2].map(|ch| {
                        g.iter().map(|p| [p.r, p.g, p.b][ch] as f64).sum::<f64>() / g.len() as f64
                    });
                    g.iter()
                        .map(|p| dist2(&[p.r as f64, p.g as f64, p.b as f64], &m))
                        .sum::<f64>()
                })
                .sum();
            best = best.min(sse);
        }
        best
    }

    #[test]
    fn uniform_red_is_fixed_point() {
        let px = vec![Rgb::new(255, 0, 0); 1024];
        let p = run(&px, 3);
        assert_eq!(p.entries.len(), 3);
        for e in &p.entries {
            assert_eq!(e.centroid, Rgb::new(255, 0, 0));
        }
        assert_eq!(p.entries.iter().map(|e| e.count).collect::<Vec<_>>(), vec![1024, 0, 0]);
    }

    #[test]
    fn half_blue_half_yellow_k2() {
        let mut img = RgbImage::new(32, 32);
        for (x, _, px) in img.enumerate_pixels_mut() {
            *px = if x < 16 { image::Rgb([0, 0, 255]) } else { image::Rgb([255, 255, 0]) };
        }
        let p = kmeans_palette(&img, 2, 0, 50).unwrap();
        let mut got: Vec<(Rgb, usize)> = p.entries.iter().map(|e| (e.centroid, e.count)).collect();
        got.sort();
        assert_eq!(got, vec![(Rgb::new(0, 0, 255), 512), (Rgb::new(255, 255, 0), 512)]);
        // The two-point set has zero within-cluster error at k=2.
        assert_eq!(brute_force_sse(&[Rgb::new(0, 0, 255), Rgb::new(255, 255, 0)], 2), 0.0);
    }

    #[test]
    fn three_black_one_white_k3() {
        let px = [Rgb::new(0, 0, 0), Rgb::new(0, 0, 0), Rgb::new(255, 255, 255), Rgb::new(0, 0, 0)];
        let p = run(&px, 3);
        assert_eq!(p.entries[0].centroid, Rgb::new(0, 0, 0));
        assert_eq!(p.entries[0].count, 3);
        assert_eq!(p.total(), 4);
        // Brute force confirms the optimum has zero error, which only the
        // {black x3} / {white} split achieves.
        assert_eq!(brute_force_sse(&px, 3), 0.0);
    }

    #[test]
    fn lloyd_reaches_brute_force_optimum_on_small_sets() {
        let sets: Vec<Vec<Rgb>> = vec![
            vec![Rgb::new(0, 0, 0), Rgb::new(10, 0, 0), Rgb::new(200, 200, 200), Rgb::new(210, 200, 200), Rgb::new(100, 0, 255)],
            vec![Rgb::new(5, 5, 5), Rgb::new(6, 6, 6), Rgb::new(250, 0, 0), Rgb::new(0, 250, 0), Rgb::new(0, 0, 250), Rgb::new(0, 0, 240)],
        ];
        for px in sets {
            let p = run(&px, 3);
            let centers: Vec<[f64; 3]> = p.entries.iter().map(|e| [e.centroid.r as f64, e.centroid.g as f64, e.centroid.b as f64]).collect();
            let sse: f64 = px
                .iter()
                .map(|c| {
                    let c = [c.r as f64, c.g as f64, c.b as f64];
                    centers.iter().map(|m| dist2(&c, m)).fold(f64::INFINITY, f64::min)
                })
                .sum();
            let best = brute_force_sse(&px, 3);
            // Centroids are rounded to integers, allow that slack.
            assert!(sse <= best + 3.0 * px.len() as f64 * 0.75, "sse {sse} vs optimum {best}");
        }
    }

    #[test]
    fn minibatch_mode_separates_two_colors() {
        let mut px = vec![Rgb::new(0, 0, 255); 600];
        px.extend(vec![Rgb::new(255, 255, 255); 424]);
        let params = KMeansParams { k: 2, seed: 3, max_iters: 20, mode: KMeansMode::MiniBatch { batch_size: 64 } };
        let p = kmeans_pixels(&px, params).unwrap();
        assert_eq!(p.entries[0].centroid, Rgb::new(0, 0, 255));
        assert_eq!(p.entries[0].count, 600);
        assert_eq!(p.total(), 1024);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(kmeans_pixels(&[Rgb::new(0, 0, 0)], KMeansParams::new(0, 0, 10)).is_err());
        assert!(kmeans_pixels(&[], KMeansParams::new(3, 0, 10)).is_err());
    }
}
