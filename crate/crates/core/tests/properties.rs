use std::collections::BTreeMap;

use image::RgbImage;
use proptest::prelude::*;

use logogen::color::{kmeans_pixels, label_rgb, ColorClass, KMeansParams, Rgb};
use logogen::dataset::{build_corpus, denormalize, normalize, BatchStream, Icon};
use logogen::evaluation::{f1, precision, recall, top3_distribution, ConfusionCounts, EvalReport, RunMetadata};
use logogen::training::{export_loss_csv, read_loss_csv, LossLog, LossRow, TrainConfig};

fn rgb() -> impl Strategy<Value = Rgb> {
    any::<[u8; 3]>().prop_map(|[r, g, b]| Rgb::new(r, g, b))
}

fn pixels() -> impl Strategy<Value = Vec<Rgb>> {
    prop::collection::vec(rgb(), 1..6).prop_flat_map(|palette| {
        prop::collection::vec(prop::sample::select(palette), 3..200)
    })
}

fn class() -> impl Strategy<Value = ColorClass> {
    (0..ColorClass::COUNT).prop_map(|c| ColorClass::ALL[c])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kmeans_conserves_pixels(px in pixels(), k in 1usize..4, seed in any::<u64>()) {
        let palette = kmeans_pixels(&px, KMeansParams::new(k, seed, 100)).unwrap();
        prop_assert_eq!(palette.total(), px.len());
        prop_assert!(palette.entries.len() <= k);
        prop_assert!(palette.entries.windows(2).all(|w| w[0].count >= w[1].count));
    }

    #[test]
    fn kmeans_is_deterministic_and_order_free(px in pixels(), k in 1usize..4, seed in any::<u64>(), rot in any::<prop::sample::Index>()) {
        let params = KMeansParams::new(k, seed, 100);
        let a = kmeans_pixels(&px, params).unwrap();
        prop_assert_eq!(&a, &kmeans_pixels(&px, params).unwrap());
        let mut moved = px.clone();
        moved.rotate_left(rot.index(px.len()));
        moved.reverse();
        prop_assert_eq!(&a, &kmeans_pixels(&moved, params).unwrap());
    }

    #[test]
    fn normalize_round_trips(p in any::<u8>()) {
        let v = normalize(p);
        prop_assert!((-1.0..=1.0).contains(&v));
        prop_assert_eq!(denormalize(v), p);
    }

    #[test]
    fn every_epoch_visits_each_item_once(n in 1usize..40, batch in 1usize..16, seed in any::<u64>()) {
        let label = label_rgb(&RgbImage::from_pixel(32, 32, image::Rgb([255, 0, 0]))).unwrap();
        let icons = (0..n).map(|i| Icon::new(format!("{i}"), RgbImage::new(32, 32)).unwrap()).collect();
        let corpus = build_corpus(icons, |_| Ok(label.clone())).unwrap();
        let mut stream = BatchStream::new(&corpus, batch, seed).unwrap();
        let per_epoch = stream.batches_per_epoch();
        for epoch in 0..3u64 {
            let mut seen = Vec::new();
            for _ in 0..per_epoch {
                let b = stream.next().unwrap();
                prop_assert_eq!(b.epoch, epoch);
                prop_assert!(b.len() <= batch);
                seen.extend(b.indices);
            }
            prop_assert_eq!(stream.completed_epochs(), epoch + 1);
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn confusion_metrics_are_consistent(
        pairs in prop::collection::vec((class(), class()), 1..300),
        top3 in prop::collection::vec((class(), [class(), class(), class()]), 1..100),
    ) {
        let mut counts = ConfusionCounts::new();
        for &(c, e) in &pairs {
            counts.add(c, e);
        }
        prop_assert_eq!(counts.total(), pairs.len());
        let rows: usize = ColorClass::ALL.iter().map(|&c| counts.row_sum(c)).sum();
        let cols: usize = ColorClass::ALL.iter().map(|&c| counts.column_sum(c)).sum();
        prop_assert_eq!((rows, cols), (pairs.len(), pairs.len()));
        let mut true_pos = 0.0;
        for &c in &ColorClass::ALL {
            let (p, r) = (precision(&counts, c), recall(&counts, c));
            prop_assert_eq!(p.is_some(), counts.column_sum(c) > 0);
            prop_assert_eq!(r.is_some(), counts.row_sum(c) > 0);
            true_pos += p.unwrap_or(0.0) * counts.column_sum(c) as f64;
            if let (Some(p), Some(r), Some(f)) = (p, r, f1(p.into(), r.into())) {
                prop_assert!(f <= (p + r) / 2.0 + 1e-12 && f >= 0.0);
            }
        }
        prop_assert!((true_pos - counts.diagonal_sum() as f64).abs() < 1e-9);

        let mut by_class: BTreeMap<ColorClass, Vec<[ColorClass; 3]>> = BTreeMap::new();
        for (c, t) in top3 {
            by_class.entry(c).or_default().push(t);
        }
        for shares in top3_distribution(&by_class).values() {
            prop_assert_eq!(shares.len(), ColorClass::COUNT);
            prop_assert!((shares.values().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        let report = EvalReport::from_counts(counts, &by_class, RunMetadata { checkpoint: None, seed: 0, n_per_class: 0 });
        let back: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
        prop_assert_eq!(back, report);
    }

    #[test]
    fn loss_csv_round_trips(rows in prop::collection::vec(
        (any::<f64>().prop_filter("finite", |v| v.is_finite()), prop::option::of(-1e6f64..1e6), prop::option::of(0.0f64..10.0)),
        0..30,
    )) {
        let mut log = LossLog::new();
        for (i, (d, g, q)) in rows.iter().enumerate() {
            log.push(LossRow { step: i as u64 + 1, epoch: i as u64 / 4, d_loss: *d, g_loss: *g, q_loss_real: *q, q_loss_fake: *q }).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        export_loss_csv(&log, &path).unwrap();
        prop_assert_eq!(read_loss_csv(&path).unwrap(), log);
    }

    #[test]
    fn config_text_round_trips(lr in 1e-6f64..1e-1, w in 0.0f64..10.0, batch in 1usize..512, seed in 0u64..1000) {
        let mut cfg = TrainConfig::default();
        cfg.lr = lr;
        cfg.w_cls = w;
        cfg.batch_size = batch;
        cfg.init_seed = seed;
        prop_assert_eq!(TrainConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}
