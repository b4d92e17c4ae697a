//! Property tests for the math kernels and the task generator.

use proptest::prelude::*;

use repinfo::nn::{softmax, softmax_cross_entropy_bits};
use repinfo::probe::{entropy_bits, InfoEstimate};
use repinfo::report::fmt_f64;
use repinfo::rng::rng_from_seed;
use repinfo::task::{generate_samples, split_indices, LabelKind};
use repinfo::Matrix64;

fn logits_strategy() -> impl Strategy<Value = (Matrix64, Vec<usize>)> {
    (1usize..6, 2usize..7).prop_flat_map(|(rows, cols)| {
        (
            proptest::collection::vec(-30.0f64..30.0, rows * cols),
            proptest::collection::vec(0usize..cols, rows),
        )
            .prop_map(move |(vals, labels)| {
                (Matrix64::from_shape_vec((rows, cols), vals).unwrap(), labels)
            })
    })
}

proptest! {
    #[test]
    fn cross_entropy_is_nonnegative_and_finite((logits, labels) in logits_strategy()) {
        let loss = softmax_cross_entropy_bits(&logits, &labels).unwrap();
        prop_assert!(loss.is_finite());
        prop_assert!(loss >= 0.0);
    }

    #[test]
    fn softmax_rows_are_distributions((logits, _) in logits_strategy()) {
        let p = softmax(&logits);
        for row in p.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn entropy_peaks_at_uniform(weights in proptest::collection::vec(0.01f64..1.0, 2..8)) {
        let total: f64 = weights.iter().sum();
        let p: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let h = entropy_bits(&p).unwrap();
        prop_assert!(h >= 0.0);
        prop_assert!(h <= (p.len() as f64).log2() + 1e-12);
    }

    #[test]
    fn estimates_clamp_and_respect_the_ceiling(h_y in 0.1f64..5.0, ce in 0.0f64..8.0) {
        let est = InfoEstimate::new(h_y, ce, LabelKind::Direction, 0, 0);
        prop_assert!(est.iu_bits >= 0.0);
        prop_assert!(est.iu_bits <= est.h_y_bits + 1e-12);
        prop_assert!(est.iu_raw_bits <= est.h_y_bits + 1e-12);
        prop_assert_eq!(est.iu_bits, est.iu_raw_bits.max(0.0));
    }

    #[test]
    fn csv_floats_roundtrip_bit_exactly(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        let parsed: f64 = fmt_f64(v).parse().unwrap();
        prop_assert_eq!(parsed.to_bits(), v.to_bits());
    }

    #[test]
    fn splits_partition_the_index_space(count in 10usize..500, frac in 0.2f64..0.8, seed in any::<u64>()) {
        let (train, val) = split_indices(count, frac, seed).unwrap();
        prop_assert_eq!(train.len(), (frac * count as f64).round() as usize);
        let mut all: Vec<usize> = train.iter().chain(val.iter()).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..count).collect::<Vec<_>>());
    }

    #[test]
    fn every_sample_is_internally_consistent(n in 2usize..8, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let samples = generate_samples::<f64>(n, 20, 0.1, Some(n), &mut rng);
        for s in &samples {
            // direction points at the unique target carrying the color
            prop_assert_eq!(s.permutation[s.direction], s.color);
            let mut sorted = s.permutation.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
            // target blocks exactly one-hot; noise only in the last n entries
            for pos in 0..n {
                for c in 0..n {
                    let want = if s.permutation[pos] == c { 1.0 } else { 0.0 };
                    prop_assert_eq!(s.input[pos * n + c], want);
                }
            }
            prop_assert_eq!(s.input.len(), n * n + n);
        }
    }
}
