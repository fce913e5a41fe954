//! Property tests for the invariants that hold for arbitrary inputs.

mod common;

use chrono::NaiveDate;
use covarlab::backtest::{avq_loss, cumulative_table, ModelPreds};
use covarlab::data_io::{read_embeddings, write_embeddings, Article, EmbeddingStore};
use covarlab::numcore::{softmax_cols, Matrix};
use covarlab::pipeline::delta_covar;
use covarlab::quantile::pinball;
use covarlab::sentiment::{sentiment_index, SentimentCounts};
use covarlab::simulation::inverse_normal_cdf;
use covarlab::transformer::{concat_pi, ReturnsMlp, TextWindow};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn series(len: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    len.prop_flat_map(|n| {
        (
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(-1.0f64..1.0, n),
        )
    })
}

proptest! {
    #[test]
    fn pinball_is_nonnegative_and_zero_at_zero(u in -10.0f64..10.0, tau in 0.001f64..0.999) {
        prop_assert!(pinball(u, tau).unwrap() >= 0.0);
        prop_assert_eq!(pinball(0.0, tau).unwrap(), 0.0);
    }

    #[test]
    fn avq_invariant_to_common_shift((p, a) in series(1..60), c in -5.0f64..5.0) {
        let base = avq_loss(&p, &a, 0.05).unwrap();
        let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
        let as_: Vec<f64> = a.iter().map(|v| v + c).collect();
        let shifted = avq_loss(&ps, &as_, 0.05).unwrap();
        prop_assert!((base - shifted).abs() <= 1e-12 * (1.0 + base.abs()));
    }

    #[test]
    fn avq_nests_as_weighted_mean((p, a) in series(2..80), cut in 0.01f64..0.99) {
        let k = ((p.len() as f64 * cut) as usize).clamp(1, p.len() - 1);
        let whole = avq_loss(&p, &a, 0.05).unwrap();
        let first = avq_loss(&p[..k], &a[..k], 0.05).unwrap();
        let second = avq_loss(&p[k..], &a[k..], 0.05).unwrap();
        let n = p.len() as f64;
        let mixed = (k as f64 * first + (n - k as f64) * second) / n;
        prop_assert!((whole - mixed).abs() <= 1e-12);
    }

    #[test]
    fn dominated_model_is_dominated_in_every_row(
        actuals in prop::collection::vec(-0.1f64..0.1, 400),
        extra in prop::collection::vec(0.0f64..0.05, 400),
    ) {
        let start = NaiveDate::from_ymd_opt(2011, 1, 21).unwrap();
        let dates: Vec<NaiveDate> = start.iter_days().take(400).collect();
        // b's residual magnitude is never below a's on any date
        let good: Vec<f64> = actuals.iter().map(|a| a - 0.01).collect();
        let bad: Vec<f64> = actuals.iter().zip(&extra).map(|(a, e)| a - 0.01 - e).collect();
        let models = vec![
            ModelPreds { name: "good".into(), preds: good },
            ModelPreds { name: "bad".into(), preds: bad },
        ];
        let table = cumulative_table(&dates, &models, &actuals, 0.05, start, 3).unwrap();
        for row in &table.rows {
            prop_assert!(row.avq[0] <= row.avq[1]);
        }
        let full = table.rows.last().unwrap();
        prop_assert_eq!(full.avq[0], avq_loss(&models[0].preds, &actuals, 0.05).unwrap());
    }

    #[test]
    fn sentiment_index_is_scale_invariant(p in 0usize..50, n in 0usize..50, u in 0usize..50, k in 1usize..20) {
        prop_assume!(p + n + u > 0);
        let a = sentiment_index(&SentimentCounts::new(p, n, u)).unwrap();
        let b = sentiment_index(&SentimentCounts::new(k * p, k * n, k * u)).unwrap();
        prop_assert!((a - b).abs() <= 1e-15);
        prop_assert!((-1.0..=1.0).contains(&a));
    }

    #[test]
    fn inverse_normal_matches_bisection(p in 1e-6f64..0.999999) {
        let z = inverse_normal_cdf(p);
        prop_assert!((z - common::bisect_inverse_normal(p)).abs() <= 1e-8);
        prop_assert!((z + inverse_normal_cdf(1.0 - p)).abs() <= 1e-8);
    }

    #[test]
    fn softmax_valid_columns_sum_to_one(seed in 0u64..10_000, n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = common::rand_mask(&mut rng, n);
        let s = softmax_cols(&common::rand_matrix(&mut rng, n, n, 20.0), &mask).unwrap();
        for c in 0..n {
            let total: f64 = (0..n).map(|r| s.get(r, c)).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            for r in 0..n {
                if !mask[r] {
                    prop_assert_eq!(s.get(r, c), 0.0);
                }
            }
        }
    }

    #[test]
    fn concat_pi_keeps_pads_zero(seed in 0u64..10_000, n in 1usize..7, r in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask = common::rand_mask(&mut rng, n);
        let emb = common::rand_matrix(&mut rng, 3, n, 1.0);
        let returns: Vec<f64> = common::rand_matrix(&mut rng, r, 1, 1.0).into_vec();
        let batch = concat_pi(&returns, &emb, &mask).unwrap();
        for c in 0..n {
            if mask[c] {
                prop_assert_eq!(&batch.z.col(c)[..r], &returns[..]);
                prop_assert_eq!(&batch.z.col(c)[r..], &emb.col(c)[..]);
            } else {
                prop_assert!(batch.z.col(c).iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn delta_covar_of_equal_inputs_is_zero(seed in 0u64..10_000, v in prop::collection::vec(-1.0f64..1.0, 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mlp = ReturnsMlp::init(3, 2, 8, &mut rng);
        let text = TextWindow {
            embeddings: Matrix::zeros(2, 1),
            mask: vec![false],
            positions: vec![0],
        };
        prop_assert_eq!(delta_covar(&mlp, &v, &v, &text).unwrap(), 0.0);
    }

    #[test]
    fn cvem_round_trips(
        d_e in 1usize..5,
        days in prop::collection::btree_map(0i64..20_000, 0usize..4, 0..6),
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
        let mut store = EmbeddingStore::new(d_e);
        for (offset, count) in &days {
            let date = epoch + chrono::Duration::days(*offset);
            let articles: Vec<Article> = (0..*count)
                .map(|_| Article { vector: common::rand_matrix(&mut rng, d_e, 1, 1e3).into_vec() })
                .collect();
            store.insert(date, articles).unwrap();
        }
        let mut bytes = Vec::new();
        write_embeddings(&mut bytes, &store).unwrap();
        let back = read_embeddings(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.article_count(), store.article_count());
        for (date, articles) in store.iter() {
            let got = back.get(*date);
            for (a, b) in got.iter().zip(articles) {
                prop_assert_eq!(&a.vector, &b.vector);
            }
        }
    }
}
