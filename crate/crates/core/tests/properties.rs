mod common;

use common::*;
use proptest::prelude::*;
use protoverb::encode::{EmbeddingStore, EncoderSpec, ToyEncoder};
use protoverb::episodes::k_shot_indices;
use protoverb::{loss_components, total_loss, MaskEmbedding};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64) -> Instance {
    random_instance(&mut ChaCha8Rng::seed_from_u64(seed), SMALL)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_gradient_matches_finite_differences(seed in any::<u64>(), combo in 0usize..7) {
        let w = binary_weightings()[combo];
        let err = max_gradient_error(&instance(seed), &w);
        prop_assert!(err <= 1e-5, "relative error {err:e}");
    }

    #[test]
    fn losses_match_the_naive_reference(seed in any::<u64>()) {
        let inst = instance(seed);
        let c = loss_components(&inst.batch, &inst.model).unwrap();
        prop_assert!(rel_err(c.instance_instance, naive_instance_instance(&inst), 1e-12) <= 1e-10);
        prop_assert!(rel_err(c.instance_prototype, naive_instance_prototype(&inst), 1e-12) <= 1e-10);
        prop_assert!(rel_err(c.prototype_instance, naive_prototype_instance(&inst), 1e-12) <= 1e-10);
    }

    #[test]
    fn total_loss_is_linear_in_the_weights(seed in any::<u64>(), a in 0.0f64..3.0, b in 0.0f64..3.0, c in 0.01f64..3.0) {
        let inst = instance(seed);
        let w = protoverb::LossWeights::new(a, b, c).unwrap();
        let parts = loss_components(&inst.batch, &inst.model).unwrap();
        let total = total_loss(&inst.batch, &inst.model, &w).unwrap();
        prop_assert!(rel_err(total, parts.weighted(&w), 1e-12) <= 1e-12);
    }

    #[test]
    fn prediction_is_the_most_probable_class(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let inst = instance(seed);
        for h in inst.batch.vectors() {
            let probs = inst.model.class_probabilities(h).unwrap();
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(probs.iter().all(|&p| p > 0.0));
            let best = protoverb::model::argmax(&probs);
            prop_assert_eq!(inst.model.classify(h).unwrap(), best);
            let scaled: Vec<f64> = h.iter().map(|v| v * scale).collect();
            let again = inst.model.class_probabilities(&scaled).unwrap();
            for (p, q) in probs.iter().zip(&again) {
                prop_assert!((p - q).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn toy_embeddings_are_unit_vectors(words in prop::collection::vec("[a-zA-Z]{1,12}", 1..30), seed in 0u64..4) {
        let encoder = ToyEncoder::new(EncoderSpec::toy(64, seed)).unwrap();
        let text = format!("{} [MASK] .", words.join(" "));
        let v = encoder.encode(&text).unwrap();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() <= 1e-12);
        prop_assert_eq!(v, encoder.encode(&text).unwrap());
    }

    #[test]
    fn embedding_files_round_trip_f32_values(rows in prop::collection::vec(prop::collection::vec(-1e3f32..1e3, 3), 1..10)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        let mut store = EmbeddingStore::new(3, "test");
        for (i, r) in rows.iter().enumerate() {
            let mut v: Vec<f64> = r.iter().map(|&x| f64::from(x)).collect();
            if v.iter().all(|&x| x == 0.0) {
                v[0] = 1.0;
            }
            store.push(MaskEmbedding::new(format!("r{i}"), v, Some(i % 2))).unwrap();
        }
        store.save(&path).unwrap();
        let back = EmbeddingStore::load(&path).unwrap();
        prop_assert_eq!(back.records(), store.records());
        prop_assert_eq!(back.source(), "test");
    }

    #[test]
    fn episodes_take_k_distinct_items_per_class(labels in prop::collection::vec(0usize..3, 12..60), k in 1usize..4, seed in any::<u64>()) {
        let counts: Vec<usize> = (0..3).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
        prop_assume!(counts.iter().all(|&n| n >= k));
        let idx = k_shot_indices(&labels, 3, k, seed).unwrap();
        prop_assert_eq!(idx.len(), 3 * k);
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        for c in 0..3 {
            prop_assert_eq!(idx.iter().filter(|&&i| labels[i] == c).count(), k);
        }
        prop_assert_eq!(idx, k_shot_indices(&labels, 3, k, seed).unwrap());
    }
}
