//! Next-sentence evaluation protocol under controlled networks: a stub that
//! always prefers the end marker gives hand-countable accuracies, and a
//! randomly initialized network must score at chance level because gold
//! positions are planted uniformly over the candidate window.

use std::collections::BTreeMap;

use nextsum_core::align::ExtractiveGold;
use nextsum_core::annotate::{train_importance, EmbeddingTable, ImportanceTrainOptions};
use nextsum_core::content_model::EmissionLm;
use nextsum_core::corpus::{segment_and_tokenize, Article, Sentence};
use nextsum_core::error::Error;
use nextsum_core::eval::next_sentence_eval;
use nextsum_core::features::{fit_normalizer, FeatureExtractor, FeatureManifest, Normalizer};
use nextsum_core::predictor::{build_dev_groups, TrainingSetOptions};
use nextsum_core::{ContentHmm64, Mlp64};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn hand_hmm() -> ContentHmm64 {
    let vocab: Vec<String> = ["gale", "market", "storm", "trade"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let storm_counts: BTreeMap<(u32, u32), u64> = [
        ((5, 2), 50),
        ((5, 0), 50),
        ((2, 0), 25),
        ((0, 2), 25),
        ((2, 2), 25),
        ((0, 0), 25),
        ((2, 5), 50),
        ((0, 5), 50),
    ]
    .into_iter()
    .collect();
    let market_counts: BTreeMap<(u32, u32), u64> = [
        ((5, 1), 50),
        ((5, 3), 50),
        ((1, 3), 25),
        ((3, 1), 25),
        ((1, 1), 25),
        ((3, 3), 25),
        ((1, 5), 50),
        ((3, 5), 50),
    ]
    .into_iter()
    .collect();
    ContentHmm64::from_probabilities(
        vocab,
        vec![0.3, 0.7],
        vec![vec![0.9, 0.1], vec![0.6, 0.4]],
        vec![
            EmissionLm::from_counts(4, &storm_counts, 0.01),
            EmissionLm::from_counts(4, &market_counts, 0.01),
        ],
    )
    .expect("hand-built model")
}

fn sentence(text: &str, index: usize) -> Sentence {
    let mut s = segment_and_tokenize(text).expect("tokenize")[0].clone();
    s.index = index;
    s
}

const WORDS: [&str; 4] = ["gale", "market", "storm", "trade"];

fn random_article(id: &str, num_sentences: usize, rng: &mut ChaCha8Rng) -> Article {
    let sentences = (0..num_sentences)
        .map(|i| {
            let len = rng.gen_range(4..8);
            let mut words: Vec<&str> =
                (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
            let text = format!(
                "{}{} {}.",
                words[0][..1].to_uppercase(),
                &words[0][1..],
                words.split_off(1).join(" ")
            );
            sentence(&text, i)
        })
        .collect();
    Article {
        id: id.into(),
        domain: String::new(),
        sentences,
    }
}

struct Fixture {
    hmm: ContentHmm64,
    table: EmbeddingTable,
    manifest: FeatureManifest,
    articles: Vec<Article>,
    golds: Vec<ExtractiveGold>,
}

impl Fixture {
    fn pairs(&self) -> Vec<(&Article, &ExtractiveGold)> {
        self.articles.iter().zip(self.golds.iter()).collect()
    }
}

fn build_fixture(golds_for: impl Fn(usize, &mut ChaCha8Rng) -> (usize, Vec<usize>), n: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut articles = Vec::new();
    let mut golds = Vec::new();
    for a in 0..n {
        let (num_sentences, indices) = golds_for(a, &mut rng);
        let article = random_article(&format!("art-{a:03}"), num_sentences, &mut rng);
        golds.push(ExtractiveGold {
            id: article.id.clone(),
            indices,
            eos: true,
        });
        articles.push(article);
    }
    Fixture {
        hmm: hand_hmm(),
        table: EmbeddingTable::fallback_only(8),
        manifest: FeatureManifest::build(
            2,
            8,
            false,
            vec!["storm".into(), "market".into(), "trade".into()],
            [20.0, 30.0, 40.0, 50.0],
            [2.0, 3.0, 4.0, 6.0],
        ),
        articles,
        golds,
    }
}

fn eos_weighted_net(dim: usize, weight: f64) -> Mlp64 {
    let mut net = Mlp64::zeroed(&[dim, 1]).expect("net");
    let mut params = vec![0.0; dim + 1];
    params[dim - 1] = weight;
    net.set_parameters(&params).expect("params");
    net
}

#[test]
fn stub_net_accuracies_follow_the_hand_count() {
    // Two articles, gold [0, 1, 2] each: four timesteps per article, full
    // 10-sentence windows throughout, so every candidate set has 11 entries.
    let fx = build_fixture(|_, _| (30, vec![0, 1, 2]), 2);
    let imp = train_importance(
        &fx.pairs()[..1],
        &fx.table,
        &ImportanceTrainOptions {
            epochs: 1,
            seed: 5,
            ..Default::default()
        },
    )
    .expect("importance");
    let extractor =
        FeatureExtractor::new(&fx.manifest, &fx.hmm, &fx.table, &imp).expect("extractor");
    let net = eos_weighted_net(fx.manifest.total_dim, 10.0);
    let normalizer = Normalizer::identity(fx.manifest.total_dim);
    let opts = TrainingSetOptions {
        window: 10,
        seed: 42,
        all_negatives: false,
    };
    let report =
        next_sentence_eval(&net, &normalizer, &extractor, &fx.pairs(), &opts).expect("eval");

    assert_eq!(report.timesteps, 8);
    assert_eq!(report.skipped, 0);
    assert_eq!(report.duplicates, 0);
    // The end marker wins the argmax everywhere, so only the two final
    // timesteps are ranked correctly.
    assert!((report.one_of_k_accuracy - 2.0 / 8.0).abs() < 1e-12);
    // Sentences score exactly 0.5 (not above threshold), the marker ~1.
    // Non-final sets get 9 of 11 right, final sets 11 of 11.
    let expected_natural = (2.0 * (3.0 * 9.0 + 11.0)) / (2.0 * 4.0 * 11.0);
    assert!((report.binary_accuracy_natural - expected_natural).abs() < 1e-12);
    // Gold judgments: 6 sentence-gold misses, 2 marker-gold hits. Negative
    // judgments hit unless the sampled negative is the marker.
    assert!(report.binary_accuracy_balanced >= 4.0 / 16.0);
    assert!(report.binary_accuracy_balanced <= 10.0 / 16.0);

    let again =
        next_sentence_eval(&net, &normalizer, &extractor, &fx.pairs(), &opts).expect("eval");
    assert_eq!(
        report.binary_accuracy_balanced,
        again.binary_accuracy_balanced
    );
}

#[test]
fn gold_beyond_the_window_is_skipped_not_evaluated() {
    let fx = build_fixture(|_, _| (30, vec![0, 15]), 1);
    let imp = train_importance(
        &fx.pairs(),
        &fx.table,
        &ImportanceTrainOptions {
            epochs: 1,
            seed: 5,
            ..Default::default()
        },
    )
    .expect("importance");
    let extractor =
        FeatureExtractor::new(&fx.manifest, &fx.hmm, &fx.table, &imp).expect("extractor");
    let net = eos_weighted_net(fx.manifest.total_dim, 10.0);
    let normalizer = Normalizer::identity(fx.manifest.total_dim);
    let opts = TrainingSetOptions::default();
    let report =
        next_sentence_eval(&net, &normalizer, &extractor, &fx.pairs(), &opts).expect("eval");

    // Sentence 15 is unreachable from a window starting at 1, but the oracle
    // history still advances past it before the final timestep.
    assert_eq!(report.timesteps, 2);
    assert_eq!(report.skipped, 1);
    assert!((report.one_of_k_accuracy - 0.5).abs() < 1e-12);
}

#[test]
fn empty_test_set_is_an_error() {
    let fx = build_fixture(|_, _| (30, vec![0]), 1);
    let imp = train_importance(
        &fx.pairs(),
        &fx.table,
        &ImportanceTrainOptions {
            epochs: 1,
            seed: 5,
            ..Default::default()
        },
    )
    .expect("importance");
    let extractor =
        FeatureExtractor::new(&fx.manifest, &fx.hmm, &fx.table, &imp).expect("extractor");
    let net = eos_weighted_net(fx.manifest.total_dim, 10.0);
    let normalizer = Normalizer::identity(fx.manifest.total_dim);
    let err = next_sentence_eval(&net, &normalizer, &extractor, &[], &TrainingSetOptions::default())
        .unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));
}

#[test]
fn a_random_network_scores_at_chance_level() {
    // Gold positions are planted uniformly over the 10 window slots (first
    // index uniform in 0..10, then gaps uniform in 1..=10), and the final
    // timestep's answer is always the end marker at the fixed last slot. Any
    // ranker that cannot see the label therefore succeeds with probability
    // exactly 1/11 per timestep, no matter how its scores are biased.
    let fx = build_fixture(
        |_, rng| {
            let mut indices = vec![rng.gen_range(0..10usize)];
            for _ in 0..9 {
                indices.push(indices.last().unwrap() + rng.gen_range(1..=10usize));
            }
            let extra = rng.gen_range(5..15);
            (indices.last().unwrap() + 1 + extra, indices)
        },
        100,
    );
    let imp = train_importance(
        &fx.pairs()[..3],
        &fx.table,
        &ImportanceTrainOptions {
            epochs: 1,
            seed: 5,
            ..Default::default()
        },
    )
    .expect("importance");
    let extractor =
        FeatureExtractor::new(&fx.manifest, &fx.hmm, &fx.table, &imp).expect("extractor");
    let opts = TrainingSetOptions {
        window: 10,
        seed: 42,
        all_negatives: false,
    };

    let pairs = fx.pairs();
    let (groups, coverage) = build_dev_groups(&extractor, &pairs, &opts).expect("groups");
    assert_eq!(groups.len(), 100 * 11, "ten gold picks plus the end marker");
    assert_eq!(coverage.skipped_timesteps, 0);
    let all_vectors: Vec<Vec<f64>> = groups.iter().flat_map(|g| g.vectors.clone()).collect();
    let normalizer = fit_normalizer(&all_vectors).expect("normalizer");

    let mut accuracies = Vec::new();
    for seed in 0..5 {
        let net = Mlp64::new_seeded(&[fx.manifest.total_dim, 32, 1], 1000 + seed).expect("net");
        let report =
            next_sentence_eval(&net, &normalizer, &extractor, &pairs, &opts).expect("eval");
        assert_eq!(report.timesteps, 1100);
        accuracies.push(report.one_of_k_accuracy);
    }
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let chance = 1.0 / 11.0;
    assert!(
        (mean - chance).abs() <= 0.03,
        "mean 1-of-11 accuracy {mean:.4} strays from chance {chance:.4}: {accuracies:?}"
    );
}
