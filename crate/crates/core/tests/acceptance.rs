//! Release gate: one sequential run that checks every shipping criterion,
//! printing a pass/fail line per item (run with `--nocapture` to see them
//! on success). The end-to-end items share a single trained pipeline on a
//! planted six-topic corpus; the oracle items re-derive module outputs with
//! independent brute-force implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nextsum_core::align::{align, ExtractiveGold};
use nextsum_core::annotate::{EmbeddingTable, ImportanceTrainOptions};
use nextsum_core::content_model::{
    sentence_emission_logprob, viterbi_decode, EmissionLm,
};
use nextsum_core::corpus::{
    load_corpus, segment_and_tokenize, Article, CorpusFormat, Sentence,
};
use nextsum_core::eval::stem::porter_stem;
use nextsum_core::eval::{kendall_tau_b, rouge_n};
use nextsum_core::features::{FeatureExtractor, Normalizer};
use nextsum_core::generator::{generate, generate_with_limit, GeneratedSummary, Termination};
use nextsum_core::pipeline::{
    stage_build_oracle, stage_evaluate, stage_generate, stage_ingest, stage_report,
    stage_train, stage_train_cm, stage_train_importance, ContentModelArtifact,
    ContentModelConfig, EvalArtifact, FeatureConfig, GenerationConfig, ImportanceArtifact,
    IngestReport, ModelArtifact, PipelineConfig, PipelinePaths, SplitConfig, SplitName,
    SystemKind,
};
use nextsum_core::predictor::{build_training_set, TrainConfig, TrainingSetOptions};
use nextsum_core::synth::{generate_corpus, load_planted, sidecar_path, write_corpus, SynthSpec};
use nextsum_core::{ContentHmm64, Mlp64};

const WALL_CLOCK_LIMIT: Duration = Duration::from_secs(900);

#[derive(Default)]
struct Scorecard {
    failed: Vec<&'static str>,
}

impl Scorecard {
    fn record(&mut self, id: &'static str, ok: bool, detail: String) {
        println!("{id} {}: {detail}", if ok { "pass" } else { "FAIL" });
        if !ok {
            self.failed.push(id);
        }
    }
}

fn pipeline_config(root: &Path) -> PipelineConfig {
    // 620 pairs at these ratios land on exactly 500/60/60; the 0.5 slack in
    // the numerator keeps the floor immune to rounding in the ratio itself.
    let side = 60.5 / 620.0;
    PipelineConfig {
        paths: PipelinePaths {
            corpus: root.join("corpus.jsonl"),
            embeddings: None,
            models: root.join("models"),
            outputs: root.join("outputs"),
        },
        split: SplitConfig {
            train: 1.0 - 2.0 * side,
            dev: side,
            test: side,
            seed: 11,
        },
        content_model: ContentModelConfig {
            topic_candidates: vec![4, 6, 8],
            delta: 0.01,
            max_iters: 40,
            unk_cutoff: 0,
            seed: 7,
        },
        importance: ImportanceTrainOptions {
            epochs: 4,
            ..Default::default()
        },
        features: FeatureConfig {
            embed_dim: 16,
            top_words: 120,
        },
        predictor: TrainConfig {
            hidden_dims: vec![64, 64],
            max_epochs: 30,
            patience: 6,
            seed: 13,
            ..Default::default()
        },
        window: 10,
        generation: GenerationConfig {
            system: SystemKind::NextSum,
            length: None,
            seed: 21,
        },
    }
}

struct Run {
    cfg: PipelineConfig,
    ingest: IngestReport,
    cm: ContentModelArtifact,
    importance: ImportanceArtifact,
    model: ModelArtifact,
    lead_len: usize,
    nextsum: Vec<GeneratedSummary>,
    nextsum_l: Vec<GeneratedSummary>,
    ev_nextsum: EvalArtifact,
    ev_lead: EvalArtifact,
    elapsed: Duration,
}

fn run_pipeline(root: &Path) -> Run {
    let t0 = Instant::now();
    // Articles short enough that some lack part of the summary topics, so
    // reference lengths genuinely vary with what each article contains.
    let spec = SynthSpec {
        min_sentences: 3,
        ..SynthSpec::canonical(6, 4242)
    };
    let pairs = generate_corpus(&spec, 620).expect("synth corpus");
    write_corpus(&pairs, &root.join("corpus.jsonl")).expect("write corpus");

    let mut cfg = pipeline_config(root);
    let ingest = stage_ingest(&cfg).expect("ingest");
    stage_build_oracle(&cfg).expect("build-oracle");
    let cm = stage_train_cm(&cfg).expect("train-cm");
    let importance = stage_train_importance(&cfg).expect("train-importance");
    let model = stage_train(&cfg).expect("train");

    let train_pairs = load_corpus(&cfg.split_path(SplitName::Train), CorpusFormat::JsonLines)
        .expect("train split");
    let words: usize = train_pairs
        .iter()
        .map(|p| p.abstract_summary.word_count())
        .sum();
    let lead_len = ((words as f64 / train_pairs.len() as f64).round() as usize).max(1);
    cfg.generation.length = Some(lead_len);

    let nextsum = stage_generate(&cfg, SystemKind::NextSum).expect("generate nextsum");
    let ev_nextsum = stage_evaluate(&cfg, SystemKind::NextSum).expect("evaluate nextsum");
    let nextsum_l = stage_generate(&cfg, SystemKind::NextSumL).expect("generate nextsum-l");
    stage_evaluate(&cfg, SystemKind::NextSumL).expect("evaluate nextsum-l");
    stage_generate(&cfg, SystemKind::Lead).expect("generate lead");
    let ev_lead = stage_evaluate(&cfg, SystemKind::Lead).expect("evaluate lead");
    stage_report(&cfg).expect("report");

    Run {
        cfg,
        ingest,
        cm,
        importance,
        model,
        lead_len,
        nextsum,
        nextsum_l,
        ev_nextsum,
        ev_lead,
        elapsed: t0.elapsed(),
    }
}

fn read_gold(path: &Path) -> Vec<ExtractiveGold> {
    fs::read_to_string(path)
        .expect("gold file")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("gold record"))
        .collect()
}

fn extractor_for<'a>(run: &'a Run, table: &'a EmbeddingTable) -> FeatureExtractor<'a> {
    FeatureExtractor::new(&run.model.manifest, &run.cm.model, table, &run.importance.model)
        .expect("extractor from trained artifacts")
}

/// None when the summary is well-formed, otherwise what broke.
fn summary_violation(s: &GeneratedSummary, m: usize, cap: Option<usize>) -> Option<String> {
    if !s.indices.windows(2).all(|w| w[0] < w[1]) {
        return Some(format!("{}: indices not strictly increasing", s.id));
    }
    if s.indices.iter().any(|&i| i >= m) {
        return Some(format!("{}: index out of range", s.id));
    }
    if s.indices.len() > m {
        return Some(format!("{}: more selections than sentences", s.id));
    }
    if let Some(k) = cap {
        if s.words > k {
            return Some(format!("{}: {} words over the {k}-word cap", s.id, s.words));
        }
        if s.reason == Termination::LengthCap && s.words != k {
            return Some(format!(
                "{}: truncated to {} words instead of exactly {k}",
                s.id, s.words
            ));
        }
    }
    None
}

const HMM_VOCAB: [&str; 6] = ["gale", "market", "price", "storm", "trade", "wind"];

fn normalized(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|v| v / sum).collect()
}

fn random_hmm(rng: &mut ChaCha8Rng) -> ContentHmm64 {
    let t = rng.gen_range(1..=3);
    let vocab: Vec<String> = HMM_VOCAB.iter().map(|w| w.to_string()).collect();
    let initial = normalized(rng, t);
    let transitions = (0..t).map(|_| normalized(rng, t)).collect();
    let delta = rng.gen_range(0.05..1.0);
    let emissions = (0..t)
        .map(|_| {
            let mut counts = BTreeMap::new();
            for _ in 0..rng.gen_range(2..12) {
                let ctx = rng.gen_range(0u32..8);
                let tgt = rng.gen_range(0u32..8);
                *counts.entry((ctx, tgt)).or_insert(0u64) += rng.gen_range(1..20);
            }
            EmissionLm::from_counts(HMM_VOCAB.len(), &counts, delta)
        })
        .collect();
    ContentHmm64::from_probabilities(vocab, initial, transitions, emissions)
        .expect("random rows are stochastic")
}

/// Words from the model vocabulary plus one out-of-vocabulary form.
fn random_sentences(rng: &mut ChaCha8Rng) -> Vec<Sentence> {
    let n = rng.gen_range(1..=5);
    let text: String = (0..n)
        .map(|_| {
            let words: Vec<&str> = (0..rng.gen_range(1..=4))
                .map(|_| {
                    let i = rng.gen_range(0..=HMM_VOCAB.len());
                    if i == HMM_VOCAB.len() {
                        "zzz"
                    } else {
                        HMM_VOCAB[i]
                    }
                })
                .collect();
            let mut s = words.join(" ");
            s.get_mut(0..1).map(|c| c.make_ascii_uppercase());
            format!("{s}. ")
        })
        .collect();
    let sentences = segment_and_tokenize(text.trim()).expect("tokenize");
    assert_eq!(sentences.len(), n, "one sentence per period");
    sentences
}

fn path_score(hmm: &ContentHmm64, sentences: &[Sentence], path: &[usize]) -> f64 {
    let mut score = hmm.initial_logprob(path[0])
        + sentence_emission_logprob(hmm, path[0], &sentences[0]).unwrap();
    for i in 1..path.len() {
        score += hmm.transition_logprob(path[i - 1], path[i])
            + sentence_emission_logprob(hmm, path[i], &sentences[i]).unwrap();
    }
    score
}

fn tau_oracle(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_x, mut ties_y) = (0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = xs[i] - xs[j];
            let dy = ys[i] - ys[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                ties_x += 1;
            } else if dy == 0.0 {
                ties_y += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let denom_x = (concordant + discordant + ties_x) as f64;
    let denom_y = (concordant + discordant + ties_y) as f64;
    if denom_x == 0.0 || denom_y == 0.0 {
        return None;
    }
    Some((concordant - discordant) as f64 / (denom_x * denom_y).sqrt())
}

const ROUGE_POOL: [&str; 12] = [
    "cats", "running", "ran", "the", "a", "storms", "storm", "gale", "12", "kept", "keeping",
    "quickly",
];

fn rouge_oracle_tokens(text: &str, stem: bool) -> Vec<String> {
    let Ok(sentences) = segment_and_tokenize(text) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for s in sentences {
        for t in &s.tokens {
            if t.lower.chars().any(|c| c.is_alphanumeric()) {
                out.push(if stem { porter_stem(&t.lower) } else { t.lower.clone() });
            }
        }
    }
    out
}

fn rouge_oracle(candidate: &str, reference: &str, n: usize, stem: bool) -> (f64, f64, f64) {
    let alpha = 0.5;
    let cand = rouge_oracle_tokens(candidate, stem);
    let refr = rouge_oracle_tokens(reference, stem);
    let grams = |tokens: &[String]| -> Vec<Vec<String>> {
        if tokens.len() < n {
            return Vec::new();
        }
        tokens.windows(n).map(|w| w.to_vec()).collect()
    };
    let c = grams(&cand);
    let r = grams(&refr);
    if c.is_empty() || r.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mut matches = 0usize;
    let mut counted: Vec<&Vec<String>> = Vec::new();
    for g in &c {
        if counted.contains(&g) {
            continue;
        }
        counted.push(g);
        let in_c = c.iter().filter(|x| *x == g).count();
        let in_r = r.iter().filter(|x| *x == g).count();
        matches += in_c.min(in_r);
    }
    let p = matches as f64 / c.len() as f64;
    let rec = matches as f64 / r.len() as f64;
    let f = if matches == 0 {
        0.0
    } else {
        (p * rec) / (alpha * rec + (1.0 - alpha) * p)
    };
    (p, rec, f)
}

fn artifact_paths(cfg: &PipelineConfig) -> Vec<PathBuf> {
    let mut paths = Vec::new();
    for split in SplitName::ALL {
        paths.push(cfg.split_path(split));
        paths.push(cfg.oracle_path(split));
    }
    paths.push(cfg.content_model_path());
    paths.push(cfg.importance_path());
    paths.push(cfg.model_path());
    for system in [SystemKind::NextSum, SystemKind::NextSumL, SystemKind::Lead] {
        paths.push(cfg.summaries_path(system));
        paths.push(cfg.eval_path(system));
    }
    paths.push(cfg.report_path());
    paths
}

#[test]
fn acceptance() {
    let mut card = Scorecard::default();

    let dir_a = tempfile::tempdir().expect("tempdir");
    let run = run_pipeline(dir_a.path());

    // A1: trained next-sentence selection beats chance by a wide margin on
    // the planted corpus, within the wall-clock budget.
    let ns = run
        .ev_nextsum
        .next_sentence
        .as_ref()
        .expect("model-backed eval reports next-sentence accuracy");
    let splits_ok = run.ingest
        == IngestReport {
            train: 500,
            dev: 60,
            test: 60,
        };
    card.record(
        "A1",
        splits_ok && ns.one_of_k_accuracy >= 0.30 && run.elapsed < WALL_CLOCK_LIMIT,
        format!(
            "test 1-of-11 accuracy {:.3} (floor 0.300), split {}/{}/{}, pipeline {:.1}s (limit {}s)",
            ns.one_of_k_accuracy,
            run.ingest.train,
            run.ingest.dev,
            run.ingest.test,
            run.elapsed.as_secs_f64(),
            WALL_CLOCK_LIMIT.as_secs(),
        ),
    );

    // A2: content selection, not position, drives the planted summaries, so
    // the trained system must clear the lead baseline comfortably.
    let margin = run.ev_nextsum.rouge_2.f_score - run.ev_lead.rouge_2.f_score;
    card.record(
        "A2",
        margin >= 0.05,
        format!(
            "rouge-2 F {:.3} vs lead {:.3} at {} words (margin {:+.3}, floor +0.050)",
            run.ev_nextsum.rouge_2.f_score, run.ev_lead.rouge_2.f_score, run.lead_len, margin
        ),
    );

    // A3: generated lengths track the reference lengths.
    let tau = run.ev_nextsum.lengths.tau_vs_abstracts;
    card.record(
        "A3",
        tau.is_some_and(|t| t > 0.2),
        match tau {
            Some(t) => format!("length tau-b {t:.3} (floor 0.200) over {} pairs", run.ev_nextsum.summaries),
            None => "length tau-b undefined (a side was constant)".into(),
        },
    );

    // A4: decoding equals exhaustive path enumeration.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA4);
        let mut max_diff = 0.0f64;
        let mut assignment_matches = 0usize;
        let mut tie_fallbacks = 0usize;
        let instances = 500;
        for _ in 0..instances {
            let hmm = random_hmm(&mut rng);
            let sentences = random_sentences(&mut rng);
            let decode = viterbi_decode(&hmm, &sentences).expect("decode");

            let t = hmm.num_topics();
            let n = sentences.len();
            let mut best = f64::NEG_INFINITY;
            let mut runner_up = f64::NEG_INFINITY;
            let mut argmax: Vec<usize> = Vec::new();
            for code in 0..t.pow(n as u32) {
                let mut c = code;
                let path: Vec<usize> = (0..n)
                    .map(|_| {
                        let topic = c % t;
                        c /= t;
                        topic
                    })
                    .collect();
                let score = path_score(&hmm, &sentences, &path);
                if score > best {
                    runner_up = best;
                    best = score;
                    argmax = path;
                } else if score > runner_up {
                    runner_up = score;
                }
            }

            max_diff = max_diff.max((decode.logprob - best).abs());
            if best - runner_up > 1e-9 {
                if decode.assignment == argmax {
                    assignment_matches += 1;
                }
            } else {
                tie_fallbacks += 1;
                let returned = path_score(&hmm, &sentences, &decode.assignment);
                if (returned - best).abs() < 1e-9 {
                    assignment_matches += 1;
                }
            }
        }
        card.record(
            "A4",
            max_diff < 1e-9 && assignment_matches == instances,
            format!(
                "{assignment_matches}/{instances} assignments agree with enumeration \
                 ({tie_fallbacks} score-level ties), max log-prob gap {max_diff:.2e} (limit 1e-9)"
            ),
        );
    }

    // A5: analytic gradients equal central finite differences. The loss has
    // relu kinks, where a difference quotient does not estimate the one-sided
    // gradient; a case whose stencil straddles a kink (the two step sizes
    // disagree) is redrawn rather than compared.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA5);
        let mut max_rel = 0.0f64;
        let nets = 100;
        let mut clean = 0usize;
        let mut redraws = 0usize;
        let mut attempt = 0u64;
        while clean < nets {
            attempt += 1;
            assert!(attempt <= 300, "kink redraws should be rare");
            let input_dim = rng.gen_range(1..=6);
            let mut dims = vec![input_dim];
            for _ in 0..rng.gen_range(1..=2) {
                dims.push(rng.gen_range(1..=8));
            }
            dims.push(1);
            let mut net = Mlp64::new_seeded(&dims, 7000 + attempt).expect("net");
            // Fresh nets have all-zero biases, so a dead layer feeds exact
            // zeros forward and parks downstream units exactly on the relu
            // kink, where a symmetric difference quotient reports half the
            // one-sided slope at every step size. Continuous jitter on every
            // parameter keeps the probe away from that measure-zero set.
            let jittered: Vec<f64> =
                net.parameters().iter().map(|p| p + rng.gen_range(-0.3..0.3)).collect();
            net.set_parameters(&jittered).expect("params");

            let batch_rows: Vec<(Vec<f64>, f64)> = (0..rng.gen_range(1..=4))
                .map(|_| {
                    let x: Vec<f64> = (0..input_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
                    let label = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
                    (x, label)
                })
                .collect();
            let batch: Vec<(&[f64], f64)> =
                batch_rows.iter().map(|(x, y)| (x.as_slice(), *y)).collect();

            let (_, grad) = net.loss_and_grad(&batch).expect("gradient");
            let params = net.parameters();
            let loss_at = |j: usize, step: f64| {
                let mut shifted = params.clone();
                shifted[j] += step;
                let mut probe = net.clone();
                probe.set_parameters(&shifted).expect("params");
                probe.loss_and_grad(&batch).expect("loss").0
            };

            let h = 1e-6;
            let mut case_max = 0.0f64;
            let mut kinked = false;
            for (j, &g) in grad.iter().enumerate() {
                let fd = (loss_at(j, h) - loss_at(j, -h)) / (2.0 * h);
                let fd_half = (loss_at(j, h / 2.0) - loss_at(j, -h / 2.0)) / h;
                if (fd - fd_half).abs() > 1e-6 * fd.abs().max(1.0) {
                    kinked = true;
                    break;
                }
                case_max = case_max.max((g - fd).abs() / g.abs().max(fd.abs()).max(1e-2));
            }
            if kinked {
                redraws += 1;
                continue;
            }
            clean += 1;
            max_rel = max_rel.max(case_max);
        }
        card.record(
            "A5",
            max_rel < 1e-4,
            format!(
                "{nets} nets ({redraws} redrawn at kinks), \
                 max gradient relative error {max_rel:.2e} (limit 1e-4)"
            ),
        );
    }

    // A6: overlap scoring equals brute-force clipped n-gram counting.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA6);
        let mut max_diff = 0.0f64;
        let pairs = 200;
        let mut comparisons = 0usize;
        for _ in 0..pairs {
            let draw = |rng: &mut ChaCha8Rng, min_len: usize| -> String {
                let len = rng.gen_range(min_len..12);
                let words: Vec<&str> =
                    (0..len).map(|_| ROUGE_POOL[rng.gen_range(0..ROUGE_POOL.len())]).collect();
                if words.is_empty() {
                    String::new()
                } else {
                    format!("{}.", words.join(" "))
                }
            };
            let candidate = draw(&mut rng, 0);
            let reference = draw(&mut rng, 1);
            for n in [1, 2] {
                for stem in [false, true] {
                    let (p, r, f) = rouge_oracle(&candidate, &reference, n, stem);
                    let got = rouge_n(&candidate, &reference, n, stem, 0.5).expect("rouge");
                    max_diff = max_diff
                        .max((got.precision - p).abs())
                        .max((got.recall - r).abs())
                        .max((got.f_score - f).abs());
                    comparisons += 1;
                }
            }
        }
        card.record(
            "A6",
            max_diff < 1e-12,
            format!(
                "{pairs} text pairs x {} settings, max score gap {max_diff:.2e} (limit 1e-12)",
                comparisons / pairs
            ),
        );
    }

    // A7: rank correlation equals the quadratic pair-count definition.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA7);
        let mut max_diff = 0.0f64;
        let mut counted = 0usize;
        let mut draws = 0usize;
        while counted < 200 {
            draws += 1;
            assert!(draws < 10_000, "degenerate draws should be rare");
            let len = rng.gen_range(2..40);
            let xs: Vec<f64> = (0..len).map(|_| rng.gen_range(-3i32..4) as f64).collect();
            let ys: Vec<f64> = (0..len).map(|_| rng.gen_range(-3i32..4) as f64).collect();
            match tau_oracle(&xs, &ys) {
                Some(expected) => {
                    let got = kendall_tau_b(&xs, &ys).expect("tau");
                    max_diff = max_diff.max((got - expected).abs());
                    counted += 1;
                }
                None => {
                    assert!(kendall_tau_b(&xs, &ys).is_err(), "constant input must error");
                }
            }
        }
        card.record(
            "A7",
            max_diff < 1e-12,
            format!("{counted} tied vectors, max tau gap {max_diff:.2e} (limit 1e-12)"),
        );
    }

    // A8: similarity alignment recovers every planted extract index.
    {
        let pairs =
            load_corpus(&run.cfg.paths.corpus, CorpusFormat::JsonLines).expect("corpus");
        let planted = load_planted(&sidecar_path(&run.cfg.paths.corpus)).expect("sidecar");
        let gold_by_id: BTreeMap<&str, &Vec<usize>> =
            planted.iter().map(|p| (p.id.as_str(), &p.gold)).collect();
        let mut total = 0usize;
        let mut matched = 0usize;
        for pair in &pairs {
            let got = align(&pair.abstract_summary, &pair.article).expect("align");
            let want = gold_by_id[pair.article.id.as_str()];
            total += want.len();
            matched += got
                .indices
                .iter()
                .zip(want.iter())
                .filter(|(a, b)| a == b)
                .count();
        }
        card.record(
            "A8",
            total > 0 && matched == total,
            format!(
                "{matched}/{total} abstract sentences aligned to their planted source ({} pairs)",
                pairs.len()
            ),
        );
    }

    // A9: generation always terminates with a well-formed selection, under
    // trained and stub models alike, and the word cap truncates exactly.
    {
        let test_pairs = load_corpus(&run.cfg.split_path(SplitName::Test), CorpusFormat::JsonLines)
            .expect("test split");
        let articles: BTreeMap<&str, &Article> = test_pairs
            .iter()
            .map(|p| (p.article.id.as_str(), &p.article))
            .collect();

        let mut checked = 0usize;
        let mut truncated = 0usize;
        let mut violations: Vec<String> = Vec::new();
        let mut inspect = |s: &GeneratedSummary, m: usize, cap: Option<usize>| {
            checked += 1;
            if s.reason == Termination::LengthCap {
                truncated += 1;
            }
            if let Some(v) = summary_violation(s, m, cap) {
                violations.push(v);
            }
        };

        for s in &run.nextsum {
            inspect(s, articles[s.id.as_str()].sentences.len(), None);
        }
        for s in &run.nextsum_l {
            inspect(s, articles[s.id.as_str()].sentences.len(), Some(run.lead_len));
        }

        let table = EmbeddingTable::fallback_only(run.cfg.features.embed_dim);
        let extractor = extractor_for(&run, &table);
        let dim = run.model.manifest.total_dim;
        let identity = Normalizer::identity(dim);
        let stub_articles: Vec<&Article> =
            test_pairs.iter().take(20).map(|p| &p.article).collect();

        let zeroed = Mlp64::zeroed(&[dim, 1]).expect("stub net");
        for article in &stub_articles {
            let s = generate(&zeroed, &identity, &extractor, article, run.cfg.window)
                .expect("stub generation");
            inspect(&s, article.sentences.len(), None);
        }
        for (i, article) in stub_articles.iter().enumerate() {
            let net = Mlp64::new_seeded(&[dim, 8, 1], 9000 + i as u64).expect("stub net");
            let cap = 15;
            let s = generate_with_limit(&net, &identity, &extractor, article, run.cfg.window, cap)
                .expect("stub generation");
            inspect(&s, article.sentences.len(), Some(cap));
        }

        card.record(
            "A9",
            checked >= 100 && violations.is_empty(),
            if violations.is_empty() {
                format!(
                    "{checked} summaries (floor 100) all selected strictly increasing in-range \
                     indices; {truncated} hit the cap at exactly its word count"
                )
            } else {
                format!("{} violations, first: {}", violations.len(), violations[0])
            },
        );
    }

    // A10: the whole pipeline is a pure function of corpus and seeds.
    {
        let dir_b = tempfile::tempdir().expect("tempdir");
        let rerun = run_pipeline(dir_b.path());
        let mut differing: Vec<String> = Vec::new();
        let paths_a = artifact_paths(&run.cfg);
        let paths_b = artifact_paths(&rerun.cfg);
        for (a, b) in paths_a.iter().zip(paths_b.iter()) {
            let bytes_a = fs::read(a).expect("first-run artifact");
            let bytes_b = fs::read(b).expect("second-run artifact");
            if bytes_a != bytes_b {
                differing.push(a.file_name().unwrap().to_string_lossy().into_owned());
            }
        }
        card.record(
            "A10",
            differing.is_empty(),
            if differing.is_empty() {
                format!(
                    "independent rerun reproduced all {} artifacts byte for byte",
                    paths_a.len()
                )
            } else {
                format!("artifacts differ between reruns: {}", differing.join(", "))
            },
        );
    }

    // A11: widening the candidate window reaches more gold timesteps.
    {
        let train_pairs = load_corpus(&run.cfg.split_path(SplitName::Train), CorpusFormat::JsonLines)
            .expect("train split");
        let gold = read_gold(&run.cfg.oracle_path(SplitName::Train));
        let gold_by_id: BTreeMap<&str, &ExtractiveGold> =
            gold.iter().map(|g| (g.id.as_str(), g)).collect();
        let pairs: Vec<(&Article, &ExtractiveGold)> = train_pairs
            .iter()
            .map(|p| (&p.article, gold_by_id[p.article.id.as_str()]))
            .collect();

        let table = EmbeddingTable::fallback_only(run.cfg.features.embed_dim);
        let extractor = extractor_for(&run, &table);
        let coverage_at = |window: usize| {
            let opts = TrainingSetOptions {
                window,
                seed: run.cfg.predictor.seed,
                all_negatives: false,
            };
            build_training_set(&extractor, &pairs, &opts)
                .expect("training set")
                .1
                .coverage()
        };
        let narrow = coverage_at(5);
        let wide = coverage_at(10);
        card.record(
            "A11",
            wide > narrow,
            format!("gold-in-window coverage {wide:.3} at K=10 vs {narrow:.3} at K=5"),
        );
    }

    assert!(
        card.failed.is_empty(),
        "failed criteria: {}",
        card.failed.join(", ")
    );
}
