//! Next-sentence prediction: candidate-set construction around the partial
//! summary, balanced training-set assembly from gold extracts, the training
//! loop (Adam, early stopping on dev 1-of-K accuracy), and argmax selection
//! with deterministic tie rules.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::ExtractiveGold;
use crate::corpus::Article;
use crate::error::{Error, Result};
use crate::features::{ArticleContext, Candidate, FeatureExtractor, Normalizer};
use crate::mlp::{AdamParams, AdamState};
use crate::Mlp64;

/// Default candidate window size K.
pub const DEFAULT_WINDOW: usize = 10;

/// Ordered selection state of a summary under construction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryState {
    selected: Vec<usize>,
    words: usize,
    terminated: bool,
}

impl SummaryState {
    pub fn new() -> SummaryState {
        SummaryState::default()
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn last(&self) -> Option<usize> {
        self.selected.last().copied()
    }

    pub fn word_count(&self) -> usize {
        self.words
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    /// Appends a sentence. Duplicate selections and selections after
    /// termination are rejected; out-of-order histories are allowed because
    /// oracle gold sequences may revisit earlier parts of the article.
    pub fn push(&mut self, index: usize, words: usize) -> Result<()> {
        if self.terminated {
            return Err(Error::invalid("summary is already terminated"));
        }
        if self.selected.contains(&index) {
            return Err(Error::invalid(format!(
                "sentence {index} is already in the summary"
            )));
        }
        self.selected.push(index);
        self.words += words;
        Ok(())
    }

    pub fn terminate(&mut self) {
        self.terminated = true;
    }
}

/// How a candidate entered the set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub index: usize,
    pub sampled: bool,
}

/// One timestep's candidates: the window (and, in training, sampled fill),
/// with the end-of-summary marker always implied as the final candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub timestep: usize,
    pub entries: Vec<CandidateEntry>,
}

impl CandidateSet {
    /// All candidates in order: window, sampled fill, then EOS.
    pub fn candidates(&self) -> Vec<Candidate> {
        let mut out: Vec<Candidate> = self
            .entries
            .iter()
            .map(|e| Candidate::Sentence(e.index))
            .collect();
        out.push(Candidate::Eos);
        out
    }

    /// Set size including the EOS entry.
    pub fn size(&self) -> usize {
        self.entries.len() + 1
    }

    pub fn window_contains(&self, index: usize) -> bool {
        self.entries.iter().any(|e| !e.sampled && e.index == index)
    }
}

/// Candidate-set construction mode. Training fills a short window with
/// seeded uniform samples of unselected non-gold sentences; inference never
/// pads, so generation stays deterministic.
#[derive(Debug, Clone, Copy)]
pub enum CandidateMode<'a> {
    Train { gold: &'a [usize], seed: u64 },
    Infer,
}

/// The next `k` unselected sentences after the last selected index (from the
/// top of the article when the summary is empty), plus mode-specific fill.
pub fn build_candidate_set(
    article: &Article,
    state: &SummaryState,
    k: usize,
    mode: CandidateMode,
) -> Result<CandidateSet> {
    if state.terminated() {
        return Err(Error::invalid(
            "cannot build candidates for a terminated summary",
        ));
    }
    if k == 0 {
        return Err(Error::invalid("window size must be at least 1"));
    }
    let m = article.num_sentences();
    let start = state.last().map_or(0, |last| last + 1);
    let mut entries: Vec<CandidateEntry> = (start..m)
        .filter(|i| !state.selected().contains(i))
        .take(k)
        .map(|index| CandidateEntry {
            index,
            sampled: false,
        })
        .collect();

    if let CandidateMode::Train { gold, seed } = mode {
        if entries.len() < k {
            let mut pool: Vec<usize> = (0..m)
                .filter(|i| {
                    !state.selected().contains(i)
                        && !gold.contains(i)
                        && !entries.iter().any(|e| e.index == *i)
                })
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let needed = k - entries.len();
            for _ in 0..needed.min(pool.len()) {
                let pick = rng.gen_range(0..pool.len());
                entries.push(CandidateEntry {
                    index: pool.swap_remove(pick),
                    sampled: true,
                });
            }
        }
    }

    Ok(CandidateSet {
        timestep: state.len() + 1,
        entries,
    })
}

/// One labeled feature vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingExample {
    pub features: Vec<f64>,
    pub label: f64,
}

/// How often gold targets were reachable through the candidate window.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WindowCoverage {
    /// Gold timesteps with a sentence target (EOS steps excluded).
    pub sentence_timesteps: usize,
    /// Timesteps whose gold sentence fell outside the window.
    pub skipped_timesteps: usize,
    /// Timesteps dropped because the gold sentence was already selected.
    pub duplicate_timesteps: usize,
}

impl WindowCoverage {
    /// Fraction of sentence timesteps whose gold was inside the window.
    pub fn coverage(&self) -> f64 {
        if self.sentence_timesteps == 0 {
            return 1.0;
        }
        1.0 - self.skipped_timesteps as f64 / self.sentence_timesteps as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSetOptions {
    pub window: usize,
    pub seed: u64,
    /// Use every non-gold candidate as a negative instead of sampling one.
    pub all_negatives: bool,
}

impl Default for TrainingSetOptions {
    fn default() -> Self {
        TrainingSetOptions {
            window: DEFAULT_WINDOW,
            seed: 0,
            all_negatives: false,
        }
    }
}

fn step_seed(base: u64, article_index: usize, timestep: usize) -> u64 {
    base.wrapping_add((article_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((timestep as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
}

/// Walks the oracle timesteps of one gold sequence: at each step the
/// candidate set is built from the gold history so far, the callback sees
/// the set plus the gold target, and the history then advances. The final
/// step's target is always EOS.
fn walk_gold_timesteps<F>(
    article: &Article,
    gold: &ExtractiveGold,
    article_index: usize,
    opts: &TrainingSetOptions,
    coverage: &mut WindowCoverage,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(&SummaryState, &CandidateSet, Candidate) -> Result<()>,
{
    let mut state = SummaryState::new();
    let m = article.num_sentences();
    for (t, &gold_index) in gold.indices.iter().enumerate() {
        if gold_index >= m {
            return Err(Error::invalid(format!(
                "gold index {gold_index} out of range for article {}",
                article.id
            )));
        }
        if state.selected().contains(&gold_index) {
            coverage.duplicate_timesteps += 1;
            continue;
        }
        coverage.sentence_timesteps += 1;
        let set = build_candidate_set(
            article,
            &state,
            opts.window,
            CandidateMode::Train {
                gold: &gold.indices,
                seed: step_seed(opts.seed, article_index, t),
            },
        )?;
        if set.window_contains(gold_index) {
            visit(&state, &set, Candidate::Sentence(gold_index))?;
        } else {
            coverage.skipped_timesteps += 1;
        }
        state.push(gold_index, article.sentences[gold_index].len())?;
    }
    let set = build_candidate_set(
        article,
        &state,
        opts.window,
        CandidateMode::Train {
            gold: &gold.indices,
            seed: step_seed(opts.seed, article_index, gold.indices.len()),
        },
    )?;
    visit(&state, &set, Candidate::Eos)
}

/// Builds labeled examples from gold extracts: at every reachable timestep
/// one positive (the gold candidate) and either one seeded uniform negative
/// or, with `all_negatives`, every other candidate in the set.
pub fn build_training_set(
    extractor: &FeatureExtractor,
    pairs: &[(&Article, &ExtractiveGold)],
    opts: &TrainingSetOptions,
) -> Result<(Vec<TrainingExample>, WindowCoverage)> {
    let mut examples = Vec::new();
    let mut coverage = WindowCoverage::default();
    for (article_index, (article, gold)) in pairs.iter().enumerate() {
        let ctx = extractor.article_context(article)?;
        let mut neg_rng = ChaCha8Rng::seed_from_u64(step_seed(
            opts.seed.wrapping_add(0x5EED),
            article_index,
            0,
        ));
        walk_gold_timesteps(
            article,
            gold,
            article_index,
            opts,
            &mut coverage,
            |state, set, gold_candidate| {
                let candidates = set.candidates();
                let vectors = extractor.featurize_set(&ctx, state, &candidates)?;
                let gold_pos = candidates
                    .iter()
                    .position(|&c| c == gold_candidate)
                    .expect("gold candidate is in its own set");
                examples.push(TrainingExample {
                    features: vectors[gold_pos].clone(),
                    label: 1.0,
                });
                if opts.all_negatives {
                    for (i, v) in vectors.iter().enumerate() {
                        if i != gold_pos {
                            examples.push(TrainingExample {
                                features: v.clone(),
                                label: 0.0,
                            });
                        }
                    }
                } else if candidates.len() > 1 {
                    let mut pick = neg_rng.gen_range(0..candidates.len() - 1);
                    if pick >= gold_pos {
                        pick += 1;
                    }
                    examples.push(TrainingExample {
                        features: vectors[pick].clone(),
                        label: 0.0,
                    });
                }
                Ok(())
            },
        )?;
    }
    Ok((examples, coverage))
}

/// One dev-set decision problem: all candidate vectors of a timestep plus
/// which one is gold.
#[derive(Debug, Clone)]
pub struct DevGroup {
    pub candidates: Vec<Candidate>,
    pub vectors: Vec<Vec<f64>>,
    pub gold_pos: usize,
}

/// Featurizes dev pairs into 1-of-K decision groups under the same candidate
/// protocol as training.
pub fn build_dev_groups(
    extractor: &FeatureExtractor,
    pairs: &[(&Article, &ExtractiveGold)],
    opts: &TrainingSetOptions,
) -> Result<(Vec<DevGroup>, WindowCoverage)> {
    let mut groups = Vec::new();
    let mut coverage = WindowCoverage::default();
    for (article_index, (article, gold)) in pairs.iter().enumerate() {
        let ctx = extractor.article_context(article)?;
        walk_gold_timesteps(
            article,
            gold,
            article_index,
            opts,
            &mut coverage,
            |state, set, gold_candidate| {
                let candidates = set.candidates();
                let vectors = extractor.featurize_set(&ctx, state, &candidates)?;
                let gold_pos = candidates
                    .iter()
                    .position(|&c| c == gold_candidate)
                    .expect("gold candidate is in its own set");
                groups.push(DevGroup {
                    candidates,
                    vectors,
                    gold_pos,
                });
                Ok(())
            },
        )?;
    }
    Ok((groups, coverage))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden_dims: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs without a dev-accuracy improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dims: vec![800, 800, 800, 800],
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 75,
            batch_size: 64,
            seed: 0,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
    pub epoch_losses: Vec<f64>,
    pub dev_accuracies: Vec<f64>,
}

#[derive(Debug)]
pub struct TrainedPredictor {
    pub net: Mlp64,
    pub normalizer: Normalizer,
    pub metrics: TrainMetrics,
}

/// Picks the argmax-probability candidate. Exact ties go to the earlier
/// source sentence, and any real sentence beats EOS.
pub fn argmax_candidate(scored: &[(Candidate, f64)]) -> Result<Candidate> {
    let mut best: Option<(Candidate, f64)> = None;
    for &(cand, p) in scored {
        let wins = match best {
            None => true,
            Some((bc, bp)) => {
                if p != bp {
                    p > bp
                } else {
                    match (cand, bc) {
                        (Candidate::Sentence(a), Candidate::Sentence(b)) => a < b,
                        (Candidate::Sentence(_), Candidate::Eos) => true,
                        _ => false,
                    }
                }
            }
        };
        if wins {
            best = Some((cand, p));
        }
    }
    best.map(|(c, _)| c)
        .ok_or_else(|| Error::invalid("cannot select from an empty candidate set"))
}

/// Scores every candidate in the set; order matches `set.candidates()`.
pub fn score_candidates(
    net: &Mlp64,
    normalizer: &Normalizer,
    extractor: &FeatureExtractor,
    ctx: &ArticleContext,
    state: &SummaryState,
    set: &CandidateSet,
) -> Result<Vec<(Candidate, f64)>> {
    let candidates = set.candidates();
    let vectors = extractor.featurize_set(ctx, state, &candidates)?;
    let mut scored = Vec::with_capacity(candidates.len());
    for (cand, mut v) in candidates.into_iter().zip(vectors) {
        normalizer.apply(&mut v)?;
        scored.push((cand, net.forward(&v)?));
    }
    Ok(scored)
}

/// The argmax next-sentence decision for one timestep.
pub fn predict_next(
    net: &Mlp64,
    normalizer: &Normalizer,
    extractor: &FeatureExtractor,
    ctx: &ArticleContext,
    state: &SummaryState,
    set: &CandidateSet,
) -> Result<Candidate> {
    argmax_candidate(&score_candidates(
        net, normalizer, extractor, ctx, state, set,
    )?)
}

fn dev_accuracy(net: &Mlp64, groups: &[DevGroup]) -> Result<f64> {
    if groups.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for group in groups {
        let mut scored = Vec::with_capacity(group.candidates.len());
        for (cand, v) in group.candidates.iter().zip(&group.vectors) {
            scored.push((*cand, net.forward(v)?));
        }
        if argmax_candidate(&scored)? == group.candidates[group.gold_pos] {
            correct += 1;
        }
    }
    Ok(correct as f64 / groups.len() as f64)
}

/// Trains the classifier with mini-batch Adam, fitting the normalizer on the
/// training vectors and early-stopping on dev 1-of-K accuracy. The returned
/// network is the best dev snapshot.
pub fn train(
    examples: &[TrainingExample],
    dev_groups: &[DevGroup],
    config: &TrainConfig,
) -> Result<TrainedPredictor> {
    if examples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if config.hidden_dims.is_empty() {
        return Err(Error::invalid("network needs at least one hidden layer"));
    }
    if config.batch_size == 0 || config.max_epochs == 0 {
        return Err(Error::invalid("batch size and max epochs must be positive"));
    }
    let dim = examples[0].features.len();
    if examples.iter().any(|e| e.features.len() != dim) {
        return Err(Error::ManifestMismatch(
            "training vectors have inconsistent dimensions".into(),
        ));
    }

    let raw: Vec<Vec<f64>> = examples.iter().map(|e| e.features.clone()).collect();
    let normalizer = crate::features::fit_normalizer(&raw)?;
    let mut train_vectors = raw;
    for v in &mut train_vectors {
        normalizer.apply(v)?;
    }
    let labels: Vec<f64> = examples.iter().map(|e| e.label).collect();

    let mut dev_normalized: Vec<DevGroup> = dev_groups.to_vec();
    for group in &mut dev_normalized {
        for v in &mut group.vectors {
            normalizer.apply(v)?;
        }
    }

    let mut dims = vec![dim];
    dims.extend_from_slice(&config.hidden_dims);
    dims.push(1);
    let mut net = Mlp64::new_seeded(&dims, config.seed)?;
    let adam = AdamParams {
        learning_rate: config.learning_rate,
        beta1: config.beta1,
        beta2: config.beta2,
        epsilon: config.epsilon,
    };
    let mut adam_state = AdamState::new(net.parameter_count());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));

    let mut order: Vec<usize> = (0..train_vectors.len()).collect();
    let mut best_params = net.parameters();
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut epoch_losses = Vec::new();
    let mut dev_accuracies = Vec::new();

    for epoch in 0..config.max_epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk
                .iter()
                .map(|&i| (train_vectors[i].as_slice(), labels[i]))
                .collect();
            let (loss, grads) = net.loss_and_grad(&batch)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainDiverged(format!(
                    "non-finite loss or gradient at epoch {epoch} (loss {loss})"
                )));
            }
            net.adam_update(&grads, &mut adam_state, &adam);
            epoch_loss += loss;
            batches += 1;
        }
        epoch_losses.push(epoch_loss / batches as f64);

        let accuracy = dev_accuracy(&net, &dev_normalized)?;
        dev_accuracies.push(accuracy);
        if accuracy > best_accuracy {
            best_accuracy = accuracy;
            best_epoch = epoch;
            best_params = net.parameters();
        } else if !dev_normalized.is_empty() && epoch - best_epoch >= config.patience {
            break;
        }
    }
    if dev_normalized.is_empty() {
        // Without dev data there is nothing to snapshot against; keep the
        // final weights.
        best_params = net.parameters();
        best_accuracy = 0.0;
        best_epoch = epoch_losses.len().saturating_sub(1);
    }
    net.set_parameters(&best_params)?;

    Ok(TrainedPredictor {
        net,
        normalizer,
        metrics: TrainMetrics {
            epochs_run: epoch_losses.len(),
            best_epoch,
            best_dev_accuracy: best_accuracy.max(0.0),
            epoch_losses,
            dev_accuracies,
        },
    })
}
