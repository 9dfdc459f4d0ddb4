//! Domain content model: a hidden Markov model whose states are topics and
//! whose emissions are per-topic bigram language models over a shared
//! vocabulary. Provides Viterbi topic decoding, transition and emission
//! probabilities, and the per-sentence marginal used as a feature.
//!
//! Training is hard EM: a seeded k-medoids-style clustering of sentences
//! initializes the topic assignment, then Viterbi decoding and count-based
//! re-estimation alternate until the assignment stops changing.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Article, Sentence};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CONTENT_MODEL_VERSION: u32 = 1;

/// Rounds of medoid refinement during initialization.
const INIT_ROUNDS: usize = 4;

/// One bigram language model in natural-log space, stored sparsely: each
/// observed context keeps its observed targets plus a shared value for every
/// unobserved target; contexts never observed fall back to uniform.
///
/// Symbol ids are shared between contexts and targets: word ids in
/// `[0, num_words)`, UNK at `num_words`, and the boundary id `num_words + 1`
/// meaning START as a context and END as a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct EmissionLm<S: Scalar> {
    num_words: usize,
    contexts: BTreeMap<u32, ContextRow<S>>,
    log_uniform: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
struct ContextRow<S: Scalar> {
    seen: BTreeMap<u32, S>,
    unseen: S,
}

impl<S: Scalar> EmissionLm<S> {
    /// Builds a smoothed conditional table from raw bigram counts keyed by
    /// `(context id, target id)`. Targets range over words ∪ {UNK, END},
    /// so the distribution has `num_words + 2` outcomes per context.
    pub fn from_counts(
        num_words: usize,
        counts: &BTreeMap<(u32, u32), u64>,
        delta: f64,
    ) -> EmissionLm<S> {
        let num_targets = num_words + 2;
        let mut totals: BTreeMap<u32, u64> = BTreeMap::new();
        for (&(ctx, _), &c) in counts {
            *totals.entry(ctx).or_insert(0) += c;
        }
        let mut contexts = BTreeMap::new();
        for (&ctx, &total) in &totals {
            let denom = total as f64 + delta * num_targets as f64;
            let unseen = S::from_f64_lossy((delta / denom).ln());
            contexts.insert(
                ctx,
                ContextRow {
                    seen: BTreeMap::new(),
                    unseen,
                },
            );
        }
        for (&(ctx, tgt), &c) in counts {
            let total = totals[&ctx];
            let denom = total as f64 + delta * num_targets as f64;
            let lp = S::from_f64_lossy(((c as f64 + delta) / denom).ln());
            contexts
                .get_mut(&ctx)
                .expect("context row created above")
                .seen
                .insert(tgt, lp);
        }
        EmissionLm {
            num_words,
            contexts,
            log_uniform: S::from_f64_lossy(-(num_targets as f64).ln()),
        }
    }

    pub fn logprob(&self, context: u32, target: u32) -> S {
        match self.contexts.get(&context) {
            Some(row) => row.seen.get(&target).copied().unwrap_or(row.unseen),
            None => self.log_uniform,
        }
    }

    /// Log-probability of a full encoded sentence with boundary symbols.
    fn sentence_logprob(&self, ids: &[u32]) -> S {
        let boundary = (self.num_words + 1) as u32;
        let mut lp = S::zero();
        let mut context = boundary;
        for &id in ids {
            lp += self.logprob(context, id);
            context = id;
        }
        lp + self.logprob(context, boundary)
    }

    fn validate(&self) -> Result<()> {
        let num_targets = self.num_words + 2;
        for (ctx, row) in &self.contexts {
            let seen: f64 = row.seen.values().map(|lp| lp.to_f64_lossy().exp()).sum();
            let unseen =
                (num_targets - row.seen.len()) as f64 * row.unseen.to_f64_lossy().exp();
            let total = seen + unseen;
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "emission row for context {ctx} sums to {total}"
                )));
            }
        }
        Ok(())
    }
}

/// Topic HMM over sentences. All stored probabilities are natural logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct ContentHmm<S: Scalar> {
    version: u32,
    num_topics: usize,
    vocab: Vec<String>,
    initial: Vec<S>,
    transitions: Vec<Vec<S>>,
    emissions: Vec<EmissionLm<S>>,
}

/// Viterbi output: one topic per sentence plus the path log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct TopicDecode<S: Scalar> {
    pub assignment: Vec<usize>,
    pub logprob: S,
}

impl<S: Scalar> ContentHmm<S> {
    /// Assembles a model from explicit parts; probabilities are natural (not
    /// log) and are validated for stochasticity before storing.
    pub fn from_probabilities(
        vocab: Vec<String>,
        initial: Vec<f64>,
        transitions: Vec<Vec<f64>>,
        emissions: Vec<EmissionLm<S>>,
    ) -> Result<ContentHmm<S>> {
        let num_topics = initial.len();
        if num_topics == 0 {
            return Err(Error::invalid("a content model needs at least one topic"));
        }
        if transitions.len() != num_topics || emissions.len() != num_topics {
            return Err(Error::invalid(
                "initial, transition, and emission sizes disagree",
            ));
        }
        if vocab.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("vocabulary must be sorted and unique"));
        }
        let model = ContentHmm {
            version: CONTENT_MODEL_VERSION,
            num_topics,
            vocab,
            initial: initial.iter().map(|&p| S::from_f64_lossy(p.ln())).collect(),
            transitions: transitions
                .iter()
                .map(|row| row.iter().map(|&p| S::from_f64_lossy(p.ln())).collect())
                .collect(),
            emissions,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn initial_logprob(&self, topic: usize) -> S {
        self.initial[topic]
    }

    pub fn transition_logprob(&self, from: usize, to: usize) -> S {
        self.transitions[from][to]
    }

    /// Every stochastic constraint, checked after training or loading.
    pub fn validate(&self) -> Result<()> {
        if self.initial.len() != self.num_topics
            || self.transitions.len() != self.num_topics
            || self.emissions.len() != self.num_topics
        {
            return Err(Error::invalid("model component sizes disagree"));
        }
        let sum_exp = |row: &[S]| -> f64 { row.iter().map(|lp| lp.to_f64_lossy().exp()).sum() };
        let initial_sum = sum_exp(&self.initial);
        if (initial_sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "initial distribution sums to {initial_sum}"
            )));
        }
        for (k, row) in self.transitions.iter().enumerate() {
            if row.len() != self.num_topics {
                return Err(Error::invalid(format!("transition row {k} has wrong width")));
            }
            let s = sum_exp(row);
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("transition row {k} sums to {s}")));
            }
        }
        for (k, lm) in self.emissions.iter().enumerate() {
            if lm.num_words != self.vocab.len() {
                return Err(Error::invalid(format!(
                    "emission model {k} was built for a different vocabulary"
                )));
            }
            lm.validate()?;
        }
        Ok(())
    }

    /// Maps lower-cased tokens to symbol ids, with OOV words becoming UNK.
    fn encode(&self, sentence: &Sentence) -> Vec<u32> {
        let unk = self.vocab.len() as u32;
        sentence
            .lower_tokens()
            .map(|w| match self.vocab.binary_search_by(|v| v.as_str().cmp(w)) {
                Ok(i) => i as u32,
                Err(_) => unk,
            })
            .collect()
    }

    fn emission_logprob_ids(&self, topic: usize, ids: &[u32]) -> S {
        self.emissions[topic].sentence_logprob(ids)
    }

    fn viterbi_ids(&self, encoded: &[Vec<u32>]) -> TopicDecode<S> {
        let t = self.num_topics;
        let n = encoded.len();
        let emit: Vec<Vec<S>> = encoded
            .iter()
            .map(|ids| (0..t).map(|k| self.emission_logprob_ids(k, ids)).collect())
            .collect();

        let mut delta = vec![vec![S::zero(); t]; n];
        let mut back = vec![vec![0usize; t]; n];
        for k in 0..t {
            delta[0][k] = self.initial[k] + emit[0][k];
        }
        for i in 1..n {
            for k in 0..t {
                let mut best_j = 0usize;
                let mut best = delta[i - 1][0] + self.transitions[0][k];
                for j in 1..t {
                    let score = delta[i - 1][j] + self.transitions[j][k];
                    if score > best {
                        best = score;
                        best_j = j;
                    }
                }
                delta[i][k] = best + emit[i][k];
                back[i][k] = best_j;
            }
        }

        let mut last = 0usize;
        let mut best = delta[n - 1][0];
        for k in 1..t {
            if delta[n - 1][k] > best {
                best = delta[n - 1][k];
                last = k;
            }
        }
        let mut assignment = vec![0usize; n];
        assignment[n - 1] = last;
        for i in (1..n).rev() {
            assignment[i - 1] = back[i][assignment[i]];
        }
        TopicDecode {
            assignment,
            logprob: best,
        }
    }
}

/// Log P(sentence | topic) under the topic's bigram LM, with START/END
/// boundary symbols and OOV words mapped to UNK. Always finite.
pub fn sentence_emission_logprob<S: Scalar>(
    hmm: &ContentHmm<S>,
    topic: usize,
    sentence: &Sentence,
) -> Result<S> {
    if sentence.is_empty() {
        return Err(Error::invalid("emission of an empty sentence is undefined"));
    }
    if topic >= hmm.num_topics {
        return Err(Error::invalid(format!(
            "topic {topic} out of range for a {}-topic model",
            hmm.num_topics
        )));
    }
    Ok(hmm.emission_logprob_ids(topic, &hmm.encode(sentence)))
}

/// Most likely topic sequence; ties break toward the lower topic index at
/// every backpointer and at the final state.
pub fn viterbi_decode<S: Scalar>(hmm: &ContentHmm<S>, sentences: &[Sentence]) -> Result<TopicDecode<S>> {
    if sentences.is_empty() {
        return Err(Error::invalid("cannot decode an empty sentence sequence"));
    }
    if sentences.iter().any(|s| s.is_empty()) {
        return Err(Error::invalid("cannot decode an empty sentence"));
    }
    let encoded: Vec<Vec<u32>> = sentences.iter().map(|s| hmm.encode(s)).collect();
    Ok(hmm.viterbi_ids(&encoded))
}

/// Log P(s) = logsumexp over topics of the per-topic emission log-prob.
pub fn sentence_marginal_log<S: Scalar>(hmm: &ContentHmm<S>, sentence: &Sentence) -> Result<S> {
    if sentence.is_empty() {
        return Err(Error::invalid("marginal of an empty sentence is undefined"));
    }
    let ids = hmm.encode(sentence);
    let logprobs: Vec<S> = (0..hmm.num_topics)
        .map(|k| hmm.emission_logprob_ids(k, &ids))
        .collect();
    let max = logprobs
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| a.max(b));
    let sum: S = logprobs.iter().map(|&lp| (lp - max).exp()).sum();
    Ok(max + sum.ln())
}

/// P(s) as a plain probability; underflows to 0 only for extremely long
/// sentences (use [`sentence_marginal_log`] where that matters).
pub fn sentence_marginal<S: Scalar>(hmm: &ContentHmm<S>, sentence: &Sentence) -> Result<S> {
    Ok(sentence_marginal_log(hmm, sentence)?.exp())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContentTrainOptions {
    pub num_topics: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub delta: f64,
    pub unk_cutoff: u64,
}

impl Default for ContentTrainOptions {
    fn default() -> Self {
        ContentTrainOptions {
            num_topics: 1,
            seed: 0,
            max_iters: 50,
            delta: 0.01,
            unk_cutoff: 2,
        }
    }
}

/// Training-set Viterbi log-likelihood after each hard-EM iteration, plus how
/// many sentences changed topic relative to the previous assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContentTrainIteration {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub reassigned: usize,
}

/// Per-candidate dev log-likelihood from [`select_num_topics`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicCandidateScore {
    pub num_topics: usize,
    pub dev_log_likelihood: f64,
}

struct SentenceVector {
    entries: Vec<(u32, f64)>,
    norm: f64,
}

fn cosine_sparse(a: &SentenceVector, b: &SentenceVector) -> f64 {
    let (mut i, mut j, mut dot) = (0usize, 0usize, 0.0f64);
    while i < a.entries.len() && j < b.entries.len() {
        match a.entries[i].0.cmp(&b.entries[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a.entries[i].1 * b.entries[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    dot / (a.norm * b.norm)
}

/// Seeded k-medoids-style clustering on unigram-count cosine distance:
/// a random first medoid, farthest-first completion, then a few rounds of
/// assignment and medoid refinement. Ties always resolve to lower indices.
fn cluster_sentences(vectors: &[SentenceVector], k: usize, seed: u64) -> Vec<usize> {
    let n = vectors.len();
    debug_assert!(k <= n);
    let dist = |a: usize, b: usize| 1.0 - cosine_sparse(&vectors[a], &vectors[b]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids = vec![rng.gen_range(0..n)];
    while medoids.len() < k {
        let mut far = (0usize, f64::NEG_INFINITY);
        for s in 0..n {
            if medoids.contains(&s) {
                continue;
            }
            let nearest = medoids
                .iter()
                .map(|&m| dist(s, m))
                .fold(f64::INFINITY, f64::min);
            if nearest > far.1 {
                far = (s, nearest);
            }
        }
        medoids.push(far.0);
    }

    let mut labels = vec![0usize; n];
    for _ in 0..INIT_ROUNDS {
        for s in 0..n {
            let mut best = (0usize, f64::INFINITY);
            for (c, &m) in medoids.iter().enumerate() {
                let d = dist(s, m);
                if d < best.1 {
                    best = (c, d);
                }
            }
            labels[s] = best.0;
        }
        for c in 0..k {
            if labels.iter().any(|&l| l == c) {
                continue;
            }
            let mut far = (0usize, f64::NEG_INFINITY);
            for s in 0..n {
                let d = dist(s, medoids[labels[s]]);
                if d > far.1 {
                    far = (s, d);
                }
            }
            labels[far.0] = c;
        }

        let mut changed = false;
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&s| labels[s] == c).collect();
            let mut best = (medoids[c], f64::INFINITY);
            for &cand in &members {
                let total: f64 = members.iter().map(|&m| dist(cand, m)).sum();
                if total < best.1 {
                    best = (cand, total);
                }
            }
            if best.0 != medoids[c] {
                medoids[c] = best.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    for s in 0..n {
        let mut best = (0usize, f64::INFINITY);
        for (c, &m) in medoids.iter().enumerate() {
            let d = dist(s, m);
            if d < best.1 {
                best = (c, d);
            }
        }
        labels[s] = best.0;
    }
    labels
}

fn estimate_model<S: Scalar>(
    vocab: &[String],
    encoded: &[Vec<Vec<u32>>],
    labels: &[Vec<usize>],
    num_topics: usize,
    delta: f64,
) -> ContentHmm<S> {
    let num_words = vocab.len();

    let mut first_counts = vec![0u64; num_topics];
    let mut trans_counts = vec![vec![0u64; num_topics]; num_topics];
    let mut bigram_counts: Vec<BTreeMap<(u32, u32), u64>> =
        vec![BTreeMap::new(); num_topics];
    let boundary = (num_words + 1) as u32;

    for (article, article_labels) in encoded.iter().zip(labels) {
        first_counts[article_labels[0]] += 1;
        for w in article_labels.windows(2) {
            trans_counts[w[0]][w[1]] += 1;
        }
        for (ids, &topic) in article.iter().zip(article_labels) {
            let counts = &mut bigram_counts[topic];
            let mut context = boundary;
            for &id in ids {
                *counts.entry((context, id)).or_insert(0) += 1;
                context = id;
            }
            *counts.entry((context, boundary)).or_insert(0) += 1;
        }
    }

    let n_articles = encoded.len() as f64;
    let initial: Vec<S> = first_counts
        .iter()
        .map(|&c| S::from_f64_lossy(((c as f64 + 1.0) / (n_articles + num_topics as f64)).ln()))
        .collect();
    let transitions: Vec<Vec<S>> = trans_counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter()
                .map(|&c| {
                    S::from_f64_lossy(
                        ((c as f64 + 1.0) / (total as f64 + num_topics as f64)).ln(),
                    )
                })
                .collect()
        })
        .collect();
    let emissions: Vec<EmissionLm<S>> = bigram_counts
        .iter()
        .map(|counts| EmissionLm::from_counts(num_words, counts, delta))
        .collect();

    ContentHmm {
        version: CONTENT_MODEL_VERSION,
        num_topics,
        vocab: vocab.to_vec(),
        initial,
        transitions,
        emissions,
    }
}

/// Hard-EM training. Returns the model and the per-iteration log-likelihood
/// trace; the trace is non-decreasing up to smoothing and tie-break effects.
pub fn train_content_model<S: Scalar>(
    articles: &[Article],
    opts: &ContentTrainOptions,
) -> Result<(ContentHmm<S>, Vec<ContentTrainIteration>)> {
    if opts.num_topics == 0 {
        return Err(Error::invalid("num_topics must be at least 1"));
    }
    if opts.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    if !(opts.delta > 0.0) {
        return Err(Error::invalid("smoothing delta must be positive"));
    }
    let total_sentences: usize = articles.iter().map(|a| a.sentences.len()).sum();
    if opts.num_topics > total_sentences {
        return Err(Error::invalid(format!(
            "{} topics requested but the corpus has only {total_sentences} sentences",
            opts.num_topics
        )));
    }

    let mut word_counts: BTreeMap<String, u64> = BTreeMap::new();
    for article in articles {
        for sentence in &article.sentences {
            for w in sentence.lower_tokens() {
                *word_counts.entry(w.to_string()).or_insert(0) += 1;
            }
        }
    }
    let vocab: Vec<String> = word_counts
        .into_iter()
        .filter(|(_, c)| *c >= opts.unk_cutoff)
        .map(|(w, _)| w)
        .collect();

    let probe = ContentHmm::<S> {
        version: CONTENT_MODEL_VERSION,
        num_topics: opts.num_topics,
        vocab: vocab.clone(),
        initial: vec![],
        transitions: vec![],
        emissions: vec![],
    };
    let encoded: Vec<Vec<Vec<u32>>> = articles
        .iter()
        .map(|a| a.sentences.iter().map(|s| probe.encode(s)).collect())
        .collect();

    let mut interner: BTreeMap<String, u32> = BTreeMap::new();
    let mut vectors = Vec::with_capacity(total_sentences);
    for article in articles {
        for sentence in &article.sentences {
            let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
            for w in sentence.lower_tokens() {
                let next = interner.len() as u32;
                let id = *interner.entry(w.to_string()).or_insert(next);
                *counts.entry(id).or_insert(0.0) += 1.0;
            }
            let entries: Vec<(u32, f64)> = counts.into_iter().collect();
            let norm = entries.iter().map(|(_, c)| c * c).sum::<f64>().sqrt();
            vectors.push(SentenceVector { entries, norm });
        }
    }
    let flat_labels = cluster_sentences(&vectors, opts.num_topics, opts.seed);
    let mut labels: Vec<Vec<usize>> = Vec::with_capacity(articles.len());
    let mut cursor = 0;
    for article in articles {
        let n = article.sentences.len();
        labels.push(flat_labels[cursor..cursor + n].to_vec());
        cursor += n;
    }

    let mut model = estimate_model::<S>(&vocab, &encoded, &labels, opts.num_topics, opts.delta);
    let mut history = Vec::new();
    for iteration in 0..opts.max_iters {
        let mut ll = 0.0f64;
        let mut decoded: Vec<Vec<usize>> = Vec::with_capacity(encoded.len());
        for article in &encoded {
            let decode = model.viterbi_ids(article);
            ll += decode.logprob.to_f64_lossy();
            decoded.push(decode.assignment);
        }
        let reassigned: usize = decoded
            .iter()
            .zip(&labels)
            .map(|(a, b)| a.iter().zip(b.iter()).filter(|(x, y)| x != y).count())
            .sum();
        history.push(ContentTrainIteration {
            iteration,
            log_likelihood: ll,
            reassigned,
        });
        if reassigned == 0 {
            break;
        }
        labels = decoded;
        model = estimate_model::<S>(&vocab, &encoded, &labels, opts.num_topics, opts.delta);
    }
    Ok((model, history))
}

/// Trains one model per candidate topic count and keeps the one with the
/// highest dev-set Viterbi log-likelihood; ties go to the smaller count.
pub fn select_num_topics<S: Scalar>(
    train: &[Article],
    dev: &[Article],
    candidates: &[usize],
    opts: &ContentTrainOptions,
) -> Result<(ContentHmm<S>, Vec<TopicCandidateScore>)> {
    if candidates.is_empty() {
        return Err(Error::invalid("candidate topic counts must be non-empty"));
    }
    if dev.is_empty() {
        return Err(Error::invalid("dev set must be non-empty"));
    }
    let mut sorted: Vec<usize> = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut scores = Vec::with_capacity(sorted.len());
    let mut best: Option<(f64, ContentHmm<S>)> = None;
    for &k in &sorted {
        let run_opts = ContentTrainOptions {
            num_topics: k,
            ..opts.clone()
        };
        let (model, _) = train_content_model::<S>(train, &run_opts)?;
        let mut ll = 0.0f64;
        for article in dev {
            ll += viterbi_decode(&model, &article.sentences)?
                .logprob
                .to_f64_lossy();
        }
        scores.push(TopicCandidateScore {
            num_topics: k,
            dev_log_likelihood: ll,
        });
        if best.as_ref().map_or(true, |(b, _)| ll > *b) {
            best = Some((ll, model));
        }
    }
    Ok((best.expect("at least one candidate").1, scores))
}
