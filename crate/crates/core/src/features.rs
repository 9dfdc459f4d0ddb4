//! Fixed-layout feature vectors for (article, partial summary, candidate)
//! triples. The layout is declared by a [`FeatureManifest`] that is persisted
//! with every trained model and re-validated at inference so train/infer
//! skew fails loudly instead of silently.
//!
//! Blocks, in manifest order: topic, content, redundancy, position, length,
//! coverage, importance, and the end-of-summary indicator.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::annotate::{EmbeddingTable, ImportanceModel, NerTag, PosTag};
use crate::content_model::{
    sentence_emission_logprob, sentence_marginal_log, viterbi_decode, ContentHmm,
};
use crate::corpus::{Article, Sentence};
use crate::error::{Error, Result};
use crate::predictor::SummaryState;

pub const MANIFEST_VERSION: u32 = 1;

/// Smoothing mass for the coverage KL unigram models.
const COVERAGE_DELTA: f64 = 0.1;

/// Floor for every log-probability feature.
const LOGPROB_FLOOR: f64 = -50.0;

/// Either a real source sentence or the end-of-summary marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Candidate {
    Sentence(usize),
    Eos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub name: String,
    pub dim: usize,
}

/// Declares the exact feature layout a model was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub version: u32,
    pub num_topics: usize,
    pub embed_dim: usize,
    pub embeddings_from_file: bool,
    pub top_words: Vec<String>,
    pub word_count_thresholds: [f64; 4],
    pub sentence_count_thresholds: [f64; 4],
    pub blocks: Vec<FeatureBlock>,
    pub total_dim: usize,
}

impl FeatureManifest {
    pub fn build(
        num_topics: usize,
        embed_dim: usize,
        embeddings_from_file: bool,
        top_words: Vec<String>,
        word_count_thresholds: [f64; 4],
        sentence_count_thresholds: [f64; 4],
    ) -> FeatureManifest {
        let t = num_topics;
        let l = top_words.len();
        let blocks = vec![
            FeatureBlock {
                name: "topic".into(),
                dim: 4 * t + 3,
            },
            FeatureBlock {
                name: "content".into(),
                dim: 3 * embed_dim + 2 * l + 2 * PosTag::COUNT + 2 * NerTag::COUNT,
            },
            FeatureBlock {
                name: "redundancy".into(),
                dim: 5,
            },
            FeatureBlock {
                name: "position".into(),
                dim: 11,
            },
            FeatureBlock {
                name: "length".into(),
                dim: 12,
            },
            FeatureBlock {
                name: "coverage".into(),
                dim: 1,
            },
            FeatureBlock {
                name: "importance".into(),
                dim: 3,
            },
            FeatureBlock {
                name: "eos".into(),
                dim: 1,
            },
        ];
        let total_dim = blocks.iter().map(|b| b.dim).sum();
        FeatureManifest {
            version: MANIFEST_VERSION,
            num_topics,
            embed_dim,
            embeddings_from_file,
            top_words,
            word_count_thresholds,
            sentence_count_thresholds,
            blocks,
            total_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sum: usize = self.blocks.iter().map(|b| b.dim).sum();
        if sum != self.total_dim {
            return Err(Error::ManifestMismatch(format!(
                "block dimensions sum to {sum} but total_dim is {}",
                self.total_dim
            )));
        }
        let rebuilt = FeatureManifest::build(
            self.num_topics,
            self.embed_dim,
            self.embeddings_from_file,
            self.top_words.clone(),
            self.word_count_thresholds,
            self.sentence_count_thresholds,
        );
        if rebuilt.blocks != self.blocks {
            return Err(Error::ManifestMismatch(
                "block layout does not match this build's feature schema".into(),
            ));
        }
        Ok(())
    }
}

/// Relative-position bin: `min(4, ⌊5·i/m⌋)`; partitions `[0, m)` into 5 bins.
pub fn position_bin(index: usize, total: usize) -> usize {
    debug_assert!(total > 0);
    (5 * index / total).min(4)
}

/// Number of thresholds strictly below `x`, i.e. a bin in `0..=4`.
pub fn threshold_bin(x: f64, thresholds: &[f64; 4]) -> usize {
    thresholds.iter().filter(|&&t| t < x).count()
}

/// Nearest-rank quintile cut points of a non-empty sample.
pub fn quintile_thresholds(values: &[f64]) -> Result<[f64; 4]> {
    if values.is_empty() {
        return Err(Error::invalid("cannot take quintiles of an empty sample"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite threshold values"));
    let n = sorted.len();
    let mut out = [0.0; 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let rank = ((k + 1) * n).div_ceil(5);
        *slot = sorted[rank - 1];
    }
    Ok(out)
}

/// KL divergence D(X‖S) between add-δ smoothed unigram models over the
/// source vocabulary; summary tokens outside the source vocabulary are
/// ignored since the distributions range over source words only.
pub fn kl_coverage(article: &Article, summary: &[&Sentence]) -> Result<f64> {
    if article.sentences.is_empty() {
        return Err(Error::invalid("coverage of an empty article is undefined"));
    }
    let mut source_counts: BTreeMap<&str, f64> = BTreeMap::new();
    let mut source_total = 0.0;
    for s in &article.sentences {
        for w in s.lower_tokens() {
            *source_counts.entry(w).or_insert(0.0) += 1.0;
            source_total += 1.0;
        }
    }
    let mut summary_counts: BTreeMap<&str, f64> = BTreeMap::new();
    for s in summary {
        for w in s.lower_tokens() {
            if source_counts.contains_key(w) {
                *summary_counts.entry(w).or_insert(0.0) += 1.0;
            }
        }
    }
    Ok(kl_from_counts(&source_counts, source_total, |w| {
        summary_counts.get(w).copied().unwrap_or(0.0)
    }))
}

fn kl_from_counts<F: Fn(&str) -> f64>(
    source_counts: &BTreeMap<&str, f64>,
    source_total: f64,
    summary_count: F,
) -> f64 {
    let v = source_counts.len() as f64;
    let summary_total: f64 = source_counts.keys().map(|w| summary_count(w)).sum();
    let x_denom = source_total + COVERAGE_DELTA * v;
    let s_denom = summary_total + COVERAGE_DELTA * v;
    let mut kl = 0.0;
    for (w, &cx) in source_counts {
        let px = (cx + COVERAGE_DELTA) / x_denom;
        let ps = (summary_count(w) + COVERAGE_DELTA) / s_denom;
        kl += px * (px / ps).ln();
    }
    kl.max(0.0)
}

/// Per-dimension z-score transform fitted on training vectors. Dimensions
/// with (population) std below 1e−12 pass through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

pub fn fit_normalizer(vectors: &[Vec<f64>]) -> Result<Normalizer> {
    if vectors.len() < 2 {
        return Err(Error::invalid(
            "normalizer needs at least 2 training vectors",
        ));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::invalid("training vectors have inconsistent dimensions"));
    }
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = vec![0.0; dim];
    for v in vectors {
        for ((s, x), m) in std.iter_mut().zip(v).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
        if *s < 1e-12 {
            *s = 0.0;
        }
    }
    Ok(Normalizer { mean, std })
}

impl Normalizer {
    /// No-op transform of the given width.
    pub fn identity(dim: usize) -> Normalizer {
        Normalizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &mut [f64]) -> Result<()> {
        if x.len() != self.mean.len() {
            return Err(Error::ManifestMismatch(format!(
                "normalizer expects dimension {}, got {}",
                self.mean.len(),
                x.len()
            )));
        }
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            if *s > 0.0 {
                *v = (*v - *m) / *s;
            }
        }
        Ok(())
    }
}

/// Read-only per-article caches shared by every featurize call: topic
/// proportions, per-sentence emissions and marginals, embeddings, importance
/// scores, indicator sets, and unigram statistics.
pub struct ArticleContext<'a> {
    pub article: &'a Article,
    source_props: Vec<f64>,
    emissions: Vec<Vec<f64>>,
    marginals: Vec<f64>,
    arg_topics: Vec<usize>,
    sent_embeds: Vec<Vec<f64>>,
    source_embed: Vec<f64>,
    importance: Vec<(f64, f64)>,
    top_sets: Vec<BTreeSet<u32>>,
    pos_presence: Vec<Vec<f64>>,
    ner_presence: Vec<Vec<f64>>,
    counts: Vec<BTreeMap<String, f64>>,
    norms: Vec<f64>,
    noun_types: Vec<BTreeSet<String>>,
    verb_types: Vec<BTreeSet<String>>,
    source_counts: BTreeMap<String, f64>,
    source_total: f64,
    word_bin: usize,
    sent_bin: usize,
}

/// The (article, partial summary, candidate) triple handed to `featurize`.
pub struct CandidateContext<'a> {
    pub article: &'a ArticleContext<'a>,
    pub state: &'a SummaryState,
    pub candidate: Candidate,
}

/// Bundles the trained models and manifest behind the featurize operations.
pub struct FeatureExtractor<'a> {
    manifest: &'a FeatureManifest,
    hmm: &'a ContentHmm<f64>,
    embeddings: &'a EmbeddingTable,
    importance: &'a ImportanceModel,
}

/// Per-timestep values shared by all candidates of one candidate set.
struct StepContext {
    summary_props: Vec<f64>,
    last_topic: Option<usize>,
    summary_embed: Vec<f64>,
    noun_types: BTreeSet<String>,
    verb_types: BTreeSet<String>,
    summary_counts: BTreeMap<String, f64>,
    y_t: Option<usize>,
    /// Last up to three selected indices, most recent first.
    history: Vec<usize>,
    summary_words: f64,
    summary_sentences: f64,
}

fn clamp_lp(lp: f64) -> f64 {
    lp.max(LOGPROB_FLOOR)
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(
        manifest: &'a FeatureManifest,
        hmm: &'a ContentHmm<f64>,
        embeddings: &'a EmbeddingTable,
        importance: &'a ImportanceModel,
    ) -> Result<FeatureExtractor<'a>> {
        manifest.validate()?;
        if manifest.num_topics != hmm.num_topics() {
            return Err(Error::ManifestMismatch(format!(
                "manifest says {} topics, content model has {}",
                manifest.num_topics,
                hmm.num_topics()
            )));
        }
        if manifest.embed_dim != embeddings.dim() {
            return Err(Error::ManifestMismatch(format!(
                "manifest says embedding dimension {}, table has {}",
                manifest.embed_dim,
                embeddings.dim()
            )));
        }
        if manifest.embeddings_from_file != embeddings.from_file() {
            return Err(Error::ManifestMismatch(
                "model was trained with a different embedding source".into(),
            ));
        }
        if manifest.embed_dim != importance.embed_dim() {
            return Err(Error::ManifestMismatch(format!(
                "importance model was trained at embedding dimension {}",
                importance.embed_dim()
            )));
        }
        Ok(FeatureExtractor {
            manifest,
            hmm,
            embeddings,
            importance,
        })
    }

    pub fn manifest(&self) -> &FeatureManifest {
        self.manifest
    }

    pub fn article_context(&self, article: &'a Article) -> Result<ArticleContext<'a>> {
        let m = article.num_sentences();
        if m == 0 {
            return Err(Error::invalid(format!(
                "article {} has no sentences",
                article.id
            )));
        }
        let t = self.manifest.num_topics;
        let decode = viterbi_decode(self.hmm, &article.sentences)?.assignment;
        let mut source_props = vec![0.0; t];
        for &k in &decode {
            source_props[k] += 1.0;
        }
        for p in &mut source_props {
            *p /= m as f64;
        }

        let top_index: BTreeMap<&str, u32> = self
            .manifest
            .top_words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), i as u32))
            .collect();

        let mut emissions = Vec::with_capacity(m);
        let mut marginals = Vec::with_capacity(m);
        let mut arg_topics = Vec::with_capacity(m);
        let mut sent_embeds = Vec::with_capacity(m);
        let mut importance = Vec::with_capacity(m);
        let mut top_sets = Vec::with_capacity(m);
        let mut pos_presence = Vec::with_capacity(m);
        let mut ner_presence = Vec::with_capacity(m);
        let mut counts = Vec::with_capacity(m);
        let mut norms = Vec::with_capacity(m);
        let mut noun_types = Vec::with_capacity(m);
        let mut verb_types = Vec::with_capacity(m);
        let mut source_counts: BTreeMap<String, f64> = BTreeMap::new();
        let mut source_total = 0.0;
        let mut source_embed = vec![0.0; self.manifest.embed_dim];
        let mut token_total = 0usize;

        for sentence in &article.sentences {
            let lps: Vec<f64> = (0..t)
                .map(|k| {
                    sentence_emission_logprob(self.hmm, k, sentence).map(clamp_lp)
                })
                .collect::<Result<_>>()?;
            let mut best = 0usize;
            for k in 1..t {
                if lps[k] > lps[best] {
                    best = k;
                }
            }
            arg_topics.push(best);
            emissions.push(lps);
            marginals.push(clamp_lp(sentence_marginal_log(self.hmm, sentence)?));

            let embed = crate::annotate::embed_span(self.embeddings, &sentence.tokens);
            for (acc, x) in source_embed.iter_mut().zip(&embed) {
                *acc += x * sentence.len() as f64;
            }
            token_total += sentence.len();
            sent_embeds.push(embed);

            importance.push(crate::annotate::sentence_importance(
                self.importance,
                self.embeddings,
                sentence,
            ));

            let mut tops = BTreeSet::new();
            let mut pos = vec![0.0; PosTag::COUNT];
            let mut ner = vec![0.0; NerTag::COUNT];
            let mut cmap: BTreeMap<String, f64> = BTreeMap::new();
            let mut nouns = BTreeSet::new();
            let mut verbs = BTreeSet::new();
            for token in &sentence.tokens {
                if let Some(&i) = top_index.get(token.lower.as_str()) {
                    tops.insert(i);
                }
                pos[token.pos.index()] = 1.0;
                ner[token.ner.index()] = 1.0;
                *cmap.entry(token.lower.clone()).or_insert(0.0) += 1.0;
                *source_counts.entry(token.lower.clone()).or_insert(0.0) += 1.0;
                source_total += 1.0;
                match token.pos {
                    PosTag::Noun => {
                        nouns.insert(token.lower.clone());
                    }
                    PosTag::Verb => {
                        verbs.insert(token.lower.clone());
                    }
                    _ => {}
                }
            }
            norms.push(cmap.values().map(|c| c * c).sum::<f64>().sqrt());
            top_sets.push(tops);
            pos_presence.push(pos);
            ner_presence.push(ner);
            counts.push(cmap);
            noun_types.push(nouns);
            verb_types.push(verbs);
        }
        for acc in &mut source_embed {
            *acc /= token_total as f64;
        }

        Ok(ArticleContext {
            article,
            source_props,
            emissions,
            marginals,
            arg_topics,
            sent_embeds,
            source_embed,
            importance,
            top_sets,
            pos_presence,
            ner_presence,
            counts,
            norms,
            noun_types,
            verb_types,
            source_counts,
            source_total,
            word_bin: threshold_bin(
                article.word_count() as f64,
                &self.manifest.word_count_thresholds,
            ),
            sent_bin: threshold_bin(m as f64, &self.manifest.sentence_count_thresholds),
        })
    }

    fn step_context(&self, ctx: &ArticleContext, state: &SummaryState) -> Result<StepContext> {
        let t = self.manifest.num_topics;
        let selected = state.selected();
        let mut summary_props = vec![0.0; t];
        let mut last_topic = None;
        let mut summary_embed = vec![0.0; self.manifest.embed_dim];
        let mut noun_types = BTreeSet::new();
        let mut verb_types = BTreeSet::new();
        let mut summary_counts: BTreeMap<String, f64> = BTreeMap::new();
        let mut summary_words = 0.0;

        if !selected.is_empty() {
            let sentences: Vec<Sentence> = selected
                .iter()
                .map(|&i| ctx.article.sentences[i].clone())
                .collect();
            let decode = viterbi_decode(self.hmm, &sentences)?.assignment;
            for &k in &decode {
                summary_props[k] += 1.0;
            }
            for p in &mut summary_props {
                *p /= decode.len() as f64;
            }
            last_topic = decode.last().copied();

            let mut token_total = 0usize;
            for &i in selected {
                let s = &ctx.article.sentences[i];
                for (acc, x) in summary_embed.iter_mut().zip(&ctx.sent_embeds[i]) {
                    *acc += x * s.len() as f64;
                }
                token_total += s.len();
                summary_words += s.len() as f64;
                noun_types.extend(ctx.noun_types[i].iter().cloned());
                verb_types.extend(ctx.verb_types[i].iter().cloned());
                for (w, c) in &ctx.counts[i] {
                    *summary_counts.entry(w.clone()).or_insert(0.0) += c;
                }
            }
            for acc in &mut summary_embed {
                *acc /= token_total as f64;
            }
        }

        Ok(StepContext {
            summary_props,
            last_topic,
            summary_embed,
            noun_types,
            verb_types,
            summary_counts,
            y_t: selected.last().copied(),
            history: selected.iter().rev().take(3).copied().collect(),
            summary_words,
            summary_sentences: selected.len() as f64,
        })
    }

    fn assemble(
        &self,
        ctx: &ArticleContext,
        step: &StepContext,
        candidate: Candidate,
    ) -> Result<Vec<f64>> {
        let t = self.manifest.num_topics;
        let d = self.manifest.embed_dim;
        let l = self.manifest.top_words.len();
        let m = ctx.article.num_sentences();
        let mut out = Vec::with_capacity(self.manifest.total_dim);

        let cand_index = match candidate {
            Candidate::Sentence(i) => {
                if i >= m {
                    return Err(Error::invalid(format!(
                        "candidate index {i} out of range for {m} sentences"
                    )));
                }
                Some(i)
            }
            Candidate::Eos => None,
        };

        // Topic block.
        out.extend_from_slice(&ctx.source_props);
        out.extend_from_slice(&step.summary_props);
        let mut cand_topic = vec![0.0; t + 1];
        match cand_index {
            Some(i) => cand_topic[ctx.arg_topics[i]] = 1.0,
            None => cand_topic[t] = 1.0,
        }
        out.extend_from_slice(&cand_topic);
        match cand_index {
            Some(i) => out.extend_from_slice(&ctx.emissions[i]),
            None => out.extend(std::iter::repeat_n(0.0, t)),
        }
        out.push(match (step.last_topic, cand_index) {
            (Some(prev), Some(i)) => {
                clamp_lp(self.hmm.transition_logprob(prev, ctx.arg_topics[i]))
            }
            _ => 0.0,
        });
        out.push(cand_index.map_or(0.0, |i| ctx.marginals[i]));

        // Content block.
        out.extend_from_slice(&ctx.source_embed);
        out.extend_from_slice(&step.summary_embed);
        match cand_index {
            Some(i) => out.extend_from_slice(&ctx.sent_embeds[i]),
            None => out.extend(std::iter::repeat_n(0.0, d)),
        }
        let push_indicators = |out: &mut Vec<f64>, index: Option<usize>| {
            match index {
                Some(i) => {
                    let set = &ctx.top_sets[i];
                    out.extend((0..l).map(|w| f64::from(set.contains(&(w as u32)))));
                    out.extend_from_slice(&ctx.pos_presence[i]);
                    out.extend_from_slice(&ctx.ner_presence[i]);
                }
                None => out.extend(std::iter::repeat_n(
                    0.0,
                    l + PosTag::COUNT + NerTag::COUNT,
                )),
            }
        };
        // Indicators for s, then interleaved for its source predecessor s−1
        // (zeros for the first sentence and for EOS).
        let prev_index = cand_index.and_then(|i| i.checked_sub(1));
        let mut s_ind = Vec::with_capacity(l + PosTag::COUNT + NerTag::COUNT);
        let mut p_ind = Vec::with_capacity(l + PosTag::COUNT + NerTag::COUNT);
        push_indicators(&mut s_ind, cand_index);
        push_indicators(&mut p_ind, prev_index);
        out.extend_from_slice(&s_ind[..l]);
        out.extend_from_slice(&p_ind[..l]);
        out.extend_from_slice(&s_ind[l..l + PosTag::COUNT]);
        out.extend_from_slice(&p_ind[l..l + PosTag::COUNT]);
        out.extend_from_slice(&s_ind[l + PosTag::COUNT..]);
        out.extend_from_slice(&p_ind[l + PosTag::COUNT..]);

        // Redundancy block.
        let cosine_with = |i: usize, j: usize| -> f64 {
            let (a, b) = (&ctx.counts[i], &ctx.counts[j]);
            let mut dot = 0.0;
            for (w, ca) in a {
                if let Some(cb) = b.get(w) {
                    dot += ca * cb;
                }
            }
            dot / (ctx.norms[i] * ctx.norms[j])
        };
        for slot in 0..3 {
            out.push(match (cand_index, step.history.get(slot)) {
                (Some(i), Some(&y)) => cosine_with(i, y),
                _ => 0.0,
            });
        }
        match cand_index {
            Some(i) => {
                let nouns = ctx.noun_types[i]
                    .iter()
                    .filter(|w| step.noun_types.contains(*w))
                    .count();
                let verbs = ctx.verb_types[i]
                    .iter()
                    .filter(|w| step.verb_types.contains(*w))
                    .count();
                out.push(nouns as f64);
                out.push(verbs as f64);
            }
            None => {
                out.push(0.0);
                out.push(0.0);
            }
        }

        // Position block.
        let mut y_bin = vec![0.0; 5];
        if let Some(y) = step.y_t {
            y_bin[position_bin(y, m)] = 1.0;
        }
        out.extend_from_slice(&y_bin);
        let mut c_bin = vec![0.0; 5];
        match cand_index {
            Some(i) => c_bin[position_bin(i, m)] = 1.0,
            None => c_bin.copy_from_slice(&y_bin),
        }
        out.extend_from_slice(&c_bin);
        out.push(match (cand_index, step.y_t) {
            (Some(i), Some(y)) => (i as f64 - y as f64) / m as f64,
            _ => 0.0,
        });

        // Length block.
        let mut w_bin = vec![0.0; 5];
        w_bin[ctx.word_bin] = 1.0;
        out.extend_from_slice(&w_bin);
        let mut s_bin = vec![0.0; 5];
        s_bin[ctx.sent_bin] = 1.0;
        out.extend_from_slice(&s_bin);
        out.push(step.summary_words);
        out.push(step.summary_sentences);

        // Coverage block: KL of source against summary ∪ {candidate}
        // (summary alone for EOS).
        let kl = kl_from_counts(
            &ctx.source_counts
                .iter()
                .map(|(w, c)| (w.as_str(), *c))
                .collect(),
            ctx.source_total,
            |w| {
                let base = step.summary_counts.get(w).copied().unwrap_or(0.0);
                match cand_index {
                    Some(i) => base + ctx.counts[i].get(w).copied().unwrap_or(0.0),
                    None => base,
                }
            },
        );
        out.push(kl);

        // Importance block.
        match cand_index {
            Some(i) => {
                let s = &ctx.article.sentences[i];
                let mean_prob = s
                    .lower_tokens()
                    .map(|w| ctx.source_counts.get(w).copied().unwrap_or(0.0))
                    .sum::<f64>()
                    / (s.len() as f64 * ctx.source_total);
                out.push(mean_prob);
                let (avg, max) = ctx.importance[i];
                out.push(avg);
                out.push(max);
            }
            None => out.extend_from_slice(&[0.0, 0.0, 0.0]),
        }

        // End-of-summary indicator.
        out.push(f64::from(cand_index.is_none()));

        debug_assert_eq!(out.len(), self.manifest.total_dim);
        if out.len() != self.manifest.total_dim {
            return Err(Error::ManifestMismatch(format!(
                "assembled {} features, manifest declares {}",
                out.len(),
                self.manifest.total_dim
            )));
        }
        Ok(out)
    }

    pub fn featurize(&self, ctx: &CandidateContext) -> Result<Vec<f64>> {
        if let Candidate::Sentence(i) = ctx.candidate {
            if ctx.state.selected().contains(&i) {
                return Err(Error::invalid(format!(
                    "candidate {i} is already part of the summary"
                )));
            }
        }
        let step = self.step_context(ctx.article, ctx.state)?;
        self.assemble(ctx.article, &step, ctx.candidate)
    }

    pub fn featurize_eos(
        &self,
        article: &ArticleContext,
        state: &SummaryState,
    ) -> Result<Vec<f64>> {
        let step = self.step_context(article, state)?;
        self.assemble(article, &step, Candidate::Eos)
    }

    /// Featurizes a whole candidate set, computing the per-step caches once.
    pub fn featurize_set(
        &self,
        article: &ArticleContext,
        state: &SummaryState,
        candidates: &[Candidate],
    ) -> Result<Vec<Vec<f64>>> {
        let step = self.step_context(article, state)?;
        candidates
            .iter()
            .map(|&c| {
                if let Candidate::Sentence(i) = c {
                    if state.selected().contains(&i) {
                        return Err(Error::invalid(format!(
                            "candidate {i} is already part of the summary"
                        )));
                    }
                }
                self.assemble(article, &step, c)
            })
            .collect()
    }
}
