//! Full-summary generation: repeated next-sentence prediction until the
//! end-of-summary marker (the system's central loop), a word-capped variant,
//! and the reference baselines (lead, topic-importance, topic-transition,
//! and their product).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::ExtractiveGold;
use crate::content_model::viterbi_decode;
use crate::corpus::{Article, Sentence, Token};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, Normalizer};
use crate::predictor::{
    build_candidate_set, predict_next, CandidateMode, SummaryState,
};
use crate::features::Candidate;
use crate::{ContentHmm64, Mlp64};

/// Why generation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// The model selected the end-of-summary marker.
    #[serde(rename = "eos")]
    Eos,
    /// The word cap was reached and the last sentence truncated.
    #[serde(rename = "length-cap")]
    LengthCap,
    /// The article ran out of candidate sentences.
    #[serde(rename = "exhaustion")]
    Exhaustion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSummary {
    pub id: String,
    /// Selected source sentences, strictly increasing.
    pub indices: Vec<usize>,
    pub text: String,
    /// Token count of the rendered text, after any truncation.
    pub words: usize,
    pub reason: Termination,
}

fn render_tokens(tokens: &[Token]) -> String {
    let parts: Vec<&str> = tokens.iter().map(|t| t.surface.as_str()).collect();
    parts.join(" ")
}

/// Renders selected sentences in source order, applying the word cap: the
/// sentence that crosses the cap is truncated to land on exactly `k` words
/// and anything after it is dropped.
fn finish(
    article: &Article,
    indices: &[usize],
    cap: Option<usize>,
    natural: Termination,
) -> GeneratedSummary {
    debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
    let mut kept = Vec::with_capacity(indices.len());
    let mut parts = Vec::with_capacity(indices.len());
    let mut words = 0usize;
    let mut capped = false;
    for &idx in indices {
        let sentence = &article.sentences[idx];
        if let Some(k) = cap {
            if words == k {
                capped = true;
                break;
            }
            if words + sentence.len() > k {
                let keep = k - words;
                parts.push(render_tokens(&sentence.tokens[..keep]));
                kept.push(idx);
                words = k;
                capped = true;
                break;
            }
        }
        parts.push(sentence.render());
        kept.push(idx);
        words += sentence.len();
    }
    GeneratedSummary {
        id: article.id.clone(),
        indices: kept,
        text: parts.join(" "),
        words,
        reason: if capped { Termination::LengthCap } else { natural },
    }
}

/// Greedy generation: build the inference candidate window, ask the model,
/// append or stop. Terminates within M+1 iterations because the window only
/// ever looks past the last selected sentence.
pub fn generate(
    net: &Mlp64,
    normalizer: &Normalizer,
    extractor: &FeatureExtractor,
    article: &Article,
    window: usize,
) -> Result<GeneratedSummary> {
    generate_inner(net, normalizer, extractor, article, window, None)
}

/// As [`generate`], but once the summary exceeds `k` words the last sentence
/// is truncated so the total is exactly `k`.
pub fn generate_with_limit(
    net: &Mlp64,
    normalizer: &Normalizer,
    extractor: &FeatureExtractor,
    article: &Article,
    window: usize,
    k: usize,
) -> Result<GeneratedSummary> {
    if k == 0 {
        return Err(Error::invalid("word limit must be at least 1"));
    }
    generate_inner(net, normalizer, extractor, article, window, Some(k))
}

fn generate_inner(
    net: &Mlp64,
    normalizer: &Normalizer,
    extractor: &FeatureExtractor,
    article: &Article,
    window: usize,
    cap: Option<usize>,
) -> Result<GeneratedSummary> {
    let ctx = extractor.article_context(article)?;
    let mut state = SummaryState::new();
    let natural;
    loop {
        let set = build_candidate_set(article, &state, window, CandidateMode::Infer)?;
        if set.entries.is_empty() {
            natural = Termination::Exhaustion;
            break;
        }
        match predict_next(net, normalizer, extractor, &ctx, &state, &set)? {
            Candidate::Eos => {
                natural = Termination::Eos;
                break;
            }
            Candidate::Sentence(i) => {
                state.push(i, article.sentences[i].len())?;
                if cap.is_some_and(|k| state.word_count() > k) {
                    natural = Termination::LengthCap;
                    break;
                }
            }
        }
    }
    Ok(finish(article, state.selected(), cap, natural))
}

/// The first `k` words of the article.
pub fn lead_baseline(article: &Article, k: usize) -> Result<GeneratedSummary> {
    if k == 0 {
        return Err(Error::invalid("word limit must be at least 1"));
    }
    let mut indices = Vec::new();
    let mut words = 0usize;
    for (i, s) in article.sentences.iter().enumerate() {
        if words >= k {
            break;
        }
        indices.push(i);
        words += s.len();
    }
    Ok(finish(article, &indices, Some(k), Termination::Exhaustion))
}

/// Per-topic probability that the topic shows up in a summary given it shows
/// up in the article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicImportance {
    pub scores: Vec<f64>,
}

impl TopicImportance {
    pub fn score(&self, topic: usize) -> f64 {
        self.scores[topic]
    }
}

/// Counts, over training pairs, how often each topic of the article decode
/// also appears in the gold-extract decode.
pub fn topic_importance(
    hmm: &ContentHmm64,
    pairs: &[(&Article, &ExtractiveGold)],
) -> Result<TopicImportance> {
    let t = hmm.num_topics();
    let mut appears = vec![0u64; t];
    let mut both = vec![0u64; t];
    for (article, gold) in pairs {
        let article_topics: std::collections::BTreeSet<usize> =
            viterbi_decode(hmm, &article.sentences)?
                .assignment
                .into_iter()
                .collect();
        let summary_topics: std::collections::BTreeSet<usize> = if gold.indices.is_empty() {
            Default::default()
        } else {
            let sentences: Vec<Sentence> = gold
                .indices
                .iter()
                .map(|&i| article.sentences[i].clone())
                .collect();
            viterbi_decode(hmm, &sentences)?.assignment.into_iter().collect()
        };
        for &v in &article_topics {
            appears[v] += 1;
            if summary_topics.contains(&v) {
                both[v] += 1;
            }
        }
    }
    let scores = appears
        .iter()
        .zip(&both)
        .map(|(&a, &b)| if a == 0 { 0.0 } else { b as f64 / a as f64 })
        .collect();
    Ok(TopicImportance { scores })
}

/// One sentence per topic, topics visited by decreasing importance (ties to
/// the lower topic id), the sentence drawn uniformly among that topic's
/// sentences; output re-ordered by source position and capped at `k` words.
pub fn chmm_baseline(
    hmm: &ContentHmm64,
    importance: &TopicImportance,
    article: &Article,
    k: usize,
    seed: u64,
) -> Result<GeneratedSummary> {
    if k == 0 {
        return Err(Error::invalid("word limit must be at least 1"));
    }
    if importance.scores.len() != hmm.num_topics() {
        return Err(Error::ManifestMismatch(format!(
            "importance table has {} topics, content model has {}",
            importance.scores.len(),
            hmm.num_topics()
        )));
    }
    let decode = viterbi_decode(hmm, &article.sentences)?.assignment;
    let mut order: Vec<usize> = (0..hmm.num_topics()).collect();
    order.sort_by(|&a, &b| {
        importance.scores[b]
            .partial_cmp(&importance.scores[a])
            .expect("finite importance")
            .then(a.cmp(&b))
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = Vec::new();
    let mut words = 0usize;
    for topic in order {
        let members: Vec<usize> = decode
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v == topic)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        let pick = members[rng.gen_range(0..members.len())];
        words += article.sentences[pick].len();
        selected.push(pick);
        if words >= k {
            break;
        }
    }
    selected.sort_unstable();
    Ok(finish(article, &selected, Some(k), Termination::Exhaustion))
}

/// Shared walk for the transition-scored baselines: greedy over the same
/// K-window scheme as the main system but with a fixed topic-level score and
/// no end-of-summary candidate.
fn topic_walk<F, G>(
    article: &Article,
    decode: &[usize],
    k: usize,
    window: usize,
    first_score: F,
    step_score: G,
) -> GeneratedSummary
where
    F: Fn(usize) -> f64,
    G: Fn(usize, usize) -> f64,
{
    let m = article.num_sentences();
    let mut selected: Vec<usize> = Vec::new();
    let mut words = 0usize;
    loop {
        let start = selected.last().map_or(0, |&l| l + 1);
        let end = (start + window).min(m);
        if start >= end {
            break;
        }
        let mut best = start;
        let mut best_score = f64::NEG_INFINITY;
        for i in start..end {
            let score = match selected.last() {
                None => first_score(decode[i]),
                Some(&prev) => step_score(decode[prev], decode[i]),
            };
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        words += article.sentences[best].len();
        selected.push(best);
        if words >= k {
            break;
        }
    }
    finish(article, &selected, Some(k), Termination::Exhaustion)
}

/// Greedy topic-transition baseline: the first sentence maximizes the
/// initial topic probability, each later step the transition probability
/// from the previous selection's topic.
pub fn transition_baseline(
    hmm: &ContentHmm64,
    article: &Article,
    k: usize,
    window: usize,
) -> Result<GeneratedSummary> {
    if k == 0 || window == 0 {
        return Err(Error::invalid("word limit and window must be at least 1"));
    }
    let decode = viterbi_decode(hmm, &article.sentences)?.assignment;
    Ok(topic_walk(
        article,
        &decode,
        k,
        window,
        |t| hmm.initial_logprob(t).exp(),
        |p, t| hmm.transition_logprob(p, t).exp(),
    ))
}

/// Transition baseline with each score multiplied by the candidate topic's
/// importance.
pub fn chmm_t_baseline(
    hmm: &ContentHmm64,
    importance: &TopicImportance,
    article: &Article,
    k: usize,
    window: usize,
) -> Result<GeneratedSummary> {
    if k == 0 || window == 0 {
        return Err(Error::invalid("word limit and window must be at least 1"));
    }
    if importance.scores.len() != hmm.num_topics() {
        return Err(Error::ManifestMismatch(format!(
            "importance table has {} topics, content model has {}",
            importance.scores.len(),
            hmm.num_topics()
        )));
    }
    let decode = viterbi_decode(hmm, &article.sentences)?.assignment;
    Ok(topic_walk(
        article,
        &decode,
        k,
        window,
        |t| hmm.initial_logprob(t).exp() * importance.scores[t],
        |p, t| hmm.transition_logprob(p, t).exp() * importance.scores[t],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::segment_and_tokenize;

    fn article(text: &str) -> Article {
        Article {
            id: "a1".into(),
            domain: String::new(),
            sentences: segment_and_tokenize(text).expect("tokenize"),
        }
    }

    #[test]
    fn lead_takes_whole_article_when_k_is_large() {
        let art = article("One two three. Four five.");
        let lead = lead_baseline(&art, 1000).expect("lead");
        assert_eq!(lead.indices, vec![0, 1]);
        assert_eq!(lead.words, art.word_count());
        assert_eq!(lead.reason, Termination::Exhaustion);
        assert_eq!(lead.text, "One two three . Four five .");
    }

    #[test]
    fn lead_truncates_to_exactly_k_words() {
        let art = article("One two three. Four five six.");
        let lead = lead_baseline(&art, 5).expect("lead");
        assert_eq!(lead.indices, vec![0, 1]);
        assert_eq!(lead.words, 5);
        assert_eq!(lead.reason, Termination::LengthCap);
        assert_eq!(lead.text, "One two three . Four");
    }

    #[test]
    fn lead_single_word() {
        let art = article("One two three.");
        let lead = lead_baseline(&art, 1).expect("lead");
        assert_eq!(lead.indices, vec![0]);
        assert_eq!(lead.words, 1);
        assert_eq!(lead.text, "One");
    }

    #[test]
    fn lead_rejects_zero_cap() {
        let art = article("One.");
        assert!(lead_baseline(&art, 0).is_err());
    }

    #[test]
    fn finish_drops_sentences_after_an_exact_cap_hit() {
        let art = article("One two. Three four. Five six.");
        let out = finish(&art, &[0, 1, 2], Some(3), Termination::Exhaustion);
        assert_eq!(out.indices, vec![0]);
        assert_eq!(out.words, 3);
        assert_eq!(out.text, "One two .");
        assert_eq!(out.reason, Termination::LengthCap);
    }

    #[test]
    fn finish_truncates_the_crossing_sentence_mid_way() {
        let art = article("One two. Three four. Five six.");
        let out = finish(&art, &[0, 1, 2], Some(4), Termination::Exhaustion);
        assert_eq!(out.indices, vec![0, 1]);
        assert_eq!(out.words, 4);
        assert_eq!(out.text, "One two . Three");
        assert_eq!(out.reason, Termination::LengthCap);
    }

    #[test]
    fn finish_without_cap_keeps_everything() {
        let art = article("One two. Three four. Five six.");
        let out = finish(&art, &[0, 2], None, Termination::Eos);
        assert_eq!(out.indices, vec![0, 2]);
        assert_eq!(out.words, 6);
        assert_eq!(out.reason, Termination::Eos);
        assert_eq!(out.text, "One two . Five six .");
    }
}
