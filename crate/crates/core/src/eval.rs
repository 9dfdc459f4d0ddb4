//! Evaluation toolkit: ROUGE-N F-scores against reference abstracts,
//! tie-corrected Kendall rank correlation for length agreement,
//! next-sentence prediction accuracies under the oracle-history protocol,
//! and summary-length distribution reports.

pub mod stem;

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::ExtractiveGold;
use crate::corpus::{segment_and_tokenize, AbstractSummary, Article};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, Normalizer};
use crate::generator::GeneratedSummary;
use crate::predictor::{argmax_candidate, build_dev_groups, TrainingSetOptions};
use crate::Mlp64;
use stem::porter_stem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub order: usize,
}

impl RougeScore {
    fn zero(order: usize) -> RougeScore {
        RougeScore {
            precision: 0.0,
            recall: 0.0,
            f_score: 0.0,
            order,
        }
    }
}

/// Lower-cases and tokenizes, keeping only tokens with at least one
/// alphanumeric character, optionally Porter-stemmed.
fn rouge_tokens(text: &str, stem: bool) -> Vec<String> {
    let Ok(sentences) = segment_and_tokenize(text) else {
        return Vec::new();
    };
    sentences
        .iter()
        .flat_map(|s| s.lower_tokens())
        .filter(|w| w.chars().any(|c| c.is_alphanumeric()))
        .map(|w| if stem { porter_stem(w) } else { w.to_string() })
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N with clipped n-gram matches: recall against the reference,
/// precision against the candidate, and the weighted-harmonic F-score
/// F = P·R / (α·R + (1−α)·P). Texts with no n-grams score zero.
pub fn rouge_n(
    candidate: &str,
    reference: &str,
    n: usize,
    stem: bool,
    alpha: f64,
) -> Result<RougeScore> {
    if n == 0 {
        return Err(Error::invalid("n-gram order must be at least 1"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha must lie in [0, 1]"));
    }
    let cand_tokens = rouge_tokens(candidate, stem);
    let ref_tokens = rouge_tokens(reference, stem);
    let cand = ngram_counts(&cand_tokens, n);
    let refs = ngram_counts(&ref_tokens, n);
    let cand_total: usize = cand.values().sum();
    let ref_total: usize = refs.values().sum();
    if cand_total == 0 || ref_total == 0 {
        return Ok(RougeScore::zero(n));
    }
    let matches: usize = refs
        .iter()
        .map(|(gram, &rc)| rc.min(cand.get(gram).copied().unwrap_or(0)))
        .sum();
    let recall = matches as f64 / ref_total as f64;
    let precision = matches as f64 / cand_total as f64;
    let f_score = if matches == 0 {
        0.0
    } else {
        precision * recall / (alpha * recall + (1.0 - alpha) * precision)
    };
    Ok(RougeScore {
        precision,
        recall,
        f_score,
        order: n,
    })
}

fn tie_pair_count(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Counts pairs (i < j) with `values[i] > values[j]` by merge sort.
fn count_inversions(values: &mut [f64]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = values.split_at_mut(mid);
    let mut swaps = count_inversions(left) + count_inversions(right);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, 0);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            merged.push(left[i]);
            i += 1;
        } else {
            swaps += (left.len() - i) as u64;
            merged.push(right[j]);
            j += 1;
        }
    }
    merged.extend_from_slice(&left[i..]);
    merged.extend_from_slice(&right[j..]);
    values.copy_from_slice(&merged);
    swaps
}

/// Tie-corrected Kendall rank correlation (tau-b) via the merge-sort
/// formulation: τ = (n0 − n1 − n2 + n3 − 2·swaps) / √((n0−n1)(n0−n2)).
/// A constant input leaves the correlation undefined and is an error.
pub fn kendall_tau_b(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("rank vectors must have equal length"));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::invalid("rank correlation needs at least 2 points"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("rank inputs must be finite"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        xs[a].partial_cmp(&xs[b])
            .expect("finite")
            .then(ys[a].partial_cmp(&ys[b]).expect("finite"))
    });
    let sorted_x: Vec<f64> = order.iter().map(|&i| xs[i]).collect();
    let mut sorted_y: Vec<f64> = order.iter().map(|&i| ys[i]).collect();

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let n1 = tie_pair_count(&sorted_x);
    let n3 = {
        // Pairs tied in both coordinates; runs of equal (x, y).
        let mut total = 0u64;
        let mut run = 1u64;
        for w in order.windows(2) {
            if xs[w[0]] == xs[w[1]] && ys[w[0]] == ys[w[1]] {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };
    let swaps = count_inversions(&mut sorted_y);
    let n2 = tie_pair_count(&sorted_y);

    if n0 == n1 || n0 == n2 {
        return Err(Error::invalid(
            "rank correlation is undefined for constant input",
        ));
    }
    let numerator = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let denominator = ((n0 - n1) as f64).sqrt() * ((n0 - n2) as f64).sqrt();
    Ok(numerator / denominator)
}

/// Next-sentence accuracies under the oracle-history protocol: candidate
/// sets are built exactly as in training (window plus seeded fill), the
/// partial summary is the gold sequence so far.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NextSentenceEval {
    /// Evaluated timesteps (gold reachable through the window).
    pub timesteps: usize,
    /// Timesteps excluded because gold fell outside the window.
    pub skipped: usize,
    /// Timesteps dropped for duplicate gold selections.
    pub duplicates: usize,
    /// Fraction of timesteps where the argmax candidate is the gold one.
    pub one_of_k_accuracy: f64,
    /// Thresholded accuracy on gold plus one sampled negative per timestep.
    pub binary_accuracy_balanced: f64,
    /// Thresholded accuracy over every candidate of every set.
    pub binary_accuracy_natural: f64,
}

pub fn next_sentence_eval(
    net: &Mlp64,
    normalizer: &Normalizer,
    extractor: &FeatureExtractor,
    pairs: &[(&Article, &ExtractiveGold)],
    opts: &TrainingSetOptions,
) -> Result<NextSentenceEval> {
    let (groups, coverage) = build_dev_groups(extractor, pairs, opts)?;
    if groups.is_empty() {
        return Err(Error::invalid("no evaluable timesteps in the test pairs"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(0xE7A1));
    let mut one_of_k = 0usize;
    let mut balanced_correct = 0usize;
    let mut balanced_total = 0usize;
    let mut natural_correct = 0usize;
    let mut natural_total = 0usize;
    for group in &groups {
        let mut probs = Vec::with_capacity(group.vectors.len());
        for v in &group.vectors {
            let mut x = v.clone();
            normalizer.apply(&mut x)?;
            probs.push(net.forward(&x)?);
        }
        let scored: Vec<_> = group.candidates.iter().copied().zip(probs.iter().copied()).collect();
        if argmax_candidate(&scored)? == group.candidates[group.gold_pos] {
            one_of_k += 1;
        }
        for (i, &p) in probs.iter().enumerate() {
            let correct = (p > 0.5) == (i == group.gold_pos);
            natural_correct += usize::from(correct);
            natural_total += 1;
        }
        balanced_total += 1;
        balanced_correct += usize::from(probs[group.gold_pos] > 0.5);
        if probs.len() > 1 {
            let mut pick = rng.gen_range(0..probs.len() - 1);
            if pick >= group.gold_pos {
                pick += 1;
            }
            balanced_total += 1;
            balanced_correct += usize::from(probs[pick] <= 0.5);
        }
    }
    Ok(NextSentenceEval {
        timesteps: groups.len(),
        skipped: coverage.skipped_timesteps,
        duplicates: coverage.duplicate_timesteps,
        one_of_k_accuracy: one_of_k as f64 / groups.len() as f64,
        binary_accuracy_balanced: balanced_correct as f64 / balanced_total as f64,
        binary_accuracy_natural: natural_correct as f64 / natural_total as f64,
    })
}

/// Length-distribution report for a batch of generated summaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LengthReport {
    pub count: usize,
    pub generated_min: usize,
    pub generated_max: usize,
    pub generated_avg: f64,
    pub abstract_min: usize,
    pub abstract_max: usize,
    pub abstract_avg: f64,
    /// Rank correlation between generated and abstract lengths; absent when
    /// either side is constant.
    pub tau_vs_abstracts: Option<f64>,
    /// Non-empty 10-word histogram bins of generated lengths, ascending.
    pub histogram: Vec<(usize, usize)>,
}

pub fn length_report(
    summaries: &[GeneratedSummary],
    abstracts: &[AbstractSummary],
) -> Result<LengthReport> {
    if summaries.is_empty() {
        return Err(Error::invalid("length report needs at least one summary"));
    }
    let by_id: BTreeMap<&str, usize> = abstracts
        .iter()
        .map(|a| (a.id.as_str(), a.word_count()))
        .collect();
    let mut unmatched: Vec<&str> = summaries
        .iter()
        .filter(|s| !by_id.contains_key(s.id.as_str()))
        .map(|s| s.id.as_str())
        .collect();
    let seen: std::collections::BTreeSet<&str> =
        summaries.iter().map(|s| s.id.as_str()).collect();
    unmatched.extend(by_id.keys().filter(|id| !seen.contains(*id)));
    if !unmatched.is_empty() {
        return Err(Error::invalid(format!(
            "unmatched ids between summaries and abstracts: {}",
            unmatched.join(", ")
        )));
    }

    let mut ordered: Vec<&GeneratedSummary> = summaries.iter().collect();
    ordered.sort_by_key(|s| s.id.as_str());
    let gen_lengths: Vec<f64> = ordered.iter().map(|s| s.words as f64).collect();
    let abs_lengths: Vec<f64> = ordered.iter().map(|s| by_id[s.id.as_str()] as f64).collect();

    let tau = kendall_tau_b(&gen_lengths, &abs_lengths).ok();
    let mut bins: BTreeMap<usize, usize> = BTreeMap::new();
    for s in summaries {
        *bins.entry(s.words / 10 * 10).or_insert(0) += 1;
    }
    let gen: Vec<usize> = summaries.iter().map(|s| s.words).collect();
    let abs: Vec<usize> = by_id.values().copied().collect();
    Ok(LengthReport {
        count: summaries.len(),
        generated_min: *gen.iter().min().expect("nonempty"),
        generated_max: *gen.iter().max().expect("nonempty"),
        generated_avg: gen.iter().sum::<usize>() as f64 / gen.len() as f64,
        abstract_min: *abs.iter().min().expect("nonempty"),
        abstract_max: *abs.iter().max().expect("nonempty"),
        abstract_avg: abs.iter().sum::<usize>() as f64 / abs.len() as f64,
        tau_vs_abstracts: tau,
        histogram: bins.into_iter().collect(),
    })
}
