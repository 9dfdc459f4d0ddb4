//! Projection of abstractive reference summaries onto the source article:
//! each reference sentence is mapped to its most similar source sentence by
//! unigram cosine, yielding the extractive sequence used as training gold.

use serde::{Deserialize, Serialize};

use crate::corpus::{AbstractSummary, Article, Sentence};
use crate::error::{Error, Result};

/// Gold extract for one article: source sentence indices in reference order,
/// terminated by the end-of-summary marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractiveGold {
    pub id: String,
    pub indices: Vec<usize>,
    pub eos: bool,
}

/// Cosine similarity of lower-cased unigram count vectors, in [0, 1].
pub fn cosine_unigram(p: &Sentence, q: &Sentence) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::invalid("cosine of an empty sentence is undefined"));
    }
    let a = p.unigram_counts();
    let b = q.unigram_counts();
    let mut dot = 0.0;
    for (word, &ca) in &a {
        if let Some(&cb) = b.get(word) {
            dot += (ca * cb) as f64;
        }
    }
    let norm = |counts: &std::collections::BTreeMap<&str, usize>| {
        counts
            .values()
            .map(|&c| (c * c) as f64)
            .sum::<f64>()
            .sqrt()
    };
    Ok(dot / (norm(&a) * norm(&b)))
}

/// Maps each reference sentence independently to the source sentence with the
/// highest cosine; ties go to the lowest source index. Duplicate targets are
/// kept, mirroring the reference order.
pub fn align(abstract_summary: &AbstractSummary, article: &Article) -> Result<ExtractiveGold> {
    if abstract_summary.sentences.is_empty() {
        return Err(Error::invalid(format!(
            "abstract {} has no sentences to align",
            abstract_summary.id
        )));
    }
    if article.sentences.is_empty() {
        return Err(Error::invalid(format!(
            "article {} has no sentences to align against",
            article.id
        )));
    }
    let mut indices = Vec::with_capacity(abstract_summary.sentences.len());
    for a in &abstract_summary.sentences {
        let mut best = 0usize;
        let mut best_sim = f64::NEG_INFINITY;
        for (j, s) in article.sentences.iter().enumerate() {
            let sim = cosine_unigram(a, s)?;
            if sim > best_sim {
                best_sim = sim;
                best = j;
            }
        }
        indices.push(best);
    }
    Ok(ExtractiveGold {
        id: article.id.clone(),
        indices,
        eos: true,
    })
}
