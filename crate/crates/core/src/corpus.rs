//! Corpus ingestion: JSON-lines parsing, rule-based tokenization and
//! sentence segmentation, vocabulary statistics, and seeded dataset splits.
//!
//! The corpus format is one JSON object per line with fields `id`, `domain`,
//! `article`, and `abstract`; `domain` may be omitted. Tokenization is
//! deliberately simple (whitespace split, punctuation detachment, a small
//! abbreviation guard) — downstream features need token identity, not parse
//! quality.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::annotate::{self, NerTag, PosTag};
use crate::error::{Error, Result};

/// Cap on the ranked frequent-word list kept by [`Vocabulary`].
pub const TOP_WORDS_CAP: usize = 1000;

/// A token with its case-folded form and shallow annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// Case-folded surface; all counting and matching uses this form.
    pub lower: String,
    pub pos: PosTag,
    pub ner: NerTag,
}

/// One sentence of an article or abstract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    /// 0-based position within the containing document.
    pub index: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    /// Token surfaces joined with single spaces.
    pub fn render(&self) -> String {
        let parts: Vec<&str> = self.tokens.iter().map(|t| t.surface.as_str()).collect();
        parts.join(" ")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn lower_tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.lower.as_str())
    }

    /// Unigram counts over case-folded tokens.
    pub fn unigram_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for t in &self.tokens {
            *counts.entry(t.lower.as_str()).or_insert(0) += 1;
        }
        counts
    }
}

/// A source article: an ordered list of sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Article {
    pub id: String,
    pub domain: String,
    pub sentences: Vec<Sentence>,
}

impl Article {
    /// Number of sentences, `M`.
    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    /// Total token count across all sentences.
    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

/// The human-written summary paired with an article.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractSummary {
    /// Matches the paired article's id.
    pub id: String,
    pub sentences: Vec<Sentence>,
}

impl AbstractSummary {
    pub fn word_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

/// An article together with its reference abstract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub article: Article,
    pub abstract_summary: AbstractSummary,
}

/// Supported corpus file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    #[default]
    JsonLines,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    #[serde(default)]
    domain: String,
    article: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
}

/// Loads and tokenizes a corpus file, preserving record order.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Pair>> {
    let CorpusFormat::JsonLines = format;
    let file = File::open(path).map_err(|e| {
        Error::invalid(format!("cannot open corpus file {}: {e}", path.display()))
    })?;
    let reader = BufReader::new(file);

    let mut pairs = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: format!("malformed record: {e}"),
        })?;
        let field_err = |field: &str| Error::Parse {
            line: line_no,
            message: format!("field `{field}` is empty"),
        };
        if raw.id.trim().is_empty() {
            return Err(field_err("id"));
        }
        if raw.article.trim().is_empty() {
            return Err(field_err("article"));
        }
        if raw.abstract_text.trim().is_empty() {
            return Err(field_err("abstract"));
        }
        if !seen_ids.insert(raw.id.clone()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate record id `{}`", raw.id),
            });
        }
        let article_sentences = segment_and_tokenize(&raw.article)?;
        let abstract_sentences = segment_and_tokenize(&raw.abstract_text)?;
        pairs.push(Pair {
            article: Article {
                id: raw.id.clone(),
                domain: raw.domain,
                sentences: article_sentences,
            },
            abstract_summary: AbstractSummary {
                id: raw.id,
                sentences: abstract_sentences,
            },
        });
    }
    if pairs.is_empty() {
        return Err(Error::invalid(format!(
            "corpus file {} contains no records",
            path.display()
        )));
    }
    Ok(pairs)
}

/// Words whose trailing period does not end a sentence.
const ABBREVIATIONS: [&str; 30] = [
    "mr", "mrs", "ms", "dr", "prof", "rev", "gen", "col", "sgt", "capt", "lt", "gov", "sen",
    "rep", "hon", "pres", "st", "mt", "jr", "sr", "vs", "etc", "inc", "ltd", "corp", "co",
    "dept", "univ", "est", "fig",
];

fn is_abbreviation(word: &str) -> bool {
    if word.is_empty() {
        return false;
    }
    let lower = word.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    // Initials and dotted acronyms: "J", "U.S", "e.g".
    let mut expect_letter = true;
    for c in word.chars() {
        let ok = if expect_letter {
            c.is_alphabetic()
        } else {
            c == '.'
        };
        if !ok {
            return false;
        }
        expect_letter = !expect_letter;
    }
    // Must end on a letter, i.e. alternation of letter/dot of odd length.
    !expect_letter
}

/// Splits trimmed text into sentence spans. A sentence ends at `.`, `!`, or
/// `?` followed by whitespace and an uppercase letter, or at end of text. A
/// period preceded by a guarded abbreviation never splits.
fn split_sentence_spans(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start_byte = 0usize;
    let mut k = 0usize;
    while k < chars.len() {
        let (byte, c) = chars[k];
        if c == '.' || c == '!' || c == '?' {
            let guarded = c == '.' && {
                // The non-whitespace run immediately before the period,
                // stripped of leading punctuation like opening quotes.
                let mut w_start = k;
                while w_start > 0 && !chars[w_start - 1].1.is_whitespace() {
                    w_start -= 1;
                }
                let mut word: &str = &text[chars[w_start].0..byte];
                word = word.trim_start_matches(|ch: char| ch.is_ascii_punctuation());
                is_abbreviation(word)
            };
            if !guarded {
                let mut j = k + 1;
                while j < chars.len() && chars[j].1.is_whitespace() {
                    j += 1;
                }
                let boundary = if j == chars.len() {
                    true
                } else {
                    j > k + 1 && chars[j].1.is_uppercase()
                };
                if boundary {
                    let end_byte = byte + c.len_utf8();
                    let span = text[start_byte..end_byte].trim();
                    if !span.is_empty() {
                        spans.push(span);
                    }
                    start_byte = if j < chars.len() { chars[j].0 } else { text.len() };
                    k = j;
                    continue;
                }
            }
        }
        k += 1;
    }
    if start_byte < text.len() {
        let span = text[start_byte..].trim();
        if !span.is_empty() {
            spans.push(span);
        }
    }
    spans
}

fn push_token(out: &mut Vec<Token>, surface: &str) {
    out.push(Token {
        surface: surface.to_string(),
        lower: surface.to_lowercase(),
        pos: PosTag::X,
        ner: NerTag::None,
    });
}

/// Tokenizes one sentence span: whitespace split, then leading/trailing
/// punctuation detached as single-character tokens. A trailing period stays
/// attached to guarded abbreviations so re-tokenizing a join is stable.
fn tokenize_span(span: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    for chunk in span.split_whitespace() {
        let cs: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        let mut end = cs.len();
        while start < end && cs[start].is_ascii_punctuation() {
            start += 1;
        }
        let mut trailing = Vec::new();
        while end > start && cs[end - 1].is_ascii_punctuation() {
            if cs[end - 1] == '.' {
                let stem: String = cs[start..end - 1].iter().collect();
                if is_abbreviation(&stem) {
                    break;
                }
            }
            trailing.push(cs[end - 1]);
            end -= 1;
        }
        for &c in &cs[..start] {
            push_token(&mut tokens, &c.to_string());
        }
        if start < end {
            let middle: String = cs[start..end].iter().collect();
            push_token(&mut tokens, &middle);
        }
        for &c in trailing.iter().rev() {
            push_token(&mut tokens, &c.to_string());
        }
    }
    tokens
}

/// Tokenizes and sentence-segments raw text, tagging every token.
pub fn segment_and_tokenize(text: &str) -> Result<Vec<Sentence>> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(Error::invalid("cannot tokenize whitespace-only text"));
    }
    let mut sentences = Vec::new();
    for span in split_sentence_spans(trimmed) {
        let tokens = tokenize_span(span);
        if tokens.is_empty() {
            continue;
        }
        sentences.push(Sentence {
            index: sentences.len(),
            tokens,
        });
    }
    for sentence in &mut sentences {
        let pos = annotate::pos_tag(sentence);
        let ner = annotate::ner_tag(sentence);
        for (token, tag) in sentence.tokens.iter_mut().zip(pos) {
            token.pos = tag;
        }
        for (token, tag) in sentence.tokens.iter_mut().zip(ner) {
            token.ner = tag;
        }
    }
    Ok(sentences)
}

/// Unigram statistics over a set of training articles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    counts: BTreeMap<String, u64>,
    top: Vec<String>,
    total: u64,
}

impl Vocabulary {
    pub fn count(&self, lower: &str) -> u64 {
        self.counts.get(lower).copied().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    /// Distinct word count.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// The ranked frequent-word list: descending count, ties by ascending
    /// lexicographic order, at most [`TOP_WORDS_CAP`] entries.
    pub fn top_words(&self) -> &[String] {
        &self.top
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }
}

/// Counts unigrams over the given articles and ranks the frequent-word list.
pub fn build_vocabulary(articles: &[Article]) -> Result<Vocabulary> {
    if articles.is_empty() {
        return Err(Error::invalid("cannot build vocabulary from zero articles"));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0u64;
    for article in articles {
        for sentence in &article.sentences {
            for token in &sentence.tokens {
                *counts.entry(token.lower.clone()).or_insert(0) += 1;
                total += 1;
            }
        }
    }
    let mut ranked: Vec<(&String, &u64)> = counts.iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    let top = ranked
        .into_iter()
        .take(TOP_WORDS_CAP)
        .map(|(w, _)| w.clone())
        .collect();
    Ok(Vocabulary { counts, top, total })
}

/// Disjoint train/dev/test partition of a corpus.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Pair>,
    pub dev: Vec<Pair>,
    pub test: Vec<Pair>,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.dev.len(), self.test.len())
    }
}

/// Shuffles pairs with a seeded RNG and partitions them. Dev and test sizes
/// are `floor(ratio · N)`; the remainder goes to train.
pub fn split_dataset(
    mut pairs: Vec<Pair>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit> {
    let (r_train, r_dev, r_test) = ratios;
    let sum = r_train + r_dev + r_test;
    if !(sum - 1.0).abs().le(&1e-9) || r_train < 0.0 || r_dev < 0.0 || r_test < 0.0 {
        return Err(Error::invalid(format!(
            "split ratios must be non-negative and sum to 1, got ({r_train}, {r_dev}, {r_test})"
        )));
    }
    let n = pairs.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 pairs to split, got {n}"
        )));
    }
    let n_dev = (r_dev * n as f64).floor() as usize;
    let n_test = (r_test * n as f64).floor() as usize;
    let n_train = n - n_dev - n_test;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let test = pairs.split_off(n_train + n_dev);
    let dev = pairs.split_off(n_train);
    Ok(DatasetSplit {
        train: pairs,
        dev,
        test,
    })
}
