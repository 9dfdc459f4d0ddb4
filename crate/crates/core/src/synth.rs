//! Synthetic-domain generator. Plants a known topic HMM over pairwise
//! disjoint vocabularies, writes article–abstract pairs in the corpus format,
//! and records the planted sentence topics and summary picks in a sidecar so
//! tests can check every downstream stage against ground truth.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distributions::WeightedIndex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of abstract tokens replaced by a same-topic synonym.
pub const SWAP_RATE: f64 = 0.2;

const WORDS_PER_SENTENCE_MIN: usize = 8;
const WORDS_PER_SENTENCE_MAX: usize = 12;

/// First syllable of every word of a topic; distinct syllables keep the
/// topic vocabularies pairwise disjoint.
const TOPIC_SYLLABLES: [&str; 16] = [
    "ba", "de", "fi", "go", "hu", "ka", "le", "mi", "no", "pu", "ra", "se", "ti", "vo", "wa",
    "zu",
];

const TAIL_SYLLABLES: [&str; 16] = [
    "bo", "da", "fe", "gu", "hi", "ko", "la", "me", "nu", "pa", "re", "si", "to", "vu", "we",
    "za",
];

/// Recipe for one synthetic domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub num_topics: usize,
    /// Words in each topic's vocabulary.
    pub vocab_size: usize,
    /// Row-stochastic topic transition matrix; the initial topic is uniform.
    pub transitions: Vec<Vec<f64>>,
    pub min_sentences: usize,
    pub max_sentences: usize,
    /// The summary covers the first `summary_topics` topic ids that occur in
    /// the article: lower ids are planted as more important.
    pub summary_topics: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// Cycle-dominant domain: each topic hands off to its successor with
    /// probability 0.7, stays with 0.15, and jumps elsewhere with the rest.
    /// Collapsing topics loses that structure, so likelihood-based topic
    /// count selection favors the planted count; a sticky matrix would not,
    /// because merged sticky states stay almost as predictable.
    pub fn canonical(num_topics: usize, seed: u64) -> SynthSpec {
        let t = num_topics;
        let transitions = (0..t)
            .map(|i| {
                (0..t)
                    .map(|j| {
                        if t == 1 {
                            1.0
                        } else if j == (i + 1) % t {
                            0.7
                        } else if j == i {
                            if t == 2 {
                                0.3
                            } else {
                                0.15
                            }
                        } else {
                            0.15 / (t - 2) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        SynthSpec {
            num_topics,
            vocab_size: 30,
            transitions,
            min_sentences: 8,
            max_sentences: 28,
            summary_topics: num_topics.div_ceil(2),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_topics == 0 || self.num_topics > TOPIC_SYLLABLES.len() {
            return Err(Error::invalid(format!(
                "num_topics must be in 1..={}, got {}",
                TOPIC_SYLLABLES.len(),
                self.num_topics
            )));
        }
        if self.vocab_size < 2 {
            return Err(Error::invalid(
                "vocab_size must be at least 2 so synonym swaps have a target",
            ));
        }
        if self.vocab_size > TAIL_SYLLABLES.len() * TAIL_SYLLABLES.len() {
            return Err(Error::invalid(format!(
                "vocab_size must be at most {}, got {}",
                TAIL_SYLLABLES.len() * TAIL_SYLLABLES.len(),
                self.vocab_size
            )));
        }
        if self.summary_topics == 0 || self.summary_topics > self.num_topics {
            return Err(Error::invalid(format!(
                "summary_topics must be in 1..={}, got {}",
                self.num_topics, self.summary_topics
            )));
        }
        if self.min_sentences == 0 || self.min_sentences > self.max_sentences {
            return Err(Error::invalid(format!(
                "sentence bounds must satisfy 1 <= min <= max, got {}..{}",
                self.min_sentences, self.max_sentences
            )));
        }
        if self.transitions.len() != self.num_topics {
            return Err(Error::invalid(format!(
                "transition matrix has {} rows for {} topics",
                self.transitions.len(),
                self.num_topics
            )));
        }
        for (i, row) in self.transitions.iter().enumerate() {
            if row.len() != self.num_topics {
                return Err(Error::invalid(format!(
                    "transition row {i} has {} entries for {} topics",
                    row.len(),
                    self.num_topics
                )));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::invalid(format!(
                    "transition row {i} has probabilities outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "transition row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// The pairwise disjoint topic vocabularies: every word is three syllables,
/// and the first syllable identifies the topic.
pub fn topic_vocabularies(num_topics: usize, vocab_size: usize) -> Result<Vec<Vec<String>>> {
    if num_topics == 0 || num_topics > TOPIC_SYLLABLES.len() {
        return Err(Error::invalid(format!(
            "num_topics must be in 1..={}",
            TOPIC_SYLLABLES.len()
        )));
    }
    if vocab_size > TAIL_SYLLABLES.len() * TAIL_SYLLABLES.len() {
        return Err(Error::invalid("vocab_size exceeds the syllable space"));
    }
    Ok((0..num_topics)
        .map(|t| {
            (0..vocab_size)
                .map(|i| {
                    format!(
                        "{}{}{}",
                        TOPIC_SYLLABLES[t],
                        TAIL_SYLLABLES[i / TAIL_SYLLABLES.len()],
                        TAIL_SYLLABLES[i % TAIL_SYLLABLES.len()]
                    )
                })
                .collect()
        })
        .collect())
}

/// One generated article–abstract pair plus its planted ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthPair {
    pub id: String,
    pub article: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    /// Planted topic of each article sentence.
    pub topics: Vec<usize>,
    /// Source indices of the summary picks, ascending; the abstract renders
    /// them in this order.
    pub gold: Vec<usize>,
}

#[derive(Serialize)]
struct CorpusRecord<'a> {
    id: &'a str,
    domain: &'a str,
    article: &'a str,
    #[serde(rename = "abstract")]
    abstract_text: &'a str,
}

/// Sidecar record: the planted ground truth for one article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedRecord {
    pub id: String,
    pub topics: Vec<usize>,
    pub gold: Vec<usize>,
}

fn article_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn render_sentence(words: &[&str]) -> String {
    let mut out = String::new();
    for (i, w) in words.iter().enumerate() {
        if i == 0 {
            out.push_str(&w[..1].to_ascii_uppercase());
            out.push_str(&w[1..]);
        } else {
            out.push(' ');
            out.push_str(w);
        }
    }
    out.push('.');
    out
}

/// Lower-cased unigram counts as align sees them: the words plus the final
/// period token.
fn count_vector(words: &[usize]) -> Vec<usize> {
    let mut sorted = words.to_vec();
    sorted.sort_unstable();
    sorted
}

fn cosine_counts(
    a: &std::collections::BTreeMap<&str, usize>,
    b: &std::collections::BTreeMap<&str, usize>,
) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(w, &ca)| b.get(w).map(|&cb| (ca * cb) as f64))
        .sum();
    let norm = |m: &std::collections::BTreeMap<&str, usize>| {
        m.values().map(|&c| (c * c) as f64).sum::<f64>().sqrt()
    };
    dot / (norm(a) * norm(b))
}

fn word_counts<'a>(
    words: impl Iterator<Item = &'a str>,
) -> std::collections::BTreeMap<&'a str, usize> {
    let mut m = std::collections::BTreeMap::new();
    for w in words {
        *m.entry(w).or_insert(0) += 1;
    }
    m.insert(".", 1);
    m
}

struct PairBuilder<'a> {
    spec: &'a SynthSpec,
    vocabs: &'a [Vec<String>],
    rng: ChaCha8Rng,
}

impl PairBuilder<'_> {
    fn sample_topics(&mut self) -> Result<Vec<usize>> {
        let t = self.spec.num_topics;
        let rows: Vec<WeightedIndex<f64>> = self
            .spec
            .transitions
            .iter()
            .map(|row| WeightedIndex::new(row.iter().copied()))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("bad transition row: {e}")))?;
        let m = self
            .rng
            .gen_range(self.spec.min_sentences..=self.spec.max_sentences);
        for _ in 0..1_000 {
            let mut topics = Vec::with_capacity(m);
            let mut cur = self.rng.gen_range(0..t);
            topics.push(cur);
            for _ in 1..m {
                cur = self.rng.sample(&rows[cur]);
                topics.push(cur);
            }
            if topics.iter().any(|&x| x < self.spec.summary_topics) {
                return Ok(topics);
            }
        }
        Err(Error::invalid(
            "could not sample an article containing any summary topic; \
             check the transition matrix",
        ))
    }

    /// Word indices for each sentence; identical same-topic word multisets
    /// are resampled so no two sentences of an article tie under cosine.
    fn sample_words(&mut self, topics: &[usize]) -> Vec<Vec<usize>> {
        let mut seen: Vec<BTreeSet<Vec<usize>>> =
            vec![BTreeSet::new(); self.spec.num_topics];
        topics
            .iter()
            .map(|&topic| loop {
                let len = self
                    .rng
                    .gen_range(WORDS_PER_SENTENCE_MIN..=WORDS_PER_SENTENCE_MAX);
                let words: Vec<usize> = (0..len)
                    .map(|_| self.rng.gen_range(0..self.spec.vocab_size))
                    .collect();
                if seen[topic].insert(count_vector(&words)) {
                    break words;
                }
            })
            .collect()
    }

    /// One pick per summary topic present, in increasing topic id, then
    /// reordered by source position.
    fn pick_summary(&mut self, topics: &[usize]) -> Vec<usize> {
        let mut picks = Vec::new();
        for want in 0..self.spec.summary_topics {
            let positions: Vec<usize> = topics
                .iter()
                .enumerate()
                .filter(|(_, &t)| t == want)
                .map(|(i, _)| i)
                .collect();
            if !positions.is_empty() {
                picks.push(positions[self.rng.gen_range(0..positions.len())]);
            }
        }
        picks.sort_unstable();
        picks
    }

    /// Swaps roughly [`SWAP_RATE`] of the words for same-topic synonyms,
    /// retrying until the paraphrase is still nearest to its source sentence;
    /// falls back to a verbatim copy, which always wins.
    fn paraphrase(
        &mut self,
        pick: usize,
        topics: &[usize],
        words: &[Vec<usize>],
    ) -> Vec<usize> {
        let topic = topics[pick];
        let origin = &words[pick];
        let rendered: Vec<std::collections::BTreeMap<&str, usize>> = words
            .iter()
            .zip(topics)
            .map(|(ws, &t)| word_counts(ws.iter().map(|&w| self.vocabs[t][w].as_str())))
            .collect();
        'attempt: for _ in 0..20 {
            let mut swapped = origin.clone();
            for w in swapped.iter_mut() {
                if self.rng.gen::<f64>() < SWAP_RATE {
                    let mut alt = self.rng.gen_range(0..self.spec.vocab_size - 1);
                    if alt >= *w {
                        alt += 1;
                    }
                    *w = alt;
                }
            }
            let counts =
                word_counts(swapped.iter().map(|&w| self.vocabs[topic][w].as_str()));
            let own = cosine_counts(&counts, &rendered[pick]);
            for (j, other) in rendered.iter().enumerate() {
                if j != pick && cosine_counts(&counts, other) >= own {
                    continue 'attempt;
                }
            }
            return swapped;
        }
        origin.clone()
    }

    fn build(&mut self, id: String) -> Result<SynthPair> {
        let topics = self.sample_topics()?;
        let words = self.sample_words(&topics);
        let gold = self.pick_summary(&topics);
        let article = words
            .iter()
            .zip(&topics)
            .map(|(ws, &t)| {
                let strs: Vec<&str> = ws.iter().map(|&w| self.vocabs[t][w].as_str()).collect();
                render_sentence(&strs)
            })
            .collect::<Vec<_>>()
            .join(" ");
        let abstract_text = gold
            .iter()
            .map(|&pick| {
                let swapped = self.paraphrase(pick, &topics, &words);
                let strs: Vec<&str> = swapped
                    .iter()
                    .map(|&w| self.vocabs[topics[pick]][w].as_str())
                    .collect();
                render_sentence(&strs)
            })
            .collect::<Vec<_>>()
            .join(" ");
        Ok(SynthPair {
            id,
            article,
            abstract_text,
            topics,
            gold,
        })
    }
}

/// Generates `n_pairs` article–abstract pairs, fully determined by the spec.
pub fn generate_corpus(spec: &SynthSpec, n_pairs: usize) -> Result<Vec<SynthPair>> {
    spec.validate()?;
    if n_pairs == 0 {
        return Err(Error::invalid("n_pairs must be at least 1"));
    }
    let vocabs = topic_vocabularies(spec.num_topics, spec.vocab_size)?;
    (0..n_pairs)
        .map(|i| {
            let mut builder = PairBuilder {
                spec,
                vocabs: &vocabs,
                rng: ChaCha8Rng::seed_from_u64(article_seed(spec.seed, i)),
            };
            builder.build(format!("synth-{i:04}"))
        })
        .collect()
}

/// The sidecar path for a corpus file: `x.jsonl` → `x.gold.jsonl`.
pub fn sidecar_path(corpus_path: &Path) -> PathBuf {
    corpus_path.with_extension("gold.jsonl")
}

/// Writes the corpus JSON-lines file and its planted-truth sidecar.
pub fn write_corpus(pairs: &[SynthPair], corpus_path: &Path) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::invalid("refusing to write an empty corpus"));
    }
    let mut corpus = BufWriter::new(File::create(corpus_path)?);
    for p in pairs {
        let record = CorpusRecord {
            id: &p.id,
            domain: "synth",
            article: &p.article,
            abstract_text: &p.abstract_text,
        };
        serde_json::to_writer(&mut corpus, &record)?;
        corpus.write_all(b"\n")?;
    }
    corpus.flush()?;

    let mut gold = BufWriter::new(File::create(sidecar_path(corpus_path))?);
    for p in pairs {
        let record = PlantedRecord {
            id: p.id.clone(),
            topics: p.topics.clone(),
            gold: p.gold.clone(),
        };
        serde_json::to_writer(&mut gold, &record)?;
        gold.write_all(b"\n")?;
    }
    gold.flush()?;
    Ok(())
}

/// Reads a planted-truth sidecar.
pub fn load_planted(path: &Path) -> Result<Vec<PlantedRecord>> {
    let file = File::open(path).map_err(|_| Error::MissingArtifact {
        path: path.display().to_string(),
        stage: "synth".into(),
    })?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: format!("malformed sidecar record: {e}"),
        })?);
    }
    if records.is_empty() {
        return Err(Error::invalid(format!(
            "sidecar {} contains no records",
            path.display()
        )));
    }
    Ok(records)
}

/// Highest per-sentence agreement between predicted and planted topic
/// sequences over all relabelings of the predicted topics.
pub fn best_permutation_accuracy(
    predicted: &[Vec<usize>],
    planted: &[Vec<usize>],
    num_topics: usize,
) -> Result<f64> {
    if predicted.len() != planted.len() {
        return Err(Error::invalid(
            "predicted and planted corpora have different sizes",
        ));
    }
    if num_topics == 0 || num_topics > 8 {
        return Err(Error::invalid(
            "permutation search is limited to 1..=8 topics",
        ));
    }
    let total: usize = planted.iter().map(|t| t.len()).sum();
    if total == 0 {
        return Err(Error::invalid("no sentences to score"));
    }
    for (p, q) in predicted.iter().zip(planted) {
        if p.len() != q.len() {
            return Err(Error::invalid(
                "predicted and planted articles have different lengths",
            ));
        }
        if p.iter().chain(q).any(|&t| t >= num_topics) {
            return Err(Error::invalid("topic label out of range"));
        }
    }
    // Count agreement per (predicted, planted) label pair once, then score
    // every permutation from the table.
    let mut table = vec![vec![0usize; num_topics]; num_topics];
    for (p, q) in predicted.iter().zip(planted) {
        for (&a, &b) in p.iter().zip(q) {
            table[a][b] += 1;
        }
    }
    let mut perm: Vec<usize> = (0..num_topics).collect();
    let mut best = 0usize;
    permute(&mut perm, 0, &mut |perm| {
        let hits: usize = (0..num_topics).map(|a| table[a][perm[a]]).sum();
        best = best.max(hits);
    });
    Ok(best as f64 / total as f64)
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}
