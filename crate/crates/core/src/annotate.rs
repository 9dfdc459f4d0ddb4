//! Auxiliary signals for feature extraction: word embeddings, rule-based
//! POS and NER tags, and the trained word-importance model.
//!
//! The taggers are deliberately shallow lexicon/suffix heuristics. Features
//! downstream only consume tag *presence*, so treebank quality is not a
//! goal; determinism is.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::ExtractiveGold;
use crate::corpus::{Article, Sentence};
use crate::error::{Error, Result};
use crate::mlp::{AdamParams, AdamState, Mlp};

/// Coarse universal-style POS tag set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PosTag {
    Noun,
    Verb,
    Adj,
    Adv,
    Pron,
    Det,
    Adp,
    Num,
    Conj,
    Prt,
    Punct,
    X,
}

impl PosTag {
    pub const COUNT: usize = 12;

    pub fn index(self) -> usize {
        match self {
            PosTag::Noun => 0,
            PosTag::Verb => 1,
            PosTag::Adj => 2,
            PosTag::Adv => 3,
            PosTag::Pron => 4,
            PosTag::Det => 5,
            PosTag::Adp => 6,
            PosTag::Num => 7,
            PosTag::Conj => 8,
            PosTag::Prt => 9,
            PosTag::Punct => 10,
            PosTag::X => 11,
        }
    }
}

/// Named-entity label. `None` means "not an entity".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NerTag {
    Person,
    Location,
    Org,
    None,
}

impl NerTag {
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        match self {
            NerTag::Person => 0,
            NerTag::Location => 1,
            NerTag::Org => 2,
            NerTag::None => 3,
        }
    }
}

const PRONOUNS: [&str; 24] = [
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them", "myself",
    "yourself", "himself", "herself", "itself", "ourselves", "themselves", "who", "whom", "what",
    "which", "whoever",
];

const DETERMINERS: [&str; 16] = [
    "the", "a", "an", "this", "that", "these", "those", "each", "every", "some", "any", "no",
    "all", "both", "another", "either",
];

const ADPOSITIONS: [&str; 24] = [
    "of", "in", "on", "at", "by", "with", "from", "for", "into", "over", "under", "between",
    "through", "during", "against", "about", "after", "before", "above", "below", "near",
    "across", "within", "without",
];

const CONJUNCTIONS: [&str; 12] = [
    "and", "or", "but", "nor", "so", "yet", "because", "although", "while", "if", "when",
    "though",
];

const PARTICLES: [&str; 6] = ["to", "not", "off", "up", "out", "down"];

const COMMON_VERBS: [&str; 78] = [
    "be", "am", "is", "are", "was", "were", "been", "being", "have", "has", "had", "having",
    "do", "does", "did", "done", "will", "would", "shall", "should", "can", "could", "may",
    "might", "must", "go", "goes", "went", "gone", "get", "gets", "got", "run", "runs", "ran",
    "come", "comes", "came", "say", "says", "said", "see", "sees", "saw", "seen", "make",
    "makes", "made", "take", "takes", "took", "taken", "know", "knows", "knew", "known",
    "think", "thinks", "thought", "find", "finds", "found", "give", "gives", "gave", "given",
    "tell", "tells", "told", "left", "leave", "hid", "hide", "met", "meet", "became", "become",
    "kept",
];

const COMMON_ADVERBS: [&str; 16] = [
    "very", "too", "also", "now", "then", "here", "there", "never", "always", "often", "soon",
    "again", "perhaps", "maybe", "just", "still",
];

const COMMON_ADJECTIVES: [&str; 17] = [
    "good", "bad", "big", "small", "new", "old", "high", "low", "long", "short", "hot", "cold",
    "fast", "slow", "many", "few", "great",
];

const NOUN_SUFFIXES: [&str; 9] = [
    "tion", "sion", "ment", "ness", "ity", "ance", "ence", "ship", "ism",
];

const ADJ_SUFFIXES: [&str; 8] = ["ous", "ful", "ive", "ible", "able", "ic", "ish", "al"];

fn looks_numeric(surface: &str) -> bool {
    let mut has_digit = false;
    for c in surface.chars() {
        if c.is_ascii_digit() {
            has_digit = true;
        } else if !matches!(c, '.' | ',' | '%' | '$' | ':' | '/' | '-') {
            return false;
        }
    }
    has_digit
}

fn tag_one_pos(lower: &str, surface: &str) -> PosTag {
    if surface.chars().all(|c| c.is_ascii_punctuation()) {
        return PosTag::Punct;
    }
    if looks_numeric(surface) {
        return PosTag::Num;
    }
    if PRONOUNS.contains(&lower) {
        return PosTag::Pron;
    }
    if DETERMINERS.contains(&lower) {
        return PosTag::Det;
    }
    if PARTICLES.contains(&lower) {
        return PosTag::Prt;
    }
    if ADPOSITIONS.contains(&lower) {
        return PosTag::Adp;
    }
    if CONJUNCTIONS.contains(&lower) {
        return PosTag::Conj;
    }
    if COMMON_VERBS.contains(&lower) {
        return PosTag::Verb;
    }
    if COMMON_ADVERBS.contains(&lower) || (lower.len() > 3 && lower.ends_with("ly")) {
        return PosTag::Adv;
    }
    if COMMON_ADJECTIVES.contains(&lower) {
        return PosTag::Adj;
    }
    if lower.len() > 4 {
        if NOUN_SUFFIXES.iter().any(|s| lower.ends_with(s)) {
            return PosTag::Noun;
        }
        if lower.ends_with("ing") || lower.ends_with("ed") {
            return PosTag::Verb;
        }
        if ADJ_SUFFIXES.iter().any(|s| lower.ends_with(s)) {
            return PosTag::Adj;
        }
    }
    if lower.chars().any(|c| c.is_alphabetic()) {
        PosTag::Noun
    } else {
        PosTag::X
    }
}

/// Tags each token with a coarse POS label. Deterministic rule table:
/// punctuation and numbers first, then closed-class lexicons, then suffix
/// heuristics, with NOUN as the open-class default.
pub fn pos_tag(sentence: &Sentence) -> Vec<PosTag> {
    sentence
        .tokens
        .iter()
        .map(|t| tag_one_pos(&t.lower, &t.surface))
        .collect()
}

const PERSON_TITLES: [&str; 12] = [
    "mr.", "mrs.", "ms.", "dr.", "prof.", "gen.", "col.", "sen.", "rep.", "gov.", "president",
    "senator",
];

const FIRST_NAMES: [&str; 28] = [
    "john", "mary", "james", "robert", "michael", "william", "david", "richard", "joseph",
    "thomas", "charles", "daniel", "matthew", "anthony", "mark", "paul", "steven", "andrew",
    "george", "sarah", "karen", "nancy", "lisa", "betty", "helen", "smith", "johnson", "jones",
];

const LOCATIONS: [&str; 26] = [
    "london", "paris", "york", "washington", "america", "england", "france", "germany",
    "russia", "china", "japan", "india", "texas", "california", "boston", "chicago", "moscow",
    "berlin", "rome", "madrid", "brooklyn", "manhattan", "europe", "asia", "africa", "canada",
];

const ORG_KEYWORDS: [&str; 18] = [
    "inc", "inc.", "corp", "corp.", "ltd", "ltd.", "co.", "company", "university", "institute",
    "committee", "council", "bank", "party", "department", "agency", "court", "police",
];

fn starts_uppercase(surface: &str) -> bool {
    surface.chars().next().is_some_and(|c| c.is_uppercase())
}

/// Tags each token with an entity label using capitalization plus small
/// lexicons. Uncapitalized tokens are never entities.
pub fn ner_tag(sentence: &Sentence) -> Vec<NerTag> {
    let tokens = &sentence.tokens;
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if !starts_uppercase(&t.surface) {
                return NerTag::None;
            }
            let titled = i > 0 && PERSON_TITLES.contains(&tokens[i - 1].lower.as_str());
            if titled || FIRST_NAMES.contains(&t.lower.as_str()) {
                return NerTag::Person;
            }
            if LOCATIONS.contains(&t.lower.as_str()) {
                return NerTag::Location;
            }
            let keyword_next = i + 1 < tokens.len()
                && starts_uppercase(&tokens[i + 1].surface)
                && ORG_KEYWORDS.contains(&tokens[i + 1].lower.as_str());
            if ORG_KEYWORDS.contains(&t.lower.as_str()) && starts_uppercase(&t.surface)
                || keyword_next
            {
                return NerTag::Org;
            }
            NerTag::None
        })
        .collect()
}

/// Word vectors with a deterministic fallback for out-of-vocabulary words.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
    /// True when the table was loaded from a file rather than synthesized.
    from_file: bool,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl EmbeddingTable {
    /// A table with no stored vectors: every lookup takes the hash fallback.
    pub fn fallback_only(dim: usize) -> EmbeddingTable {
        EmbeddingTable {
            dim,
            vectors: BTreeMap::new(),
            from_file: false,
        }
    }

    #[cfg(test)]
    pub(crate) fn from_entries(dim: usize, entries: &[(&str, Vec<f64>)]) -> EmbeddingTable {
        let vectors = entries
            .iter()
            .map(|(w, v)| {
                assert_eq!(v.len(), dim);
                (w.to_string(), v.clone())
            })
            .collect();
        EmbeddingTable {
            dim,
            vectors,
            from_file: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn from_file(&self) -> bool {
        self.from_file
    }

    /// The vector for a (case-folded) word. Unknown words get a unit-norm
    /// vector derived purely from the word's bytes, stable across processes.
    pub fn vector(&self, word: &str) -> Vec<f64> {
        if let Some(v) = self.vectors.get(word) {
            return v.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word.as_bytes()));
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            for x in &mut v {
                *x /= norm;
            }
        } else if !v.is_empty() {
            v[0] = 1.0;
        }
        v
    }
}

/// Streams a word2vec text-format file: a `count dim` header line, then one
/// `word v1 .. vd` row per line.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| {
        Error::invalid(format!("cannot open embeddings file {}: {e}", path.display()))
    })?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::invalid("embeddings file is empty"))??;
    let mut head = header.split_whitespace();
    let parse_head = |s: Option<&str>| -> Result<usize> {
        s.and_then(|v| v.parse::<usize>().ok()).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("expected `count dim` header, got {header:?}"),
        })
    };
    let _count = parse_head(head.next())?;
    let dim = parse_head(head.next())?;
    if dim == 0 {
        return Err(Error::Parse {
            line: 1,
            message: "embedding dimension must be positive".into(),
        });
    }

    let mut vectors = BTreeMap::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().ok_or_else(|| Error::Parse {
            line: line_no,
            message: "missing word".into(),
        })?;
        let values: std::result::Result<Vec<f64>, _> =
            parts.map(|p| p.parse::<f64>()).collect();
        let values = values.map_err(|e| Error::Parse {
            line: line_no,
            message: format!("bad vector component: {e}"),
        })?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "row has {} components but header declares dimension {dim}",
                    values.len()
                ),
            });
        }
        vectors.insert(word.to_string(), values);
    }
    Ok(EmbeddingTable {
        dim,
        vectors,
        from_file: true,
    })
}

/// Arithmetic mean of the tokens' vectors; an empty span yields zeros.
pub fn embed_span(table: &EmbeddingTable, tokens: &[crate::corpus::Token]) -> Vec<f64> {
    let mut mean = vec![0.0; table.dim()];
    if tokens.is_empty() {
        return mean;
    }
    for token in tokens {
        let v = table.vector(&token.lower);
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    let n = tokens.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    mean
}

/// Logistic model scoring how likely a word is to appear in a summary,
/// from the embeddings of its ±2-word context window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceModel {
    embed_dim: usize,
    net: Mlp<f64>,
}

/// Hyperparameters for [`train_importance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImportanceTrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ImportanceTrainOptions {
    fn default() -> Self {
        ImportanceTrainOptions {
            epochs: 8,
            learning_rate: 1e-3,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Context window half-width: two words either side of the target.
const CONTEXT: usize = 2;

fn context_features(
    table: &EmbeddingTable,
    sentence: &Sentence,
    position: usize,
) -> Vec<f64> {
    let d = table.dim();
    let mut x = vec![0.0; 2 * CONTEXT * d];
    let mut slot = 0usize;
    for off in -(CONTEXT as isize)..=(CONTEXT as isize) {
        if off == 0 {
            continue;
        }
        let idx = position as isize + off;
        if idx >= 0 && (idx as usize) < sentence.tokens.len() {
            let v = table.vector(&sentence.tokens[idx as usize].lower);
            x[slot * d..(slot + 1) * d].copy_from_slice(&v);
        }
        slot += 1;
    }
    x
}

impl ImportanceModel {
    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Probability in (0,1) that the word at `position` appears in a summary.
    pub fn word_score(
        &self,
        table: &EmbeddingTable,
        sentence: &Sentence,
        position: usize,
    ) -> f64 {
        let x = context_features(table, sentence, position);
        self.net.forward(&x).expect("importance feature dimension is fixed")
    }
}

/// Trains the importance model: one example per token occurrence in each
/// training article, labeled 1 iff the token occurs in that article's gold
/// extract.
pub fn train_importance(
    pairs: &[(&Article, &ExtractiveGold)],
    table: &EmbeddingTable,
    opts: &ImportanceTrainOptions,
) -> Result<ImportanceModel> {
    if pairs.is_empty() {
        return Err(Error::invalid("importance training needs at least one pair"));
    }
    let d = table.dim();
    let mut examples: Vec<(Vec<f64>, f64)> = Vec::new();
    for (article, gold) in pairs {
        let mut summary_words: std::collections::BTreeSet<&str> = Default::default();
        for &idx in &gold.indices {
            for token in &article.sentences[idx].tokens {
                summary_words.insert(token.lower.as_str());
            }
        }
        for sentence in &article.sentences {
            for (pos, token) in sentence.tokens.iter().enumerate() {
                let label = summary_words.contains(token.lower.as_str());
                examples.push((
                    context_features(table, sentence, pos),
                    if label { 1.0 } else { 0.0 },
                ));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut net = Mlp::<f64>::new_seeded(&[4 * d, 1], opts.seed)?;
    let adam = AdamParams {
        learning_rate: opts.learning_rate,
        ..AdamParams::default()
    };
    let mut state = AdamState::new(net.parameter_count());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..opts.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        for batch in order.chunks(opts.batch_size.max(1)) {
            let refs: Vec<(&[f64], f64)> = batch
                .iter()
                .map(|&i| (examples[i].0.as_slice(), examples[i].1))
                .collect();
            let (loss, grads) = net.loss_and_grad(&refs)?;
            if !loss.is_finite() {
                return Err(Error::TrainDiverged(format!(
                    "importance model loss became {loss}"
                )));
            }
            net.adam_update(&grads, &mut state, &adam);
        }
    }
    Ok(ImportanceModel { embed_dim: d, net })
}

/// Mean and max of per-word importance scores over a sentence.
pub fn sentence_importance(
    model: &ImportanceModel,
    table: &EmbeddingTable,
    sentence: &Sentence,
) -> (f64, f64) {
    assert!(!sentence.is_empty(), "importance of an empty sentence is undefined");
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    for pos in 0..sentence.tokens.len() {
        let p = model.word_score(table, sentence, pos);
        sum += p;
        max = max.max(p);
    }
    (sum / sentence.tokens.len() as f64, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::segment_and_tokenize;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    fn sentence(text: &str) -> Sentence {
        segment_and_tokenize(text).expect("tokenize")[0].clone()
    }

    #[test]
    fn pos_tags_follow_the_rule_table() {
        let s = sentence("He ran .");
        assert_eq!(pos_tag(&s), [PosTag::Pron, PosTag::Verb, PosTag::Punct]);
    }

    #[test]
    fn numbers_are_num() {
        let s = sentence("1999");
        assert_eq!(pos_tag(&s), [PosTag::Num]);
        let s = sentence("3.5");
        assert_eq!(pos_tag(&s), [PosTag::Num]);
    }

    #[test]
    fn lowercase_sentences_have_no_entities() {
        let s = sentence("the cat sat on the mat .");
        assert!(ner_tag(&s).iter().all(|t| *t == NerTag::None));
    }

    #[test]
    fn titles_mark_people() {
        let s = sentence("Mr. Smith left .");
        let tags = ner_tag(&s);
        assert_eq!(tags[1], NerTag::Person);
    }

    #[test]
    fn embeddings_file_round_trip() {
        let mut f = tempfile::NamedTempFile::new().expect("temp");
        writeln!(f, "2 3").unwrap();
        writeln!(f, "cat 1.0 0.0 0.5").unwrap();
        writeln!(f, "dog 0.0 -1.0 0.25").unwrap();
        let table = load_embeddings(f.path()).expect("load");
        assert_eq!(table.dim(), 3);
        assert_eq!(table.vector("cat"), vec![1.0, 0.0, 0.5]);
        assert_eq!(table.vector("dog"), vec![0.0, -1.0, 0.25]);
    }

    #[test]
    fn oov_fallback_is_unit_norm_and_stable() {
        let table = EmbeddingTable::fallback_only(16);
        let a = table.vector("zephyr");
        let b = table.vector("zephyr");
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
        assert_ne!(a, table.vector("zephyrs"));
    }

    #[test]
    fn dimension_mismatch_reports_row() {
        let mut f = tempfile::NamedTempFile::new().expect("temp");
        writeln!(f, "2 3").unwrap();
        writeln!(f, "cat 1.0 0.0 0.5").unwrap();
        writeln!(f, "dog 0.0 -1.0").unwrap();
        let err = load_embeddings(f.path()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn embed_span_averages_and_handles_empty() {
        let table = EmbeddingTable::from_entries(
            2,
            &[("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0]), ("c", vec![-1.0, 0.0])],
        );
        let s = sentence("a b");
        assert_eq!(embed_span(&table, &s.tokens), vec![0.5, 0.5]);

        let s = sentence("a c");
        assert_eq!(embed_span(&table, &s.tokens), vec![0.0, 0.0]);

        assert_eq!(embed_span(&table, &[]), vec![0.0, 0.0]);

        let s3 = sentence("a b c");
        let mean = embed_span(&table, &s3.tokens);
        assert_abs_diff_eq!(mean[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mean[1], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn embed_span_is_order_invariant() {
        let table = EmbeddingTable::fallback_only(8);
        let a = sentence("one two three");
        let b = sentence("three one two");
        let va = embed_span(&table, &a.tokens);
        let vb = embed_span(&table, &b.tokens);
        for (x, y) in va.iter().zip(&vb) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn sentence_importance_of_single_word() {
        let table = EmbeddingTable::fallback_only(4);
        let net = Mlp::<f64>::new_seeded(&[16, 1], 3).expect("net");
        let model = ImportanceModel { embed_dim: 4, net };
        let s = sentence("word");
        let (avg, max) = sentence_importance(&model, &table, &s);
        assert_eq!(avg, max);
        assert!(avg > 0.0 && avg < 1.0);
    }

    #[test]
    fn importance_avg_never_exceeds_max() {
        let table = EmbeddingTable::fallback_only(4);
        let net = Mlp::<f64>::new_seeded(&[16, 1], 5).expect("net");
        let model = ImportanceModel { embed_dim: 4, net };
        for text in ["a b c d e", "cats chase mice", "one"] {
            let s = sentence(text);
            let (avg, max) = sentence_importance(&model, &table, &s);
            assert!(avg <= max + 1e-15);
            assert!(avg > 0.0 && max < 1.0);
        }
    }
}
