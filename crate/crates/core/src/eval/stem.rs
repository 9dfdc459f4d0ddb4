//! The classic Porter stemming algorithm (1980), implemented step by step
//! from its published suffix tables. Input is assumed lower-case; words of
//! length 1 or 2 are returned unchanged.

fn is_vowel(chars: &[u8], i: usize) -> bool {
    match chars[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => true,
        b'y' => i > 0 && !is_vowel(chars, i - 1),
        _ => false,
    }
}

/// The measure m: the number of vowel→consonant transitions in the
/// [C](VC)^m[V] decomposition of `chars`.
fn measure(chars: &[u8]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..chars.len() {
        let v = is_vowel(chars, i);
        if prev_vowel && !v {
            m += 1;
        }
        prev_vowel = v;
    }
    m
}

fn has_vowel(chars: &[u8]) -> bool {
    (0..chars.len()).any(|i| is_vowel(chars, i))
}

fn ends_double_consonant(chars: &[u8]) -> bool {
    let n = chars.len();
    n >= 2 && chars[n - 1] == chars[n - 2] && !is_vowel(chars, n - 1)
}

/// The *o condition: stem ends consonant-vowel-consonant where the final
/// consonant is not w, x, or y.
fn ends_cvc(chars: &[u8]) -> bool {
    let n = chars.len();
    n >= 3
        && !is_vowel(chars, n - 3)
        && is_vowel(chars, n - 2)
        && !is_vowel(chars, n - 1)
        && !matches!(chars[n - 1], b'w' | b'x' | b'y')
}

fn ends_with(chars: &[u8], suffix: &str) -> bool {
    chars.len() >= suffix.len() && &chars[chars.len() - suffix.len()..] == suffix.as_bytes()
}

/// Replaces `suffix` with `with` when the remaining stem satisfies `cond`.
/// Returns whether the suffix matched at all (tried), not whether it fired.
fn replace_if<F>(chars: &mut Vec<u8>, suffix: &str, with: &str, cond: F) -> bool
where
    F: Fn(&[u8]) -> bool,
{
    if !ends_with(chars, suffix) {
        return false;
    }
    let stem_len = chars.len() - suffix.len();
    if cond(&chars[..stem_len]) {
        chars.truncate(stem_len);
        chars.extend_from_slice(with.as_bytes());
    }
    true
}

fn step_1a(chars: &mut Vec<u8>) {
    let always = |_: &[u8]| true;
    if replace_if(chars, "sses", "ss", always) {
        return;
    }
    if replace_if(chars, "ies", "i", always) {
        return;
    }
    if ends_with(chars, "ss") {
        return;
    }
    replace_if(chars, "s", "", always);
}

fn step_1b(chars: &mut Vec<u8>) {
    if ends_with(chars, "eed") {
        replace_if(chars, "eed", "ee", |stem| measure(stem) > 0);
        return;
    }
    let removed = (ends_with(chars, "ed") && {
        let stem = &chars[..chars.len() - 2];
        has_vowel(stem) && {
            chars.truncate(chars.len() - 2);
            true
        }
    }) || (ends_with(chars, "ing") && {
        let stem = &chars[..chars.len() - 3];
        has_vowel(stem) && {
            chars.truncate(chars.len() - 3);
            true
        }
    });
    if !removed {
        return;
    }
    let always = |_: &[u8]| true;
    if replace_if(chars, "at", "ate", always)
        || replace_if(chars, "bl", "ble", always)
        || replace_if(chars, "iz", "ize", always)
    {
        return;
    }
    if ends_double_consonant(chars) && !matches!(chars[chars.len() - 1], b'l' | b's' | b'z') {
        chars.pop();
        return;
    }
    if measure(chars) == 1 && ends_cvc(chars) {
        chars.push(b'e');
    }
}

fn step_1c(chars: &mut Vec<u8>) {
    if ends_with(chars, "y") && has_vowel(&chars[..chars.len() - 1]) {
        let n = chars.len();
        chars[n - 1] = b'i';
    }
}

const STEP_2: &[(&str, &str)] = &[
    ("ational", "ate"),
    ("tional", "tion"),
    ("enci", "ence"),
    ("anci", "ance"),
    ("izer", "ize"),
    ("abli", "able"),
    ("alli", "al"),
    ("entli", "ent"),
    ("eli", "e"),
    ("ousli", "ous"),
    ("ization", "ize"),
    ("ation", "ate"),
    ("ator", "ate"),
    ("alism", "al"),
    ("iveness", "ive"),
    ("fulness", "ful"),
    ("ousness", "ous"),
    ("aliti", "al"),
    ("iviti", "ive"),
    ("biliti", "ble"),
];

const STEP_3: &[(&str, &str)] = &[
    ("icate", "ic"),
    ("ative", ""),
    ("alize", "al"),
    ("iciti", "ic"),
    ("ical", "ic"),
    ("ful", ""),
    ("ness", ""),
];

const STEP_4: &[&str] = &[
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment", "ent", "ion",
    "ou", "ism", "ate", "iti", "ous", "ive", "ize",
];

/// Applies the longest matching rewrite from `rules` if the stem measure
/// exceeds `min_m`.
fn apply_table(chars: &mut Vec<u8>, rules: &[(&str, &str)], min_m: usize) {
    let hit = rules
        .iter()
        .filter(|(s, _)| ends_with(chars, s))
        .max_by_key(|(s, _)| s.len());
    if let Some(&(suffix, with)) = hit {
        replace_if(chars, suffix, with, |stem| measure(stem) > min_m);
    }
}

fn step_4(chars: &mut Vec<u8>) {
    let hit = STEP_4
        .iter()
        .filter(|s| ends_with(chars, s))
        .max_by_key(|s| s.len());
    if let Some(&suffix) = hit {
        replace_if(chars, suffix, "", |stem| {
            measure(stem) > 1
                && (suffix != "ion" || matches!(stem.last(), Some(b's') | Some(b't')))
        });
    }
}

fn step_5a(chars: &mut Vec<u8>) {
    if !ends_with(chars, "e") {
        return;
    }
    let stem = &chars[..chars.len() - 1];
    let m = measure(stem);
    if m > 1 || (m == 1 && !ends_cvc(stem)) {
        chars.pop();
    }
}

fn step_5b(chars: &mut Vec<u8>) {
    if measure(chars) > 1 && ends_double_consonant(chars) && chars[chars.len() - 1] == b'l' {
        chars.pop();
    }
}

/// Stems one lower-case word. Non-ASCII-alphabetic input passes through.
pub fn porter_stem(word: &str) -> String {
    if word.len() <= 2 || !word.bytes().all(|b| b.is_ascii_lowercase()) {
        return word.to_string();
    }
    let mut chars: Vec<u8> = word.bytes().collect();
    step_1a(&mut chars);
    step_1b(&mut chars);
    step_1c(&mut chars);
    apply_table(&mut chars, STEP_2, 0);
    apply_table(&mut chars, STEP_3, 0);
    step_4(&mut chars);
    step_5a(&mut chars);
    step_5b(&mut chars);
    String::from_utf8(chars).expect("ascii in, ascii out")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_counts_vc_sequences() {
        for (w, m) in [
            ("tr", 0),
            ("ee", 0),
            ("tree", 0),
            ("y", 0),
            ("by", 0),
            ("trouble", 1),
            ("oats", 1),
            ("trees", 1),
            ("ivy", 1),
            ("troubles", 2),
            ("private", 2),
            ("oaten", 2),
            ("orrery", 2),
        ] {
            assert_eq!(measure(w.as_bytes()), m, "measure({w})");
        }
    }

    #[test]
    fn published_step_examples_stem_exactly() {
        for (input, expected) in [
            // Step 1a.
            ("caresses", "caress"),
            ("ponies", "poni"),
            ("ties", "ti"),
            ("caress", "caress"),
            ("cats", "cat"),
            // Step 1b.
            ("feed", "feed"),
            ("agreed", "agre"),
            ("plastered", "plaster"),
            ("bled", "bled"),
            ("motoring", "motor"),
            ("sing", "sing"),
            ("conflated", "conflat"),
            ("troubled", "troubl"),
            ("sized", "size"),
            ("hopping", "hop"),
            ("tanned", "tan"),
            ("falling", "fall"),
            ("hissing", "hiss"),
            ("fizzed", "fizz"),
            ("failing", "fail"),
            ("filing", "file"),
            // Step 1c.
            ("happy", "happi"),
            ("sky", "sky"),
            // Step 2.
            ("relational", "relat"),
            ("conditional", "condit"),
            ("rational", "ration"),
            ("valenci", "valenc"),
            ("hesitanci", "hesit"),
            ("digitizer", "digit"),
            ("conformabli", "conform"),
            ("radicalli", "radic"),
            ("differentli", "differ"),
            ("vileli", "vile"),
            ("analogousli", "analog"),
            ("vietnamization", "vietnam"),
            ("predication", "predic"),
            ("operator", "oper"),
            ("feudalism", "feudal"),
            ("decisiveness", "decis"),
            ("hopefulness", "hope"),
            ("callousness", "callous"),
            ("formaliti", "formal"),
            ("sensitiviti", "sensit"),
            ("sensibiliti", "sensibl"),
            // Step 3.
            ("triplicate", "triplic"),
            ("formative", "form"),
            ("formalize", "formal"),
            ("electriciti", "electr"),
            ("electrical", "electr"),
            ("hopeful", "hope"),
            ("goodness", "good"),
            // Step 4.
            ("revival", "reviv"),
            ("allowance", "allow"),
            ("inference", "infer"),
            ("airliner", "airlin"),
            ("gyroscopic", "gyroscop"),
            ("adjustable", "adjust"),
            ("defensible", "defens"),
            ("irritant", "irrit"),
            ("replacement", "replac"),
            ("adjustment", "adjust"),
            ("dependent", "depend"),
            ("adoption", "adopt"),
            ("homologou", "homolog"),
            ("communism", "commun"),
            ("activate", "activ"),
            ("angulariti", "angular"),
            ("effective", "effect"),
            ("bowdlerize", "bowdler"),
            // Step 5.
            ("probate", "probat"),
            ("rate", "rate"),
            ("cease", "ceas"),
            ("controll", "control"),
            ("roll", "roll"),
        ] {
            assert_eq!(porter_stem(input), expected, "stem({input})");
        }
    }

    #[test]
    fn common_english_words() {
        for (input, expected) in [
            ("running", "run"),
            ("capabilities", "capabl"),
            ("summaries", "summari"),
            ("summarization", "summar"),
            ("sentences", "sentenc"),
            ("generation", "gener"),
            ("argued", "argu"),
            ("meetings", "meet"),
        ] {
            assert_eq!(porter_stem(input), expected, "stem({input})");
        }
    }

    #[test]
    fn short_and_nonalpha_words_pass_through() {
        assert_eq!(porter_stem("as"), "as");
        assert_eq!(porter_stem("is"), "is");
        assert_eq!(porter_stem("a"), "a");
        assert_eq!(porter_stem("1990s"), "1990s");
        assert_eq!(porter_stem("u.s."), "u.s.");
        assert_eq!(porter_stem(""), "");
    }

    #[test]
    fn stemming_is_idempotent_on_its_own_output() {
        for w in [
            "caresses",
            "relational",
            "hopefulness",
            "electriciti",
            "adjustable",
            "falling",
            "happy",
        ] {
            let once = porter_stem(w);
            assert_eq!(porter_stem(&once), once, "restem({w})");
        }
    }
}
