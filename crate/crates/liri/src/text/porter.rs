//! Porter stemmer, implementing the original 1980 rule tables.
//!
//! Operates on ASCII lowercase words. Tokens containing anything other than
//! `a..=z` are returned unchanged, as are words of length <= 2. The rule
//! tables below follow the published algorithm; later revisions of the
//! reference implementation (e.g. `logi -> log`) are intentionally absent.

/// Stem a single token.
pub fn stem(word: &str) -> String {
    if word.len() <= 2 || !word.bytes().all(|b| b.is_ascii_lowercase()) {
        return word.to_string();
    }
    let mut w: Vec<u8> = word.as_bytes().to_vec();
    step_1a(&mut w);
    step_1b(&mut w);
    step_1c(&mut w);
    step_2(&mut w);
    step_3(&mut w);
    step_4(&mut w);
    step_5a(&mut w);
    step_5b(&mut w);
    String::from_utf8(w).expect("ascii")
}

/// Is the letter at `i` a consonant? `y` counts as a vowel when preceded by
/// a consonant, as a consonant at the start of the word or after a vowel.
fn is_consonant(w: &[u8], i: usize) -> bool {
    match w[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => false,
        b'y' => i == 0 || !is_consonant(w, i - 1),
        _ => true,
    }
}

/// The measure m of `w`: the number of VC sequences in [C](VC)^m[V].
fn measure(w: &[u8]) -> usize {
    let mut m = 0;
    let mut i = 0;
    let n = w.len();
    // skip initial consonants
    while i < n && is_consonant(w, i) {
        i += 1;
    }
    loop {
        // vowel run
        while i < n && !is_consonant(w, i) {
            i += 1;
        }
        if i == n {
            return m;
        }
        // consonant run closes one VC group
        while i < n && is_consonant(w, i) {
            i += 1;
        }
        m += 1;
        if i == n {
            return m;
        }
    }
}

fn contains_vowel(w: &[u8]) -> bool {
    (0..w.len()).any(|i| !is_consonant(w, i))
}

fn ends_double_consonant(w: &[u8]) -> bool {
    let n = w.len();
    n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1)
}

/// *o condition: stem ends consonant-vowel-consonant where the final
/// consonant is not w, x or y.
fn ends_cvc(w: &[u8]) -> bool {
    let n = w.len();
    n >= 3
        && is_consonant(w, n - 3)
        && !is_consonant(w, n - 2)
        && is_consonant(w, n - 1)
        && !matches!(w[n - 1], b'w' | b'x' | b'y')
}

fn ends_with(w: &[u8], suffix: &[u8]) -> bool {
    w.len() > suffix.len() && &w[w.len() - suffix.len()..] == suffix
}

fn step_1a(w: &mut Vec<u8>) {
    if ends_with(w, b"sses") {
        w.truncate(w.len() - 2);
    } else if ends_with(w, b"ies") {
        w.truncate(w.len() - 2);
    } else if ends_with(w, b"ss") {
        // unchanged
    } else if w.last() == Some(&b's') {
        w.pop();
    }
}

fn step_1b(w: &mut Vec<u8>) {
    if ends_with(w, b"eed") {
        if measure(&w[..w.len() - 3]) > 0 {
            w.pop();
        }
        return;
    }
    let stripped = if ends_with(w, b"ed") && contains_vowel(&w[..w.len() - 2]) {
        w.truncate(w.len() - 2);
        true
    } else if ends_with(w, b"ing") && contains_vowel(&w[..w.len() - 3]) {
        w.truncate(w.len() - 3);
        true
    } else {
        false
    };
    if !stripped {
        return;
    }
    if ends_with(w, b"at") || ends_with(w, b"bl") || ends_with(w, b"iz") {
        w.push(b'e');
    } else if ends_double_consonant(w) && !matches!(w[w.len() - 1], b'l' | b's' | b'z') {
        w.pop();
    } else if measure(w) == 1 && ends_cvc(w) {
        w.push(b'e');
    }
}

fn step_1c(w: &mut Vec<u8>) {
    let n = w.len();
    if n >= 2 && w[n - 1] == b'y' && contains_vowel(&w[..n - 1]) {
        w[n - 1] = b'i';
    }
}

/// Apply the first (longest) matching rule whose suffix fits; the condition
/// is `measure(stem) > min_measure`. A failed condition still ends the step.
fn replace_longest(w: &mut Vec<u8>, rules: &[(&[u8], &[u8])], min_measure: usize) {
    let mut candidates: Vec<&(&[u8], &[u8])> = rules.iter().collect();
    candidates.sort_by_key(|(s, _)| std::cmp::Reverse(s.len()));
    for (suffix, replacement) in candidates {
        if ends_with(w, suffix) {
            let stem_len = w.len() - suffix.len();
            if measure(&w[..stem_len]) > min_measure {
                w.truncate(stem_len);
                w.extend_from_slice(replacement);
            }
            return;
        }
    }
}

fn step_2(w: &mut Vec<u8>) {
    const RULES: &[(&[u8], &[u8])] = &[
        (b"ational", b"ate"),
        (b"tional", b"tion"),
        (b"enci", b"ence"),
        (b"anci", b"ance"),
        (b"izer", b"ize"),
        (b"abli", b"able"),
        (b"alli", b"al"),
        (b"entli", b"ent"),
        (b"eli", b"e"),
        (b"ousli", b"ous"),
        (b"ization", b"ize"),
        (b"ation", b"ate"),
        (b"ator", b"ate"),
        (b"alism", b"al"),
        (b"iveness", b"ive"),
        (b"fulness", b"ful"),
        (b"ousness", b"ous"),
        (b"aliti", b"al"),
        (b"iviti", b"ive"),
        (b"biliti", b"ble"),
    ];
    replace_longest(w, RULES, 0);
}

fn step_3(w: &mut Vec<u8>) {
    const RULES: &[(&[u8], &[u8])] = &[
        (b"icate", b"ic"),
        (b"ative", b""),
        (b"alize", b"al"),
        (b"iciti", b"ic"),
        (b"ical", b"ic"),
        (b"ful", b""),
        (b"ness", b""),
    ];
    replace_longest(w, RULES, 0);
}

fn step_4(w: &mut Vec<u8>) {
    const SUFFIXES: &[&[u8]] = &[
        b"ement", b"ance", b"ence", b"able", b"ible", b"ment", b"ion", b"ant", b"ent", b"ism",
        b"ate", b"iti", b"ous", b"ive", b"ize", b"al", b"er", b"ic", b"ou",
    ];
    let mut candidates: Vec<&&[u8]> = SUFFIXES.iter().collect();
    candidates.sort_by_key(|s| std::cmp::Reverse(s.len()));
    for suffix in candidates {
        if ends_with(w, suffix) {
            let stem_len = w.len() - suffix.len();
            let ok = measure(&w[..stem_len]) > 1
                && (*suffix != b"ion" || matches!(w[stem_len - 1], b's' | b't'));
            if ok {
                w.truncate(stem_len);
            }
            return;
        }
    }
}

fn step_5a(w: &mut Vec<u8>) {
    if w.last() != Some(&b'e') {
        return;
    }
    let stem = &w[..w.len() - 1];
    let m = measure(stem);
    if m > 1 || (m == 1 && !ends_cvc(stem)) {
        w.pop();
    }
}

fn step_5b(w: &mut Vec<u8>) {
    if measure(w) > 1 && ends_double_consonant(w) && w.last() == Some(&b'l') {
        w.pop();
    }
}
