//! Alphabet management, text normalization, simplex string encoding, and
//! unpaired corpus sampling for the discriminator's real-string stream.

use ndgrad::{Scalar, Tensor};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use std::io::BufRead;
use std::path::Path;
use thiserror::Error;

/// Internal stand-in character for the unknown symbol. Reports render it
/// as `⟨UNK⟩`; visual output draws it as a filled box.
pub const UNKNOWN_CHAR: char = '\u{fffd}';

/// Characters suppressed (dropped) by real-mode normalization.
pub const SUPPRESSED: [char; 9] = [',', '.', '?', '!', '`', '"', '*', '(', ')'];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus is empty after normalization and filtering")]
    EmptyAfterFilter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    /// Keep a-z and space, drop everything else.
    Synthetic,
    /// Suppress `, . ? ! ` " * ( )`, map any other out-of-alphabet
    /// character to the unknown symbol.
    Real,
}

/// Case-fold and restrict text to the alphabet of the given mode. Runs of
/// spaces left behind collapse to one space and the result is trimmed.
/// Idempotent.
pub fn normalize(text: &str, mode: NormalizeMode) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.to_lowercase().chars() {
        match mode {
            NormalizeMode::Synthetic => {
                if c.is_ascii_lowercase() || c == ' ' {
                    out.push(c);
                }
            }
            NormalizeMode::Real => {
                if c.is_ascii_lowercase() || c == ' ' {
                    out.push(c);
                } else if c.is_whitespace() {
                    out.push(' ');
                } else if !SUPPRESSED.contains(&c) {
                    out.push(UNKNOWN_CHAR);
                }
            }
        }
    }
    let mut collapsed = String::with_capacity(out.len());
    let mut prev_space = false;
    for c in out.chars() {
        if c == ' ' {
            if !prev_space {
                collapsed.push(' ');
            }
            prev_space = true;
        } else {
            collapsed.push(c);
            prev_space = false;
        }
    }
    collapsed.trim().to_string()
}

/// Render a normalized string for reports: the unknown symbol appears as
/// `⟨UNK⟩`.
pub fn display_normalized(text: &str) -> String {
    text.chars()
        .map(|c| {
            if c == UNKNOWN_CHAR {
                "⟨UNK⟩".to_string()
            } else {
                c.to_string()
            }
        })
        .collect()
}

/// Ordered symbol set: a-z, space, null, and (in real mode) unknown.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    symbols: Vec<String>,
    space: usize,
    null: usize,
    unknown: Option<usize>,
}

impl Alphabet {
    /// 26 letters + space + null; K = 28.
    pub fn synthetic() -> Self {
        let mut symbols: Vec<String> = ('a'..='z').map(|c| c.to_string()).collect();
        symbols.push(" ".to_string());
        symbols.push("<null>".to_string());
        Alphabet {
            symbols,
            space: 26,
            null: 27,
            unknown: None,
        }
    }

    /// Synthetic plus an unknown class; K = 29.
    pub fn real() -> Self {
        let mut a = Alphabet::synthetic();
        a.symbols.push("<unk>".to_string());
        a.unknown = Some(28);
        a
    }

    pub fn for_mode(mode: NormalizeMode) -> Self {
        match mode {
            NormalizeMode::Synthetic => Alphabet::synthetic(),
            NormalizeMode::Real => Alphabet::real(),
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn space_index(&self) -> usize {
        self.space
    }

    pub fn null_index(&self) -> usize {
        self.null
    }

    pub fn unknown_index(&self) -> Option<usize> {
        self.unknown
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    /// Short ASCII token per symbol for CSV headers and reports.
    pub fn symbol_token(&self, index: usize) -> &str {
        match &self.symbols[index] {
            s if s == " " => "space",
            s if s == "<null>" => "null",
            s if s == "<unk>" => "unk",
            s => s,
        }
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        if c.is_ascii_lowercase() {
            Some(c as usize - 'a' as usize)
        } else if c == ' ' {
            Some(self.space)
        } else if c == UNKNOWN_CHAR {
            self.unknown
        } else {
            None
        }
    }

    pub fn char_of(&self, index: usize) -> Option<char> {
        if index < 26 {
            Some((b'a' + index as u8) as char)
        } else if index == self.space {
            Some(' ')
        } else if Some(index) == self.unknown {
            Some(UNKNOWN_CHAR)
        } else {
            None // null has no textual form
        }
    }
}

/// Fixed-length index sequence over an alphabet, null-padded at the end.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedString {
    indices: Vec<usize>,
}

impl EncodedString {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Encode normalized text as indices padded with null to length `n`.
/// Panics if the text is longer than `n` or contains unmappable
/// characters (normalization must precede).
pub fn encode(text: &str, alphabet: &Alphabet, n: usize) -> EncodedString {
    let chars: Vec<char> = text.chars().collect();
    assert!(
        chars.len() <= n,
        "text of length {} does not fit n={n}",
        chars.len()
    );
    let mut indices = Vec::with_capacity(n);
    for c in chars {
        let idx = alphabet
            .index_of(c)
            .unwrap_or_else(|| panic!("unmappable character {c:?}; normalize first"));
        indices.push(idx);
    }
    indices.resize(n, alphabet.null_index());
    EncodedString { indices }
}

/// Inverse of [`encode`]: strips null padding.
pub fn decode(enc: &EncodedString, alphabet: &Alphabet) -> String {
    enc.indices
        .iter()
        .take_while(|&&i| i != alphabet.null_index())
        .map(|&i| alphabet.char_of(i).expect("non-null index decodes to a char"))
        .collect()
}

/// Indices of the argmax per position of a `[K,n]` column-scores slice,
/// then null-stripped decode.
pub fn decode_argmax<T: Scalar>(logits: &[T], k: usize, n: usize, alphabet: &Alphabet) -> String {
    let mut indices = Vec::with_capacity(n);
    for pos in 0..n {
        let mut best = 0usize;
        for j in 1..k {
            if logits[j * n + pos] > logits[best * n + pos] {
                best = j;
            }
        }
        indices.push(best);
    }
    decode(&EncodedString { indices }, alphabet)
}

/// One-hot `[K,n]` tensor; each column a vertex of the simplex.
pub fn one_hot<T: Scalar>(enc: &EncodedString, k: usize) -> Tensor<T> {
    let n = enc.len();
    let mut data = vec![T::zero(); k * n];
    for (pos, &idx) in enc.indices().iter().enumerate() {
        assert!(idx < k, "index {idx} out of range K={k}");
        data[idx * n + pos] = T::one();
    }
    Tensor::new(vec![k, n], data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    /// One word per entry, no spaces.
    Words,
    /// Full text strings; may contain spaces.
    Lines,
}

/// Normalized unpaired text source.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub kind: CorpusKind,
    pub entries: Vec<String>,
    mode: NormalizeMode,
}

impl Corpus {
    /// Load a UTF-8, LF-delimited, one-entry-per-line corpus file.
    ///
    /// Word corpora keep entries of exactly `length_filter` characters when
    /// a filter is given. Line corpora keep the longest prefix that ends at
    /// a word boundary and fits `n` characters (entries whose first word
    /// already exceeds `n` are dropped).
    pub fn load(
        path: &Path,
        kind: CorpusKind,
        mode: NormalizeMode,
        length_filter: Option<usize>,
        n: Option<usize>,
    ) -> Result<Corpus, CorpusError> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut raw = Vec::new();
        for line in reader.lines() {
            raw.push(line?);
        }
        Corpus::from_lines(&raw, kind, mode, length_filter, n)
    }

    /// Same filtering rules over in-memory lines.
    pub fn from_lines(
        lines: &[String],
        kind: CorpusKind,
        mode: NormalizeMode,
        length_filter: Option<usize>,
        n: Option<usize>,
    ) -> Result<Corpus, CorpusError> {
        let mut entries = Vec::new();
        for line in lines {
            let norm = normalize(line, mode);
            if norm.is_empty() {
                continue;
            }
            match kind {
                CorpusKind::Words => {
                    // lexicon entries contain no space
                    if norm.contains(' ') {
                        continue;
                    }
                    if let Some(want) = length_filter {
                        if norm.chars().count() != want {
                            continue;
                        }
                    }
                    if let Some(cap) = n {
                        if norm.chars().count() > cap {
                            continue;
                        }
                    }
                    entries.push(norm);
                }
                CorpusKind::Lines => {
                    let fitted = match n {
                        Some(cap) => truncate_at_word_boundary(&norm, cap),
                        None => Some(norm),
                    };
                    if let Some(s) = fitted {
                        if !s.is_empty() {
                            entries.push(s);
                        }
                    }
                }
            }
        }
        if entries.is_empty() {
            return Err(CorpusError::EmptyAfterFilter);
        }
        Ok(Corpus {
            kind,
            entries,
            mode,
        })
    }

    /// Compose random multi-word lines from a word lexicon: words are
    /// drawn uniformly and joined with single spaces while they fit `n`
    /// characters. Keeps the repository self-contained when no external
    /// line corpus is available.
    pub fn compose_lines(
        words: &Corpus,
        n: usize,
        count: usize,
        rng: &mut dyn RngCore,
    ) -> Corpus {
        assert_eq!(words.kind, CorpusKind::Words);
        assert!(!words.entries.is_empty());
        let mut entries = Vec::with_capacity(count);
        while entries.len() < count {
            let mut line = String::new();
            loop {
                let w = &words.entries[rng.random_range(0..words.entries.len())];
                let extra = if line.is_empty() {
                    w.chars().count()
                } else {
                    w.chars().count() + 1
                };
                if line.chars().count() + extra > n {
                    break;
                }
                if !line.is_empty() {
                    line.push(' ');
                }
                line.push_str(w);
            }
            if !line.is_empty() {
                entries.push(line);
            }
        }
        Corpus {
            kind: CorpusKind::Lines,
            entries,
            mode: words.mode,
        }
    }

    pub fn mode(&self) -> NormalizeMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Uniform random entry.
    pub fn sample<'a>(&'a self, rng: &mut dyn RngCore) -> &'a str {
        &self.entries[rng.random_range(0..self.entries.len())]
    }
}

/// Longest prefix ending exactly at a word boundary with at most `n` chars.
fn truncate_at_word_boundary(line: &str, n: usize) -> Option<String> {
    if line.chars().count() <= n {
        return Some(line.to_string());
    }
    let mut best: Option<usize> = None; // char count of candidate prefix
    for (i, c) in line.chars().enumerate() {
        if c == ' ' {
            if i <= n {
                best = Some(i); // prefix before this space
            } else {
                break;
            }
        }
    }
    best.map(|chars| line.chars().take(chars).collect())
}

/// Uniformly sampled batch of corpus entries, encoded one-hot as
/// `[batch, K, n]`.
pub fn sample_real_batch<T: Scalar>(
    corpus: &Corpus,
    alphabet: &Alphabet,
    n: usize,
    batch: usize,
    rng: &mut dyn RngCore,
) -> Tensor<T> {
    assert!(!corpus.is_empty(), "corpus must be nonempty");
    let k = alphabet.len();
    let mut data = vec![T::zero(); batch * k * n];
    for s in 0..batch {
        let text = corpus.sample(rng);
        let enc = encode(text, alphabet, n);
        for (pos, &idx) in enc.indices().iter().enumerate() {
            data[s * k * n + idx * n + pos] = T::one();
        }
    }
    Tensor::new(vec![batch, k, n], data)
}

/// Character frequencies and suffix statistics of a corpus.
#[derive(Clone, Debug)]
pub struct CorpusStats {
    /// Relative frequency per alphabet symbol (null always zero).
    pub char_freq: Vec<f64>,
    /// Symbols ordered most-frequent first.
    pub freq_rank: Vec<usize>,
}

pub fn corpus_stats(corpus: &Corpus, alphabet: &Alphabet) -> CorpusStats {
    assert!(!corpus.is_empty(), "corpus must be nonempty");
    let k = alphabet.len();
    let mut counts = vec![0u64; k];
    for e in &corpus.entries {
        for c in e.chars() {
            if let Some(i) = alphabet.index_of(c) {
                counts[i] += 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    let char_freq: Vec<f64> = counts
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect();
    let mut freq_rank: Vec<usize> = (0..k).collect();
    freq_rank.sort_by(|&a, &b| {
        counts[b]
            .cmp(&counts[a])
            .then(a.cmp(&b))
    });
    CorpusStats {
        char_freq,
        freq_rank,
    }
}

/// Fraction of corpus entries ending in `suffix`.
pub fn suffix_fraction(corpus: &Corpus, suffix: &str) -> f64 {
    assert!(!corpus.is_empty(), "corpus must be nonempty");
    let hits = corpus
        .entries
        .iter()
        .filter(|e| e.ends_with(suffix))
        .count();
    hits as f64 / corpus.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn normalize_synthetic_drops_punctuation() {
        assert_eq!(normalize("Hello, World!", NormalizeMode::Synthetic), "hello world");
    }

    #[test]
    fn normalize_synthetic_case_folds() {
        assert_eq!(normalize("CATS", NormalizeMode::Synthetic), "cats");
    }

    #[test]
    fn normalize_real_maps_apostrophe_to_unknown() {
        // apostrophe is not in the suppression list, so it becomes <UNK>
        let norm = normalize("don't", NormalizeMode::Real);
        assert_eq!(norm, format!("don{UNKNOWN_CHAR}t"));
        assert_eq!(display_normalized(&norm), "don⟨UNK⟩t");
    }

    #[test]
    fn normalize_real_suppresses_listed_symbols() {
        assert_eq!(
            normalize("stop. (here) \"now\"!", NormalizeMode::Real),
            "stop here now"
        );
    }

    #[test]
    fn alphabet_sizes_match_modes() {
        assert_eq!(Alphabet::synthetic().len(), 28);
        assert_eq!(Alphabet::real().len(), 29);
        let a = Alphabet::synthetic();
        assert_eq!(a.index_of('a'), Some(0));
        assert_eq!(a.index_of('z'), Some(25));
        assert_eq!(a.index_of(' '), Some(26));
        assert_eq!(a.null_index(), 27);
        assert_eq!(Alphabet::real().unknown_index(), Some(28));
    }

    #[test]
    fn encode_cat_with_padding() {
        let a = Alphabet::synthetic();
        let enc = encode("cat", &a, 5);
        assert_eq!(enc.indices(), &[2, 0, 19, 27, 27]);
    }

    #[test]
    fn encode_empty_is_all_null() {
        let a = Alphabet::synthetic();
        let enc = encode("", &a, 4);
        assert_eq!(enc.indices(), &[27, 27, 27, 27]);
    }

    #[test]
    #[should_panic(expected = "does not fit")]
    fn encode_rejects_overlong_text() {
        let a = Alphabet::synthetic();
        encode("toolong", &a, 3);
    }

    #[test]
    #[should_panic(expected = "unmappable")]
    fn encode_rejects_unnormalized_text() {
        let a = Alphabet::synthetic();
        encode("Cat", &a, 5);
    }

    #[test]
    fn one_hot_columns_are_simplex_vertices() {
        let a = Alphabet::synthetic();
        let enc = encode("hi", &a, 4);
        let t: Tensor<f64> = one_hot(&enc, a.len());
        assert_eq!(t.shape(), &[28, 4]);
        for pos in 0..4 {
            let col: Vec<f64> = (0..28).map(|k| t.data()[k * 4 + pos]).collect();
            assert_eq!(col.iter().sum::<f64>(), 1.0);
            assert_eq!(col.iter().filter(|&&v| v != 0.0).count(), 1);
        }
    }

    #[test]
    fn one_hot_single_symbol() {
        let enc = EncodedString { indices: vec![0] };
        let t: Tensor<f64> = one_hot(&enc, 3);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn word_filter_keeps_exact_length() {
        let lines: Vec<String> = ["cat", "horse", "dog"].iter().map(|s| s.to_string()).collect();
        let c = Corpus::from_lines(&lines, CorpusKind::Words, NormalizeMode::Synthetic, Some(3), None)
            .unwrap();
        assert_eq!(c.entries, vec!["cat", "dog"]);
    }

    #[test]
    fn line_truncation_at_word_boundary() {
        let lines = vec!["the cat sat on the mat".to_string()];
        let c = Corpus::from_lines(&lines, CorpusKind::Lines, NormalizeMode::Synthetic, None, Some(10))
            .unwrap();
        assert_eq!(c.entries, vec!["the cat"]);
    }

    #[test]
    fn duplicate_lines_are_retained() {
        let lines = vec!["cat".to_string(), "cat".to_string()];
        let c =
            Corpus::from_lines(&lines, CorpusKind::Words, NormalizeMode::Synthetic, None, None).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn empty_corpus_is_a_configuration_error() {
        let lines = vec!["horse".to_string()];
        let r = Corpus::from_lines(&lines, CorpusKind::Words, NormalizeMode::Synthetic, Some(3), None);
        assert!(matches!(r, Err(CorpusError::EmptyAfterFilter)));
    }

    #[test]
    fn single_entry_corpus_batches_are_identical_rows() {
        let lines = vec!["cab".to_string()];
        let c =
            Corpus::from_lines(&lines, CorpusKind::Words, NormalizeMode::Synthetic, None, None).unwrap();
        let a = Alphabet::synthetic();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let batch: Tensor<f64> = sample_real_batch(&c, &a, 5, 4, &mut rng);
        let row = &batch.data()[..28 * 5];
        for s in 1..4 {
            assert_eq!(&batch.data()[s * 28 * 5..(s + 1) * 28 * 5], row);
        }
    }

    #[test]
    fn same_seed_same_batch() {
        let lines: Vec<String> = ["cat", "dog", "owl", "fox"].iter().map(|s| s.to_string()).collect();
        let c =
            Corpus::from_lines(&lines, CorpusKind::Words, NormalizeMode::Synthetic, None, None).unwrap();
        let a = Alphabet::synthetic();
        let mk = |seed| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            sample_real_batch::<f32>(&c, &a, 3, 8, &mut rng)
        };
        assert_eq!(mk(7), mk(7));
        assert_ne!(mk(7), mk(8));
    }

    #[test]
    fn sampling_is_uniform_within_3_sigma() {
        let lines: Vec<String> = "abcdefghij".chars().map(|c| format!("word{c}")).collect();
        let c =
            Corpus::from_lines(&lines, CorpusKind::Words, NormalizeMode::Synthetic, None, None).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let mut counts = vec![0usize; 10];
        let draws = 10_000;
        for _ in 0..draws {
            let s = c.sample(&mut rng);
            let idx = s.as_bytes()[4] as usize - 'a' as usize;
            counts[idx] += 1;
        }
        // binomial: mean 1000, sigma = sqrt(n p (1-p)) = 30
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        for &cnt in &counts {
            assert!(
                (cnt as f64 - 1000.0).abs() < 3.0 * sigma,
                "count {cnt} outside 3 sigma"
            );
        }
    }

    #[test]
    fn stats_single_symbol_corpus() {
        let lines = vec!["aa".to_string()];
        let c =
            Corpus::from_lines(&lines, CorpusKind::Words, NormalizeMode::Synthetic, None, None).unwrap();
        let stats = corpus_stats(&c, &Alphabet::synthetic());
        assert_eq!(stats.char_freq[0], 1.0);
        assert_eq!(stats.freq_rank[0], 0);
    }

    #[test]
    fn suffix_fraction_counts_directly() {
        let lines: Vec<String> = ["sing", "song", "cat", "dog"].iter().map(|s| s.to_string()).collect();
        let c =
            Corpus::from_lines(&lines, CorpusKind::Words, NormalizeMode::Synthetic, None, None).unwrap();
        assert_eq!(suffix_fraction(&c, "ng"), 0.5);
    }

    #[test]
    fn composed_lines_fit_n_and_use_lexicon_words() {
        let lines: Vec<String> = ["cat", "horse", "elephant"].iter().map(|s| s.to_string()).collect();
        let words =
            Corpus::from_lines(&lines, CorpusKind::Words, NormalizeMode::Synthetic, None, None).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let composed = Corpus::compose_lines(&words, 20, 50, &mut rng);
        assert_eq!(composed.len(), 50);
        for e in &composed.entries {
            assert!(e.chars().count() <= 20);
            for w in e.split(' ') {
                assert!(words.entries.iter().any(|x| x == w), "{w} not in lexicon");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        // normalization is idempotent
        #[test]
        fn normalize_idempotent(s in "\\PC{0,40}") {
            for mode in [NormalizeMode::Synthetic, NormalizeMode::Real] {
                let once = normalize(&s, mode);
                prop_assert_eq!(normalize(&once, mode), once);
            }
        }

        // encode/decode round-trip on normalized strings of length <= n
        #[test]
        fn encode_decode_round_trip(s in "[a-z ]{0,12}") {
            let a = Alphabet::synthetic();
            let norm = normalize(&s, NormalizeMode::Synthetic);
            let enc = encode(&norm, &a, 12);
            prop_assert_eq!(decode(&enc, &a), norm);
        }

        // padding is always a suffix: no symbol follows a null
        #[test]
        fn padding_is_suffix(s in "[a-z]{0,10}") {
            let a = Alphabet::synthetic();
            let enc = encode(&s, &a, 10);
            let first_null = enc.indices().iter().position(|&i| i == a.null_index());
            if let Some(p) = first_null {
                prop_assert!(enc.indices()[p..].iter().all(|&i| i == a.null_index()));
            }
        }

        // argmax inverts one_hot
        #[test]
        fn argmax_inverts_one_hot(s in "[a-z ]{1,8}") {
            let a = Alphabet::synthetic();
            let norm = normalize(&s, NormalizeMode::Synthetic);
            let enc = encode(&norm, &a, 8);
            let t: Tensor<f64> = one_hot(&enc, a.len());
            let decoded = decode_argmax(t.data(), a.len(), 8, &a);
            prop_assert_eq!(decoded, norm);
        }

        // frequency table sums to 1 (excluding null) on any nonempty corpus
        #[test]
        fn frequencies_sum_to_one(words in proptest::collection::vec("[a-z]{1,8}", 1..20)) {
            let lines: Vec<String> = words;
            let c = Corpus::from_lines(&lines, CorpusKind::Words, NormalizeMode::Synthetic, None, None).unwrap();
            let a = Alphabet::synthetic();
            let stats = corpus_stats(&c, &a);
            let total: f64 = stats.char_freq.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(stats.char_freq.iter().all(|&f| f >= 0.0));
            prop_assert_eq!(stats.char_freq[a.null_index()], 0.0);
        }
    }
}
