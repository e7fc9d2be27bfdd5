//! Whitespace tokenizer over a corpus-built vocabulary. No subword units;
//! unknown words map to UNK.

use std::collections::HashMap;

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const UNK: usize = 2;
pub const SEP: usize = 3;
pub const N_SPECIALS: usize = 4;
pub const SPECIAL_WORDS: [&str; N_SPECIALS] = ["<s>", "</s>", "<unk>", "<sep>"];

#[derive(Debug, Clone)]
pub struct Vocab {
    words: Vec<String>,
    map: HashMap<String, usize>,
}

impl Vocab {
    /// Builds from raw texts: specials first, then corpus words ordered by
    /// (frequency desc, word asc) so the layout is deterministic.
    pub fn build<'a>(texts: impl Iterator<Item = &'a str>, max_size: Option<usize>) -> Vocab {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for t in texts {
            for w in t.split_whitespace() {
                *counts.entry(w).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|(w, _)| !SPECIAL_WORDS.contains(w))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let cap = max_size.unwrap_or(usize::MAX).saturating_sub(N_SPECIALS);
        ranked.truncate(cap);
        let mut words: Vec<String> = SPECIAL_WORDS.iter().map(|s| s.to_string()).collect();
        words.extend(ranked.into_iter().map(|(w, _)| w.to_string()));
        Vocab::from_words(words)
    }

    pub fn from_words(words: Vec<String>) -> Vocab {
        let map = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocab { words, map }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.map.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    /// Tokenize, mapping out-of-vocabulary words to UNK. Returns the ids and
    /// the number of UNK substitutions.
    pub fn tokenize(&self, text: &str) -> (Vec<usize>, usize) {
        let mut oov = 0;
        let ids = text
            .split_whitespace()
            .map(|w| match self.map.get(w) {
                Some(&i) => i,
                None => {
                    oov += 1;
                    UNK
                }
            })
            .collect();
        (ids, oov)
    }

    /// Human-readable join, skipping BOS/EOS.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i != BOS && i != EOS)
            .map(|&i| self.word(i))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_is_deterministic_and_ranked_by_frequency() {
        let texts = ["b a a", "c b a"];
        let v = Vocab::build(texts.iter().copied(), None);
        assert_eq!(v.len(), N_SPECIALS + 3);
        assert_eq!(v.word(N_SPECIALS), "a"); // 3 occurrences
        assert_eq!(v.word(N_SPECIALS + 1), "b"); // 2, before c alphabetically-tied? no: b=2 > c=1
        assert_eq!(v.word(N_SPECIALS + 2), "c");
    }

    #[test]
    fn oov_maps_to_unk_and_is_counted() {
        let v = Vocab::build(["hello world"].iter().copied(), None);
        let (ids, oov) = v.tokenize("hello mars world");
        assert_eq!(oov, 1);
        assert_eq!(ids[1], UNK);
        assert_eq!(v.decode(&ids), "hello <unk> world");
    }

    #[test]
    fn max_size_caps_vocabulary() {
        let v = Vocab::build(["a b c d e"].iter().copied(), Some(N_SPECIALS + 2));
        assert_eq!(v.len(), N_SPECIALS + 2);
    }
}
