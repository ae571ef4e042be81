//! Frequency-ranked vocabulary, integer encoding and fixed-length padding.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const PAD_INDEX: usize = 0;
pub const OOV_INDEX: usize = 1;
pub const DEFAULT_MAX_WORDS: usize = 5000;
pub const DEFAULT_MAX_LENGTH: usize = 100;

/// Word index with `0` reserved for padding and `1` for unknown words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    word_to_index: HashMap<String, usize>,
    index_to_word: Vec<String>,
    max_words: usize,
}

impl Vocabulary {
    pub fn max_words(&self) -> usize {
        self.max_words
    }

    /// Number of real words (excluding the two reserved indices).
    pub fn len(&self) -> usize {
        self.index_to_word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_to_word.is_empty()
    }

    pub fn index(&self, word: &str) -> Option<usize> {
        self.word_to_index.get(word).copied()
    }

    pub fn word(&self, index: usize) -> Option<&str> {
        index
            .checked_sub(2)
            .and_then(|i| self.index_to_word.get(i))
            .map(String::as_str)
    }

    /// Words in rank order, most frequent first.
    pub fn words(&self) -> &[String] {
        &self.index_to_word
    }

    pub fn save(&self, path: impl AsRef<Path>, max_length: usize) -> Result<()> {
        let path = path.as_ref();
        let mut out = format!(
            "#max_words\t{}\n#max_length\t{max_length}\n",
            self.max_words
        );
        for (i, w) in self.index_to_word.iter().enumerate() {
            let _ = writeln!(out, "{w}\t{}", i + 2);
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Loads a saved vocabulary, returning it with the recorded `max_length`.
    pub fn load(path: impl AsRef<Path>) -> Result<(Vocabulary, usize)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut max_words = None;
        let mut max_length = None;
        let mut words = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('\t')
                .ok_or_else(|| err(format!("malformed line `{line}`")))?;
            let value: usize = value
                .parse()
                .map_err(|_| err(format!("`{value}` is not an index")))?;
            match key {
                "#max_words" => max_words = Some(value),
                "#max_length" => max_length = Some(value),
                word => {
                    if value != words.len() + 2 {
                        return Err(err(format!(
                            "expected index {}, got {value}",
                            words.len() + 2
                        )));
                    }
                    words.push(word.to_string());
                }
            }
        }
        let max_words =
            max_words.ok_or_else(|| Error::Schema("vocabulary missing #max_words".into()))?;
        let max_length =
            max_length.ok_or_else(|| Error::Schema("vocabulary missing #max_length".into()))?;
        if words.len() + 2 > max_words {
            return Err(Error::Schema(format!(
                "vocabulary holds {} words but max_words is {max_words}",
                words.len()
            )));
        }
        Ok((Vocabulary::from_ranked(words, max_words), max_length))
    }

    fn from_ranked(index_to_word: Vec<String>, max_words: usize) -> Self {
        let word_to_index = index_to_word
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i + 2))
            .collect();
        Vocabulary {
            word_to_index,
            index_to_word,
            max_words,
        }
    }
}

/// A padded id sequence and the number of real tokens it holds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSequence {
    pub ids: Vec<usize>,
    pub length: usize,
}

/// Ranks words by descending frequency, breaking ties by first appearance.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], max_words: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Data(
            "cannot build a vocabulary from an empty corpus".into(),
        ));
    }
    if max_words < 2 {
        return Err(Error::Config(format!(
            "max_words must be at least 2 (pad and OOV), got {max_words}"
        )));
    }
    // word -> (count, first occurrence)
    let mut stats: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut order = 0usize;
    for text in corpus {
        for token in text.as_ref().split_whitespace() {
            let entry = stats.entry(token).or_insert((0, order));
            entry.0 += 1;
            order += 1;
        }
    }
    let mut ranked: Vec<(&str, usize, usize)> = stats
        .into_iter()
        .map(|(w, (c, first))| (w, c, first))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let words = ranked
        .into_iter()
        .take(max_words - 2)
        .map(|(w, _, _)| w.to_string())
        .collect();
    Ok(Vocabulary::from_ranked(words, max_words))
}

pub fn encode(text: &str, vocab: &Vocabulary) -> Vec<usize> {
    text.split_whitespace()
        .map(|t| vocab.index(t).unwrap_or(OOV_INDEX))
        .collect()
}

/// Post-pads with [`PAD_INDEX`] or post-truncates to exactly `max_length` ids.
pub fn pad(ids: &[usize], max_length: usize) -> EncodedSequence {
    let length = ids.len().min(max_length);
    let mut out = Vec::with_capacity(max_length);
    out.extend_from_slice(&ids[..length]);
    out.resize(max_length, PAD_INDEX);
    EncodedSequence { ids: out, length }
}

pub fn encode_padded(text: &str, vocab: &Vocabulary, max_length: usize) -> EncodedSequence {
    pad(&encode(text, vocab), max_length)
}
