//! Seeded three-class review corpus for end-to-end benchmarks.
//!
//! Each review mixes one to three class keywords drawn from the lexicon with
//! filler words the lexicon does not know, so lexicon labeling recovers the
//! intended class exactly:
//!
//! - Positive keywords have polarity at least 0.3, Negative at most -0.3.
//! - Neutral reviews use near-zero entries (|polarity| <= 0.05).
//! - Negators never appear.
//!
//! Capitalization and punctuation are perturbed so cleaning has work to do.

use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Review;
use crate::lexicon::{Lexicon, SentimentLabel};
use crate::{Error, Result};

const FILLER: &[&str] = &[
    "app",
    "the",
    "it",
    "this",
    "i",
    "use",
    "for",
    "my",
    "work",
    "answers",
    "chat",
    "model",
    "update",
    "version",
    "phone",
    "questions",
    "code",
    "writing",
    "every",
    "day",
    "with",
    "and",
    "after",
    "latest",
    "responses",
    "students",
    "search",
    "login",
    "screen",
    "voice",
    "today",
    "was",
    "is",
    "really",
    "so",
    "very",
    "feature",
    "images",
    "history",
    "settings",
];

const PUNCT: &[&str] = &["", "", "", ".", "!", ",", "?!", "..."];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub reviews: usize,
    pub apps: Vec<String>,
    pub keywords: (usize, usize),
    pub filler: (usize, usize),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            reviews: 900,
            apps: vec!["chatgpt".into(), "deepseek".into()],
            keywords: (1, 3),
            filler: (3, 9),
            seed: 0,
        }
    }
}

/// Keyword pools in label-code order, each sorted for seed stability.
pub fn keyword_pools(lex: &Lexicon) -> [Vec<&str>; 3] {
    let mut pools: [Vec<&str>; 3] = Default::default();
    for (word, &p) in &lex.entries {
        if lex.is_negator(word) || !word.bytes().all(|b| b.is_ascii_lowercase()) {
            continue;
        }
        let class = if p >= 0.3 {
            SentimentLabel::Positive
        } else if p <= -0.3 {
            SentimentLabel::Negative
        } else if p.abs() <= 0.05 {
            SentimentLabel::Neutral
        } else {
            continue;
        };
        pools[class.code()].push(word.as_str());
    }
    for p in &mut pools {
        p.sort_unstable();
    }
    pools
}

fn decorate<R: Rng>(word: &str, rng: &mut R) -> String {
    let mut w = if rng.random_bool(0.15) {
        let mut c = word.chars();
        c.next()
            .map_or(String::new(), |f| f.to_uppercase().chain(c).collect())
    } else if rng.random_bool(0.03) {
        word.to_uppercase()
    } else {
        word.to_string()
    };
    w.push_str(PUNCT.choose(rng).copied().unwrap_or(""));
    w
}

fn rating_for<R: Rng>(label: SentimentLabel, rng: &mut R) -> Option<u8> {
    if rng.random_bool(0.02) {
        return None;
    }
    let stars = match label {
        SentimentLabel::Negative => [1, 1, 1, 2, 2, 3],
        SentimentLabel::Neutral => [2, 3, 3, 3, 4, 4],
        SentimentLabel::Positive => [3, 4, 4, 5, 5, 5],
    };
    stars.choose(rng).copied()
}

/// Generates `config.reviews` reviews cycling Negative, Neutral, Positive,
/// returning each with its intended label.
pub fn generate(lex: &Lexicon, config: &SyntheticConfig) -> Result<Vec<(Review, SentimentLabel)>> {
    if config.apps.is_empty() {
        return Err(Error::Config(
            "synthetic corpus needs at least one app".into(),
        ));
    }
    let (kmin, kmax) = config.keywords;
    let (fmin, fmax) = config.filler;
    if kmin == 0 || kmin > kmax || fmin > fmax {
        return Err(Error::Config(
            "synthetic word-count ranges are invalid".into(),
        ));
    }
    let pools = keyword_pools(lex);
    for label in SentimentLabel::ALL {
        if pools[label.code()].is_empty() {
            return Err(Error::Data(format!(
                "lexicon has no {label} keywords for the synthetic corpus"
            )));
        }
    }
    let filler: Vec<&str> = FILLER
        .iter()
        .copied()
        .filter(|w| lex.polarity(w).is_none() && !lex.is_negator(w))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.reviews);
    for i in 0..config.reviews {
        let label = SentimentLabel::ALL[i % 3];
        let mut words: Vec<&str> = (0..rng.random_range(fmin..=fmax))
            .filter_map(|_| filler.choose(&mut rng).copied())
            .collect();
        for _ in 0..rng.random_range(kmin..=kmax) {
            let at = rng.random_range(0..=words.len());
            let kw = pools[label.code()]
                .choose(&mut rng)
                .copied()
                .unwrap_or_default();
            words.insert(at, kw);
        }
        let text = words
            .iter()
            .map(|w| decorate(w, &mut rng))
            .collect::<Vec<_>>()
            .join(" ");
        let review = Review {
            app_id: config.apps[i % config.apps.len()].clone(),
            text,
            rating: rating_for(label, &mut rng),
            timestamp: Some(format!(
                "2025-03-{:02} {:02}:{:02}:00",
                1 + i % 28,
                i / 60 % 24,
                i % 60
            )),
            review_id: Some(format!("syn-{i:05}")),
        };
        out.push((review, label));
    }
    Ok(out)
}

/// Writes reviews in the store-export layout read by [`crate::corpus::ingest`].
pub fn write_export_csv(path: impl AsRef<Path>, reviews: &[Review]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["reviewId", "content", "score", "at"])
        .map_err(|e| Error::csv(path, e))?;
    for r in reviews {
        let score = r.rating.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([
            r.review_id.as_deref().unwrap_or(""),
            &r.text,
            &score,
            r.timestamp.as_deref().unwrap_or(""),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
