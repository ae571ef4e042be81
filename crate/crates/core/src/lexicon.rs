//! Lexicon-based polarity scoring and threshold labeling.
//!
//! A text's polarity is the mean polarity of the tokens found in the lexicon.
//! A matched token directly preceded by a negator contributes its polarity
//! multiplied by the lexicon's negation factor. The mean is clamped to
//! `[-1, 1]` and mapped to a [`SentimentLabel`] with a [`LabelRule`].

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_NEGATION_FACTOR: f64 = -0.5;

/// Three-way sentiment class. The integer codes are fixed and used as model targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SentimentLabel {
    Negative = 0,
    Neutral = 1,
    Positive = 2,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
        SentimentLabel::Positive,
    ];
    pub const COUNT: usize = 3;

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SentimentLabel::Negative => "Negative",
            SentimentLabel::Neutral => "Neutral",
            SentimentLabel::Positive => "Positive",
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SentimentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" | "0" => Ok(SentimentLabel::Negative),
            "neutral" | "1" => Ok(SentimentLabel::Neutral),
            "positive" | "2" => Ok(SentimentLabel::Positive),
            other => Err(Error::Data(format!("unknown sentiment label `{other}`"))),
        }
    }
}

/// Polarity thresholds. Values strictly above `pos_threshold` are positive,
/// strictly below `neg_threshold` negative, everything in between neutral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelRule {
    pub pos_threshold: f64,
    pub neg_threshold: f64,
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule {
            pos_threshold: 0.1,
            neg_threshold: -0.1,
        }
    }
}

impl LabelRule {
    pub fn new(neg_threshold: f64, pos_threshold: f64) -> Result<Self> {
        // also rejects NaN
        if neg_threshold.partial_cmp(&pos_threshold) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Config(format!(
                "negative threshold {neg_threshold} must be below positive threshold {pos_threshold}"
            )));
        }
        Ok(LabelRule {
            pos_threshold,
            neg_threshold,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub entries: HashMap<String, f64>,
    pub negators: HashSet<String>,
    pub negation_factor: f64,
    /// Number of entries overwritten by a later line with the same word.
    pub duplicate_warnings: usize,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon {
            entries: HashMap::new(),
            negators: HashSet::new(),
            negation_factor: DEFAULT_NEGATION_FACTOR,
            duplicate_warnings: 0,
        }
    }
}

impl Lexicon {
    pub fn from_entries<'a>(
        entries: impl IntoIterator<Item = (&'a str, f64)>,
        negators: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self> {
        let mut lex = Lexicon::default();
        for (word, polarity) in entries {
            check_polarity(polarity).map_err(Error::Data)?;
            lex.entries.insert(word.to_string(), polarity);
        }
        lex.negators = negators.into_iter().map(str::to_string).collect();
        Ok(lex)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn polarity(&self, word: &str) -> Option<f64> {
        self.entries.get(word).copied()
    }

    pub fn is_negator(&self, word: &str) -> bool {
        self.negators.contains(word)
    }

    /// Parses the tab-separated lexicon format:
    ///
    /// ```text
    /// # comment
    /// good<TAB>0.7
    /// !negator<TAB>not
    /// ```
    pub fn parse(source: &str, origin: &Path) -> Result<Self> {
        let mut lex = Lexicon::default();
        for (idx, raw) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('\t')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `word<TAB>polarity`, got `{line}`")))?;
            if key == "!negator" {
                if value.is_empty() {
                    return Err(err("negator declaration without a word".into()));
                }
                lex.negators.insert(value.to_string());
                continue;
            }
            if key.is_empty() {
                return Err(err("empty word".into()));
            }
            let polarity: f64 = value
                .parse()
                .map_err(|_| err(format!("polarity `{value}` is not a number")))?;
            check_polarity(polarity).map_err(err)?;
            if lex.entries.insert(key.to_string(), polarity).is_some() {
                lex.duplicate_warnings += 1;
                log::warn!(
                    "{}:{line_no}: duplicate entry `{key}`, keeping the later value",
                    origin.display()
                );
            }
        }
        Ok(lex)
    }
}

fn check_polarity(p: f64) -> std::result::Result<(), String> {
    if p.is_finite() && (-1.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(format!("polarity {p} outside [-1, 1]"))
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Lexicon::parse(&source, path)
}

/// Mean polarity of matched tokens in an already cleaned text; 0.0 when nothing matches.
pub fn score_text(clean: &str, lex: &Lexicon) -> f64 {
    let mut sum = 0.0;
    let mut matched = 0usize;
    let mut previous: Option<&str> = None;
    for token in clean.split_whitespace() {
        if let Some(p) = lex.polarity(token) {
            let negated = previous.is_some_and(|w| lex.is_negator(w));
            sum += if negated { p * lex.negation_factor } else { p };
            matched += 1;
        }
        previous = Some(token);
    }
    if matched == 0 {
        return 0.0;
    }
    (sum / matched as f64).clamp(-1.0, 1.0)
}

pub fn assign_label(polarity: f64, rule: &LabelRule) -> SentimentLabel {
    if polarity > rule.pos_threshold {
        SentimentLabel::Positive
    } else if polarity < rule.neg_threshold {
        SentimentLabel::Negative
    } else {
        SentimentLabel::Neutral
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    fn fixture() -> Lexicon {
        Lexicon::from_entries([("good", 0.7), ("bad", -0.7), ("great", 0.8)], ["not"]).unwrap()
    }

    #[test]
    fn parse_basic_file() {
        let lex = Lexicon::parse("good\t0.7\nbad\t-0.7\n", Path::new("t.tsv")).unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.polarity("bad"), Some(-0.7));
    }

    #[test]
    fn parse_comments_negators_duplicates() {
        let src = "# starter\n\n!negator\tnot\ngood\t0.5\ngood\t0.7\n";
        let lex = Lexicon::parse(src, Path::new("t.tsv")).unwrap();
        assert!(lex.is_negator("not"));
        assert_eq!(lex.polarity("good"), Some(0.7));
        assert_eq!(lex.duplicate_warnings, 1);
    }

    #[test]
    fn parse_out_of_range_cites_line() {
        let err = Lexicon::parse("ok\t0.1\nwow\t1.5\n", Path::new("t.tsv")).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("1.5"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Lexicon::parse("ok\tabc\n", Path::new("t")),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Lexicon::parse("no tab here\n", Path::new("t")),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn empty_lexicon_scores_zero() {
        let lex = Lexicon::parse("", Path::new("t")).unwrap();
        assert!(lex.is_empty());
        assert_eq!(score_text("great app", &lex), 0.0);
    }

    #[test]
    fn score_examples() {
        let lex = fixture();
        assert!(close(score_text("good app", &lex), 0.7));
        assert!(close(score_text("not good", &lex), -0.35));
        assert_eq!(score_text("the the the", &lex), 0.0);
        assert!(close(score_text("good bad", &lex), 0.0));
        assert!(close(score_text("great good", &lex), 0.75));
        assert_eq!(score_text("", &lex), 0.0);
    }

    #[test]
    fn negation_only_reaches_one_token() {
        let lex = fixture();
        assert!(close(score_text("not really good", &lex), 0.7));
    }

    #[test]
    fn label_boundaries() {
        let rule = LabelRule::default();
        assert_eq!(assign_label(0.35, &rule), SentimentLabel::Positive);
        assert_eq!(assign_label(0.1, &rule), SentimentLabel::Neutral);
        assert_eq!(assign_label(-0.1, &rule), SentimentLabel::Neutral);
        assert_eq!(assign_label(-0.2, &rule), SentimentLabel::Negative);
        assert_eq!(assign_label(0.0, &rule), SentimentLabel::Neutral);
    }

    #[test]
    fn label_rule_rejects_inverted_thresholds() {
        assert!(LabelRule::new(0.2, 0.1).is_err());
        assert!(LabelRule::new(0.1, 0.1).is_err());
        assert!(LabelRule::new(-0.2, 0.3).is_ok());
    }

    #[test]
    fn label_codes_fixed() {
        assert_eq!(SentimentLabel::Negative.code(), 0);
        assert_eq!(SentimentLabel::Neutral.code(), 1);
        assert_eq!(SentimentLabel::Positive.code(), 2);
        assert_eq!(SentimentLabel::from_code(2), Some(SentimentLabel::Positive));
        assert_eq!(SentimentLabel::from_code(3), None);
        assert_eq!(
            "Neutral".parse::<SentimentLabel>().unwrap(),
            SentimentLabel::Neutral
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const WORDS: [&str; 6] = ["good", "bad", "great", "app", "slow", "not"];

        fn lexicon(values: &[f64]) -> Lexicon {
            Lexicon::from_entries(
                [
                    ("good", values[0]),
                    ("bad", values[1]),
                    ("great", values[2]),
                    ("slow", values[3]),
                ],
                std::iter::empty(),
            )
            .unwrap()
        }

        proptest! {
            #[test]
            fn assign_label_monotone(a in -1.0f64..=1.0, b in -1.0f64..=1.0) {
                let rule = LabelRule::default();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(assign_label(lo, &rule) <= assign_label(hi, &rule));
            }

            #[test]
            fn order_irrelevant_without_negators(
                values in proptest::collection::vec(-1.0f64..=1.0, 4),
                idx in proptest::collection::vec(0usize..6, 0..12),
                seed in any::<u64>(),
            ) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let lex = lexicon(&values);
                let tokens: Vec<&str> = idx.iter().map(|&i| WORDS[i]).collect();
                let mut shuffled = tokens.clone();
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let a = score_text(&tokens.join(" "), &lex);
                let b = score_text(&shuffled.join(" "), &lex);
                prop_assert!((a - b).abs() < 1e-12);
            }

            #[test]
            fn scaling_lexicon_scales_score(
                values in proptest::collection::vec(-1.0f64..=1.0, 4),
                idx in proptest::collection::vec(0usize..6, 0..12),
                c in 0.01f64..=1.0,
            ) {
                let mut lex = lexicon(&values);
                lex.negators.insert("not".into());
                let mut scaled = lex.clone();
                for v in scaled.entries.values_mut() {
                    *v *= c;
                }
                let text: Vec<&str> = idx.iter().map(|&i| WORDS[i]).collect();
                let text = text.join(" ");
                let a = score_text(&text, &lex);
                let b = score_text(&text, &scaled);
                prop_assert!((b - c * a).abs() < 1e-12);
            }
        }
    }
}
