//! Per-app descriptive statistics: label proportions, star-rating
//! histograms and word-frequency comparisons, with TSV writers for plotting.
//!
//! Word counts use the same whitespace tokenization of cleaned text as the
//! vocabulary, so every token is lowercase ASCII letters.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus::Review;
use crate::dataprep::LabeledDataset;
use crate::lexicon::SentimentLabel;
use crate::{Error, Result};

pub const DEFAULT_TOP_K: usize = 20;

/// Fractions of Negative, Neutral and Positive rows for each app.
pub fn sentiment_proportions(data: &LabeledDataset) -> BTreeMap<String, [f64; 3]> {
    let mut counts: BTreeMap<String, [usize; 3]> = BTreeMap::new();
    for row in data.rows() {
        counts.entry(row.app_id.clone()).or_default()[row.label.code()] += 1;
    }
    counts
        .into_iter()
        .map(|(app, c)| {
            let n = c.iter().sum::<usize>() as f64;
            (app, c.map(|k| k as f64 / n))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RatingHistogram {
    /// `bins[s - 1]` counts reviews with `s` stars.
    pub bins: [u64; 5],
    pub missing: u64,
}

impl RatingHistogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().sum::<u64>() + self.missing
    }
}

pub fn rating_distribution(reviews: &[Review]) -> BTreeMap<String, RatingHistogram> {
    let mut out: BTreeMap<String, RatingHistogram> = BTreeMap::new();
    for r in reviews {
        let h = out.entry(r.app_id.clone()).or_default();
        match r.rating {
            Some(s @ 1..=5) => h.bins[s as usize - 1] += 1,
            _ => h.missing += 1,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreqRow {
    pub token: String,
    /// Aligned with [`FreqTable::apps`].
    pub counts: Vec<u64>,
}

impl FreqRow {
    pub fn combined(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Token counts per app, sorted by combined count descending, ties alphabetical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreqTable {
    pub apps: Vec<String>,
    pub rows: Vec<FreqRow>,
}

impl FreqTable {
    pub fn count(&self, token: &str, app: &str) -> Option<u64> {
        let a = self.apps.iter().position(|x| x == app)?;
        let row = self.rows.iter().find(|r| r.token == token)?;
        Some(row.counts[a])
    }
}

fn count_tokens<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    stop: Option<&HashSet<String>>,
) -> HashMap<&'a str, u64> {
    let mut counts = HashMap::new();
    for text in texts {
        for tok in text.split_whitespace() {
            if stop.is_some_and(|s| s.contains(tok)) {
                continue;
            }
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    counts
}

fn group_by_app(data: &LabeledDataset) -> BTreeMap<&str, Vec<&str>> {
    let mut by_app: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for row in data.rows() {
        by_app.entry(&row.app_id).or_default().push(&row.text);
    }
    by_app
}

fn build_table(per_app: &[(String, HashMap<&str, u64>)], keep: impl Fn(&str) -> bool) -> FreqTable {
    let mut tokens: Vec<&str> = per_app
        .iter()
        .flat_map(|(_, c)| c.keys().copied())
        .filter(|t| keep(t))
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    tokens.sort_unstable();
    let mut rows: Vec<FreqRow> = tokens
        .into_iter()
        .map(|t| FreqRow {
            token: t.to_string(),
            counts: per_app
                .iter()
                .map(|(_, c)| c.get(t).copied().unwrap_or(0))
                .collect(),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.combined()
            .cmp(&a.combined())
            .then_with(|| a.token.cmp(&b.token))
    });
    FreqTable {
        apps: per_app.iter().map(|(a, _)| a.clone()).collect(),
        rows,
    }
}

fn per_app_counts<'a>(
    data: &'a LabeledDataset,
    stop: Option<&HashSet<String>>,
) -> Vec<(String, HashMap<&'a str, u64>)> {
    group_by_app(data)
        .into_iter()
        .map(|(app, texts)| (app.to_string(), count_tokens(texts, stop)))
        .collect()
}

/// Union of each app's `k` most frequent tokens, with every app's count for
/// each token in the union. Within an app, ties at the cut-off are broken
/// alphabetically.
pub fn top_k_words(
    data: &LabeledDataset,
    k: usize,
    stop: Option<&HashSet<String>>,
) -> Result<FreqTable> {
    if k == 0 {
        return Err(Error::Config("top-k must be at least 1".into()));
    }
    let per_app = per_app_counts(data, stop);
    let mut union: HashSet<&str> = HashSet::new();
    for (_, counts) in &per_app {
        let mut ranked: Vec<(&str, u64)> = counts.iter().map(|(t, c)| (*t, *c)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        union.extend(ranked.into_iter().take(k).map(|(t, _)| t));
    }
    Ok(build_table(&per_app, |t| union.contains(t)))
}

/// Every token with its per-app counts.
pub fn word_frequencies(data: &LabeledDataset, stop: Option<&HashSet<String>>) -> FreqTable {
    build_table(&per_app_counts(data, stop), |_| true)
}

/// One word per line; blank lines and `#` comments are skipped.
pub fn load_stop_list(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}

fn write(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_proportions_tsv(
    path: impl AsRef<Path>,
    props: &BTreeMap<String, [f64; 3]>,
) -> Result<()> {
    let mut out = String::from("app_id");
    for l in SentimentLabel::ALL {
        let _ = write!(out, "\t{}", l.name().to_lowercase());
    }
    out.push('\n');
    for (app, p) in props {
        let _ = writeln!(out, "{app}\t{:.6}\t{:.6}\t{:.6}", p[0], p[1], p[2]);
    }
    write(path.as_ref(), out)
}

pub fn write_ratings_tsv(
    path: impl AsRef<Path>,
    hist: &BTreeMap<String, RatingHistogram>,
) -> Result<()> {
    let mut out = String::from("app_id\t1\t2\t3\t4\t5\tmissing\n");
    for (app, h) in hist {
        let b = h.bins;
        let _ = writeln!(
            out,
            "{app}\t{}\t{}\t{}\t{}\t{}\t{}",
            b[0], b[1], b[2], b[3], b[4], h.missing
        );
    }
    write(path.as_ref(), out)
}

pub fn write_freq_tsv(path: impl AsRef<Path>, table: &FreqTable) -> Result<()> {
    let mut out = String::from("token");
    for a in &table.apps {
        let _ = write!(out, "\t{a}");
    }
    out.push_str("\ttotal\n");
    for row in &table.rows {
        out.push_str(&row.token);
        for c in &row.counts {
            let _ = write!(out, "\t{c}");
        }
        let _ = writeln!(out, "\t{}", row.combined());
    }
    write(path.as_ref(), out)
}
