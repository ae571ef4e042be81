//! Review ingestion, deduplication and text normalization.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One raw user review as exported by a store scraper.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub app_id: String,
    pub text: String,
    /// Star rating 1..=5, `None` when the export cell is empty.
    pub rating: Option<u8>,
    pub timestamp: Option<String>,
    pub review_id: Option<String>,
}

/// A review after normalization; `text` holds only `a-z` words separated by single spaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReview {
    pub app_id: String,
    pub text: String,
    pub rating: Option<u8>,
}

/// Header names recognized in review exports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub text: String,
    pub rating: String,
    pub timestamp: String,
    pub review_id: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            text: "content".into(),
            rating: "score".into(),
            timestamp: "at".into(),
            review_id: "reviewId".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOptions {
    pub columns: ColumnMap,
    pub delimiter: u8,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            columns: ColumnMap::default(),
            delimiter: b',',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ingested {
    pub reviews: Vec<Review>,
    /// Data rows skipped because their text cell was empty.
    pub dropped_empty: usize,
}

/// Reads a review export with the default `content`/`score`/`at`/`reviewId` schema.
pub fn ingest(path: impl AsRef<Path>, app_id: &str) -> Result<Ingested> {
    ingest_with(path, app_id, &IngestOptions::default())
}

pub fn ingest_with(path: impl AsRef<Path>, app_id: &str, opts: &IngestOptions) -> Result<Ingested> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .flexible(false)
        .from_reader(std::io::BufReader::new(file));

    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let text_col = find(&opts.columns.text).ok_or_else(|| {
        Error::Schema(format!(
            "{}: missing required column `{}`",
            path.display(),
            opts.columns.text
        ))
    })?;
    let rating_col = find(&opts.columns.rating).ok_or_else(|| {
        Error::Schema(format!(
            "{}: missing required column `{}`",
            path.display(),
            opts.columns.rating
        ))
    })?;
    let time_col = find(&opts.columns.timestamp);
    let id_col = find(&opts.columns.review_id);

    let mut reviews = Vec::new();
    let mut dropped_empty = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        // header is line 1
        let line = row + 2;
        let text = record.get(text_col).unwrap_or("");
        if text.trim().is_empty() {
            dropped_empty += 1;
            continue;
        }
        let rating =
            parse_rating(record.get(rating_col).unwrap_or("")).map_err(|message| Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            })?;
        let optional = |col: Option<usize>| {
            col.and_then(|c| record.get(c))
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
        };
        reviews.push(Review {
            app_id: app_id.to_string(),
            text: text.to_string(),
            rating,
            timestamp: optional(time_col),
            review_id: optional(id_col),
        });
    }
    Ok(Ingested {
        reviews,
        dropped_empty,
    })
}

fn parse_rating(cell: &str) -> std::result::Result<Option<u8>, String> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    // exports sometimes write integral floats ("5.0")
    let value: f64 = cell
        .parse()
        .map_err(|_| format!("rating `{cell}` is not a number"))?;
    if value.fract() != 0.0 || !(1.0..=5.0).contains(&value) {
        return Err(format!("rating `{cell}` outside 1..=5"));
    }
    Ok(Some(value as u8))
}

/// Keeps the first occurrence of each exact raw text, preserving order.
/// Returns the survivors and the number of removed rows.
pub fn deduplicate(reviews: Vec<Review>) -> (Vec<Review>, usize) {
    let before = reviews.len();
    let mut seen = HashSet::with_capacity(before);
    let kept: Vec<Review> = reviews
        .into_iter()
        .filter(|r| seen.insert(r.text.clone()))
        .collect();
    let removed = before - kept.len();
    (kept, removed)
}

/// Lowercases and collapses every run of non `a-z` characters into one space.
pub fn clean_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for ch in raw.chars().flat_map(char::to_lowercase) {
        if ch.is_ascii_lowercase() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        } else {
            pending_space = true;
        }
    }
    out
}

pub fn clean(review: &Review) -> CleanReview {
    CleanReview {
        app_id: review.app_id.clone(),
        text: clean_text(&review.text),
        rating: review.rating,
    }
}

/// Row layout of the cleaning-stage output: the export schema plus `clean_text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanedRecord {
    pub app_id: String,
    #[serde(rename = "reviewId")]
    pub review_id: Option<String>,
    pub content: String,
    pub score: Option<u8>,
    pub at: Option<String>,
    pub clean_text: String,
}

impl CleanedRecord {
    pub fn from_review(review: &Review) -> Self {
        CleanedRecord {
            app_id: review.app_id.clone(),
            review_id: review.review_id.clone(),
            content: review.text.clone(),
            score: review.rating,
            at: review.timestamp.clone(),
            clean_text: clean_text(&review.text),
        }
    }

    pub fn review(&self) -> Review {
        Review {
            app_id: self.app_id.clone(),
            text: self.content.clone(),
            rating: self.score,
            timestamp: self.at.clone(),
            review_id: self.review_id.clone(),
        }
    }
}

pub fn write_cleaned(path: impl AsRef<Path>, records: &[CleanedRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for record in records {
        writer.serialize(record).map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_cleaned(path: impl AsRef<Path>) -> Result<Vec<CleanedRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::csv(path, e)))
        .collect()
}
