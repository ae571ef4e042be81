//! Class balancing and stratified splitting.
//!
//! Split sizes follow an 80/20 train/test partition with 10% of the training
//! part held out for validation:
//!
//! ```text
//! n_train_full = round(0.8 * n_total)      n_test  = n_total - n_train_full
//! n_val        = round(0.1 * n_train_full) n_train = n_train_full - n_val
//! ```
//!
//! Rounding is half-up and done in integer arithmetic. Each split draws from
//! every class in proportion to the class sizes (largest-remainder
//! apportionment, ties going to the lower label code), so a balanced 8,500 row
//! dataset yields a 1,700 row test split of 567/567/566.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::lexicon::SentimentLabel;
use crate::{Error, Result};

const N_CLASSES: usize = SentimentLabel::COUNT;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledRow {
    pub app_id: String,
    pub text: String,
    pub label: SentimentLabel,
}

/// Cleaned, labeled rows with their per-class counts kept in sync.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    rows: Vec<LabeledRow>,
    class_counts: [usize; N_CLASSES],
}

impl LabeledDataset {
    pub fn new(rows: Vec<LabeledRow>) -> Result<Self> {
        if let Some(pos) = rows.iter().position(|r| r.text.trim().is_empty()) {
            return Err(Error::Data(format!("row {pos} has empty text")));
        }
        Ok(Self::from_rows_unchecked(rows))
    }

    fn from_rows_unchecked(rows: Vec<LabeledRow>) -> Self {
        let mut class_counts = [0; N_CLASSES];
        for r in &rows {
            class_counts[r.label.code()] += 1;
        }
        LabeledDataset { rows, class_counts }
    }

    pub fn rows(&self) -> &[LabeledRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<LabeledRow> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Counts indexed by label code.
    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        self.class_counts
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.text.as_str())
    }
}

/// Sizes of the train/val/test partition for a dataset of `n_total` rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_total: usize,
    pub n_train_full: usize,
    pub n_test: usize,
    pub n_val: usize,
    pub n_train: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(n_total: usize, seed: u64) -> Self {
        let n_train_full = round_tenths(8 * n_total);
        let n_val = round_tenths(n_train_full);
        SplitSpec {
            n_total,
            n_train_full,
            n_test: n_total - n_train_full,
            n_val,
            n_train: n_train_full - n_val,
            seed,
        }
    }
}

/// `round(x / 10)` with halves rounded up.
fn round_tenths(x: usize) -> usize {
    (x + 5) / 10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
    /// Split assigned to each input row, by input position.
    pub membership: Vec<SplitName>,
}

/// Duplicates randomly chosen rows of each minority class until every class
/// matches the original majority count. Originals keep their positions; the
/// added copies follow in label-code order.
pub fn oversample(data: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let counts = data.class_counts();
    if let Some(code) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!(
            "cannot oversample: class {} has no rows",
            SentimentLabel::ALL[code]
        )));
    }
    let target = *counts.iter().max().expect("three classes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = data.rows.clone();
    rows.reserve(target * N_CLASSES - data.len());
    for label in SentimentLabel::ALL {
        let members: Vec<usize> = data
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(i, _)| i)
            .collect();
        for _ in members.len()..target {
            let pick = members[rng.random_range(0..members.len())];
            rows.push(data.rows[pick].clone());
        }
    }
    Ok(LabeledDataset::from_rows_unchecked(rows))
}

/// Largest-remainder apportionment of `quota` over `counts`; ties go to the lower index.
fn apportion(quota: usize, counts: &[usize; N_CLASSES]) -> [usize; N_CLASSES] {
    let total: usize = counts.iter().sum();
    let mut alloc = [0; N_CLASSES];
    if total == 0 {
        return alloc;
    }
    let mut remainders = [0u128; N_CLASSES];
    for (i, &c) in counts.iter().enumerate() {
        let share = quota as u128 * c as u128;
        alloc[i] = (share / total as u128) as usize;
        remainders[i] = share % total as u128;
    }
    let mut order: Vec<usize> = (0..N_CLASSES).collect();
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    let short = quota - alloc.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        alloc[i] += 1;
    }
    alloc
}

pub fn stratified_split(data: &LabeledDataset, spec: &SplitSpec) -> Result<Splits> {
    if spec.n_total != data.len() {
        return Err(Error::Data(format!(
            "split spec is for {} rows but dataset has {}",
            spec.n_total,
            data.len()
        )));
    }
    if spec.n_total < N_CLASSES * 3 {
        return Err(Error::Data(format!(
            "cannot stratify {} rows over {N_CLASSES} classes (need at least {})",
            spec.n_total,
            N_CLASSES * 3
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut by_class: [Vec<usize>; N_CLASSES] = Default::default();
    for (i, r) in data.rows.iter().enumerate() {
        by_class[r.label.code()].push(i);
    }
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
    }

    let counts = data.class_counts();
    let test_q = apportion(spec.n_test, &counts);
    let remaining: [usize; N_CLASSES] = std::array::from_fn(|i| counts[i] - test_q[i]);
    let train_q = apportion(spec.n_train, &remaining);

    let mut membership = vec![SplitName::Train; data.len()];
    for (code, members) in by_class.iter().enumerate() {
        let val_q = remaining[code] - train_q[code];
        for &i in &members[..test_q[code]] {
            membership[i] = SplitName::Test;
        }
        for &i in &members[test_q[code]..test_q[code] + val_q] {
            membership[i] = SplitName::Val;
        }
    }

    let pick = |name: SplitName| {
        LabeledDataset::from_rows_unchecked(
            data.rows
                .iter()
                .zip(&membership)
                .filter(|(_, m)| **m == name)
                .map(|(r, _)| r.clone())
                .collect(),
        )
    };
    Ok(Splits {
        train: pick(SplitName::Train),
        val: pick(SplitName::Val),
        test: pick(SplitName::Test),
        membership,
    })
}

pub fn encode_labels(data: &LabeledDataset) -> Vec<usize> {
    data.rows.iter().map(|r| r.label.code()).collect()
}

/// Stable identity of a row within a dataset: position, app, label and text.
pub fn row_hash(index: usize, row: &LabeledRow) -> String {
    let mut h = Sha256::new();
    h.update(index.to_le_bytes());
    h.update(row.app_id.as_bytes());
    h.update([0x1f, row.label.code() as u8, 0x1f]);
    h.update(row.text.as_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

/// Writes `row-hash<TAB>split` per input row.
pub fn write_split_manifest(
    path: impl AsRef<Path>,
    data: &LabeledDataset,
    membership: &[SplitName],
) -> Result<()> {
    use std::fmt::Write as _;
    let path = path.as_ref();
    let mut out = String::with_capacity(data.len() * 24);
    for (i, (row, split)) in data.rows.iter().zip(membership).enumerate() {
        let _ = writeln!(out, "{}\t{}", row_hash(i, row), split);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct LabeledRecord {
    app_id: String,
    clean_text: String,
    label: SentimentLabel,
    label_code: usize,
}

pub fn write_labeled(path: impl AsRef<Path>, data: &LabeledDataset) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in &data.rows {
        w.serialize(LabeledRecord {
            app_id: r.app_id.clone(),
            clean_text: r.text.clone(),
            label: r.label,
            label_code: r.label.code(),
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a labeled CSV (`app_id`, `clean_text`, `label`; further columns ignored).
pub fn read_labeled(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    #[derive(Deserialize)]
    struct Row {
        app_id: String,
        clean_text: String,
        label: SentimentLabel,
    }
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let rows = reader
        .deserialize::<Row>()
        .map(|r| {
            r.map(|r| LabeledRow {
                app_id: r.app_id,
                text: r.clean_text,
                label: r.label,
            })
            .map_err(|e| Error::csv(path, e))
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use SentimentLabel::*;

    pub(crate) fn dataset(counts: [usize; 3]) -> LabeledDataset {
        let mut rows = Vec::new();
        for (code, &n) in counts.iter().enumerate() {
            for i in 0..n {
                rows.push(LabeledRow {
                    app_id: if i % 2 == 0 { "a" } else { "b" }.into(),
                    text: format!("row {code} {i}"),
                    label: SentimentLabel::ALL[code],
                });
            }
        }
        LabeledDataset::new(rows).unwrap()
    }

    #[test]
    fn spec_sizes_for_paper_total() {
        let s = SplitSpec::new(8500, 0);
        assert_eq!(
            (s.n_train_full, s.n_test, s.n_val, s.n_train),
            (6800, 1700, 680, 6120)
        );
    }

    #[test]
    fn spec_rounds_half_up() {
        // 0.8 * 30 = 24, 0.1 * 24 = 2.4
        let s = SplitSpec::new(30, 0);
        assert_eq!(
            (s.n_train_full, s.n_test, s.n_val, s.n_train),
            (24, 6, 2, 22)
        );
        // 0.8 * 15 = 12, 0.1 * 12 = 1.2
        let s = SplitSpec::new(15, 0);
        assert_eq!((s.n_train_full, s.n_val), (12, 1));
        // 0.8 * 31 = 24.8 -> 25, 0.1 * 25 = 2.5 -> 3
        let s = SplitSpec::new(31, 0);
        assert_eq!(
            (s.n_train_full, s.n_test, s.n_val, s.n_train),
            (25, 6, 3, 22)
        );
    }

    #[test]
    fn oversample_to_majority() {
        let data = dataset([6, 4, 10]);
        let out = oversample(&data, 7).unwrap();
        assert_eq!(out.class_counts(), [10, 10, 10]);
        assert_eq!(out.len(), 30);
        assert_eq!(&out.rows()[..20], data.rows());
    }

    #[test]
    fn oversample_balanced_is_identity() {
        let data = dataset([5, 5, 5]);
        assert_eq!(oversample(&data, 1).unwrap(), data);
    }

    #[test]
    fn oversample_empty_class_errors() {
        assert!(matches!(
            oversample(&dataset([3, 0, 2]), 1),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn oversample_deterministic_per_seed() {
        let data = dataset([2, 7, 3]);
        assert_eq!(
            oversample(&data, 11).unwrap(),
            oversample(&data, 11).unwrap()
        );
    }

    #[test]
    fn oversample_two_app_corpus_exceeds_four_thousand() {
        // 4,000 reviews with a skewed label mix grow past 4,000 once balanced
        let data = dataset([900, 1200, 1900]);
        let out = oversample(&data, 3).unwrap();
        assert!(out.len() > 4000);
        assert_eq!(out.class_counts(), [1900; 3]);
    }

    #[test]
    fn split_paper_sizes() {
        let data = dataset([2834, 2833, 2833]);
        let s = stratified_split(&data, &SplitSpec::new(8500, 42)).unwrap();
        assert_eq!(
            (s.train.len(), s.val.len(), s.test.len()),
            (6120, 680, 1700)
        );
        assert_eq!(s.test.class_counts(), [567, 567, 566]);
        assert_eq!(s.train.class_counts(), [2040, 2040, 2040]);
        assert_eq!(s.val.class_counts(), [227, 226, 227]);
    }

    #[test]
    fn split_thirty_rows() {
        let data = dataset([10, 10, 10]);
        let s = stratified_split(&data, &SplitSpec::new(30, 5)).unwrap();
        assert_eq!(s.test.class_counts(), [2, 2, 2]);
        assert!((21..=22).contains(&s.train.len()));
        assert!((2..=3).contains(&s.val.len()));
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 30);
    }

    #[test]
    fn split_too_small_errors() {
        let data = dataset([3, 3, 2]);
        assert!(stratified_split(&data, &SplitSpec::new(8, 0)).is_err());
        let data = dataset([3, 3, 3]);
        assert!(stratified_split(&data, &SplitSpec::new(9, 0)).is_ok());
        assert!(stratified_split(&data, &SplitSpec::new(10, 0)).is_err());
    }

    #[test]
    fn split_unbalanced_is_proportional() {
        let data = dataset([100, 300, 600]);
        let s = stratified_split(&data, &SplitSpec::new(1000, 2)).unwrap();
        assert_eq!(s.test.class_counts(), [20, 60, 120]);
    }

    #[test]
    fn encode_labels_examples() {
        let rows = [Positive, Negative, Neutral]
            .iter()
            .map(|&label| LabeledRow {
                app_id: "a".into(),
                text: "x".into(),
                label,
            })
            .collect();
        assert_eq!(
            encode_labels(&LabeledDataset::new(rows).unwrap()),
            [2, 0, 1]
        );
        assert!(encode_labels(&LabeledDataset::new(vec![]).unwrap()).is_empty());
        assert_eq!(encode_labels(&dataset([0, 4, 0])), [1; 4]);
    }

    #[test]
    fn empty_text_rejected() {
        let rows = vec![LabeledRow {
            app_id: "a".into(),
            text: " ".into(),
            label: Neutral,
        }];
        assert!(LabeledDataset::new(rows).is_err());
    }

    #[test]
    fn labeled_csv_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let data = dataset([3, 4, 5]);
        let path = dir.path().join("labeled.csv");
        write_labeled(&path, &data).unwrap();
        assert_eq!(read_labeled(&path).unwrap(), data);

        let s = stratified_split(&data, &SplitSpec::new(12, 0)).unwrap();
        let mpath = dir.path().join("manifest.tsv");
        write_split_manifest(&mpath, &data, &s.membership).unwrap();
        let text = std::fs::read_to_string(&mpath).unwrap();
        assert_eq!(text.lines().count(), 12);
        let tests = text.lines().filter(|l| l.ends_with("\ttest")).count();
        assert_eq!(tests, s.test.len());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use std::collections::HashMap;

        fn multiset(rows: &[LabeledRow]) -> HashMap<&LabeledRow, usize> {
            let mut m = HashMap::new();
            for r in rows {
                *m.entry(r).or_insert(0) += 1;
            }
            m
        }

        proptest! {
            #[test]
            fn split_sizes_and_determinism(a in 3usize..80, b in 3usize..80, c in 3usize..80, seed in any::<u64>()) {
                let data = dataset([a, b, c]);
                let spec = SplitSpec::new(data.len(), seed);
                let s = stratified_split(&data, &spec).unwrap();
                prop_assert_eq!(s.train.len(), spec.n_train);
                prop_assert_eq!(s.val.len(), spec.n_val);
                prop_assert_eq!(s.test.len(), spec.n_test);
                // disjoint and exhaustive
                let mut all: Vec<LabeledRow> = s.train.rows().to_vec();
                all.extend_from_slice(s.val.rows());
                all.extend_from_slice(s.test.rows());
                prop_assert_eq!(multiset(&all), multiset(data.rows()));
                let again = stratified_split(&data, &spec).unwrap();
                prop_assert_eq!(again.membership, s.membership);
            }

            #[test]
            fn balanced_splits_differ_by_at_most_one(n in 9usize..3000, shift in 0usize..3, seed in any::<u64>()) {
                let mut counts = [n / 3; 3];
                for i in 0..n % 3 {
                    counts[(i + shift) % 3] += 1;
                }
                let data = dataset(counts);
                let s = stratified_split(&data, &SplitSpec::new(n, seed)).unwrap();
                for split in [&s.train, &s.val, &s.test] {
                    let cc = split.class_counts();
                    prop_assert!(cc.iter().max().unwrap() - cc.iter().min().unwrap() <= 1, "{:?}", cc);
                }
            }

            #[test]
            fn divisible_by_25_is_exact(m in 1usize..400) {
                let n = 25 * m;
                let s = SplitSpec::new(n, 0);
                prop_assert_eq!(s.n_train * 100, 72 * n);
                prop_assert_eq!(s.n_val * 100, 8 * n);
                prop_assert_eq!(s.n_test * 100, 20 * n);
            }

            #[test]
            fn oversample_keeps_every_row(a in 1usize..40, b in 1usize..40, c in 1usize..40, seed in any::<u64>()) {
                let data = dataset([a, b, c]);
                let out = oversample(&data, seed).unwrap();
                let max = a.max(b).max(c);
                prop_assert_eq!(out.class_counts(), [max; 3]);
                let before = multiset(data.rows());
                let after = multiset(out.rows());
                for (row, n) in before {
                    prop_assert!(after.get(row).copied().unwrap_or(0) >= n);
                }
            }
        }
    }
}
