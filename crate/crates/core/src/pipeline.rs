//! Stage-by-stage pipeline over an output directory.
//!
//! ```text
//! ingest   inputs            -> reviews.csv
//! label    reviews.csv       -> labeled.csv
//! balance  labeled.csv       -> balanced.csv        (split-first: splits/train.csv)
//! split    balanced.csv      -> splits/, split_manifest.tsv  (split-first: labeled.csv)
//! encode   training splits   -> vocab.tsv, encoded/
//! train    encoded/          -> models/<kind>.ckpt, models/<kind>.json
//! evaluate models/, encoded/ -> reports/report.txt, reports/report.json
//! eda      reviews.csv, labeled.csv -> eda/*.tsv
//! ```
//!
//! Every stage appends one JSON line to `manifest.jsonl` recording the stage,
//! its seed, the crate version and SHA-256 digests of the files it read and
//! wrote.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus::{self, CleanedRecord, IngestOptions};
use crate::dataprep::{self, LabeledDataset, LabeledRow, SplitName, SplitSpec};
use crate::eda;
use crate::eval::{self, ClassReport};
use crate::lexicon::{self, LabelRule};
use crate::models::{self, Examples, ModelKind, ModelRecord, ModelSpec, TrainConfig};
use crate::textenc::{self, EncodedSequence, Vocabulary, DEFAULT_MAX_LENGTH, DEFAULT_MAX_WORDS};
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    /// Oversample the whole labeled set, then split.
    BalanceFirst,
    /// Split first, then oversample the training portion only.
    SplitFirst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Input {
    pub path: PathBuf,
    pub app_id: String,
}

impl Input {
    /// Uses the file stem as the app id.
    pub fn from_path(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let app_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "app".into());
        Input { path, app_id }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inputs: Vec<Input>,
    pub lexicon: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub order: Order,
    pub ingest: IngestOptions,
    pub label_rule: LabelRule,
    pub max_words: usize,
    pub max_length: usize,
    pub models: Vec<ModelKind>,
    pub embedding_dim: usize,
    pub filters: usize,
    pub kernel_size: usize,
    pub lstm_units: usize,
    pub dense_units: usize,
    pub dropout: f64,
    pub train: TrainConfig,
    pub top_k: usize,
    pub stop_list: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let base = ModelSpec::new(ModelKind::Cnn);
        RunConfig {
            inputs: Vec::new(),
            lexicon: None,
            out: PathBuf::from("out"),
            seed: 0,
            order: Order::BalanceFirst,
            ingest: IngestOptions::default(),
            label_rule: LabelRule::default(),
            max_words: DEFAULT_MAX_WORDS,
            max_length: DEFAULT_MAX_LENGTH,
            models: ModelKind::ALL.to_vec(),
            embedding_dim: base.embedding_dim,
            filters: base.filters,
            kernel_size: base.kernel_size,
            lstm_units: base.lstm_units,
            dense_units: base.dense_units,
            dropout: base.dropout,
            train: TrainConfig::default(),
            top_k: eda::DEFAULT_TOP_K,
            stop_list: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}`: expected a boolean, got `{value}`"
        ))),
    }
}

impl RunConfig {
    /// Applies one `key = value` setting. `input` appends; `app_id` names the
    /// most recently added input.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "input" => self.inputs.push(Input::from_path(v)),
            "app_id" => match self.inputs.last_mut() {
                Some(input) => input.app_id = v.to_string(),
                None => return Err(Error::Config("`app_id` given before any `input`".into())),
            },
            "lexicon" => self.lexicon = Some(v.into()),
            "out" => self.out = v.into(),
            "seed" => {
                self.seed = parse(key, v)?;
            }
            "split_first" => {
                self.order = if parse_bool(key, v)? {
                    Order::SplitFirst
                } else {
                    Order::BalanceFirst
                }
            }
            "model" | "models" => {
                self.models = v
                    .split(',')
                    .map(|m| m.trim().parse())
                    .collect::<Result<Vec<_>>>()?;
                if self.models.is_empty() {
                    return Err(Error::Config("`model` lists no models".into()));
                }
            }
            "max_words" => self.max_words = parse(key, v)?,
            "max_length" => self.max_length = parse(key, v)?,
            "embedding_dim" => self.embedding_dim = parse(key, v)?,
            "filters" => self.filters = parse(key, v)?,
            "kernel_size" => self.kernel_size = parse(key, v)?,
            "units" | "lstm_units" => self.lstm_units = parse(key, v)?,
            "dense_units" => self.dense_units = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "patience" => self.train.early_stop.patience = parse(key, v)?,
            "restore_best" => self.train.early_stop.restore_best = parse_bool(key, v)?,
            "learning_rate" | "lr" => self.train.adam.lr = parse(key, v)?,
            "validation_fraction" => self.train.validation_fraction = parse(key, v)?,
            "top_k" => self.top_k = parse(key, v)?,
            "stop_list" => self.stop_list = Some(v.into()),
            "pos_threshold" => {
                self.label_rule = LabelRule::new(self.label_rule.neg_threshold, parse(key, v)?)?
            }
            "neg_threshold" => {
                self.label_rule = LabelRule::new(parse(key, v)?, self.label_rule.pos_threshold)?
            }
            "text_column" => self.ingest.columns.text = v.into(),
            "rating_column" => self.ingest.columns.rating = v.into(),
            "timestamp_column" => self.ingest.columns.timestamp = v.into(),
            "id_column" => self.ingest.columns.review_id = v.into(),
            "delimiter" => {
                let bytes = v.as_bytes();
                self.ingest.delimiter = match (v, bytes.len()) {
                    ("tab" | "\\t", _) => b'\t',
                    (_, 1) => bytes[0],
                    _ => {
                        return Err(Error::Config(format!(
                            "`delimiter`: expected one byte, got `{v}`"
                        )))
                    }
                };
            }
            other => return Err(Error::Config(format!("unknown setting `{other}`"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn model_spec(&self, kind: ModelKind, max_words: usize, max_length: usize) -> ModelSpec {
        ModelSpec {
            kind,
            max_words,
            max_length,
            embedding_dim: self.embedding_dim,
            filters: self.filters,
            kernel_size: self.kernel_size,
            lstm_units: self.lstm_units,
            dense_units: self.dense_units,
            dropout: self.dropout,
            ..ModelSpec::new(kind)
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.out)
    }
}

/// Artifact paths under an output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn reviews(&self) -> PathBuf {
        self.root.join("reviews.csv")
    }

    pub fn labeled(&self) -> PathBuf {
        self.root.join("labeled.csv")
    }

    pub fn balanced(&self) -> PathBuf {
        self.root.join("balanced.csv")
    }

    pub fn split(&self, name: SplitName) -> PathBuf {
        self.root.join("splits").join(format!("{name}.csv"))
    }

    pub fn split_manifest(&self) -> PathBuf {
        self.root.join("split_manifest.tsv")
    }

    pub fn vocab(&self) -> PathBuf {
        self.root.join("vocab.tsv")
    }

    pub fn encoded(&self, name: SplitName) -> PathBuf {
        self.root.join("encoded").join(format!("{name}.tsv"))
    }

    pub fn checkpoint(&self, kind: ModelKind) -> PathBuf {
        self.root.join("models").join(format!("{kind}.ckpt"))
    }

    pub fn model_record(&self, kind: ModelKind) -> PathBuf {
        self.root.join("models").join(format!("{kind}.json"))
    }

    pub fn report_text(&self) -> PathBuf {
        self.root.join("reports").join("report.txt")
    }

    pub fn report_json(&self) -> PathBuf {
        self.root.join("reports").join("report.json")
    }

    pub fn eda(&self, file: &str) -> PathBuf {
        self.root.join("eda").join(file)
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.jsonl")
    }

    fn display(&self, path: &Path) -> String {
        path.strip_prefix(&self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Label,
    Balance,
    Split,
    Encode,
    Train,
    Evaluate,
    Eda,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Label => "label",
            Stage::Balance => "balance",
            Stage::Split => "split",
            Stage::Encode => "encode",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Eda => "eda",
        }
    }

    /// Sub-seed for this stage's randomness, derived from the run seed.
    pub fn seed(self, run_seed: u64) -> u64 {
        let mut h = Sha256::new();
        h.update(run_seed.to_le_bytes());
        h.update(self.name().as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }
}

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct ManifestLine<'a> {
    stage: &'a str,
    version: &'a str,
    seed: u64,
    order: Order,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct StageRun<'a> {
    stage: Stage,
    config: &'a RunConfig,
    layout: Layout,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl<'a> StageRun<'a> {
    fn new(stage: Stage, config: &'a RunConfig) -> Self {
        StageRun {
            stage,
            config,
            layout: config.layout(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn require(&mut self, path: PathBuf, producer: Stage) -> Result<PathBuf> {
        if !path.is_file() {
            return Err(Error::MissingArtifact {
                stage: self.stage.name().into(),
                path,
                producer: producer.name().into(),
            });
        }
        self.inputs.push(path.clone());
        Ok(path)
    }

    fn read_external(&mut self, path: &Path, what: &str) -> Result<PathBuf> {
        if !path.is_file() {
            return Err(Error::Config(format!(
                "{what} {} does not exist",
                path.display()
            )));
        }
        self.inputs.push(path.to_path_buf());
        Ok(path.to_path_buf())
    }

    fn output(&mut self, path: PathBuf) -> Result<PathBuf> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        self.outputs.push(path.clone());
        Ok(path)
    }

    fn finish(self) -> Result<()> {
        let digests = |paths: &[PathBuf]| -> Result<Vec<FileDigest>> {
            paths
                .iter()
                .map(|p| {
                    Ok(FileDigest {
                        path: self.layout.display(p),
                        sha256: sha256_file(p)?,
                    })
                })
                .collect()
        };
        let line = ManifestLine {
            stage: self.stage.name(),
            version: VERSION,
            seed: self.config.seed,
            order: self.config.order,
            inputs: digests(&self.inputs)?,
            outputs: digests(&self.outputs)?,
        };
        let mut text = serde_json::to_string(&line)?;
        text.push('\n');
        let path = self.layout.manifest();
        use std::io::Write;
        fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .and_then(|mut f| f.write_all(text.as_bytes()))
            .map_err(|e| Error::io(&path, e))
    }
}

fn in_stage<T>(stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| match e {
        e @ Error::MissingArtifact { .. } => e,
        e @ Error::Stage { .. } => e,
        other => Error::Stage {
            stage: stage.name().into(),
            source: Box::new(other),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestSummary {
    pub rows: usize,
    pub dropped_empty: usize,
    pub duplicates: usize,
}

/// Reads every input export, drops empty and duplicate reviews, and writes
/// the cleaned records.
pub fn ingest(config: &RunConfig) -> Result<IngestSummary> {
    in_stage(Stage::Ingest, || {
        if config.inputs.is_empty() {
            return Err(Error::Config("no input files given".into()));
        }
        let mut run = StageRun::new(Stage::Ingest, config);
        let mut reviews = Vec::new();
        let mut dropped_empty = 0;
        for input in &config.inputs {
            let path = run.read_external(&input.path, "input")?;
            let got = corpus::ingest_with(&path, &input.app_id, &config.ingest)?;
            dropped_empty += got.dropped_empty;
            reviews.extend(got.reviews);
        }
        let (reviews, duplicates) = corpus::deduplicate(reviews);
        let records: Vec<CleanedRecord> = reviews.iter().map(CleanedRecord::from_review).collect();
        let out = run.output(run.layout.reviews())?;
        corpus::write_cleaned(&out, &records)?;
        run.finish()?;
        log::info!(
            "ingest: {} reviews ({dropped_empty} empty, {duplicates} duplicates dropped)",
            records.len()
        );
        Ok(IngestSummary {
            rows: records.len(),
            dropped_empty,
            duplicates,
        })
    })
}

/// Scores every cleaned review with the lexicon and writes the labeled set.
/// Reviews with no words left after cleaning are skipped.
pub fn label(config: &RunConfig) -> Result<[usize; 3]> {
    in_stage(Stage::Label, || {
        let mut run = StageRun::new(Stage::Label, config);
        let lex_path = config
            .lexicon
            .as_ref()
            .ok_or_else(|| Error::Config("no lexicon given".into()))?;
        let lex_path = run.read_external(lex_path, "lexicon")?;
        let lex = lexicon::load_lexicon(&lex_path)?;
        let records = corpus::read_cleaned(run.require(run.layout.reviews(), Stage::Ingest)?)?;
        let rows: Vec<LabeledRow> = records
            .into_iter()
            .filter(|r| !r.clean_text.is_empty())
            .map(|r| {
                let polarity = lexicon::score_text(&r.clean_text, &lex);
                LabeledRow {
                    app_id: r.app_id,
                    label: lexicon::assign_label(polarity, &config.label_rule),
                    text: r.clean_text,
                }
            })
            .collect();
        let data = LabeledDataset::new(rows)?;
        let out = run.output(run.layout.labeled())?;
        dataprep::write_labeled(&out, &data)?;
        run.finish()?;
        Ok(data.class_counts())
    })
}

/// Oversamples minority classes. Reads `labeled.csv`, or the training split
/// when splitting comes first.
pub fn balance(config: &RunConfig) -> Result<[usize; 3]> {
    in_stage(Stage::Balance, || {
        let mut run = StageRun::new(Stage::Balance, config);
        let source = match config.order {
            Order::BalanceFirst => run.require(run.layout.labeled(), Stage::Label)?,
            Order::SplitFirst => run.require(run.layout.split(SplitName::Train), Stage::Split)?,
        };
        let data = dataprep::read_labeled(&source)?;
        let balanced = dataprep::oversample(&data, Stage::Balance.seed(config.seed))?;
        let out = run.output(run.layout.balanced())?;
        dataprep::write_labeled(&out, &balanced)?;
        run.finish()?;
        Ok(balanced.class_counts())
    })
}

/// Stratified train/val/test partition of `balanced.csv`, or of
/// `labeled.csv` when splitting comes first.
pub fn split(config: &RunConfig) -> Result<SplitSpec> {
    in_stage(Stage::Split, || {
        let mut run = StageRun::new(Stage::Split, config);
        let source = match config.order {
            Order::BalanceFirst => run.require(run.layout.balanced(), Stage::Balance)?,
            Order::SplitFirst => run.require(run.layout.labeled(), Stage::Label)?,
        };
        let data = dataprep::read_labeled(&source)?;
        let spec = SplitSpec::new(data.len(), Stage::Split.seed(config.seed));
        let splits = dataprep::stratified_split(&data, &spec)?;
        for (name, part) in [
            (SplitName::Train, &splits.train),
            (SplitName::Val, &splits.val),
            (SplitName::Test, &splits.test),
        ] {
            let out = run.output(run.layout.split(name))?;
            dataprep::write_labeled(&out, part)?;
        }
        let manifest = run.output(run.layout.split_manifest())?;
        dataprep::write_split_manifest(&manifest, &data, &splits.membership)?;
        run.finish()?;
        log::info!("split: {} / {} / {}", spec.n_train, spec.n_val, spec.n_test);
        Ok(spec)
    })
}

fn write_encoded(path: &Path, rows: &[(EncodedSequence, usize)]) -> Result<()> {
    let mut out = String::new();
    for (seq, label) in rows {
        let _ = write!(out, "{label}\t{}\t", seq.length);
        for (i, id) in seq.ids.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{id}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads `label<TAB>length<TAB>ids` lines written by the encode stage.
pub fn read_encoded(path: &Path) -> Result<Examples> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let mut fields = line.split('\t');
        let (Some(label), Some(length), Some(ids), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(err("expected three tab-separated fields".into()));
        };
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| err(format!("`{s}` is not an integer")))
        };
        labels.push(num(label)?);
        inputs.push(EncodedSequence {
            length: num(length)?,
            ids: ids.split(' ').map(num).collect::<Result<_>>()?,
        });
    }
    Examples::new(inputs, labels)
}

/// Builds the vocabulary from training texts only and encodes every split.
pub fn encode(config: &RunConfig) -> Result<usize> {
    in_stage(Stage::Encode, || {
        let mut run = StageRun::new(Stage::Encode, config);
        let train_source = match config.order {
            Order::BalanceFirst => run.require(run.layout.split(SplitName::Train), Stage::Split)?,
            Order::SplitFirst => run.require(run.layout.balanced(), Stage::Balance)?,
        };
        let val_source = run.require(run.layout.split(SplitName::Val), Stage::Split)?;
        let test_source = run.require(run.layout.split(SplitName::Test), Stage::Split)?;
        let train = dataprep::read_labeled(&train_source)?;
        let texts: Vec<&str> = train.texts().collect();
        let vocab = textenc::build_vocab(&texts, config.max_words)?;
        let vocab_path = run.output(run.layout.vocab())?;
        vocab.save(&vocab_path, config.max_length)?;
        for (name, source) in [
            (SplitName::Train, train_source),
            (SplitName::Val, val_source),
            (SplitName::Test, test_source),
        ] {
            let data = dataprep::read_labeled(&source)?;
            let rows: Vec<(EncodedSequence, usize)> = data
                .rows()
                .iter()
                .map(|r| {
                    (
                        textenc::encode_padded(&r.text, &vocab, config.max_length),
                        r.label.code(),
                    )
                })
                .collect();
            let out = run.output(run.layout.encoded(name))?;
            write_encoded(&out, &rows)?;
        }
        run.finish()?;
        Ok(vocab.len())
    })
}

fn model_seeds(run_seed: u64, kind: ModelKind) -> (u64, u64) {
    let base = Stage::Train.seed(run_seed);
    let k = match kind {
        ModelKind::Cnn => 1,
        ModelKind::Bilstm => 2,
    };
    (base.wrapping_add(k), base.wrapping_add(k + 100))
}

/// Trains each configured model on the encoded training split, monitoring
/// the validation split, and saves checkpoint plus metadata.
pub fn train(config: &RunConfig) -> Result<Vec<(ModelKind, models::TrainHistory)>> {
    in_stage(Stage::Train, || {
        let mut run = StageRun::new(Stage::Train, config);
        let (vocab, max_length) =
            Vocabulary::load(run.require(run.layout.vocab(), Stage::Encode)?)?;
        let train_set =
            read_encoded(&run.require(run.layout.encoded(SplitName::Train), Stage::Encode)?)?;
        let val_set =
            read_encoded(&run.require(run.layout.encoded(SplitName::Val), Stage::Encode)?)?;
        let mut histories = Vec::new();
        for &kind in &config.models {
            let spec = config.model_spec(kind, vocab.max_words(), max_length);
            let (init_seed, train_seed) = model_seeds(config.seed, kind);
            let mut model = models::build(&spec, init_seed)?;
            let train_config = TrainConfig {
                seed: train_seed,
                ..config.train
            };
            let history = models::train(&mut model, &train_set, Some(&val_set), &train_config)?;
            let ckpt = run.output(run.layout.checkpoint(kind))?;
            model.save(&ckpt)?;
            let record = run.output(run.layout.model_record(kind))?;
            ModelRecord {
                spec,
                config: train_config,
                seed: init_seed,
                history: history.clone(),
            }
            .save(&record)?;
            log::info!(
                "{kind}: stopped at epoch {}, best epoch {}",
                history.stopped_epoch,
                history.best_epoch
            );
            histories.push((kind, history));
        }
        run.finish()?;
        Ok(histories)
    })
}

/// Scores each trained model on the test split and writes the text and JSON
/// reports.
pub fn evaluate(config: &RunConfig) -> Result<Vec<(ModelKind, ClassReport)>> {
    in_stage(Stage::Evaluate, || {
        let mut run = StageRun::new(Stage::Evaluate, config);
        let mut loaded = Vec::new();
        for &kind in &config.models {
            let ckpt = run.require(run.layout.checkpoint(kind), Stage::Train)?;
            let record =
                ModelRecord::load(run.require(run.layout.model_record(kind), Stage::Train)?)?;
            loaded.push((kind, models::Model::load(&record.spec, &ckpt)?));
        }
        let test = read_encoded(&run.require(run.layout.encoded(SplitName::Test), Stage::Encode)?)?;
        let mut reports = Vec::new();
        for (kind, model) in &loaded {
            let (pred, losses) = models::evaluate_rows(model, &test)?;
            let cm = eval::confusion(&test.labels, &pred.classes)?;
            reports.push((*kind, eval::class_report(&cm, &losses)?));
        }
        let named: Vec<(String, ClassReport)> = reports
            .iter()
            .map(|(k, r)| (k.display_name().to_string(), r.clone()))
            .collect();
        let text = run.output(run.layout.report_text())?;
        fs::write(&text, eval::render_report(&named)).map_err(|e| Error::io(&text, e))?;
        let json = run.output(run.layout.report_json())?;
        fs::write(&json, eval::render_report_json(&named)?).map_err(|e| Error::io(&json, e))?;
        run.finish()?;
        Ok(reports)
    })
}

/// Writes label proportions, rating histograms, the top-k comparison and the
/// full word-frequency table.
pub fn run_eda(config: &RunConfig) -> Result<()> {
    in_stage(Stage::Eda, || {
        let mut run = StageRun::new(Stage::Eda, config);
        let stop: Option<HashSet<String>> = match &config.stop_list {
            Some(p) => Some(eda::load_stop_list(run.read_external(p, "stop list")?)?),
            None => None,
        };
        let reviews: Vec<_> =
            corpus::read_cleaned(run.require(run.layout.reviews(), Stage::Ingest)?)?
                .iter()
                .map(CleanedRecord::review)
                .collect();
        let labeled = dataprep::read_labeled(run.require(run.layout.labeled(), Stage::Label)?)?;
        let p = run.output(run.layout.eda("sentiment_proportions.tsv"))?;
        eda::write_proportions_tsv(&p, &eda::sentiment_proportions(&labeled))?;
        let p = run.output(run.layout.eda("rating_distribution.tsv"))?;
        eda::write_ratings_tsv(&p, &eda::rating_distribution(&reviews))?;
        let p = run.output(run.layout.eda("top_words.tsv"))?;
        eda::write_freq_tsv(
            &p,
            &eda::top_k_words(&labeled, config.top_k, stop.as_ref())?,
        )?;
        let p = run.output(run.layout.eda("word_frequencies.tsv"))?;
        eda::write_freq_tsv(&p, &eda::word_frequencies(&labeled, stop.as_ref()))?;
        run.finish()
    })
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub ingest: IngestSummary,
    pub labeled: [usize; 3],
    pub split: SplitSpec,
    pub vocab_size: usize,
    pub histories: Vec<(ModelKind, models::TrainHistory)>,
    pub reports: Vec<(ModelKind, ClassReport)>,
}

pub fn run_all(config: &RunConfig) -> Result<RunSummary> {
    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;
    let ingest_summary = ingest(config)?;
    let labeled = label(config)?;
    let split_spec = match config.order {
        Order::BalanceFirst => {
            balance(config)?;
            split(config)?
        }
        Order::SplitFirst => {
            let s = split(config)?;
            balance(config)?;
            s
        }
    };
    let vocab_size = encode(config)?;
    let histories = train(config)?;
    let reports = evaluate(config)?;
    run_eda(config)?;
    Ok(RunSummary {
        ingest: ingest_summary,
        labeled,
        split: split_spec,
        vocab_size,
        histories,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{self, SyntheticConfig};

    fn fixture(dir: &Path, reviews: usize) -> RunConfig {
        let lex = dir.join("lexicon.tsv");
        fs::write(
            &lex,
            "good\t0.7\ngreat\t0.8\nbad\t-0.7\nslow\t-0.4\nokay\t0.0\n!negator\tnot\n",
        )
        .unwrap();
        let lexicon = lexicon::load_lexicon(&lex).unwrap();
        let rows = synthetic::generate(
            &lexicon,
            &SyntheticConfig {
                reviews,
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let mut config = RunConfig {
            lexicon: Some(lex),
            out: dir.join("out"),
            seed: 5,
            max_length: 16,
            embedding_dim: 8,
            filters: 8,
            lstm_units: 4,
            dense_units: 8,
            ..RunConfig::default()
        };
        config.train.epochs = 2;
        for app in ["alpha", "beta"] {
            let path = dir.join(format!("{app}.csv"));
            let mine: Vec<_> = rows
                .iter()
                .filter(|(r, _)| r.app_id == "chatgpt")
                .map(|(r, _)| r.clone())
                .collect();
            let mine = if app == "alpha" {
                mine
            } else {
                mine.into_iter().rev().take(20).collect()
            };
            synthetic::write_export_csv(&path, &mine).unwrap();
            config.inputs.push(Input::from_path(path));
        }
        config
    }

    #[test]
    fn run_all_produces_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let config = fixture(dir.path(), 120);
        let summary = run_all(&config).unwrap();
        assert!(summary.ingest.duplicates > 0);
        let l = config.layout();
        for p in [
            l.reviews(),
            l.labeled(),
            l.balanced(),
            l.split_manifest(),
            l.vocab(),
            l.encoded(SplitName::Test),
            l.checkpoint(ModelKind::Cnn),
            l.checkpoint(ModelKind::Bilstm),
            l.report_text(),
            l.report_json(),
            l.eda("top_words.tsv"),
        ] {
            assert!(p.is_file(), "{}", p.display());
        }
        let manifest = fs::read_to_string(l.manifest()).unwrap();
        let stages: Vec<String> = manifest
            .lines()
            .map(|line| {
                serde_json::from_str::<serde_json::Value>(line).unwrap()["stage"]
                    .as_str()
                    .unwrap()
                    .to_string()
            })
            .collect();
        assert_eq!(
            stages,
            ["ingest", "label", "balance", "split", "encode", "train", "evaluate", "eda"]
        );
        assert_eq!(summary.reports.len(), 2);
    }

    #[test]
    fn split_first_balances_only_training_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = fixture(dir.path(), 90);
        config.order = Order::SplitFirst;
        config.models = vec![ModelKind::Cnn];
        let summary = run_all(&config).unwrap();
        let balanced = dataprep::read_labeled(config.layout().balanced()).unwrap();
        let c = balanced.class_counts();
        assert!(c[0] == c[1] && c[1] == c[2]);
        assert!(balanced.len() >= summary.split.n_train);
    }

    #[test]
    fn evaluate_without_checkpoint_names_train() {
        let dir = tempfile::tempdir().unwrap();
        let config = fixture(dir.path(), 60);
        let err = evaluate(&config).unwrap_err().to_string();
        assert!(err.contains("`train`"), "{err}");
        assert!(err.contains("cnn.ckpt"), "{err}");
    }

    #[test]
    fn missing_upstream_names_file() {
        let dir = tempfile::tempdir().unwrap();
        let config = fixture(dir.path(), 60);
        let err = label(&config).unwrap_err().to_string();
        assert!(
            err.contains("reviews.csv") && err.contains("`ingest`"),
            "{err}"
        );
    }

    #[test]
    fn stage_rerun_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let config = fixture(dir.path(), 60);
        ingest(&config).unwrap();
        label(&config).unwrap();
        balance(&config).unwrap();
        split(&config).unwrap();
        let first = fs::read(config.layout().split_manifest()).unwrap();
        split(&config).unwrap();
        assert_eq!(fs::read(config.layout().split_manifest()).unwrap(), first);
    }

    #[test]
    fn config_settings() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(
            &path,
            "# run\ninput = a/chatgpt.csv\ninput = b/x.csv\napp_id = deepseek\nseed = 9\nmodel = bilstm\nsplit-first = yes\ndelimiter = tab\n",
        )
        .unwrap();
        let mut c = RunConfig::default();
        c.apply_file(&path).unwrap();
        assert_eq!(c.inputs[0].app_id, "chatgpt");
        assert_eq!(c.inputs[1].app_id, "deepseek");
        assert_eq!(
            (c.seed, c.order, c.ingest.delimiter),
            (9, Order::SplitFirst, b'\t')
        );
        assert_eq!(c.models, [ModelKind::Bilstm]);
        fs::write(&path, "seed = 9\nbogus = 1\n").unwrap();
        let err = RunConfig::default()
            .apply_file(&path)
            .unwrap_err()
            .to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn stage_seeds_differ() {
        assert_ne!(Stage::Balance.seed(1), Stage::Split.seed(1));
        assert_ne!(Stage::Balance.seed(1), Stage::Balance.seed(2));
        assert_eq!(Stage::Balance.seed(1), Stage::Balance.seed(1));
    }
}
