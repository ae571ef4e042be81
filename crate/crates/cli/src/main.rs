use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use revsent::lexicon::load_lexicon;
use revsent::pipeline::{self, Input, Order, RunConfig};
use revsent::synthetic::{self, SyntheticConfig};

/// Lexicon labeling and CNN / Bi-LSTM classification of app-store reviews.
#[derive(Parser)]
#[command(name = "revsent", version)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read review exports, drop empty and duplicate reviews, clean text.
    Ingest(RunArgs),
    /// Assign lexicon polarity labels.
    Label(RunArgs),
    /// Oversample minority classes.
    Balance(RunArgs),
    /// Stratified train/validation/test split.
    Split(RunArgs),
    /// Build the vocabulary and encode every split.
    Encode(RunArgs),
    /// Train the selected models.
    Train(RunArgs),
    /// Score trained models on the test split.
    Evaluate(RunArgs),
    /// Write descriptive statistics tables.
    Eda(RunArgs),
    /// Run every stage in order.
    RunAll(RunArgs),
    /// Write a seeded synthetic corpus, one export CSV per app.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key = value settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Review export CSV (repeatable).
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    /// App id for the matching --input (defaults to the file stem).
    #[arg(long = "app-id")]
    app_ids: Vec<String>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "REVSENT_OUT")]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// cnn, bilstm, or a comma-separated list.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    max_words: Option<usize>,
    #[arg(long)]
    max_length: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Early-stopping patience in epochs; 0 disables.
    #[arg(long)]
    patience: Option<usize>,
    /// Split before oversampling, balancing only the training rows.
    #[arg(long)]
    split_first: bool,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    stop_list: Option<PathBuf>,
    #[arg(long)]
    text_column: Option<String>,
    #[arg(long)]
    rating_column: Option<String>,
    #[arg(long)]
    timestamp_column: Option<String>,
    #[arg(long)]
    id_column: Option<String>,
    /// Field delimiter of the input exports (a single byte or `tab`).
    #[arg(long)]
    delimiter: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    lexicon: PathBuf,
    /// Directory receiving <app>.csv files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 900)]
    reviews: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// App ids (repeatable).
    #[arg(long = "app", default_values_t = ["chatgpt".to_string(), "deepseek".to_string()])]
    apps: Vec<String>,
}

impl RunArgs {
    fn into_config(self) -> anyhow::Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        if !self.inputs.is_empty() {
            if self.app_ids.len() > self.inputs.len() {
                bail!(
                    "{} --app-id values for {} --input files",
                    self.app_ids.len(),
                    self.inputs.len()
                );
            }
            config.inputs = self.inputs.into_iter().map(Input::from_path).collect();
        } else if !self.app_ids.is_empty() {
            bail!("--app-id needs a matching --input");
        }
        for (input, id) in config.inputs.iter_mut().zip(self.app_ids) {
            input.app_id = id;
        }
        if let Some(v) = self.lexicon {
            config.lexicon = Some(v);
        }
        if let Some(v) = self.out {
            config.out = v;
        }
        if let Some(v) = self.stop_list {
            config.stop_list = Some(v);
        }
        if self.split_first {
            config.order = Order::SplitFirst;
        }
        let settings = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("model", self.model),
            ("max_words", self.max_words.map(|v| v.to_string())),
            ("max_length", self.max_length.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("patience", self.patience.map(|v| v.to_string())),
            ("top_k", self.top_k.map(|v| v.to_string())),
            ("text_column", self.text_column),
            ("rating_column", self.rating_column),
            ("timestamp_column", self.timestamp_column),
            ("id_column", self.id_column),
            ("delimiter", self.delimiter),
        ];
        for (key, value) in settings {
            if let Some(v) = value {
                config
                    .set(key, &v)
                    .with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        Ok(config)
    }
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let lex = load_lexicon(&args.lexicon)?;
    let rows = synthetic::generate(
        &lex,
        &SyntheticConfig {
            reviews: args.reviews,
            apps: args.apps.clone(),
            seed: args.seed,
            ..SyntheticConfig::default()
        },
    )?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for app in &args.apps {
        let reviews: Vec<_> = rows
            .iter()
            .filter(|(r, _)| &r.app_id == app)
            .map(|(r, _)| r.clone())
            .collect();
        let path = args.out.join(format!("{app}.csv"));
        synthetic::write_export_csv(&path, &reviews)?;
        println!("{}: {} reviews", path.display(), reviews.len());
    }
    Ok(())
}

fn run(command: Command) -> anyhow::Result<()> {
    let (args, stage): (RunArgs, fn(&RunConfig) -> anyhow::Result<()>) = match command {
        Command::Synth(a) => return synth(a),
        Command::Ingest(a) => (a, |c| {
            let s = pipeline::ingest(c)?;
            println!(
                "ingested {} reviews ({} empty, {} duplicates dropped)",
                s.rows, s.dropped_empty, s.duplicates
            );
            Ok(())
        }),
        Command::Label(a) => (a, |c| {
            let [neg, neu, pos] = pipeline::label(c)?;
            println!("labeled: {neg} negative, {neu} neutral, {pos} positive");
            Ok(())
        }),
        Command::Balance(a) => (a, |c| {
            let counts = pipeline::balance(c)?;
            println!("balanced to {} rows per class", counts[0]);
            Ok(())
        }),
        Command::Split(a) => (a, |c| {
            let s = pipeline::split(c)?;
            println!(
                "split: train {}, val {}, test {}",
                s.n_train, s.n_val, s.n_test
            );
            Ok(())
        }),
        Command::Encode(a) => (a, |c| {
            let n = pipeline::encode(c)?;
            println!("vocabulary: {n} words");
            Ok(())
        }),
        Command::Train(a) => (a, |c| {
            for (kind, h) in pipeline::train(c)? {
                println!(
                    "{kind}: {} epochs, best epoch {}",
                    h.stopped_epoch, h.best_epoch
                );
            }
            Ok(())
        }),
        Command::Evaluate(a) => (a, |c| {
            pipeline::evaluate(c)?;
            print!("{}", std::fs::read_to_string(c.layout().report_text())?);
            Ok(())
        }),
        Command::Eda(a) => (a, |c| {
            pipeline::run_eda(c)?;
            println!("eda tables written to {}", c.layout().eda("").display());
            Ok(())
        }),
        Command::RunAll(a) => (a, |c| {
            pipeline::run_all(c)?;
            print!("{}", std::fs::read_to_string(c.layout().report_text())?);
            Ok(())
        }),
    };
    let config = args.into_config()?;
    stage(&config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // causes already embedded in a parent message are skipped
            let mut message = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !message.contains(&cause) {
                    if !message.is_empty() {
                        message.push_str(": ");
                    }
                    message.push_str(&cause);
                }
            }
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
