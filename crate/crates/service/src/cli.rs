//! The `crm-active` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
//! invalid input), 3 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use crm_active::config::RunConfig;
use crm_active::dataset::{read_record, Dataset, DatasetFormat};
use crm_active::engine::{
    labeling_order_json, metrics_csv, per_concept_csv, run_baseline_random, run_session,
    scores_csv, GroundTruthOracle, Session, Strategy,
};
use crm_active::evaluation::evaluate_record;
use crm_active::relevance::RelevanceModel;
use crm_active::synth::{generate_synthetic, SynthSpec};

use crate::store::SessionStore;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "crm-active",
    version,
    about = "Active learning for multi-concept annotation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Dataset file (JSON, or CSV with a `.splits.json` sidecar)
    #[arg(long)]
    pub dataset: PathBuf,
    /// Overrides the format implied by the file extension
    #[arg(long)]
    pub format: Option<DatasetFormat>,
}

impl DatasetArgs {
    fn format(&self) -> DatasetFormat {
        self.format
            .unwrap_or_else(|| DatasetFormat::from_path(&self.dataset))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run CRMActive against the dataset's ground truth and export results
    Run {
        #[command(flatten)]
        data: DatasetArgs,
        /// JSON run configuration; defaults apply to missing fields
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the random-selection baseline for several seeds and average them
    Baseline {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated batch seeds
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
    },
    /// Serve the labeling API
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Directory holding session journals
        #[arg(long)]
        data_dir: PathBuf,
    },
    /// Write a synthetic blob dataset
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        format: Option<DatasetFormat>,
        #[arg(long, default_value_t = 6)]
        clusters: usize,
        #[arg(long, default_value_t = 40)]
        per_cluster: usize,
        #[arg(long, default_value_t = 8)]
        vocab: usize,
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        test_size: Option<usize>,
        #[arg(long)]
        initial_labeled: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        blob_std: f64,
        #[arg(long, default_value_t = 8.0)]
        center_spread: f64,
    },
    /// Score a saved model on the test split of a dataset file
    Eval {
        /// `model.json` written by `run`
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DatasetArgs,
        /// Annotation length
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Retrieval depth
        #[arg(long, default_value_t = 5)]
        t: usize,
    },
    /// Print the initial clusters as JSON
    InspectClusters {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

fn data(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_DATA,
        error,
    }
}

fn runtime(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        error,
    }
}

impl From<crm_active::Error> for Failure {
    fn from(e: crm_active::Error) -> Self {
        use crm_active::Error as E;
        let code = if e.is_data_error() || matches!(e, E::InvalidParameter(_) | E::Precondition(_))
        {
            EXIT_DATA
        } else {
            EXIT_RUNTIME
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))
                .map_err(data)?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", p.display()))
                .map_err(data)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn load_dataset(args: &DatasetArgs) -> Result<Arc<Dataset>, Failure> {
    Dataset::load(&args.dataset, args.format())
        .map(Arc::new)
        .map_err(|e| {
            let code = Failure::from(e);
            Failure {
                code: code.code,
                error: code
                    .error
                    .context(format!("loading {}", args.dataset.display())),
            }
        })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

fn json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| runtime(e.into()))?;
    s.push('\n');
    Ok(s)
}

pub fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            data: d,
            config,
            out_dir,
            seed,
        } => {
            let config = load_config(config.as_deref(), seed)?;
            let dataset = load_dataset(&d)?;
            let out = run_session(dataset.clone(), config, &mut GroundTruthOracle)?;
            fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))
                .map_err(runtime)?;
            let vocab: Vec<String> = dataset
                .vocabulary()
                .iter()
                .map(|c| c.name.clone())
                .collect();
            write(&out_dir, "metrics.csv", &metrics_csv(&out.history))?;
            write(
                &out_dir,
                "per_concept.csv",
                &per_concept_csv(&out.history, &vocab),
            )?;
            write(&out_dir, "scores.csv", &scores_csv(&out.scores))?;
            write(
                &out_dir,
                "labeling_order.json",
                &labeling_order_json(&out.labeling_order)?,
            )?;
            write(&out_dir, "model.json", &json(&out.model)?)?;
            write(&out_dir, "config.json", &json(&out.config)?)?;
            if let Some(last) = out.history.last() {
                println!(
                    "{} rounds, {} labeled, annotation AP {:.4}, retrieval AP {:.4}",
                    out.history.len(),
                    last.labeled_count,
                    last.annotation_ap,
                    last.retrieval_ap
                );
            }
            Ok(())
        }
        Command::Baseline {
            data: d,
            config,
            out_dir,
            seeds,
        } => {
            let config = load_config(config.as_deref(), None)?;
            let dataset = load_dataset(&d)?;
            let out = run_baseline_random(dataset.clone(), config, &seeds)?;
            fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))
                .map_err(runtime)?;
            let vocab: Vec<String> = dataset
                .vocabulary()
                .iter()
                .map(|c| c.name.clone())
                .collect();
            for (seed, history) in &out.per_seed {
                write(
                    &out_dir,
                    &format!("metrics_seed_{seed}.csv"),
                    &metrics_csv(history),
                )?;
                write(
                    &out_dir,
                    &format!("per_concept_seed_{seed}.csv"),
                    &per_concept_csv(history, &vocab),
                )?;
            }
            write(&out_dir, "metrics_average.csv", &metrics_csv(&out.averaged))?;
            write(
                &out_dir,
                "per_concept_average.csv",
                &per_concept_csv(&out.averaged, &vocab),
            )?;
            if let Some(last) = out.averaged.last() {
                println!(
                    "{} seeds, final annotation AP {:.4}, retrieval AP {:.4}",
                    seeds.len(),
                    last.annotation_ap,
                    last.retrieval_ap
                );
            }
            Ok(())
        }
        Command::Serve { bind, data_dir } => {
            let store = SessionStore::open(&data_dir)
                .with_context(|| format!("opening {}", data_dir.display()))
                .map_err(runtime)?;
            for (id, reason) in store.failures() {
                eprintln!("warning: session {id} not recovered: {reason}");
            }
            let rt = tokio::runtime::Runtime::new().map_err(|e| runtime(e.into()))?;
            rt.block_on(crate::http::serve(Arc::new(store), &bind))
                .with_context(|| format!("serving on {bind}"))
                .map_err(runtime)
        }
        Command::Synth {
            out,
            format,
            clusters,
            per_cluster,
            vocab,
            dim,
            noise,
            seed,
            test_size,
            initial_labeled,
            blob_std,
            center_spread,
        } => {
            let spec = SynthSpec {
                n_clusters: clusters,
                samples_per_cluster: per_cluster,
                vocab_size: vocab,
                feature_dim: dim,
                label_noise: noise,
                seed,
                blob_std,
                center_spread,
                test_size,
                initial_labeled,
            };
            let dataset = generate_synthetic(&spec)?;
            let format = format.unwrap_or_else(|| DatasetFormat::from_path(&out));
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)
                    .with_context(|| format!("creating {}", parent.display()))
                    .map_err(runtime)?;
            }
            dataset
                .save(&out, format)
                .map_err(|e| runtime(anyhow!(e).context(format!("writing {}", out.display()))))?;
            println!("wrote {} samples to {}", dataset.len(), out.display());
            Ok(())
        }
        Command::Eval {
            model,
            data: d,
            k,
            t,
        } => {
            let text = fs::read_to_string(&model)
                .with_context(|| format!("reading {}", model.display()))
                .map_err(data)?;
            let model: RelevanceModel = serde_json::from_str(&text)
                .context("parsing model")
                .map_err(data)?;
            let record = read_record(&d.dataset, d.format())?;
            let report = evaluate_record(&model, &record, k, t)?;
            print!("{}", json(&report)?);
            Ok(())
        }
        Command::InspectClusters {
            data: d,
            config,
            seed,
        } => {
            let config = load_config(config.as_deref(), seed)?;
            let dataset = load_dataset(&d)?;
            let session = Session::start(dataset, config, Strategy::CrmActive)?;
            print!("{}", json(&session.cluster_summaries()?)?);
            Ok(())
        }
    }
}
