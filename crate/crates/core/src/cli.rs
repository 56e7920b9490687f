//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 1 on a domain error, 2 on a usage error.

use std::error::Error;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::classify::{backend_from_spec, Classifier};
use crate::config::{ClassifierSpec, Config, CONFIG_ENV, DEFAULT_CONFIG_PATH};
use crate::crawl::{fetch_species, prepare_species, run_crawl, CrawlOptions};
use crate::eval::{
    default_holdout_dir, isolate_subset, plan_runs, restore_subset, run_eval, CommandTrainer, DatasetRef,
    DirectoryOracle, EvalOptions, FixedModel, ModelProvider, SplitManifest, MANIFEST_FILE,
};
use crate::fetch::HttpClient;
use crate::imaging::{average_hash, decode};
use crate::layout::{category_sets, stats};
use crate::store::{StateStore, LOG_FILE_NAME};

type CliResult = Result<(), Box<dyn Error>>;

#[derive(Debug, Parser)]
#[command(name = "taxoforge", version, about = "Build and evaluate labeled image datasets from a species taxonomy")]
pub struct Cli {
    /// Config file; falls back to $TAXOFORGE_CONFIG, then ./taxoforge.json.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Write the machine-readable report here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Walk the taxonomy, resolve living status and record the species list.
    FetchTaxa {
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Crawl images for every species not yet done; resumes after interruption.
    Crawl {
        #[arg(long)]
        workers: Option<usize>,
        /// Stop cleanly after this many species complete in this run.
        #[arg(long, value_name = "N")]
        stop_after: Option<u64>,
    },
    /// Size and category counts of a dataset directory.
    Stats {
        /// Dataset root; defaults to the configured dataset_root.
        root: Option<PathBuf>,
    },
    /// Evaluation runs for a set of datasets given as NAME=PATH.
    EvalPlan {
        #[arg(required = true, value_name = "NAME=PATH")]
        datasets: Vec<String>,
    },
    /// Move a seeded holdout subset out of a dataset.
    EvalSplit {
        root: PathBuf,
        #[arg(long, default_value_t = 5)]
        per_cat: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Holdout directory; defaults to `<root>.holdout`.
        #[arg(long)]
        holdout: Option<PathBuf>,
    },
    /// Move a holdout subset back into its dataset.
    EvalRestore {
        root: PathBuf,
        #[arg(long)]
        holdout: Option<PathBuf>,
    },
    /// Run the evaluation protocol over datasets given as NAME=PATH.
    EvalRun {
        #[arg(required = true, value_name = "NAME=PATH")]
        datasets: Vec<String>,
        #[arg(long, default_value_t = 5)]
        per_cat: usize,
        #[arg(long, default_value_t = 5)]
        repeats: u32,
        #[arg(long)]
        seed: Option<u64>,
        /// Second reported metric is top-k.
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Only this run (a dataset name or `all`).
        #[arg(long)]
        run: Option<String>,
        #[arg(long, value_enum, default_value_t = Backend::Trainer)]
        backend: Backend,
        /// Scratch space for holdouts and trained models.
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
    /// Print the 64-bit average hash of an image as 16 hex digits.
    Hash { file: PathBuf },
    /// Print the version.
    Version,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    /// Configured trainer command plus external classifier.
    Trainer,
    /// Predicts each image's own directory; no training.
    Oracle,
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::FetchTaxa { workers } => {
            let mut config = required_config(cli)?;
            if let Some(w) = workers {
                config.workers = *w;
            }
            fetch_taxa(cli, &config)
        }
        Command::Crawl { workers, stop_after } => {
            let mut config = required_config(cli)?;
            if let Some(w) = workers {
                config.workers = *w;
            }
            crawl(cli, &config, *stop_after)
        }
        Command::Stats { root } => {
            let root = match root {
                Some(r) => r.clone(),
                None => required_config(cli)?.dataset_root,
            };
            emit(cli, &serde_json::to_string(&stats(&root)?)?)
        }
        Command::EvalPlan { datasets } => {
            let refs = parse_datasets(datasets)?;
            let plans = plan_runs(&named_category_sets(&refs)?);
            if plans.last().is_some_and(|p| p.reference_categories.is_empty()) {
                warn!("the datasets share no categories");
            }
            emit(cli, &serde_json::to_string_pretty(&plans)?)
        }
        Command::EvalSplit {
            root,
            per_cat,
            seed,
            holdout,
        } => {
            let seed = seed_or_config(cli, *seed)?;
            let holdout = holdout.clone().unwrap_or_else(|| default_holdout_dir(root));
            let manifest = isolate_subset(root, &holdout, *per_cat, seed)?;
            for s in &manifest.shortfalls {
                warn!("category {} has only {} images", s.category, s.available);
            }
            info!("moved {} images to {}", manifest.entries.len(), holdout.display());
            emit(cli, &String::from_utf8(manifest.to_bytes())?)
        }
        Command::EvalRestore { root, holdout } => {
            let holdout = holdout.clone().unwrap_or_else(|| default_holdout_dir(root));
            let manifest = SplitManifest::load(&holdout.join(MANIFEST_FILE))?;
            restore_subset(&manifest)?;
            info!("restored {} images into {}", manifest.entries.len(), manifest.root.display());
            Ok(())
        }
        Command::EvalRun {
            datasets,
            per_cat,
            repeats,
            seed,
            k,
            run,
            backend,
            work_dir,
        } => {
            let seed = seed_or_config(cli, *seed)?;
            let refs = parse_datasets(datasets)?;
            let sets = named_category_sets(&refs)?;
            let mut plans = plan_runs(&sets);
            if let Some(name) = run {
                plans.retain(|p| &p.name == name);
                if plans.is_empty() {
                    return Err(format!("no run named {name}").into());
                }
            }
            let mut provider: Box<dyn ModelProvider> = match backend {
                Backend::Oracle => {
                    let labels = sets.iter().flat_map(|(_, s)| s.iter().cloned());
                    Box::new(FixedModel(Arc::new(DirectoryOracle::new(labels))))
                }
                Backend::Trainer => trainer_provider(&required_config(cli)?)?,
            };
            let scratch;
            let work_dir = match work_dir {
                Some(w) => w.clone(),
                None => {
                    scratch = tempfile::tempdir()?;
                    scratch.path().to_path_buf()
                }
            };
            let opts = EvalOptions {
                per_cat: *per_cat,
                repeats: *repeats,
                seed,
                k: *k,
                work_dir,
            };
            let mut results = Vec::new();
            for plan in &plans {
                let res = run_eval(plan, &refs, provider.as_mut(), &opts)?;
                eprint!("{}", res.to_table());
                results.push(res);
            }
            emit(cli, &serde_json::to_string_pretty(&results)?)
        }
        Command::Hash { file } => {
            let data = fs::read(file).map_err(|e| format!("{}: {e}", file.display()))?;
            let pixels = decode(&data)?;
            emit(cli, &average_hash(&pixels).to_hex())
        }
        Command::Version => emit(cli, &format!("taxoforge {}", env!("CARGO_PKG_VERSION"))),
    }
}

fn fetch_taxa(cli: &Cli, config: &Config) -> CliResult {
    let client = HttpClient::new(config.http.clone());
    let entries = fetch_species(config, &client)?;
    fs::create_dir_all(&config.dataset_root)?;
    let store = StateStore::open(&config.dataset_root.join(LOG_FILE_NAME))?;
    let added = store.add_species(&entries)?;
    store.checkpoint()?;
    info!("{} species, {added} new", entries.len());
    emit(cli, &serde_json::to_string_pretty(&entries)?)
}

fn crawl(cli: &Cli, config: &Config, stop_after: Option<u64>) -> CliResult {
    let client = HttpClient::new(config.http.clone());
    fs::create_dir_all(&config.dataset_root)?;
    let store = StateStore::open(&config.dataset_root.join(LOG_FILE_NAME))?;
    let classifier: Box<dyn Classifier> = backend_from_spec(config.classifier.as_ref(), &config.positive_label)?;
    let species = prepare_species(config, &client, &store)?;

    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    if let Err(e) = ctrlc::set_handler(move || {
        eprintln!("shutdown requested, finishing in-flight downloads");
        flag.store(true, Ordering::SeqCst);
    }) {
        warn!("cannot install signal handler: {e}");
    }
    let summary = run_crawl(
        config,
        &client,
        &store,
        classifier.as_ref(),
        &species,
        &stop,
        &CrawlOptions { stop_after },
    )?;
    if summary.interrupted {
        info!(
            "stopped after {}/{} species; run again to resume",
            summary.species_done, summary.species_total
        );
    }
    emit(cli, &serde_json::to_string_pretty(&summary)?)
}

fn trainer_provider(config: &Config) -> Result<Box<dyn ModelProvider>, Box<dyn Error>> {
    let trainer = config
        .trainer
        .clone()
        .ok_or("eval-run --backend trainer needs `trainer` in the config")?;
    let classifier = match &config.classifier {
        Some(ClassifierSpec::External { command, .. }) => command.clone(),
        _ => return Err("eval-run --backend trainer needs an external `classifier` in the config".into()),
    };
    Ok(Box::new(CommandTrainer { trainer, classifier }))
}

fn required_config(cli: &Cli) -> Result<Config, Box<dyn Error>> {
    let path = Config::locate(cli.config.as_deref());
    Ok(Config::load(&path).map_err(|e| format!("{}: {e}", path.display()))?)
}

/// Seed precedence: flag, then config (when one can be found), then 0.
fn seed_or_config(cli: &Cli, seed: Option<u64>) -> Result<u64, Box<dyn Error>> {
    if let Some(s) = seed {
        return Ok(s);
    }
    let explicit = cli.config.is_some() || std::env::var_os(CONFIG_ENV).is_some_and(|v| !v.is_empty());
    if explicit || Path::new(DEFAULT_CONFIG_PATH).exists() {
        return Ok(required_config(cli)?.seed);
    }
    Ok(0)
}

/// `NAME=PATH`, or a bare path named after its last component.
fn parse_datasets(args: &[String]) -> Result<Vec<DatasetRef>, Box<dyn Error>> {
    let mut refs: Vec<DatasetRef> = Vec::new();
    for a in args {
        let r = match a.split_once('=') {
            Some((name, path)) if !name.is_empty() => DatasetRef::new(name, path),
            _ => {
                let p = PathBuf::from(a);
                let name = p
                    .file_name()
                    .and_then(|n| n.to_str())
                    .ok_or_else(|| format!("cannot name dataset {a}"))?
                    .to_string();
                DatasetRef::new(name, p)
            }
        };
        if refs.iter().any(|x| x.name == r.name) {
            return Err(format!("dataset name {} given twice", r.name).into());
        }
        refs.push(r);
    }
    Ok(refs)
}

fn named_category_sets(
    refs: &[DatasetRef],
) -> Result<Vec<(String, std::collections::BTreeSet<String>)>, Box<dyn Error>> {
    let roots: Vec<PathBuf> = refs.iter().map(|r| r.root.clone()).collect();
    let sets = category_sets(&roots)?;
    Ok(refs.iter().map(|r| r.name.clone()).zip(sets).collect())
}

fn emit(cli: &Cli, text: &str) -> CliResult {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match &cli.out {
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}
