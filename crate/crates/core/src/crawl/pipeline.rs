//! End-to-end crawl: species preparation, the per-image sink (URL
//! registry, download, format check, hash registry, resize, classifier
//! gate, dataset write) and the worker pool with checkpointed resume.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use serde::Serialize;
use thiserror::Error;
use url::Url;

use super::engine::{crawl_species, CrawlJob, CrawlReport, SinkOutcome};
use super::progress::{progress_line, Progress};
use crate::classify::{accept, Classifier};
use crate::config::Config;
use crate::fetch::HttpClient;
use crate::imaging::{self, average_hash};
use crate::layout::{Dataset, LayoutError};
use crate::store::{SpeciesState, SpeciesTxn, StateStore, StoreError};
use crate::taxonomy::{LivingStatus, SpeciesApi, SpeciesEntry, TaxonomyError};

/// Progress lines are emitted at least this often while crawling.
pub const PROGRESS_INTERVAL: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

/// Loads the species list from the store, or walks the taxonomy API and
/// resolves every species' living status when the store has none yet.
pub fn prepare_species(
    config: &Config,
    client: &HttpClient,
    store: &StateStore,
) -> Result<Vec<SpeciesState>, PipelineError> {
    let known = store.species();
    if !known.is_empty() {
        return Ok(known);
    }
    let entries = fetch_species(config, client)?;
    store.add_species(&entries)?;
    store.checkpoint()?;
    Ok(store.species())
}

/// Taxonomy walk plus status resolution, with up to `workers` concurrent
/// status requests. Output order is traversal order.
pub fn fetch_species(config: &Config, client: &HttpClient) -> Result<Vec<SpeciesEntry>, PipelineError> {
    let api = SpeciesApi::new(&config.api_base, config.page_limit)?;
    let mut entries = api.collect_species(
        client,
        config.root_taxon,
        config.leaf_rank,
        config.group_rank,
        None,
    )?;
    info!("retrieved {} species", entries.len());
    let next = AtomicU64::new(0);
    let statuses: Mutex<Vec<Option<Result<LivingStatus, TaxonomyError>>>> =
        Mutex::new((0..entries.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..config.workers.min(entries.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst) as usize;
                if i >= entries.len() {
                    break;
                }
                let r = api.resolve_status(client, entries[i].species_key);
                statuses.lock().unwrap()[i] = Some(r);
            });
        }
    });
    for (entry, status) in entries.iter_mut().zip(statuses.into_inner().unwrap()) {
        entry.status = status.expect("every index visited")?;
    }
    Ok(entries)
}

/// The composed per-image pipeline for one crawl run.
pub struct ImageSink<'a> {
    pub config: &'a Config,
    pub client: &'a HttpClient,
    pub dataset: &'a Dataset,
    pub classifier: &'a dyn Classifier,
}

impl ImageSink<'_> {
    pub fn process(&self, txn: &mut SpeciesTxn<'_>, entry: &SpeciesEntry, url: &Url) -> SinkOutcome {
        if !txn.register_url(url.as_str()) {
            return SinkOutcome::Duplicate;
        }
        let bytes = match self.client.get(url.as_str()) {
            Ok(b) => b,
            Err(e) => {
                debug!("download failed: {e}");
                return SinkOutcome::Error;
            }
        };
        let pixels = match imaging::decode(&bytes) {
            Ok(p) => p,
            Err(e) => {
                debug!("rejecting {url}: {e}");
                return SinkOutcome::Rejected;
            }
        };
        let hash = average_hash(&pixels);
        if !txn.register_hash(hash) {
            return SinkOutcome::Duplicate;
        }
        let jpeg = match imaging::normalize_pixels(&pixels, self.config.max_dim) {
            Ok(j) => j,
            Err(e) => {
                warn!("cannot encode {url}: {e}");
                return SinkOutcome::Error;
            }
        };
        match self.gate(&jpeg) {
            Ok(true) => {}
            Ok(false) => return SinkOutcome::Rejected,
            Err(e) => {
                warn!("classifier failed on {url}, rejecting: {e}");
                return SinkOutcome::Rejected;
            }
        }
        match self.dataset.store_image(url.as_str(), &entry.group_name, &jpeg, hash) {
            Ok(rec) => {
                debug!("stored {}", rec.rel_path.display());
                SinkOutcome::Accepted
            }
            Err(e) => {
                warn!("cannot store {url}: {e}");
                SinkOutcome::Error
            }
        }
    }

    fn gate(&self, jpeg: &[u8]) -> Result<bool, String> {
        let staging = self.dataset.staging_dir();
        std::fs::create_dir_all(&staging).map_err(|e| e.to_string())?;
        let mut tmp = tempfile::Builder::new()
            .suffix(".jpg")
            .tempfile_in(&staging)
            .map_err(|e| e.to_string())?;
        tmp.write_all(jpeg).map_err(|e| e.to_string())?;
        tmp.flush().map_err(|e| e.to_string())?;
        let c = self.classifier.classify(tmp.path()).map_err(|e| e.to_string())?;
        Ok(accept(&c, &self.config.positive_label, self.config.accept_threshold))
    }
}

#[derive(Debug, Clone, Default)]
pub struct CrawlOptions {
    /// Behave as if a shutdown signal arrived once this many species have
    /// completed in this run.
    pub stop_after: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CrawlSummary {
    pub species_total: u64,
    pub species_done: u64,
    pub species_this_run: u64,
    pub removed_orphans: u64,
    pub report: CrawlReport,
    pub interrupted: bool,
}

/// Crawls every species not yet marked done. Each species is one store
/// transaction: its registrations and done flag are logged together, and
/// a species cut short by `stop` is rolled back so the next run redoes it.
/// Images left by an earlier interrupted run are deleted first.
pub fn run_crawl(
    config: &Config,
    client: &HttpClient,
    store: &StateStore,
    classifier: &dyn Classifier,
    species: &[SpeciesState],
    stop: &AtomicBool,
    options: &CrawlOptions,
) -> Result<CrawlSummary, PipelineError> {
    let dataset = Dataset::new(&config.dataset_root);
    let removed = dataset.remove_unregistered(&store.snapshot().hashes)?;
    if removed > 0 {
        info!("removed {removed} images from an interrupted run");
    }

    let total = species.len() as u64;
    let already = species.iter().filter(|s| s.done).count() as u64;
    let mut queue: VecDeque<SpeciesEntry> = VecDeque::new();
    for s in species.iter().filter(|s| !s.done) {
        if s.entry.should_crawl() {
            queue.push_back(s.entry.clone());
        } else {
            debug!("skipping extinct species {}", s.entry.species_name);
            store.begin().commit(s.entry.species_key)?;
        }
    }
    let skipped = species.iter().filter(|s| !s.done && !s.entry.should_crawl()).count() as u64;

    let sink = ImageSink {
        config,
        client,
        dataset: &dataset,
        classifier,
    };
    let queue = Mutex::new(queue);
    let done = AtomicU64::new(already + skipped);
    let this_run = AtomicU64::new(0);
    let totals = Mutex::new(CrawlReport::default());
    let first_error: Mutex<Option<PipelineError>> = Mutex::new(None);
    let finished = AtomicBool::new(false);
    let started = Instant::now();
    let progress = |done: u64| Progress {
        done,
        total,
        elapsed_ms: started.elapsed().as_millis() as u64,
    };

    std::thread::scope(|s| {
        s.spawn(|| {
            let mut last = Instant::now();
            while !finished.load(Ordering::SeqCst) {
                std::thread::sleep(Duration::from_millis(100));
                if last.elapsed() >= PROGRESS_INTERVAL {
                    info!("{}", progress_line(&progress(done.load(Ordering::SeqCst)), "crawl"));
                    last = Instant::now();
                }
            }
        });
        let workers: Vec<_> = (0..config.workers.max(1))
            .map(|_| {
                s.spawn(|| loop {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Some(entry) = queue.lock().unwrap().pop_front() else { break };
                    let mut job = CrawlJob::new(entry.clone(), config.per_species_budget);
                    let mut txn = store.begin();
                    let report = crawl_species(
                        &mut job,
                        &config.engines,
                        |u| client.get(u),
                        |url| sink.process(&mut txn, &entry, url),
                        stop,
                    );
                    totals.lock().unwrap().merge(&report);
                    if report.interrupted {
                        txn.abort();
                        break;
                    }
                    if let Err(e) = txn.commit(entry.species_key) {
                        first_error.lock().unwrap().get_or_insert(e.into());
                        stop.store(true, Ordering::SeqCst);
                        break;
                    }
                    let n = done.fetch_add(1, Ordering::SeqCst) + 1;
                    let ran = this_run.fetch_add(1, Ordering::SeqCst) + 1;
                    info!(
                        "{} [{}: +{} accepted]",
                        progress_line(&progress(n), "crawl"),
                        entry.species_name,
                        report.accepted
                    );
                    if options.stop_after.is_some_and(|k| ran >= k) {
                        stop.store(true, Ordering::SeqCst);
                    }
                })
            })
            .collect();
        for w in workers {
            let _ = w.join();
        }
        finished.store(true, Ordering::SeqCst);
    });

    store.checkpoint()?;
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    let species_done = done.load(Ordering::SeqCst);
    let report = totals.into_inner().unwrap();
    Ok(CrawlSummary {
        species_total: total,
        species_done,
        species_this_run: this_run.load(Ordering::SeqCst),
        removed_orphans: removed as u64,
        report,
        interrupted: species_done < total,
    })
}
