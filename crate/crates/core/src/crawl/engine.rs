use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use url::Url;

use super::html::parse_image_urls;
use crate::config::EngineSpec;
use crate::fetch::FetchError;
use crate::taxonomy::SpeciesEntry;

/// Crawl work for one species.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrawlJob {
    pub entry: SpeciesEntry,
    /// Images still to accept.
    pub budget: u32,
    /// Engine index and result offset of the next page to fetch.
    pub engine_cursor: (usize, u64),
}

impl CrawlJob {
    pub fn new(entry: SpeciesEntry, budget: u32) -> Self {
        CrawlJob {
            entry,
            budget,
            engine_cursor: (0, 0),
        }
    }
}

/// What the pipeline did with one candidate URL.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinkOutcome {
    Accepted,
    Rejected,
    Duplicate,
    Error,
}

/// Per-species counters; `attempted` always equals the sum of the other four.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlReport {
    pub attempted: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub duplicates: u64,
    pub errors: u64,
    /// Stopped by a shutdown request before the budget or engines ran out.
    #[serde(default)]
    pub interrupted: bool,
}

impl CrawlReport {
    pub fn record(&mut self, outcome: SinkOutcome) {
        self.attempted += 1;
        match outcome {
            SinkOutcome::Accepted => self.accepted += 1,
            SinkOutcome::Rejected => self.rejected += 1,
            SinkOutcome::Duplicate => self.duplicates += 1,
            SinkOutcome::Error => self.errors += 1,
        }
    }

    pub fn merge(&mut self, other: &CrawlReport) {
        self.attempted += other.attempted;
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.duplicates += other.duplicates;
        self.errors += other.errors;
        self.interrupted |= other.interrupted;
    }
}

/// Walks the engines in order, paging each through its URL template until
/// the job's budget is spent or the engine stops yielding new image URLs,
/// and hands every candidate to `sink` exactly once per engine. Page fetch
/// failures end that engine and are only logged.
pub fn crawl_species<F, S>(
    job: &mut CrawlJob,
    engines: &[EngineSpec],
    fetch_page: F,
    mut sink: S,
    stop: &AtomicBool,
) -> CrawlReport
where
    F: Fn(&str) -> Result<Vec<u8>, FetchError>,
    S: FnMut(&Url) -> SinkOutcome,
{
    let mut report = CrawlReport::default();
    let query = job.entry.species_name.clone();
    let (first_engine, first_offset) = job.engine_cursor;
    for (idx, engine) in engines.iter().enumerate().skip(first_engine) {
        let mut offset = if idx == first_engine { first_offset } else { 0 };
        let mut seen: HashSet<String> = HashSet::new();
        loop {
            if job.budget == 0 {
                return report;
            }
            if stop.load(Ordering::SeqCst) {
                report.interrupted = true;
                return report;
            }
            let page_url = engine.page_url(&query, offset);
            let base = match Url::parse(&page_url) {
                Ok(u) => u,
                Err(e) => {
                    warn!("engine {}: bad page URL {}: {}", engine.name, page_url, e);
                    break;
                }
            };
            let body = match fetch_page(&page_url) {
                Ok(b) => b,
                Err(e) => {
                    warn!("engine {}: skipping after page error: {}", engine.name, e);
                    break;
                }
            };
            let fresh: Vec<Url> = parse_image_urls(&body, &base)
                .into_iter()
                .filter(|u| seen.insert(u.as_str().to_string()))
                .collect();
            debug!("engine {} offset {}: {} new image URLs", engine.name, offset, fresh.len());
            if fresh.is_empty() {
                break;
            }
            for url in &fresh {
                if job.budget == 0 {
                    return report;
                }
                if stop.load(Ordering::SeqCst) {
                    report.interrupted = true;
                    return report;
                }
                let outcome = sink(url);
                report.record(outcome);
                if outcome == SinkOutcome::Accepted {
                    job.budget -= 1;
                }
            }
            offset += u64::from(engine.page_size.max(1));
            job.engine_cursor = (idx, offset);
        }
        job.engine_cursor = (idx + 1, 0);
    }
    report
}
