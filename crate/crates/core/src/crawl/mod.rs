//! Feeder, parser and downloader stages of the image crawler.

mod engine;
mod html;
mod pipeline;
mod progress;

pub use engine::{crawl_species, CrawlJob, CrawlReport, SinkOutcome};
pub use html::parse_image_urls;
pub use pipeline::{
    fetch_species, prepare_species, run_crawl, CrawlOptions, CrawlSummary, ImageSink, PipelineError,
    PROGRESS_INTERVAL,
};
pub use progress::{format_hms, progress_line, Progress};
