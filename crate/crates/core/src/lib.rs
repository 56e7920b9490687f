//! Builds labeled image datasets from a species taxonomy: walks the
//! taxonomy API, crawls image galleries per species, gates images through a
//! classifier, deduplicates by URL and average hash, and evaluates the
//! resulting datasets against each other.

pub mod classify;
pub mod cli;
pub mod config;
pub mod crawl;
pub mod decimal;
pub mod eval;
pub mod fetch;
pub mod imaging;
pub mod layout;
pub mod mock;
pub mod rng;
pub mod store;
pub mod taxonomy;
