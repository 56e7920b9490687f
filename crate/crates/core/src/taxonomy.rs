//! Species API client: recursive children traversal, grouping of leaf taxa
//! under a coarser rank, and living-status resolution.

use std::collections::HashSet;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::config::Rank;
use crate::fetch::{FetchError, HttpClient, JsonFetchError};

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error(transparent)]
    Http(#[from] FetchError),
    #[error("cannot decode API response from {url}: {detail}")]
    Decode { url: String, detail: String },
    #[error("species {0} has no ancestor at the grouping rank")]
    GroupMissing(u64),
    #[error("invalid API base `{0}`")]
    BadBase(String),
    #[error("group rank {group} is not coarser than leaf rank {leaf}")]
    RankOrder { group: Rank, leaf: Rank },
}

impl From<JsonFetchError> for TaxonomyError {
    fn from(e: JsonFetchError) -> Self {
        match e {
            JsonFetchError::Fetch(f) => TaxonomyError::Http(f),
            JsonFetchError::Decode { url, detail } => TaxonomyError::Decode { url, detail },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonRecord {
    pub key: u64,
    pub scientific_name: String,
    pub rank: Rank,
    pub parent_key: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LivingStatus {
    Alive,
    Extinct,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeciesEntry {
    pub species_key: u64,
    pub species_name: String,
    pub group_name: String,
    pub status: LivingStatus,
}

impl SpeciesEntry {
    /// Unknown status counts as alive; only confirmed extinct species are skipped.
    pub fn should_crawl(&self) -> bool {
        self.status != LivingStatus::Extinct
    }
}

/// Base URL of the species API, always ending in `/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeciesApi {
    base: Url,
    page_limit: u32,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawTaxon {
    key: Option<u64>,
    scientific_name: Option<String>,
    rank: Option<String>,
    parent_key: Option<u64>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Page<T> {
    #[serde(default)]
    end_of_records: Option<bool>,
    #[serde(default = "Vec::new")]
    results: Vec<T>,
}

#[derive(Deserialize)]
struct RawProfile {
    extinct: Option<bool>,
}

impl SpeciesApi {
    pub fn new(base: &str, page_limit: u32) -> Result<Self, TaxonomyError> {
        let mut text = base.to_string();
        if !text.ends_with('/') {
            text.push('/');
        }
        let base = Url::parse(&text).map_err(|_| TaxonomyError::BadBase(base.to_string()))?;
        if base.cannot_be_a_base() {
            return Err(TaxonomyError::BadBase(text));
        }
        Ok(SpeciesApi {
            base,
            page_limit: page_limit.max(1),
        })
    }

    fn endpoint(&self, rel: &str) -> String {
        self.base.join(rel).expect("relative path joins").to_string()
    }

    pub fn fetch_taxon(&self, client: &HttpClient, key: u64) -> Result<TaxonRecord, TaxonomyError> {
        let url = self.endpoint(&key.to_string());
        let raw: RawTaxon = client.get_json(&url)?;
        let rank_text = raw.rank.clone().unwrap_or_default();
        decode_taxon(raw, None)?.ok_or(TaxonomyError::Decode {
            url,
            detail: format!("unsupported rank `{rank_text}`"),
        })
    }

    /// All direct children of `taxon_key`, in API order across pages.
    /// Children whose rank is outside the eight main ranks are skipped.
    pub fn fetch_children(
        &self,
        client: &HttpClient,
        taxon_key: u64,
    ) -> Result<Vec<TaxonRecord>, TaxonomyError> {
        let mut out = Vec::new();
        let mut offset = 0u64;
        loop {
            let url = self.endpoint(&format!(
                "{taxon_key}/children?limit={}&offset={offset}",
                self.page_limit
            ));
            let page: Page<RawTaxon> = client.get_json(&url)?;
            let n = page.results.len() as u64;
            for raw in page.results {
                let key = raw.key;
                match decode_taxon(raw, Some(taxon_key)).map_err(|e| with_url(e, &url))? {
                    Some(rec) => out.push(rec),
                    None => debug!("skipping child {:?} of {} with unsupported rank", key, taxon_key),
                }
            }
            if page.end_of_records.unwrap_or(true) || n == 0 {
                break;
            }
            offset += n;
        }
        Ok(out)
    }

    /// Depth-first walk from `root_key`. Every taxon at `leaf_rank` becomes
    /// a [`SpeciesEntry`] grouped under the nearest ancestor at `group_rank`
    /// on the walk path; `inherited_group` stands in for ancestors above
    /// the root.
    pub fn collect_species(
        &self,
        client: &HttpClient,
        root_key: u64,
        leaf_rank: Rank,
        group_rank: Rank,
        inherited_group: Option<&str>,
    ) -> Result<Vec<SpeciesEntry>, TaxonomyError> {
        if !group_rank.is_coarser_than(leaf_rank) {
            return Err(TaxonomyError::RankOrder {
                group: group_rank,
                leaf: leaf_rank,
            });
        }
        let root = self.fetch_taxon(client, root_key)?;
        let mut walk = Walk {
            api: self,
            client,
            leaf_rank,
            group_rank,
            visited: HashSet::new(),
            emitted: HashSet::new(),
            out: Vec::new(),
        };
        walk.visit(root, inherited_group.map(str::to_string))?;
        Ok(walk.out)
    }

    /// Living status by majority over all profile sources; see [`decide_status`].
    pub fn resolve_status(
        &self,
        client: &HttpClient,
        species_key: u64,
    ) -> Result<LivingStatus, TaxonomyError> {
        let mut votes = Vec::new();
        let mut offset = 0u64;
        loop {
            let url = self.endpoint(&format!(
                "{species_key}/speciesProfiles?limit={}&offset={offset}",
                self.page_limit
            ));
            let page: Page<RawProfile> = client.get_json(&url)?;
            let n = page.results.len() as u64;
            votes.extend(page.results.into_iter().map(|p| p.extinct));
            if page.end_of_records.unwrap_or(true) || n == 0 {
                break;
            }
            offset += n;
        }
        Ok(decide_status(&votes))
    }
}

fn with_url(e: TaxonomyError, url: &str) -> TaxonomyError {
    match e {
        TaxonomyError::Decode { detail, .. } => TaxonomyError::Decode {
            url: url.to_string(),
            detail,
        },
        other => other,
    }
}

fn decode_taxon(raw: RawTaxon, parent: Option<u64>) -> Result<Option<TaxonRecord>, TaxonomyError> {
    let key = match raw.key {
        Some(k) if k > 0 => k,
        _ => {
            return Err(TaxonomyError::Decode {
                url: String::new(),
                detail: "record without a positive key".into(),
            })
        }
    };
    let Some(rank) = raw.rank.as_deref().and_then(|r| r.parse::<Rank>().ok()) else {
        return Ok(None);
    };
    let scientific_name = raw.scientific_name.unwrap_or_default();
    if scientific_name.trim().is_empty() {
        return Err(TaxonomyError::Decode {
            url: String::new(),
            detail: format!("taxon {key} has no scientificName"),
        });
    }
    Ok(Some(TaxonRecord {
        key,
        scientific_name,
        rank,
        parent_key: parent.or(raw.parent_key),
    }))
}

struct Walk<'a> {
    api: &'a SpeciesApi,
    client: &'a HttpClient,
    leaf_rank: Rank,
    group_rank: Rank,
    visited: HashSet<u64>,
    emitted: HashSet<u64>,
    out: Vec<SpeciesEntry>,
}

impl Walk<'_> {
    fn visit(&mut self, node: TaxonRecord, group: Option<String>) -> Result<(), TaxonomyError> {
        if !self.visited.insert(node.key) {
            return Ok(());
        }
        let group = if node.rank == self.group_rank {
            Some(node.scientific_name.clone())
        } else {
            group
        };
        if node.rank == self.leaf_rank {
            let group_name = group.ok_or(TaxonomyError::GroupMissing(node.key))?;
            if self.emitted.insert(node.key) {
                self.out.push(SpeciesEntry {
                    species_key: node.key,
                    species_name: node.scientific_name,
                    group_name,
                    status: LivingStatus::Unknown,
                });
            }
            return Ok(());
        }
        if node.rank > self.leaf_rank {
            return Ok(());
        }
        for child in self.api.fetch_children(self.client, node.key)? {
            self.visit(child, group.clone())?;
        }
        Ok(())
    }
}

/// Strict majority of extinct/alive votes wins; absent flags abstain. Ties
/// and empty votes fall to `Extinct` if any source said extinct, otherwise
/// `Unknown`.
pub fn decide_status(votes: &[Option<bool>]) -> LivingStatus {
    let extinct = votes.iter().filter(|v| **v == Some(true)).count();
    let alive = votes.iter().filter(|v| **v == Some(false)).count();
    if extinct > alive {
        LivingStatus::Extinct
    } else if alive > extinct {
        LivingStatus::Alive
    } else if extinct >= 1 {
        LivingStatus::Extinct
    } else {
        LivingStatus::Unknown
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn majority_examples() {
        assert_eq!(
            decide_status(&[Some(true), Some(false), Some(true)]),
            LivingStatus::Extinct
        );
        assert_eq!(decide_status(&[Some(false)]), LivingStatus::Alive);
        assert_eq!(decide_status(&[Some(true), Some(false)]), LivingStatus::Extinct);
        assert_eq!(decide_status(&[]), LivingStatus::Unknown);
        assert_eq!(decide_status(&[None, None]), LivingStatus::Unknown);
        assert_eq!(
            decide_status(&[Some(false), Some(false), Some(true)]),
            LivingStatus::Alive
        );
    }

    #[test]
    fn api_base_gets_trailing_slash() {
        let api = SpeciesApi::new("http://h/v1/species", 10).unwrap();
        assert_eq!(api.endpoint("5/children"), "http://h/v1/species/5/children");
        assert!(SpeciesApi::new("nope", 10).is_err());
    }

    proptest! {
        #[test]
        fn status_is_permutation_invariant(
            mut votes in proptest::collection::vec(proptest::option::of(any::<bool>()), 0..12),
            seed in any::<u64>(),
        ) {
            let before = decide_status(&votes);
            crate::rng::Prng::new(seed).shuffle(&mut votes);
            prop_assert_eq!(before, decide_status(&votes));
        }
    }
}
