//! Configuration file loading and the taxonomic rank order.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

/// Environment variable consulted when no `--config` flag is given.
pub const CONFIG_ENV: &str = "TAXOFORGE_CONFIG";
pub const DEFAULT_CONFIG_PATH: &str = "taxoforge.json";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config JSON at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing required config key `{0}`")]
    MissingKey(&'static str),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: &'static str, reason: String },
}

/// Taxonomic ranks from coarsest to finest. `Ord` follows depth, so
/// `Rank::Order < Rank::Species`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Rank {
    Domain,
    Kingdom,
    Phylum,
    Class,
    Order,
    Family,
    Genus,
    Species,
}

impl Rank {
    pub const ALL: [Rank; 8] = [
        Rank::Domain,
        Rank::Kingdom,
        Rank::Phylum,
        Rank::Class,
        Rank::Order,
        Rank::Family,
        Rank::Genus,
        Rank::Species,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Rank::Domain => "DOMAIN",
            Rank::Kingdom => "KINGDOM",
            Rank::Phylum => "PHYLUM",
            Rank::Class => "CLASS",
            Rank::Order => "ORDER",
            Rank::Family => "FAMILY",
            Rank::Genus => "GENUS",
            Rank::Species => "SPECIES",
        }
    }

    pub fn is_coarser_than(self, other: Rank) -> bool {
        self < other
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown rank `{0}`")]
pub struct UnknownRank(pub String);

impl FromStr for Rank {
    type Err = UnknownRank;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rank::ALL
            .iter()
            .copied()
            .find(|r| r.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownRank(s.to_string()))
    }
}

/// Redirect, retry and timeout behaviour for every HTTP GET.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpPolicy {
    pub max_redirects: u32,
    pub retries_5xx: u32,
    pub backoff_base_ms: u64,
    pub timeout_ms: u64,
}

impl Default for HttpPolicy {
    fn default() -> Self {
        HttpPolicy {
            max_redirects: 5,
            retries_5xx: 3,
            backoff_base_ms: 250,
            timeout_ms: 30_000,
        }
    }
}

/// One paginated HTML image source. `url_template` must contain both
/// `{query}` and `{offset}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineSpec {
    pub name: String,
    pub url_template: String,
    #[serde(default = "default_page_size")]
    pub page_size: u32,
}

fn default_page_size() -> u32 {
    20
}

impl EngineSpec {
    pub fn page_url(&self, query: &str, offset: u64) -> String {
        let encoded: String = url::form_urlencoded::byte_serialize(query.as_bytes()).collect();
        self.url_template
            .replace("{query}", &encoded)
            .replace("{offset}", &offset.to_string())
    }
}

/// Which image classifier gates crawled images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    /// Scores every image with the same value for `label`.
    Constant { label: String, score: f64 },
    /// Looks images up in a JSON manifest `{ "<file name or hash hex>": "<label>" }`.
    Oracle { manifest: PathBuf },
    /// Long-lived child process speaking the line protocol.
    External {
        command: Vec<String>,
        #[serde(default)]
        model: Option<PathBuf>,
    },
}

/// Fully resolved configuration. Built once and shared read-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    #[serde(alias = "apiBase")]
    pub api_base: String,
    pub root_taxon: u64,
    pub group_rank: Rank,
    pub leaf_rank: Rank,
    pub engines: Vec<EngineSpec>,
    pub dataset_root: PathBuf,
    pub max_dim: u32,
    pub per_species_budget: u32,
    pub positive_label: String,
    pub accept_threshold: f64,
    pub workers: usize,
    pub seed: u64,
    pub http: HttpPolicy,
    pub classifier: Option<ClassifierSpec>,
    pub trainer: Option<Vec<String>>,
    pub page_limit: u32,
}

/// Mirror of the file format with every key optional, so that absent
/// required keys can be reported by name.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(alias = "apiBase")]
    api_base: Option<String>,
    root_taxon: Option<u64>,
    group_rank: Option<String>,
    leaf_rank: Option<String>,
    engines: Option<Vec<EngineSpec>>,
    dataset_root: Option<PathBuf>,
    max_dim: Option<i64>,
    per_species_budget: Option<i64>,
    positive_label: Option<String>,
    accept_threshold: Option<f64>,
    workers: Option<i64>,
    seed: Option<u64>,
    http: Option<HttpPolicy>,
    classifier: Option<ClassifierSpec>,
    trainer: Option<Vec<String>>,
    page_limit: Option<i64>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Config::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Config, ConfigError> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        raw.resolve()
    }

    /// Resolution order: explicit path, `TAXOFORGE_CONFIG`, `./taxoforge.json`.
    pub fn locate(explicit: Option<&Path>) -> PathBuf {
        if let Some(p) = explicit {
            return p.to_path_buf();
        }
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => PathBuf::from(p),
            _ => PathBuf::from(DEFAULT_CONFIG_PATH),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn api_url(&self) -> Url {
        Url::parse(&self.api_base).expect("validated at load")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let parsed = Url::parse(&self.api_base).map_err(|e| ConfigError::InvalidValue {
            key: "api_base",
            reason: e.to_string(),
        })?;
        if parsed.cannot_be_a_base() {
            return Err(ConfigError::InvalidValue {
                key: "api_base",
                reason: "not an absolute hierarchical URL".into(),
            });
        }
        if self.root_taxon == 0 {
            return Err(invalid("root_taxon", "must be > 0"));
        }
        if self.max_dim < 1 {
            return Err(invalid("max_dim", "must be >= 1"));
        }
        if self.workers < 1 {
            return Err(invalid("workers", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.accept_threshold) {
            return Err(invalid("accept_threshold", "must be within [0, 1]"));
        }
        if self.page_limit < 1 {
            return Err(invalid("page_limit", "must be >= 1"));
        }
        if !self.group_rank.is_coarser_than(self.leaf_rank) {
            return Err(invalid("group_rank", "must be coarser than leaf_rank"));
        }
        for e in &self.engines {
            if !e.url_template.contains("{query}") || !e.url_template.contains("{offset}") {
                return Err(invalid(
                    "engines",
                    &format!("url_template of `{}` needs {{query}} and {{offset}}", e.name),
                ));
            }
            if e.page_size < 1 {
                return Err(invalid("engines", "page_size must be >= 1"));
            }
        }
        Ok(())
    }
}

fn invalid(key: &'static str, reason: &str) -> ConfigError {
    ConfigError::InvalidValue {
        key,
        reason: reason.to_string(),
    }
}

fn non_negative(key: &'static str, v: Option<i64>, default: i64) -> Result<i64, ConfigError> {
    let v = v.unwrap_or(default);
    if v < 0 {
        return Err(invalid(key, "must not be negative"));
    }
    Ok(v)
}

fn to_u32(key: &'static str, v: i64) -> Result<u32, ConfigError> {
    u32::try_from(v).map_err(|_| invalid(key, "out of range"))
}

fn parse_rank(key: &'static str, v: Option<String>, default: Rank) -> Result<Rank, ConfigError> {
    match v {
        None => Ok(default),
        Some(s) => s.parse().map_err(|e: UnknownRank| invalid(key, &e.to_string())),
    }
}

impl RawConfig {
    fn resolve(self) -> Result<Config, ConfigError> {
        let api_base = self.api_base.ok_or(ConfigError::MissingKey("api_base"))?;
        let root_taxon = self.root_taxon.ok_or(ConfigError::MissingKey("root_taxon"))?;
        let dataset_root = self
            .dataset_root
            .ok_or(ConfigError::MissingKey("dataset_root"))?;
        let positive_label = self.positive_label.unwrap_or_else(|| "bird".to_string());
        let config = Config {
            api_base,
            root_taxon,
            group_rank: parse_rank("group_rank", self.group_rank, Rank::Order)?,
            leaf_rank: parse_rank("leaf_rank", self.leaf_rank, Rank::Species)?,
            engines: self.engines.unwrap_or_default(),
            dataset_root,
            max_dim: to_u32("max_dim", non_negative("max_dim", self.max_dim, 500)?)?,
            per_species_budget: to_u32(
                "per_species_budget",
                non_negative("per_species_budget", self.per_species_budget, 100)?,
            )?,
            positive_label,
            accept_threshold: self.accept_threshold.unwrap_or(0.5),
            workers: non_negative("workers", self.workers, 4)? as usize,
            seed: self.seed.unwrap_or(0),
            http: self.http.unwrap_or_default(),
            classifier: self.classifier,
            trainer: self.trainer,
            page_limit: to_u32("page_limit", non_negative("page_limit", self.page_limit, 500)?)?,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "apiBase": "http://api.gbif.org/v1/species/",
        "root_taxon": 212,
        "dataset_root": "/tmp/ds"
    }"#;

    #[test]
    fn camel_case_alias_and_defaults() {
        let c = Config::from_json(MINIMAL).unwrap();
        assert_eq!(c.api_base, "http://api.gbif.org/v1/species/");
        assert_eq!(c.workers, 4);
        assert_eq!(c.max_dim, 500);
        assert_eq!(c.accept_threshold, 0.5);
        assert_eq!(c.group_rank, Rank::Order);
        assert_eq!(c.leaf_rank, Rank::Species);
        assert_eq!(c.http, HttpPolicy::default());
        assert_eq!(c.page_limit, 500);
    }

    #[test]
    fn threshold_out_of_range() {
        let text = r#"{"api_base":"http://h/","root_taxon":1,"dataset_root":"d","accept_threshold":1.5}"#;
        assert!(matches!(
            Config::from_json(text),
            Err(ConfigError::InvalidValue { key: "accept_threshold", .. })
        ));
    }

    #[test]
    fn missing_required_keys() {
        let cases = [
            (r#"{"root_taxon":1,"dataset_root":"d"}"#, "api_base"),
            (r#"{"api_base":"http://h/","dataset_root":"d"}"#, "root_taxon"),
            (r#"{"api_base":"http://h/","root_taxon":1}"#, "dataset_root"),
        ];
        for (text, key) in cases {
            match Config::from_json(text) {
                Err(ConfigError::MissingKey(k)) => assert_eq!(k, key),
                other => panic!("expected MissingKey({key}), got {other:?}"),
            }
        }
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = Config::from_json("{\n  \"api_base\": ,\n}").unwrap_err();
        match err {
            ConfigError::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn range_violations() {
        for (key, text) in [
            ("workers", r#"{"api_base":"http://h/","root_taxon":1,"dataset_root":"d","workers":0}"#),
            ("max_dim", r#"{"api_base":"http://h/","root_taxon":1,"dataset_root":"d","max_dim":0}"#),
            ("max_dim", r#"{"api_base":"http://h/","root_taxon":1,"dataset_root":"d","max_dim":-3}"#),
            ("api_base", r#"{"api_base":"not a url","root_taxon":1,"dataset_root":"d"}"#),
            ("root_taxon", r#"{"api_base":"http://h/","root_taxon":0,"dataset_root":"d"}"#),
        ] {
            match Config::from_json(text) {
                Err(ConfigError::InvalidValue { key: k, .. }) => assert_eq!(k, key),
                other => panic!("{key}: {other:?}"),
            }
        }
    }

    #[test]
    fn engine_template_needs_placeholders() {
        let text = r#"{"api_base":"http://h/","root_taxon":1,"dataset_root":"d",
            "engines":[{"name":"x","url_template":"http://e/?q={query}","page_size":10}]}"#;
        assert!(matches!(
            Config::from_json(text),
            Err(ConfigError::InvalidValue { key: "engines", .. })
        ));
    }

    #[test]
    fn round_trip() {
        let text = r#"{"apiBase":"http://h/v1/","root_taxon":9,"dataset_root":"d","seed":77,
            "engines":[{"name":"g","url_template":"http://e/?q={query}&o={offset}","page_size":3}],
            "classifier":{"kind":"constant","label":"bird","score":0.9},
            "http":{"retries_5xx":1}}"#;
        let a = Config::from_json(text).unwrap();
        let b = Config::from_json(&a.to_json()).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.http.retries_5xx, 1);
        assert_eq!(b.http.max_redirects, 5);
    }

    #[test]
    fn rank_order() {
        for w in Rank::ALL.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(Rank::Order.is_coarser_than(Rank::Species));
        assert_eq!("family".parse::<Rank>().unwrap(), Rank::Family);
        assert!("SUBSPECIES".parse::<Rank>().is_err());
    }

    #[test]
    fn page_url_encodes_query() {
        let e = EngineSpec {
            name: "g".into(),
            url_template: "http://e/s?q={query}&start={offset}".into(),
            page_size: 10,
        };
        assert_eq!(e.page_url("Anas platyrhynchos", 20), "http://e/s?q=Anas+platyrhynchos&start=20");
    }
}
