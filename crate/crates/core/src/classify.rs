//! Image classifier seam used to gate crawled images, with constant,
//! manifest-oracle and external-process backends.
//!
//! External process protocol: the child is started once (with the model
//! path as its last argument). For each image the parent writes the
//! absolute image path followed by `\n` to the child's stdin; the child
//! answers with one `label<TAB>score` line per label and a blank line.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use thiserror::Error;

use crate::config::ClassifierSpec;
use crate::imaging;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("classifier backend failure: {0}")]
pub struct BackendFailure(pub String);

/// Label scores sorted by score descending, ties by label ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    scores: Vec<(String, f64)>,
}

impl Classification {
    pub fn new(scores: Vec<(String, f64)>) -> Result<Self, BackendFailure> {
        let mut seen = BTreeSet::new();
        for (label, score) in &scores {
            if !seen.insert(label.as_str()) {
                return Err(BackendFailure(format!("duplicate label `{label}`")));
            }
            if !(0.0..=1.0).contains(score) {
                return Err(BackendFailure(format!("score {score} for `{label}` outside [0, 1]")));
            }
        }
        let mut scores = scores;
        scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Classification { scores })
    }

    pub fn scores(&self) -> &[(String, f64)] {
        &self.scores
    }

    pub fn score(&self, label: &str) -> Option<f64> {
        self.scores.iter().find(|(l, _)| l == label).map(|(_, s)| *s)
    }

    pub fn top_labels(&self, k: usize) -> impl Iterator<Item = &str> {
        self.scores.iter().take(k).map(|(l, _)| l.as_str())
    }

    pub fn rank_of(&self, label: &str) -> Option<usize> {
        self.scores.iter().position(|(l, _)| l == label).map(|p| p + 1)
    }
}

/// Inclusive threshold on the positive label's score; a missing label rejects.
pub fn accept(c: &Classification, positive_label: &str, threshold: f64) -> bool {
    c.score(positive_label).is_some_and(|s| s >= threshold)
}

/// A classifier callable from several workers at once.
pub trait Classifier: Send + Sync {
    fn classify(&self, image: &Path) -> Result<Classification, BackendFailure>;
}

impl<T: Classifier + ?Sized> Classifier for Arc<T> {
    fn classify(&self, image: &Path) -> Result<Classification, BackendFailure> {
        (**self).classify(image)
    }
}

impl<T: Classifier + ?Sized> Classifier for Box<T> {
    fn classify(&self, image: &Path) -> Result<Classification, BackendFailure> {
        (**self).classify(image)
    }
}

/// Label used for the complementary score of binary backends.
pub fn negative_label(label: &str) -> String {
    format!("not {label}")
}

/// Scores every image `(label, score)` and `(not label, 1 - score)`.
#[derive(Debug, Clone)]
pub struct ConstantBackend {
    label: String,
    score: f64,
}

impl ConstantBackend {
    pub fn new(label: &str, score: f64) -> Self {
        ConstantBackend {
            label: label.to_string(),
            score: score.clamp(0.0, 1.0),
        }
    }
}

impl Classifier for ConstantBackend {
    fn classify(&self, _image: &Path) -> Result<Classification, BackendFailure> {
        let rest = ((1.0 - self.score) * 1e12).round() / 1e12;
        Classification::new(vec![
            (self.label.clone(), self.score),
            (negative_label(&self.label), rest),
        ])
    }
}

/// Looks up the true label of each image in a manifest keyed by file name
/// or by 16-hex average hash. The matching label scores 1.0, every other
/// label in the manifest 0.0.
#[derive(Debug, Clone, Default)]
pub struct OracleBackend {
    labels: BTreeSet<String>,
    by_key: HashMap<String, String>,
}

impl OracleBackend {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        let by_key: HashMap<String, String> = entries.into_iter().collect();
        let labels = by_key.values().cloned().collect();
        OracleBackend { labels, by_key }
    }

    pub fn with_labels(mut self, labels: impl IntoIterator<Item = String>) -> Self {
        self.labels.extend(labels);
        self
    }

    pub fn load(path: &Path) -> Result<Self, BackendFailure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendFailure(format!("cannot read oracle manifest {}: {e}", path.display())))?;
        let map: HashMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| BackendFailure(format!("bad oracle manifest {}: {e}", path.display())))?;
        Ok(OracleBackend::new(map))
    }

    fn lookup(&self, image: &Path) -> Result<&str, BackendFailure> {
        if let Some(name) = image.file_name().and_then(|n| n.to_str()) {
            if let Some(label) = self.by_key.get(name) {
                return Ok(label);
            }
        }
        let bytes = std::fs::read(image)
            .map_err(|e| BackendFailure(format!("cannot read {}: {e}", image.display())))?;
        let pixels = imaging::decode(&bytes).map_err(|e| BackendFailure(e.to_string()))?;
        let hex = imaging::average_hash(&pixels).to_hex();
        self.by_key
            .get(&hex)
            .map(String::as_str)
            .ok_or_else(|| BackendFailure(format!("no oracle label for {}", image.display())))
    }
}

impl Classifier for OracleBackend {
    fn classify(&self, image: &Path) -> Result<Classification, BackendFailure> {
        let truth = self.lookup(image)?;
        Classification::new(
            self.labels
                .iter()
                .map(|l| (l.clone(), if l == truth { 1.0 } else { 0.0 }))
                .collect(),
        )
    }
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Session {
    fn spawn(command: &[String], model: Option<&Path>) -> Result<Session, BackendFailure> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| BackendFailure("empty classifier command".into()))?;
        let mut cmd = Command::new(program);
        cmd.args(args);
        if let Some(m) = model {
            cmd.arg(m);
        }
        let mut child = cmd
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendFailure(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Session { child, stdin, stdout })
    }

    fn query(&mut self, image: &Path) -> Result<Classification, BackendFailure> {
        let path = std::path::absolute(image)
            .map_err(|e| BackendFailure(format!("cannot resolve {}: {e}", image.display())))?;
        let line = path
            .to_str()
            .ok_or_else(|| BackendFailure("image path is not UTF-8".into()))?;
        if line.contains('\n') {
            return Err(BackendFailure("image path contains a newline".into()));
        }
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| BackendFailure(format!("write to classifier: {e}")))?;

        let mut scores = Vec::new();
        loop {
            let mut buf = String::new();
            let n = self
                .stdout
                .read_line(&mut buf)
                .map_err(|e| BackendFailure(format!("read from classifier: {e}")))?;
            if n == 0 {
                return Err(BackendFailure("classifier exited mid-response".into()));
            }
            let text = buf.trim_end_matches(['\n', '\r']);
            if text.is_empty() {
                break;
            }
            let (label, score) = text
                .rsplit_once('\t')
                .ok_or_else(|| BackendFailure(format!("malformed classifier line `{text}`")))?;
            let score: f64 = score
                .trim()
                .parse()
                .map_err(|_| BackendFailure(format!("bad score in `{text}`")))?;
            scores.push((label.to_string(), score));
        }
        Classification::new(scores)
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Runs an external classifier. Sessions are pooled: a worker borrows an
/// idle child or starts a new one, so there is one child per concurrent
/// caller rather than one per image.
pub struct ExternalBackend {
    command: Vec<String>,
    model: Option<PathBuf>,
    idle: Mutex<Vec<Session>>,
}

impl ExternalBackend {
    pub fn new(command: Vec<String>, model: Option<PathBuf>) -> Self {
        ExternalBackend {
            command,
            model,
            idle: Mutex::new(Vec::new()),
        }
    }

    /// Number of children currently parked in the pool.
    pub fn idle_sessions(&self) -> usize {
        self.idle.lock().unwrap().len()
    }
}

impl Classifier for ExternalBackend {
    fn classify(&self, image: &Path) -> Result<Classification, BackendFailure> {
        let pooled = self.idle.lock().unwrap().pop();
        let mut session = match pooled {
            Some(s) => s,
            None => Session::spawn(&self.command, self.model.as_deref())?,
        };
        let result = session.query(image);
        // a session that failed mid-protocol is out of sync; drop it
        if result.is_ok() {
            self.idle.lock().unwrap().push(session);
        }
        result
    }
}

/// Builds the backend described by a config entry. `None` accepts everything.
pub fn backend_from_spec(
    spec: Option<&ClassifierSpec>,
    positive_label: &str,
) -> Result<Box<dyn Classifier>, BackendFailure> {
    Ok(match spec {
        None => Box::new(ConstantBackend::new(positive_label, 1.0)),
        Some(ClassifierSpec::Constant { label, score }) => {
            Box::new(ConstantBackend::new(label, *score))
        }
        Some(ClassifierSpec::Oracle { manifest }) => Box::new(OracleBackend::load(manifest)?),
        Some(ClassifierSpec::External { command, model }) => {
            Box::new(ExternalBackend::new(command.clone(), model.clone()))
        }
    })
}
