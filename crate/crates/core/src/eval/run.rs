use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use log::{info, warn};
use serde::Serialize;

use super::metric::topk_accuracy;
use super::plan::RunPlan;
use super::split::{isolate_subset_filtered, restore_subset, SplitManifest};
use super::EvalError;
use crate::classify::{BackendFailure, Classification, Classifier, ExternalBackend};
use crate::decimal::Centi;
use crate::layout::{category_dirs, image_files};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRef {
    pub name: String,
    pub root: PathBuf,
}

impl DatasetRef {
    pub fn new(name: impl Into<String>, root: impl Into<PathBuf>) -> Self {
        DatasetRef {
            name: name.into(),
            root: root.into(),
        }
    }
}

/// What a model provider gets for one (participant, repeat).
#[derive(Debug, Clone)]
pub struct TrainRequest<'a> {
    pub run: &'a str,
    pub dataset: &'a str,
    pub repeat: u32,
    /// Reduced dataset: only reference categories, holdout already removed.
    /// Empty path when the provider does not train.
    pub image_dir: &'a Path,
    pub output_graph: PathBuf,
    pub output_labels: PathBuf,
}

pub trait ModelProvider {
    /// Whether a reduced training tree must be staged before `prepare`.
    fn needs_training(&self) -> bool;
    fn prepare(&mut self, req: &TrainRequest<'_>) -> Result<Box<dyn Classifier>, EvalError>;
}

/// A fixed classifier reused for every repeat; nothing is trained.
pub struct FixedModel(pub Arc<dyn Classifier>);

impl ModelProvider for FixedModel {
    fn needs_training(&self) -> bool {
        false
    }

    fn prepare(&mut self, _req: &TrainRequest<'_>) -> Result<Box<dyn Classifier>, EvalError> {
        Ok(Box::new(self.0.clone()))
    }
}

/// Predicts the name of the directory holding the image, with every other
/// known label at score 0. Perfect on holdout trees.
pub struct DirectoryOracle {
    labels: BTreeSet<String>,
}

impl DirectoryOracle {
    pub fn new(labels: impl IntoIterator<Item = String>) -> Self {
        DirectoryOracle {
            labels: labels.into_iter().collect(),
        }
    }
}

impl Classifier for DirectoryOracle {
    fn classify(&self, image: &Path) -> Result<Classification, BackendFailure> {
        let truth = image
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|n| n.to_str())
            .ok_or_else(|| BackendFailure(format!("no category directory for {}", image.display())))?;
        let mut scores: Vec<(String, f64)> = self
            .labels
            .iter()
            .filter(|l| l.as_str() != truth)
            .map(|l| (l.clone(), 0.0))
            .collect();
        scores.push((truth.to_string(), 1.0));
        Classification::new(scores)
    }
}

/// Runs an external trainer, then serves predictions through an external
/// classifier command loaded with the trained graph.
pub struct CommandTrainer {
    pub trainer: Vec<String>,
    pub classifier: Vec<String>,
}

impl ModelProvider for CommandTrainer {
    fn needs_training(&self) -> bool {
        true
    }

    fn prepare(&mut self, req: &TrainRequest<'_>) -> Result<Box<dyn Classifier>, EvalError> {
        let (program, args) = self
            .trainer
            .split_first()
            .ok_or_else(|| EvalError::Training("empty trainer command".into()))?;
        if let Some(parent) = req.output_graph.parent() {
            fs::create_dir_all(parent).map_err(|e| EvalError::io(parent, e))?;
        }
        info!("training {} repeat {} on {}", req.dataset, req.repeat, req.image_dir.display());
        let status = Command::new(program)
            .args(args)
            .arg("--image_dir")
            .arg(req.image_dir)
            .arg("--output_graph")
            .arg(&req.output_graph)
            .arg("--output_labels")
            .arg(&req.output_labels)
            .status()
            .map_err(|e| EvalError::Training(format!("{program}: {e}")))?;
        if !status.success() {
            return Err(EvalError::Training(format!("{program} exited with {status}")));
        }
        Ok(Box::new(ExternalBackend::new(
            self.classifier.clone(),
            Some(req.output_graph.clone()),
        )))
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub per_cat: usize,
    pub repeats: u32,
    pub seed: u64,
    /// The second reported metric is top-`k`; the first is always top-1.
    pub k: usize,
    /// Holdouts, reduced training trees and models go here.
    pub work_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatResult {
    pub seed: u64,
    pub samples: usize,
    pub top1: Centi,
    pub top5: Centi,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipantResult {
    pub name: String,
    pub asterisk: bool,
    pub missing: Vec<String>,
    pub top1_mean: Centi,
    pub top5_mean: Centi,
    pub repeats: Vec<RepeatResult>,
}

/// Aggregated result of one run. `top5_mean` is top-`k` (default 5); the
/// run means are unweighted means over participants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub run: String,
    pub repeats: u32,
    pub k: usize,
    pub top1_mean: Centi,
    pub top5_mean: Centi,
    pub participants: Vec<ParticipantResult>,
}

impl EvalResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    /// Aligned plain-text table, one line per participant plus the mean.
    pub fn to_table(&self) -> String {
        let top_k = format!("top-{}", self.k);
        let mut rows: Vec<[String; 3]> = vec![["dataset".into(), "top-1".into(), top_k]];
        for p in &self.participants {
            let name = if p.asterisk { format!("{}*", p.name) } else { p.name.clone() };
            rows.push([name, p.top1_mean.to_string(), p.top5_mean.to_string()]);
        }
        rows.push(["mean".into(), self.top1_mean.to_string(), self.top5_mean.to_string()]);
        let w0 = rows.iter().map(|r| r[0].len()).max().unwrap_or(0);
        let w1 = rows.iter().map(|r| r[1].len()).max().unwrap_or(0);
        let w2 = rows.iter().map(|r| r[2].len()).max().unwrap_or(0);
        let mut out = format!("run {} ({} repeats)\n", self.run, self.repeats);
        for r in rows {
            let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}", r[0], r[1], r[2]);
        }
        out
    }
}

/// Evaluates every participant of `plan`: per repeat r, isolate with seed+r
/// (reference categories only), train through `provider` on what remains,
/// classify every holdout image, restore. The holdout is restored even when
/// training or classification fails.
pub fn run_eval(
    plan: &RunPlan,
    datasets: &[DatasetRef],
    provider: &mut dyn ModelProvider,
    opts: &EvalOptions,
) -> Result<EvalResult, EvalError> {
    if opts.repeats == 0 {
        return Err(EvalError::EmptyInput);
    }
    if opts.k == 0 {
        return Err(EvalError::InvalidK);
    }
    if plan.reference_categories.is_empty() {
        warn!("run {} has no reference categories", plan.name);
    }
    let mut participants = Vec::new();
    for p in &plan.participants {
        let ds = datasets
            .iter()
            .find(|d| d.name == p.name)
            .ok_or_else(|| EvalError::UnknownDataset(p.name.clone()))?;
        let mut repeats = Vec::new();
        for r in 0..opts.repeats {
            let rr = run_repeat(plan, ds, provider, opts, r)?;
            info!(
                "run {} {} repeat {}: top-1 {} top-{} {} over {} samples",
                plan.name, ds.name, r, rr.top1, opts.k, rr.top5, rr.samples
            );
            repeats.push(rr);
        }
        let top1: Vec<Centi> = repeats.iter().map(|r| r.top1).collect();
        let top5: Vec<Centi> = repeats.iter().map(|r| r.top5).collect();
        participants.push(ParticipantResult {
            name: p.name.clone(),
            asterisk: p.asterisk,
            missing: p.missing.iter().cloned().collect(),
            top1_mean: Centi::mean(&top1),
            top5_mean: Centi::mean(&top5),
            repeats,
        });
    }
    let top1: Vec<Centi> = participants.iter().map(|p| p.top1_mean).collect();
    let top5: Vec<Centi> = participants.iter().map(|p| p.top5_mean).collect();
    Ok(EvalResult {
        run: plan.name.clone(),
        repeats: opts.repeats,
        k: opts.k,
        top1_mean: Centi::mean(&top1),
        top5_mean: Centi::mean(&top5),
        participants,
    })
}

fn run_repeat(
    plan: &RunPlan,
    ds: &DatasetRef,
    provider: &mut dyn ModelProvider,
    opts: &EvalOptions,
    r: u32,
) -> Result<RepeatResult, EvalError> {
    let seed = opts.seed.wrapping_add(r as u64);
    let base = opts.work_dir.join(&plan.name).join(&ds.name);
    let holdout = base.join(format!("holdout-{r}"));
    let manifest = isolate_subset_filtered(&ds.root, &holdout, opts.per_cat, seed, Some(&plan.reference_categories))?;
    let outcome = score_holdout(plan, ds, provider, opts, r, &base, &manifest);
    let restored = restore_subset(&manifest);
    let (samples, top1, top5) = outcome?;
    restored?;
    Ok(RepeatResult {
        seed,
        samples,
        top1,
        top5,
    })
}

fn score_holdout(
    plan: &RunPlan,
    ds: &DatasetRef,
    provider: &mut dyn ModelProvider,
    opts: &EvalOptions,
    r: u32,
    base: &Path,
    manifest: &SplitManifest,
) -> Result<(usize, Centi, Centi), EvalError> {
    let model_dir = base.join(format!("model-{r}"));
    let train_dir = base.join(format!("train-{r}"));
    let staged = provider.needs_training();
    if staged {
        stage_training_tree(&ds.root, &train_dir, &plan.reference_categories)?;
    }
    let req = TrainRequest {
        run: &plan.name,
        dataset: &ds.name,
        repeat: r,
        image_dir: if staged { &train_dir } else { Path::new("") },
        output_graph: model_dir.join("output_graph.pb"),
        output_labels: model_dir.join("output_labels.txt"),
    };
    let prepared = provider.prepare(&req);
    if staged {
        let _ = fs::remove_dir_all(&train_dir);
    }
    let classifier = prepared?;

    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for (category, path) in manifest.holdout_images() {
        let c = classifier.classify(&path).map_err(EvalError::Backend)?;
        preds.push(c);
        truths.push(category);
    }
    drop(classifier);
    if preds.is_empty() {
        return Ok((0, Centi(0), Centi(0)));
    }
    Ok((
        preds.len(),
        topk_accuracy(&preds, &truths, 1)?,
        topk_accuracy(&preds, &truths, opts.k)?,
    ))
}

/// Mirrors the reference categories of `root` into `dest` with hard links,
/// falling back to copies.
fn stage_training_tree(root: &Path, dest: &Path, only: &BTreeSet<String>) -> Result<(), EvalError> {
    if dest.exists() {
        fs::remove_dir_all(dest).map_err(|e| EvalError::io(dest, e))?;
    }
    fs::create_dir_all(dest).map_err(|e| EvalError::io(dest, e))?;
    for dir in category_dirs(root)? {
        let Some(name) = dir.file_name().and_then(|n| n.to_str()) else { continue };
        if !only.contains(name) {
            continue;
        }
        let target = dest.join(name);
        fs::create_dir_all(&target).map_err(|e| EvalError::io(&target, e))?;
        for file in image_files(&dir)? {
            let to = target.join(file.file_name().expect("listed file has a name"));
            if fs::hard_link(&file, &to).is_err() {
                fs::copy(&file, &to).map_err(|e| EvalError::io(&to, e))?;
            }
        }
    }
    Ok(())
}
