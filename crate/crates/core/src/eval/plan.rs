use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Name of the run restricted to categories every dataset shares.
pub const ALL_RUN: &str = "all";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub name: String,
    pub missing: BTreeSet<String>,
    /// Set when the dataset lacks some reference categories of the run.
    pub asterisk: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPlan {
    pub name: String,
    pub reference_categories: BTreeSet<String>,
    pub participants: Vec<Participant>,
}

impl RunPlan {
    pub fn participant(&self, name: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.name == name)
    }
}

/// One run per dataset (its own categories as reference) plus a final
/// `all` run over the intersection of every dataset's categories. Runs are
/// ordered by reference size, largest first, ties by name; `all` is last.
/// An empty intersection still yields an `all` run.
pub fn plan_runs(datasets: &[(String, BTreeSet<String>)]) -> Vec<RunPlan> {
    let mut sorted: Vec<&(String, BTreeSet<String>)> = datasets.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));

    let build = |name: &str, reference: &BTreeSet<String>| RunPlan {
        name: name.to_string(),
        reference_categories: reference.clone(),
        participants: sorted
            .iter()
            .map(|(n, cats)| {
                let missing: BTreeSet<String> = reference.difference(cats).cloned().collect();
                Participant {
                    name: n.clone(),
                    asterisk: !missing.is_empty(),
                    missing,
                }
            })
            .collect(),
    };

    let mut runs: Vec<RunPlan> = sorted.iter().map(|(n, cats)| build(n, cats)).collect();
    runs.sort_by(|a, b| {
        b.reference_categories
            .len()
            .cmp(&a.reference_categories.len())
            .then_with(|| a.name.cmp(&b.name))
    });

    let intersection = sorted
        .split_first()
        .map(|(first, rest)| {
            rest.iter()
                .fold(first.1.clone(), |acc, (_, s)| acc.intersection(s).cloned().collect())
        })
        .unwrap_or_default();
    runs.push(build(ALL_RUN, &intersection));
    runs
}
