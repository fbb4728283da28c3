//! Pattern completion and structural cost metrics.
//!
//! The external performance task: mask one variable of a test observation,
//! classify the observation down the tree, and predict the masked value at
//! the terminal cluster (its most frequent value). With a frontier supplied,
//! classification for a variable terminates at the first frontier node on
//! the path; otherwise it runs to a leaf.

use serde::Serialize;

use crate::dataset::Observation;
use crate::error::{Error, Result};
use crate::frontier::{classify_readonly, Frontier};
use crate::objective::ObjectiveId;
use crate::tree::Tree;

/// Structural metrics of a (possibly pruned) tree, optionally with test
/// accuracy attached.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    /// Number of leaves.
    pub leaves: usize,
    /// Total path length: the depth of each leaf times the observations it
    /// covers.
    pub epl: u64,
    /// Average leaf depth, EPL / L.
    pub depth: f64,
    /// Average branching factor, L^(1/D). Undefined for a single-node tree.
    pub breadth: Option<f64>,
    /// Expected classification cost, B * D.
    pub cost: Option<f64>,
    /// Single-node trees have no depth; their breadth and cost are undefined.
    pub degenerate: bool,
}

/// Predict the masked variable's value for an observation: classify
/// read-only, stop at the first node on the masked variable's frontier (or
/// at the leaf without one), and return that cluster's most frequent value.
pub fn predict(
    tree: &Tree,
    obs: &Observation,
    masked: usize,
    frontier: Option<&Frontier>,
    objective: ObjectiveId,
) -> Result<u32> {
    let path = classify_readonly(tree, obs, Some(masked), objective)?;
    let terminal = match frontier {
        Some(f) => *path
            .iter()
            .find(|&&n| f.contains(masked, n))
            .unwrap_or_else(|| path.last().expect("non-empty path")),
        None => *path.last().expect("non-empty path"),
    };
    Ok(tree.most_frequent_value(terminal, masked))
}

/// Fraction of correct predictions when each variable of each test
/// observation is masked in turn.
pub fn accuracy(
    tree: &Tree,
    test: &[Observation],
    frontier: Option<&Frontier>,
    objective: ObjectiveId,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyInput("test set is empty".into()));
    }
    let n_vars = tree.schema().len();
    let mut correct = 0usize;
    for obs in test {
        for var in 0..n_vars {
            if predict(tree, obs, var, frontier, objective)? == obs.values[var] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / (test.len() * n_vars) as f64)
}

/// Leaf count, total path length, and the derived depth/breadth/cost
/// figures.
pub fn structure_metrics(tree: &Tree) -> Result<MetricsReport> {
    tree.root()
        .ok_or_else(|| Error::EmptyInput("tree is empty".into()))?;
    let leaves = tree.leaves();
    let l = leaves.len();
    let epl: u64 = leaves
        .iter()
        .map(|&n| tree.depth(n) as u64 * tree.node(n).size() as u64)
        .sum();
    let depth = epl as f64 / l as f64;
    if depth == 0.0 {
        return Ok(MetricsReport {
            accuracy: None,
            leaves: l,
            epl,
            depth: 0.0,
            breadth: None,
            cost: None,
            degenerate: true,
        });
    }
    let breadth = (l as f64).powf(1.0 / depth);
    Ok(MetricsReport {
        accuracy: None,
        leaves: l,
        epl,
        depth,
        breadth: Some(breadth),
        cost: Some(breadth * depth),
        degenerate: false,
    })
}

/// Depth/breadth/cost derived from (possibly averaged) leaf and path-length
/// figures, at table precision: depth and breadth are carried at two
/// decimals and cost is their product, matching how such tables are printed.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CostRow {
    pub depth: f64,
    pub breadth: f64,
    pub cost: f64,
}

pub fn cost_row(leaves: f64, epl: f64) -> CostRow {
    let round2 = |x: f64| (x * 100.0).round() / 100.0;
    let depth = round2(epl / leaves);
    let breadth = round2(leaves.powf(1.0 / depth));
    CostRow {
        depth,
        breadth,
        cost: depth * breadth,
    }
}
