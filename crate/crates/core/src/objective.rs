//! Objective functions for scoring partitions.
//!
//! All scores are pure functions of cluster statistics. A [`ClusterView`]
//! describes a cluster as stored counts plus an optional pending increment
//! (an observation about to be added, or a whole subtree's count table), so
//! candidate placements can be scored without mutating the tree.
//!
//! Logs are base 2 and `0 * log2(0)` is taken as 0.

use serde::{Deserialize, Serialize};

use crate::dataset::Schema;
use crate::error::{Error, Result};
use crate::tree::{CountTable, Node, NodeId, Tree};

/// Which objective function drives sorting and optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveId {
    /// Partition utility: average category utility (Gini form).
    Pu,
    /// Information-theoretic analog of PU, averaged the same way.
    PuInfo,
    /// Sum over variables of information gain normalized by partition entropy.
    NormGainRatio,
    /// Sum over variables of information gain normalized by the
    /// variable/cluster joint entropy.
    NormDeMantaras,
}

impl ObjectiveId {
    pub const ALL: [ObjectiveId; 4] = [
        ObjectiveId::Pu,
        ObjectiveId::PuInfo,
        ObjectiveId::NormGainRatio,
        ObjectiveId::NormDeMantaras,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveId::Pu => "pu",
            ObjectiveId::PuInfo => "pu-info",
            ObjectiveId::NormGainRatio => "norm-gr",
            ObjectiveId::NormDeMantaras => "norm-dm",
        }
    }
}

impl std::str::FromStr for ObjectiveId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pu" => Ok(ObjectiveId::Pu),
            "pu-info" => Ok(ObjectiveId::PuInfo),
            "norm-gr" => Ok(ObjectiveId::NormGainRatio),
            "norm-dm" => Ok(ObjectiveId::NormDeMantaras),
            other => Err(Error::Config(format!("unknown objective '{other}'"))),
        }
    }
}

/// A pending increment to a cluster: one observation (with an optionally
/// masked variable that contributes no counts) or a whole count table.
#[derive(Debug, Clone, Copy)]
pub enum Delta<'a> {
    Obs {
        values: &'a [u32],
        masked: Option<usize>,
    },
    Table {
        size: u32,
        counts: &'a CountTable,
    },
}

impl<'a> Delta<'a> {
    pub fn size(&self) -> u32 {
        match self {
            Delta::Obs { .. } => 1,
            Delta::Table { size, .. } => *size,
        }
    }

    pub fn count(&self, var: usize, val: usize) -> u32 {
        match self {
            Delta::Obs { values, masked } => {
                if *masked == Some(var) {
                    0
                } else {
                    (values[var] as usize == val) as u32
                }
            }
            Delta::Table { counts, .. } => counts.get(var, val),
        }
    }
}

/// Cluster statistics as seen by an objective: stored counts plus an
/// optional pending increment.
#[derive(Debug, Clone, Copy)]
pub struct ClusterView<'a> {
    size: u32,
    counts: Option<&'a CountTable>,
    delta: Option<Delta<'a>>,
}

impl<'a> ClusterView<'a> {
    pub fn of_node(n: &'a Node) -> Self {
        ClusterView {
            size: n.size(),
            counts: Some(n.counts()),
            delta: None,
        }
    }

    pub fn of_node_plus(n: &'a Node, delta: Delta<'a>) -> Self {
        ClusterView {
            size: n.size() + delta.size(),
            counts: Some(n.counts()),
            delta: Some(delta),
        }
    }

    /// A hypothetical cluster holding only the pending increment
    /// (the new-singleton candidate).
    pub fn of_delta(delta: Delta<'a>) -> Self {
        ClusterView {
            size: delta.size(),
            counts: None,
            delta: Some(delta),
        }
    }

    pub fn from_parts(size: u32, counts: &'a CountTable) -> Self {
        ClusterView {
            size,
            counts: Some(counts),
            delta: None,
        }
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn count(&self, var: usize, val: usize) -> u32 {
        self.counts.map_or(0, |c| c.get(var, val))
            + self.delta.map_or(0, |d| d.count(var, val))
    }
}

/// A partition to score: the parent supplying marginals and total size, and
/// the sibling clusters that divide its coverage.
#[derive(Debug, Clone)]
pub struct PartitionView<'a> {
    pub schema: &'a Schema,
    pub parent: ClusterView<'a>,
    pub clusters: Vec<ClusterView<'a>>,
}

impl<'a> PartitionView<'a> {
    /// The partition formed by a node's children.
    pub fn of_children(tree: &'a Tree, parent: NodeId) -> Result<Self> {
        let p = tree.node(parent);
        if p.is_leaf() {
            return Err(Error::Argument(format!("{parent} has no children")));
        }
        Ok(PartitionView {
            schema: tree.schema(),
            parent: ClusterView::of_node(p),
            clusters: p
                .children()
                .iter()
                .map(|&c| ClusterView::of_node(tree.node(c)))
                .collect(),
        })
    }

    /// An arbitrary set of clusters under a common parent (used for flat
    /// partitions that span subtrees).
    pub fn of_clusters(tree: &'a Tree, parent: NodeId, members: &[NodeId]) -> Self {
        PartitionView {
            schema: tree.schema(),
            parent: ClusterView::of_node(tree.node(parent)),
            clusters: members
                .iter()
                .map(|&c| ClusterView::of_node(tree.node(c)))
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(Error::Argument("empty partition".into()));
        }
        if self.parent.size() == 0 {
            return Err(Error::Argument("partition parent is empty".into()));
        }
        Ok(())
    }
}

fn xlog2(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Category utility of one cluster against its parent's marginals:
/// `P(C) * sum_i sum_j [P(v_ij|C)^2 - P(v_ij)^2]`. May be negative.
pub fn category_utility(
    cluster: &ClusterView,
    parent: &ClusterView,
    schema: &Schema,
) -> Result<f64> {
    if cluster.size() == 0 || parent.size() == 0 {
        return Err(Error::Argument("empty cluster".into()));
    }
    let s = cluster.size() as f64;
    let m = parent.size() as f64;
    let mut sum = 0.0;
    for var in 0..schema.len() {
        for val in 0..schema.arity(var) {
            let pc = cluster.count(var, val) as f64 / s;
            let pm = parent.count(var, val) as f64 / m;
            sum += pc * pc - pm * pm;
        }
    }
    Ok(s / m * sum)
}

/// Information-theoretic analog of category utility:
/// `P(C) * sum_i sum_j [P(v|C) log2 P(v|C) - P(v) log2 P(v)]`.
pub fn info_category_utility(
    cluster: &ClusterView,
    parent: &ClusterView,
    schema: &Schema,
) -> Result<f64> {
    if cluster.size() == 0 || parent.size() == 0 {
        return Err(Error::Argument("empty cluster".into()));
    }
    let s = cluster.size() as f64;
    let m = parent.size() as f64;
    let mut sum = 0.0;
    for var in 0..schema.len() {
        for val in 0..schema.arity(var) {
            let pc = cluster.count(var, val) as f64 / s;
            let pm = parent.count(var, val) as f64 / m;
            sum += xlog2(pc) - xlog2(pm);
        }
    }
    Ok(s / m * sum)
}

/// Partition utility: average category utility over the partition's clusters.
pub fn partition_utility(p: &PartitionView) -> Result<f64> {
    p.validate()?;
    let mut total = 0.0;
    for c in &p.clusters {
        total += category_utility(c, &p.parent, p.schema)?;
    }
    Ok(total / p.clusters.len() as f64)
}

/// Average information-theoretic category utility over the partition.
pub fn partition_info_utility(p: &PartitionView) -> Result<f64> {
    p.validate()?;
    let mut total = 0.0;
    for c in &p.clusters {
        total += info_category_utility(c, &p.parent, p.schema)?;
    }
    Ok(total / p.clusters.len() as f64)
}

/// Expected number of correctly predicted variable values under
/// probability matching: `sum_k P(C_k) sum_i sum_j P(v_ij|C_k)^2`.
pub fn expected_correct(p: &PartitionView) -> Result<f64> {
    p.validate()?;
    let m = p.parent.size() as f64;
    let mut total = 0.0;
    for c in &p.clusters {
        if c.size() == 0 {
            return Err(Error::Argument("empty cluster".into()));
        }
        let s = c.size() as f64;
        let mut sum = 0.0;
        for var in 0..p.schema.len() {
            for val in 0..p.schema.arity(var) {
                let pc = c.count(var, val) as f64 / s;
                sum += pc * pc;
            }
        }
        total += s / m * sum;
    }
    Ok(total)
}

/// Per-variable information gain of the partition:
/// `sum_k P(C_k) sum_j [P(v|C_k) log2 P(v|C_k) - P(v) log2 P(v)]`.
fn info_gain_for_var(p: &PartitionView, var: usize) -> f64 {
    let m = p.parent.size() as f64;
    let mut gain = 0.0;
    for c in &p.clusters {
        let s = c.size() as f64;
        let mut sum = 0.0;
        for val in 0..p.schema.arity(var) {
            let pc = c.count(var, val) as f64 / s;
            let pm = p.parent.count(var, val) as f64 / m;
            sum += xlog2(pc) - xlog2(pm);
        }
        gain += s / m * sum;
    }
    gain
}

/// Gain-ratio-style objective: the summed per-variable information gains,
/// each normalized by the partition entropy `-sum_k P(C_k) log2 P(C_k)`.
pub fn norm_gain_ratio_score(p: &PartitionView) -> Result<f64> {
    p.validate()?;
    let m = p.parent.size() as f64;
    let mut denom = 0.0;
    for c in &p.clusters {
        denom -= xlog2(c.size() as f64 / m);
    }
    if denom <= 0.0 {
        return Err(Error::UndefinedScore(
            "partition entropy is zero (single-cluster partition)".into(),
        ));
    }
    let mut score = 0.0;
    for var in 0..p.schema.len() {
        score += info_gain_for_var(p, var) / denom;
    }
    Ok(score)
}

/// Normalized-information-gain objective: per-variable information gain
/// divided by the joint entropy
/// `-sum_k sum_j P(v_ij & C_k) log2 P(v_ij & C_k)` of that variable.
pub fn norm_de_mantaras_score(p: &PartitionView) -> Result<f64> {
    p.validate()?;
    let m = p.parent.size() as f64;
    let mut score = 0.0;
    for var in 0..p.schema.len() {
        let mut denom = 0.0;
        for c in &p.clusters {
            for val in 0..p.schema.arity(var) {
                denom -= xlog2(c.count(var, val) as f64 / m);
            }
        }
        if denom <= 0.0 {
            return Err(Error::UndefinedScore(format!(
                "joint entropy of variable {var} is zero"
            )));
        }
        score += info_gain_for_var(p, var) / denom;
    }
    Ok(score)
}

/// Score a partition under the selected objective.
pub fn score_partition(p: &PartitionView, objective: ObjectiveId) -> Result<f64> {
    match objective {
        ObjectiveId::Pu => partition_utility(p),
        ObjectiveId::PuInfo => partition_info_utility(p),
        ObjectiveId::NormGainRatio => norm_gain_ratio_score(p),
        ObjectiveId::NormDeMantaras => norm_de_mantaras_score(p),
    }
}

/// Category utility of a tree node against an ancestor's marginals.
pub fn node_category_utility(tree: &Tree, cluster: NodeId, parent: NodeId) -> Result<f64> {
    category_utility(
        &ClusterView::of_node(tree.node(cluster)),
        &ClusterView::of_node(tree.node(parent)),
        tree.schema(),
    )
}

/// Score of the first-level partition (the root's children). A childless
/// root carries no partition and scores 0.
pub fn level1_score(tree: &Tree, objective: ObjectiveId) -> Result<f64> {
    let root = tree
        .root()
        .ok_or_else(|| Error::EmptyInput("tree is empty".into()))?;
    if tree.node(root).is_leaf() {
        return Ok(0.0);
    }
    score_partition(&PartitionView::of_children(tree, root)?, objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;

    fn schema1() -> Dataset {
        // one binary variable over a,a,b,b
        Dataset::from_rows("f1", None, &[vec!["a"], vec!["a"], vec!["b"], vec!["b"]]).unwrap()
    }

    fn table(schema: &Schema, rows: &[&[u32]]) -> (u32, CountTable) {
        let mut t = CountTable::zeros(schema);
        for r in rows {
            t.add_obs(r);
        }
        (rows.len() as u32, t)
    }

    #[test]
    fn cu_of_parent_is_zero() {
        let d = schema1();
        let (ps, pc) = table(&d.schema, &[&[0], &[0], &[1], &[1]]);
        let parent = ClusterView::from_parts(ps, &pc);
        assert_eq!(category_utility(&parent, &parent, &d.schema).unwrap(), 0.0);
    }

    #[test]
    fn cu_f1_values() {
        let d = schema1();
        let (ps, pc) = table(&d.schema, &[&[0], &[0], &[1], &[1]]);
        let parent = ClusterView::from_parts(ps, &pc);
        let (cs, cc) = table(&d.schema, &[&[0], &[0]]);
        let aa = ClusterView::from_parts(cs, &cc);
        assert_eq!(category_utility(&aa, &parent, &d.schema).unwrap(), 0.25);
        let (ss, sc) = table(&d.schema, &[&[0]]);
        let single = ClusterView::from_parts(ss, &sc);
        assert_eq!(category_utility(&single, &parent, &d.schema).unwrap(), 0.125);
    }

    #[test]
    fn pu_f1_partitions() {
        let d = schema1();
        let (ps, pc) = table(&d.schema, &[&[0], &[0], &[1], &[1]]);
        let (s1, c1) = table(&d.schema, &[&[0], &[0]]);
        let (s2, c2) = table(&d.schema, &[&[1], &[1]]);
        let p = PartitionView {
            schema: &d.schema,
            parent: ClusterView::from_parts(ps, &pc),
            clusters: vec![
                ClusterView::from_parts(s1, &c1),
                ClusterView::from_parts(s2, &c2),
            ],
        };
        assert_eq!(partition_utility(&p).unwrap(), 0.25);

        let (s3, c3) = table(&d.schema, &[&[0], &[0], &[1]]);
        let (s4, c4) = table(&d.schema, &[&[1]]);
        let q = PartitionView {
            schema: &d.schema,
            parent: ClusterView::from_parts(ps, &pc),
            clusters: vec![
                ClusterView::from_parts(s3, &c3),
                ClusterView::from_parts(s4, &c4),
            ],
        };
        assert!((partition_utility(&q).unwrap() - 1.0 / 12.0).abs() < 1e-12);

        let single = PartitionView {
            schema: &d.schema,
            parent: ClusterView::from_parts(ps, &pc),
            clusters: vec![ClusterView::from_parts(ps, &pc)],
        };
        assert_eq!(partition_utility(&single).unwrap(), 0.0);
    }

    #[test]
    fn info_cu_values() {
        let d = schema1();
        let (ps, pc) = table(&d.schema, &[&[0], &[0], &[1], &[1]]);
        let parent = ClusterView::from_parts(ps, &pc);
        let (s1, c1) = table(&d.schema, &[&[0], &[0]]);
        let aa = ClusterView::from_parts(s1, &c1);
        assert!((info_category_utility(&aa, &parent, &d.schema).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(
            info_category_utility(&parent, &parent, &d.schema).unwrap(),
            0.0
        );
        let (s2, c2) = table(&d.schema, &[&[1], &[1]]);
        let p = PartitionView {
            schema: &d.schema,
            parent,
            clusters: vec![aa, ClusterView::from_parts(s2, &c2)],
        };
        assert!((partition_info_utility(&p).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn norm_gain_ratio_values() {
        let d = schema1();
        let (ps, pc) = table(&d.schema, &[&[0], &[0], &[1], &[1]]);
        let (s1, c1) = table(&d.schema, &[&[0], &[0]]);
        let (s2, c2) = table(&d.schema, &[&[1], &[1]]);
        let p = PartitionView {
            schema: &d.schema,
            parent: ClusterView::from_parts(ps, &pc),
            clusters: vec![
                ClusterView::from_parts(s1, &c1),
                ClusterView::from_parts(s2, &c2),
            ],
        };
        assert!((norm_gain_ratio_score(&p).unwrap() - 1.0).abs() < 1e-12);

        // conditional = marginal in both halves: numerator vanishes
        let (hs, hc) = table(&d.schema, &[&[0], &[1]]);
        let q = PartitionView {
            schema: &d.schema,
            parent: ClusterView::from_parts(ps, &pc),
            clusters: vec![
                ClusterView::from_parts(hs, &hc),
                ClusterView::from_parts(hs, &hc),
            ],
        };
        assert!(norm_gain_ratio_score(&q).unwrap().abs() < 1e-12);

        let single = PartitionView {
            schema: &d.schema,
            parent: ClusterView::from_parts(ps, &pc),
            clusters: vec![ClusterView::from_parts(ps, &pc)],
        };
        assert!(matches!(
            norm_gain_ratio_score(&single),
            Err(Error::UndefinedScore(_))
        ));
    }

    #[test]
    fn norm_de_mantaras_values() {
        let d = schema1();
        let (ps, pc) = table(&d.schema, &[&[0], &[0], &[1], &[1]]);
        let (s1, c1) = table(&d.schema, &[&[0], &[0]]);
        let (s2, c2) = table(&d.schema, &[&[1], &[1]]);
        let p = PartitionView {
            schema: &d.schema,
            parent: ClusterView::from_parts(ps, &pc),
            clusters: vec![
                ClusterView::from_parts(s1, &c1),
                ClusterView::from_parts(s2, &c2),
            ],
        };
        assert!((norm_de_mantaras_score(&p).unwrap() - 1.0).abs() < 1e-12);

        let (hs, hc) = table(&d.schema, &[&[0], &[1]]);
        let q = PartitionView {
            schema: &d.schema,
            parent: ClusterView::from_parts(ps, &pc),
            clusters: vec![
                ClusterView::from_parts(hs, &hc),
                ClusterView::from_parts(hs, &hc),
            ],
        };
        assert!(norm_de_mantaras_score(&q).unwrap().abs() < 1e-12);

        // one observation total: all joints are 0 or 1
        let (os, oc) = table(&d.schema, &[&[0]]);
        let r = PartitionView {
            schema: &d.schema,
            parent: ClusterView::from_parts(os, &oc),
            clusters: vec![ClusterView::from_parts(os, &oc)],
        };
        assert!(matches!(
            norm_de_mantaras_score(&r),
            Err(Error::UndefinedScore(_))
        ));
    }

    #[test]
    fn expected_correct_and_pu_identity() {
        let d = schema1();
        let (ps, pc) = table(&d.schema, &[&[0], &[0], &[1], &[1]]);
        let parent = ClusterView::from_parts(ps, &pc);
        let (s1, c1) = table(&d.schema, &[&[0], &[0]]);
        let (s2, c2) = table(&d.schema, &[&[1], &[1]]);
        let p = PartitionView {
            schema: &d.schema,
            parent,
            clusters: vec![
                ClusterView::from_parts(s1, &c1),
                ClusterView::from_parts(s2, &c2),
            ],
        };
        assert_eq!(expected_correct(&p).unwrap(), 1.0);

        let root_alone = PartitionView {
            schema: &d.schema,
            parent,
            clusters: vec![parent],
        };
        assert_eq!(expected_correct(&root_alone).unwrap(), 0.5);

        // N * PU = EC(partition) - EC(parent alone)
        let n = p.clusters.len() as f64;
        let lhs = n * partition_utility(&p).unwrap();
        let rhs = expected_correct(&p).unwrap() - expected_correct(&root_alone).unwrap();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn pu_cliff_on_near_equal_halves() {
        // 100 observations, 50/50 over one binary variable. Splitting one
        // observation out of a half into a singleton drops PU sharply.
        let d = schema1();
        let rows_a: Vec<Vec<u32>> = (0..50).map(|_| vec![0u32]).collect();
        let rows_b: Vec<Vec<u32>> = (0..50).map(|_| vec![1u32]).collect();
        let all: Vec<&[u32]> = rows_a
            .iter()
            .chain(rows_b.iter())
            .map(|r| r.as_slice())
            .collect();
        let (ps, pc) = table(&d.schema, &all);
        let a_rows: Vec<&[u32]> = rows_a.iter().map(|r| r.as_slice()).collect();
        let b_rows: Vec<&[u32]> = rows_b.iter().map(|r| r.as_slice()).collect();
        let (sa, ca) = table(&d.schema, &a_rows);
        let (sb, cb) = table(&d.schema, &b_rows);
        let two = PartitionView {
            schema: &d.schema,
            parent: ClusterView::from_parts(ps, &pc),
            clusters: vec![
                ClusterView::from_parts(sa, &ca),
                ClusterView::from_parts(sb, &cb),
            ],
        };
        let b49_rows: Vec<&[u32]> = b_rows[..49].to_vec();
        let (sb49, cb49) = table(&d.schema, &b49_rows);
        let (s1, c1) = table(&d.schema, &[&[1]]);
        let three = PartitionView {
            schema: &d.schema,
            parent: ClusterView::from_parts(ps, &pc),
            clusters: vec![
                ClusterView::from_parts(sa, &ca),
                ClusterView::from_parts(sb49, &cb49),
                ClusterView::from_parts(s1, &c1),
            ],
        };
        let pu_two = partition_utility(&two).unwrap();
        let pu_three = partition_utility(&three).unwrap();
        assert!(pu_three < pu_two);
        assert_eq!(pu_two, 0.25);
    }

    #[test]
    fn masked_obs_delta_contributes_nothing() {
        let d = Dataset::from_rows("f2", None, &[vec!["a", "x"], vec!["b", "y"]]).unwrap();
        let (s, c) = table(&d.schema, &[&[0, 0]]);
        let values = vec![1u32, 1u32];
        let delta = Delta::Obs {
            values: &values,
            masked: Some(1),
        };
        let v = ClusterView::from_parts(s, &c);
        let v_plus = ClusterView {
            size: s + 1,
            counts: Some(&c),
            delta: Some(delta),
        };
        assert_eq!(v_plus.size(), 2);
        assert_eq!(v_plus.count(0, 1), 1); // unmasked var counted
        assert_eq!(v_plus.count(1, 1), 0); // masked var contributes nothing
        assert_eq!(v.count(1, 0), 1);
    }

    #[test]
    fn objective_id_parsing() {
        assert_eq!("pu".parse::<ObjectiveId>().unwrap(), ObjectiveId::Pu);
        assert_eq!(
            "norm-dm".parse::<ObjectiveId>().unwrap(),
            ObjectiveId::NormDeMantaras
        );
        assert!("bogus".parse::<ObjectiveId>().is_err());
    }
}
