//! Hierarchical sorting: incremental tree construction and re-placement of
//! detached clusters, plus extraction of dissimilarity and similarity
//! orderings from an existing tree.
//!
//! Both observation sorting and cluster sorting run the same descent: at each
//! level the payload is hypothetically added to each existing child and to a
//! fresh singleton cluster, every option is scored with the selected
//! objective, and the argmax wins. Choosing a child recurses into it; at a
//! singleton leaf the tree extends downward; one level above a bounded
//! tree's maximum depth the payload's observations drop in as leaf children.

use std::collections::HashMap;

use crate::dataset::{Dataset, Observation, Ordering};
use crate::error::{Error, Result};
use crate::objective::{score_partition, ClusterView, Delta, ObjectiveId, PartitionView};
use crate::tree::{NodeId, Tree};

/// One placement option at a level: merge into an existing cluster or open a
/// new singleton cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidate {
    Merge(NodeId),
    NewChild,
}

/// A candidate with its score; `None` marks an inadmissible option (the
/// objective is undefined on that partition).
#[derive(Debug, Clone)]
pub struct ScoredCandidate {
    pub candidate: Candidate,
    pub score: Option<f64>,
}

/// All options scored at one level of the descent, and the winner.
#[derive(Debug, Clone)]
pub struct LevelDecision {
    /// The node whose children form the scored partition.
    pub node: NodeId,
    pub scored: Vec<ScoredCandidate>,
    pub chosen: Candidate,
}

/// Where a placement ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    /// The payload became the root of an empty tree.
    NewRoot,
    /// Attached as a new child of `host`.
    NewChild { host: NodeId },
    /// A singleton leaf was extended downward into an internal node.
    ExtendLeaf { leaf: NodeId },
    /// The payload's observations were spliced in as leaf children of `host`
    /// (the bounded-depth form of a merge).
    FlattenInto { host: NodeId },
}

impl Action {
    /// The node that absorbed the payload, when one exists.
    pub fn host(&self) -> Option<NodeId> {
        match self {
            Action::NewRoot => None,
            Action::NewChild { host } => Some(*host),
            Action::ExtendLeaf { leaf } => Some(*leaf),
            Action::FlattenInto { host } => Some(*host),
        }
    }
}

/// Outcome of a sort: the structural action taken and the per-level scoring
/// trail that led to it.
#[derive(Debug, Clone)]
pub struct PlacementRecord {
    pub action: Action,
    pub decisions: Vec<LevelDecision>,
}

/// Tie preference used when re-placing a detached cluster: on equal scores,
/// the candidate leading back to the cluster's original position wins.
#[derive(Debug, Default)]
pub(crate) struct Preference {
    map: HashMap<NodeId, Candidate>,
}

impl Preference {
    /// Preference chain for a cluster detached from `parent` (alive) or
    /// replaced by `remnant` after a collapse.
    pub(crate) fn toward(tree: &Tree, parent: Option<NodeId>, remnant: Option<NodeId>) -> Self {
        let mut map = HashMap::new();
        let mut cur = match (parent, remnant) {
            (Some(p), _) => {
                map.insert(p, Candidate::NewChild);
                p
            }
            (None, Some(d)) => d,
            (None, None) => return Preference { map },
        };
        while let Some(g) = tree.node(cur).parent() {
            map.insert(g, Candidate::Merge(cur));
            cur = g;
        }
        Preference { map }
    }

    fn at(&self, node: NodeId) -> Option<Candidate> {
        self.map.get(&node).copied()
    }
}

/// Score every placement option for `delta` against the given sibling set.
/// The parent's marginals include the pending payload. Undefined scores are
/// reported as `None`.
pub(crate) fn score_flat_candidates(
    tree: &Tree,
    parent: NodeId,
    members: &[NodeId],
    delta: Delta<'_>,
    objective: ObjectiveId,
) -> Result<Vec<ScoredCandidate>> {
    let parent_view = ClusterView::of_node_plus(tree.node(parent), delta);
    let mut out = Vec::with_capacity(members.len() + 1);
    for (i, &target) in members.iter().enumerate() {
        let clusters: Vec<ClusterView> = members
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                if i == j {
                    ClusterView::of_node_plus(tree.node(c), delta)
                } else {
                    ClusterView::of_node(tree.node(c))
                }
            })
            .collect();
        let pv = PartitionView {
            schema: tree.schema(),
            parent: parent_view,
            clusters,
        };
        out.push(ScoredCandidate {
            candidate: Candidate::Merge(target),
            score: admissible(score_partition(&pv, objective))?,
        });
    }
    let mut clusters: Vec<ClusterView> = members
        .iter()
        .map(|&c| ClusterView::of_node(tree.node(c)))
        .collect();
    clusters.push(ClusterView::of_delta(delta));
    let pv = PartitionView {
        schema: tree.schema(),
        parent: parent_view,
        clusters,
    };
    out.push(ScoredCandidate {
        candidate: Candidate::NewChild,
        score: admissible(score_partition(&pv, objective))?,
    });
    Ok(out)
}

fn admissible(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(s) => Ok(Some(s)),
        Err(Error::UndefinedScore(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Argmax over admissible candidates. Ties go to the preferred candidate
/// when it is among the winners, else to the first winner in scoring order
/// (existing children in stored order, then the new-singleton option).
pub(crate) fn choose(scored: &[ScoredCandidate], pref: Option<Candidate>) -> Result<Candidate> {
    let best = scored
        .iter()
        .filter_map(|s| s.score)
        .fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return Err(Error::UndefinedScore(
            "no admissible placement candidate".into(),
        ));
    }
    if let Some(p) = pref {
        if scored
            .iter()
            .any(|s| s.candidate == p && s.score == Some(best))
        {
            return Ok(p);
        }
    }
    Ok(scored
        .iter()
        .find(|s| s.score == Some(best))
        .expect("a best candidate exists")
        .candidate)
}

/// Decide where a payload goes without mutating the tree. The root must be
/// internal (callers demote a leaf root first).
pub(crate) fn decide(
    tree: &Tree,
    delta: Delta<'_>,
    objective: ObjectiveId,
    pref: Option<&Preference>,
) -> Result<PlacementRecord> {
    let root = tree
        .root()
        .ok_or_else(|| Error::Structure("cannot place into an empty tree".into()))?;
    let bound = tree.height_bound();
    let mut cur = root;
    let mut depth = 0usize;
    let mut decisions = Vec::new();
    loop {
        if bound == Some(depth + 1) {
            return Ok(PlacementRecord {
                action: Action::FlattenInto { host: cur },
                decisions,
            });
        }
        if tree.node(cur).is_leaf() {
            return Ok(PlacementRecord {
                action: Action::ExtendLeaf { leaf: cur },
                decisions,
            });
        }
        let scored =
            score_flat_candidates(tree, cur, tree.node(cur).children(), delta, objective)?;
        let chosen = choose(&scored, pref.and_then(|p| p.at(cur)))?;
        decisions.push(LevelDecision {
            node: cur,
            scored,
            chosen,
        });
        match chosen {
            Candidate::NewChild => {
                return Ok(PlacementRecord {
                    action: Action::NewChild { host: cur },
                    decisions,
                });
            }
            Candidate::Merge(c) => {
                cur = c;
                depth += 1;
            }
        }
    }
}

/// Carry out a decided placement for a floating node.
pub(crate) fn apply_action(tree: &mut Tree, payload: NodeId, action: Action) -> Result<()> {
    match action {
        Action::NewRoot => tree.set_root(payload),
        Action::NewChild { host } => {
            trim_for(tree, payload, tree.depth(host) + 1);
            tree.attach_subtree(host, payload)
        }
        Action::ExtendLeaf { leaf } => {
            trim_for(tree, payload, tree.depth(leaf) + 1);
            tree.extend_leaf_with(leaf, payload)
        }
        Action::FlattenInto { host } => tree.flatten_merge(host, payload),
    }
}

fn trim_for(tree: &mut Tree, payload: NodeId, attach_depth: usize) {
    if let Some(bound) = tree.height_bound() {
        debug_assert!(attach_depth < bound || tree.node(payload).is_leaf());
        let allowed = bound.saturating_sub(attach_depth).max(1);
        if tree.height(payload) > allowed {
            tree.trim_to_height(payload, allowed);
        }
    }
}

/// Incorporate one observation by hierarchical sorting.
pub fn sort_observation(
    tree: &mut Tree,
    obs: &Observation,
    objective: ObjectiveId,
) -> Result<PlacementRecord> {
    check_schema(tree, obs)?;
    if tree.is_empty() {
        let n = tree.new_singleton(obs);
        tree.set_root(n)?;
        return Ok(PlacementRecord {
            action: Action::NewRoot,
            decisions: Vec::new(),
        });
    }
    let root = tree.root().expect("non-empty");
    if tree.node(root).is_leaf() {
        tree.demote_leaf_obs(root);
    }
    let record = decide(
        tree,
        Delta::Obs {
            values: &obs.values,
            masked: None,
        },
        objective,
        None,
    )?;
    let payload = tree.new_singleton(obs);
    apply_action(tree, payload, record.action)?;
    Ok(record)
}

/// Re-place a detached cluster (with its subtree) relative to the whole
/// hierarchy. Counts are merged like observation sorting, but incremented by
/// the cluster's whole count table.
pub fn sort_cluster(tree: &mut Tree, sub: NodeId, objective: ObjectiveId) -> Result<PlacementRecord> {
    sort_cluster_with(tree, sub, objective, None)
}

pub(crate) fn sort_cluster_with(
    tree: &mut Tree,
    sub: NodeId,
    objective: ObjectiveId,
    pref: Option<&Preference>,
) -> Result<PlacementRecord> {
    if Some(sub) == tree.root() || tree.node(sub).parent().is_some() {
        return Err(Error::Structure(format!("{sub} is not a detached subtree")));
    }
    if tree.is_empty() {
        tree.set_root(sub)?;
        return Ok(PlacementRecord {
            action: Action::NewRoot,
            decisions: Vec::new(),
        });
    }
    let root = tree.root().expect("non-empty");
    if tree.node(root).is_leaf() {
        tree.demote_leaf_obs(root);
    }
    let record = {
        let n = tree.node(sub);
        let delta = Delta::Table {
            size: n.size(),
            counts: n.counts(),
        };
        decide(tree, delta, objective, pref)?
    };
    apply_action(tree, sub, record.action)?;
    Ok(record)
}

fn check_schema(tree: &Tree, obs: &Observation) -> Result<()> {
    let schema = tree.schema();
    if obs.values.len() != schema.len() {
        return Err(Error::Argument(format!(
            "observation has {} variables, schema has {}",
            obs.values.len(),
            schema.len()
        )));
    }
    for (var, &val) in obs.values.iter().enumerate() {
        if val as usize >= schema.arity(var) {
            return Err(Error::Argument(format!(
                "value ordinal {val} out of range for variable {var}"
            )));
        }
    }
    Ok(())
}

/// Sort a full dataset in the given order.
pub fn build(
    d: &Dataset,
    ord: &Ordering,
    height_bound: Option<usize>,
    objective: ObjectiveId,
) -> Result<Tree> {
    let ids: Vec<u32> = (0..d.observations.len() as u32).collect();
    if !ord.is_permutation_of(&ids) {
        return Err(Error::Argument(
            "ordering is not a permutation of the dataset's ids".into(),
        ));
    }
    build_over(d, &ord.permutation, height_bound, objective)
}

/// Sort a subset of a dataset's observations (no permutation check).
pub(crate) fn build_over(
    d: &Dataset,
    ids: &[u32],
    height_bound: Option<usize>,
    objective: ObjectiveId,
) -> Result<Tree> {
    if let Some(b) = height_bound {
        if b < 2 {
            return Err(Error::Argument(format!("height bound {b} must be >= 2")));
        }
    }
    let mut tree = Tree::new(d.schema.clone(), height_bound);
    for &id in ids {
        sort_observation(&mut tree, &d.observations[id as usize], objective)?;
    }
    Ok(tree)
}

#[derive(Clone, Copy)]
enum OrderKind {
    Dissimilarity,
    Similarity,
}

/// Extract the ordering that interleaves observations of sibling clusters,
/// largest cluster first. Consecutive observations tend to come from
/// different clusters.
pub fn dissimilarity_ordering(tree: &Tree) -> Result<Ordering> {
    ordering_of(tree, OrderKind::Dissimilarity)
}

/// Extract the ordering that concatenates sibling clusters from smallest to
/// largest. Consecutive observations tend to come from the same cluster.
pub fn similarity_ordering(tree: &Tree) -> Result<Ordering> {
    ordering_of(tree, OrderKind::Similarity)
}

fn ordering_of(tree: &Tree, kind: OrderKind) -> Result<Ordering> {
    let root = tree
        .root()
        .ok_or_else(|| Error::EmptyInput("cannot order an empty tree".into()))?;
    Ok(Ordering::new(order_rec(tree, root, kind)))
}

fn order_rec(tree: &Tree, id: NodeId, kind: OrderKind) -> Vec<u32> {
    let node = tree.node(id);
    if node.is_leaf() {
        return tree.observations_under(id);
    }
    let mut kids: Vec<NodeId> = node.children().to_vec();
    // stable sorts keep stored child order among equal sizes
    match kind {
        OrderKind::Dissimilarity => {
            kids.sort_by_key(|&c| std::cmp::Reverse(tree.node(c).size()));
        }
        OrderKind::Similarity => {
            kids.sort_by_key(|&c| tree.node(c).size());
        }
    }
    let lists: Vec<Vec<u32>> = kids.iter().map(|&c| order_rec(tree, c, kind)).collect();
    match kind {
        OrderKind::Dissimilarity => {
            let longest = lists.iter().map(Vec::len).max().unwrap_or(0);
            let mut out = Vec::new();
            for i in 0..longest {
                for l in &lists {
                    if i < l.len() {
                        out.push(l[i]);
                    }
                }
            }
            out
        }
        OrderKind::Similarity => lists.into_iter().flatten().collect(),
    }
}
