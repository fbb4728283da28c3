//! Holdout-based identification of per-variable prediction frontiers.
//!
//! Validation observations are classified read-only with one variable masked
//! at a time; each node on the classification path earns a correct-prediction
//! count when its most frequent value for the masked variable matches the
//! observation. A bottom-up sweep then picks, per variable, the cut of the
//! tree that maximizes correct counts, and nodes below every variable's
//! frontier are pruned.

use std::collections::{HashMap, HashSet};

use crate::construct::{score_flat_candidates, Candidate};
use crate::dataset::Observation;
use crate::error::{Error, Result};
use crate::objective::{Delta, ObjectiveId};
use crate::tree::{NodeId, Tree};

/// Correct-prediction counts per variable and node, accumulated from a
/// validation set.
#[derive(Debug, Clone)]
pub struct FrontierTable {
    pub correct: Vec<HashMap<NodeId, u32>>,
}

impl FrontierTable {
    pub fn new(n_vars: usize) -> Self {
        FrontierTable {
            correct: vec![HashMap::new(); n_vars],
        }
    }

    pub fn get(&self, var: usize, node: NodeId) -> u32 {
        self.correct[var].get(&node).copied().unwrap_or(0)
    }

    pub fn add(&mut self, var: usize, node: NodeId, count: u32) {
        *self.correct[var].entry(node).or_insert(0) += count;
    }
}

/// Per-variable cuts of the tree: predictions for a variable terminate at
/// its frontier.
#[derive(Debug, Clone)]
pub struct Frontier {
    pub per_var: Vec<Vec<NodeId>>,
}

impl Frontier {
    pub fn contains(&self, var: usize, node: NodeId) -> bool {
        self.per_var[var].contains(&node)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.per_var.iter().map(Vec::len).collect()
    }
}

/// Per-variable frontier sizes and their mean.
#[derive(Debug, Clone)]
pub struct FrontierStats {
    pub sizes: Vec<usize>,
    pub mean: f64,
}

/// One row of the frontier report: a frontier node with its position and
/// validation performance.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FrontierEntry {
    pub node: u32,
    pub depth: usize,
    pub size: u32,
    pub correct: u32,
}

/// Classify an observation down the tree without mutating it, following the
/// same scoring hierarchical sorting uses. The masked variable contributes
/// nothing to the hypothetical increments. The new-singleton option is scored
/// but a read-only walk cannot create nodes, so the observation always routes
/// to the best existing child. Returns the full root-to-leaf path.
pub fn classify_readonly(
    tree: &Tree,
    obs: &Observation,
    masked: Option<usize>,
    objective: ObjectiveId,
) -> Result<Vec<NodeId>> {
    let root = tree
        .root()
        .ok_or_else(|| Error::EmptyInput("cannot classify into an empty tree".into()))?;
    let mut path = vec![root];
    let mut cur = root;
    while !tree.node(cur).is_leaf() {
        let kids = tree.node(cur).children().to_vec();
        let delta = Delta::Obs {
            values: &obs.values,
            masked,
        };
        let scored = score_flat_candidates(tree, cur, &kids, delta, objective)?;
        let mut best: Option<(f64, NodeId)> = None;
        for s in &scored {
            if let (Candidate::Merge(c), Some(score)) = (s.candidate, s.score) {
                if best.is_none_or(|(b, _)| score > b) {
                    best = Some((score, c));
                }
            }
        }
        let next = best.map(|(_, c)| c).unwrap_or(kids[0]);
        path.push(next);
        cur = next;
    }
    Ok(path)
}

/// Classify every validation observation with each variable masked in turn,
/// crediting every node on the path whose most frequent value for the masked
/// variable matches the observation's true value.
pub fn accumulate(
    tree: &Tree,
    validation: &[Observation],
    objective: ObjectiveId,
) -> Result<FrontierTable> {
    if validation.is_empty() {
        return Err(Error::EmptyInput("validation set is empty".into()));
    }
    let n_vars = tree.schema().len();
    let mut table = FrontierTable::new(n_vars);
    for var in 0..n_vars {
        for obs in validation {
            let path = classify_readonly(tree, obs, Some(var), objective)?;
            for &node in &path {
                if tree.most_frequent_value(node, var) == obs.values[var] {
                    table.add(var, node, 1);
                }
            }
        }
    }
    Ok(table)
}

/// Per variable, the cut that maximizes correct counts: bottom-up, a node
/// joins the frontier when its own count is at least the sum of its
/// children's best achievable counts (the shallower node wins equalities).
pub fn select_frontiers(table: &FrontierTable, tree: &Tree) -> Result<Frontier> {
    let root = tree
        .root()
        .ok_or_else(|| Error::EmptyInput("tree is empty".into()))?;
    let mut per_var = Vec::with_capacity(table.correct.len());
    for var in 0..table.correct.len() {
        let mut best = HashMap::new();
        best_counts(tree, table, var, root, &mut best);
        let mut cut = Vec::new();
        collect_frontier(tree, table, var, root, &best, &mut cut);
        per_var.push(cut);
    }
    Ok(Frontier { per_var })
}

fn best_counts(
    tree: &Tree,
    table: &FrontierTable,
    var: usize,
    id: NodeId,
    best: &mut HashMap<NodeId, u64>,
) -> u64 {
    let own = table.get(var, id) as u64;
    let node = tree.node(id);
    let b = if node.is_leaf() {
        own
    } else {
        let kids: u64 = node
            .children()
            .iter()
            .map(|&c| best_counts(tree, table, var, c, best))
            .sum();
        own.max(kids)
    };
    best.insert(id, b);
    b
}

fn collect_frontier(
    tree: &Tree,
    table: &FrontierTable,
    var: usize,
    id: NodeId,
    best: &HashMap<NodeId, u64>,
    out: &mut Vec<NodeId>,
) {
    let node = tree.node(id);
    if node.is_leaf() {
        out.push(id);
        return;
    }
    let kids_best: u64 = node.children().iter().map(|&c| best[&c]).sum();
    if table.get(var, id) as u64 >= kids_best {
        out.push(id);
        return;
    }
    for &c in node.children() {
        collect_frontier(tree, table, var, c, best, out);
    }
}

/// Prune every node that lies below the frontiers of all variables. A node
/// survives when it sits on or above at least one variable's frontier; the
/// leaves of the pruned tree are the surviving nodes with no surviving
/// descendant.
pub fn prune(tree: &Tree, frontier: &Frontier) -> Result<Tree> {
    let root = tree
        .root()
        .ok_or_else(|| Error::EmptyInput("tree is empty".into()))?;
    // nodes strictly above some frontier node keep their children
    let mut above = HashSet::new();
    for cut in &frontier.per_var {
        for &f in cut {
            let mut cur = tree.node(f).parent();
            while let Some(p) = cur {
                if !above.insert(p) {
                    break;
                }
                cur = tree.node(p).parent();
            }
        }
    }
    let mut pruned = tree.clone();
    let mut to_cut = Vec::new();
    collect_cut_targets(tree, root, &above, &mut to_cut);
    pruned.cut_below(&to_cut);
    Ok(pruned)
}

fn collect_cut_targets(
    tree: &Tree,
    id: NodeId,
    above: &HashSet<NodeId>,
    out: &mut Vec<NodeId>,
) {
    if above.contains(&id) {
        for &c in tree.node(id).children() {
            collect_cut_targets(tree, c, above, out);
        }
    } else if !tree.node(id).is_leaf() {
        out.push(id);
    }
}

/// Frontier sizes per variable and their arithmetic mean.
pub fn frontier_stats(frontier: &Frontier) -> FrontierStats {
    let sizes = frontier.sizes();
    let mean = sizes.iter().sum::<usize>() as f64 / sizes.len().max(1) as f64;
    FrontierStats { sizes, mean }
}

/// Report rows for one variable's frontier, sorted by node id.
pub fn frontier_report(
    tree: &Tree,
    table: &FrontierTable,
    frontier: &Frontier,
    var: usize,
) -> Vec<FrontierEntry> {
    let mut entries: Vec<FrontierEntry> = frontier.per_var[var]
        .iter()
        .map(|&id| FrontierEntry {
            node: id.0,
            depth: tree.depth(id),
            size: tree.node(id).size(),
            correct: table.get(var, id),
        })
        .collect();
    entries.sort_by_key(|e| e.node);
    entries
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{build, sort_observation};
    use crate::dataset::{Dataset, Ordering};
    use crate::objective::{partition_utility, ClusterView, PartitionView};
    use crate::tree::Tree;

    fn f2() -> Dataset {
        Dataset::from_rows(
            "f2",
            None,
            &[
                vec!["a", "x"],
                vec!["a", "x"],
                vec!["b", "y"],
                vec!["b", "y"],
            ],
        )
        .unwrap()
    }

    fn f2_tree(d: &Dataset) -> Tree {
        build(
            d,
            &Ordering::new(vec![0, 1, 2, 3]),
            Some(2),
            ObjectiveId::Pu,
        )
        .unwrap()
    }

    #[test]
    fn classify_root_only_tree() {
        let d = Dataset::from_rows("one", None, &[vec!["a"]]).unwrap();
        let mut t = Tree::new(d.schema.clone(), Some(2));
        sort_observation(&mut t, &d.observations[0], ObjectiveId::Pu).unwrap();
        let path = classify_readonly(&t, &d.observations[0], None, ObjectiveId::Pu).unwrap();
        assert_eq!(path, vec![t.root().unwrap()]);
    }

    #[test]
    fn masked_classification_follows_unmasked_variables() {
        let d = f2();
        let t = f2_tree(&d);
        let root = t.root().unwrap();
        // new observation (a, ?) with the second variable masked
        let probe = Observation {
            id: 99,
            values: vec![0, 1],
        };
        let path = classify_readonly(&t, &probe, Some(1), ObjectiveId::Pu).unwrap();
        let a_cluster = t.node(root).children()[0];
        assert_eq!(path[1], a_cluster);
        assert_eq!(t.observations_under(a_cluster), vec![0, 1]);

        // oracle: score both hosts directly with the masked delta
        let delta = Delta::Obs {
            values: &probe.values,
            masked: Some(1),
        };
        let kids = t.node(root).children().to_vec();
        let parent = ClusterView::of_node_plus(t.node(root), delta);
        let score_host = |host: usize| {
            let clusters: Vec<ClusterView> = kids
                .iter()
                .enumerate()
                .map(|(j, &c)| {
                    if j == host {
                        ClusterView::of_node_plus(t.node(c), delta)
                    } else {
                        ClusterView::of_node(t.node(c))
                    }
                })
                .collect();
            partition_utility(&PartitionView {
                schema: t.schema(),
                parent,
                clusters,
            })
            .unwrap()
        };
        assert!(score_host(0) > score_host(1));
    }

    #[test]
    fn training_row_reaches_its_own_leaf() {
        // duplicate rows are indistinguishable, so "its own leaf" means a
        // leaf holding an identical observation
        let d = f2();
        let t = f2_tree(&d);
        for obs in &d.observations {
            let path = classify_readonly(&t, obs, None, ObjectiveId::Pu).unwrap();
            let leaf = *path.last().unwrap();
            let held = t.node(leaf).leaf_obs().unwrap();
            assert_eq!(d.observations[held as usize].values, obs.values);
        }
    }

    #[test]
    fn accumulate_counts_at_root() {
        let d = f2();
        let t = f2_tree(&d);
        let table = accumulate(&t, &d.observations, ObjectiveId::Pu).unwrap();
        // root's most frequent value of var 1 ties between x and y; the tie
        // breaks to the lower ordinal (x), so only the x rows are correct
        let root = t.root().unwrap();
        assert_eq!(t.most_frequent_value(root, 1), 0);
        assert_eq!(table.get(1, root), 2);
        // every node on an x row's path predicts x for var 1
        let a_cluster = t.node(root).children()[0];
        assert_eq!(table.get(1, a_cluster), 2);
    }

    #[test]
    fn path_counting_increments_every_node() {
        let d = f2();
        let t = f2_tree(&d);
        let table = accumulate(&t, &d.observations[..1], ObjectiveId::Pu).unwrap();
        // one observation, var 0 masked: three nodes on its path, all of
        // which predict its value correctly
        let total: u32 = table.correct[0].values().sum();
        assert_eq!(total, 3);
    }

    /// Hand-built three-variable tree whose frontiers land at mixed depths:
    /// root -> [A, B, C]; A -> [A1, A2]; B -> [B1, B2]; C -> [C1, C2];
    /// C2 -> [C21, C22]. Seven singleton observations.
    struct Fixture {
        tree: Tree,
        root: NodeId,
        a: NodeId,
        b: NodeId,
        c: NodeId,
        a_kids: Vec<NodeId>,
        b_kids: Vec<NodeId>,
        c1: NodeId,
        c2: NodeId,
        c2_kids: Vec<NodeId>,
    }

    fn frontier_fixture_tree() -> Fixture {
        // fourteen observations, two per bottom cluster
        let rows: Vec<Vec<String>> = (0..14)
            .map(|i| {
                vec![
                    "s".to_string(),
                    format!("g{}", i / 4),
                    format!("v{}", i / 2),
                ]
            })
            .collect();
        let d = Dataset::from_rows("fixture", None, &rows).unwrap();
        let mut t = Tree::new(d.schema.clone(), None);

        // turn a singleton leaf into a flat two-observation cluster
        fn grow_pair(t: &mut Tree, d: &Dataset, leaf: NodeId, second: usize) {
            t.demote_leaf_obs(leaf);
            let l = t.new_singleton(&d.observations[second]);
            t.attach_subtree(leaf, l).unwrap();
        }
        // floating flat cluster over observations first, first+1
        fn pair(t: &mut Tree, d: &Dataset, first: usize) -> NodeId {
            let n = t.new_singleton(&d.observations[first]);
            grow_pair(t, d, n, first + 1);
            n
        }
        // floating container holding one pair as its first child
        fn container(t: &mut Tree, d: &Dataset, first: usize) -> (NodeId, NodeId) {
            let outer = t.new_singleton(&d.observations[first]);
            let inner = t.demote_leaf_obs(outer);
            grow_pair(t, d, inner, first + 1);
            (outer, inner)
        }

        let root = t.new_singleton(&d.observations[0]);
        t.set_root(root).unwrap();
        let a = t.demote_leaf_obs(root);
        let a1 = t.demote_leaf_obs(a);
        grow_pair(&mut t, &d, a1, 1);
        let a2 = pair(&mut t, &d, 2);
        t.attach_subtree(a, a2).unwrap();

        let (b, _b1) = container(&mut t, &d, 4);
        let b2 = pair(&mut t, &d, 6);
        t.attach_subtree(b, b2).unwrap();
        t.attach_subtree(root, b).unwrap();

        let (c, c1) = container(&mut t, &d, 8);
        let (c2, _c21) = container(&mut t, &d, 10);
        let c22 = pair(&mut t, &d, 12);
        t.attach_subtree(c2, c22).unwrap();
        t.attach_subtree(c, c2).unwrap();
        t.attach_subtree(root, c).unwrap();
        t.check_invariants(true).unwrap();

        let a_kids = t.node(a).children().to_vec();
        let b_kids = t.node(b).children().to_vec();
        let c2_kids = t.node(c2).children().to_vec();
        Fixture {
            root,
            a,
            b,
            c,
            a_kids,
            b_kids,
            c1,
            c2,
            c2_kids,
            tree: t,
        }
    }

    /// Correct counts that put the three frontiers at sizes 1, 4, and 6.
    fn frontier_fixture_table(f: &Fixture) -> FrontierTable {
        let mut t = FrontierTable::new(3);
        // var 0: best predicted at the root
        t.add(0, f.root, 10);
        // var 1: frontier {A, B1, B2, C}
        t.add(1, f.root, 10);
        t.add(1, f.a, 5);
        t.add(1, f.b, 5);
        t.add(1, f.b_kids[0], 3);
        t.add(1, f.b_kids[1], 3);
        t.add(1, f.c, 4);
        // var 2: frontier {A1, A2, B, C1, C21, C22}
        t.add(2, f.root, 5);
        t.add(2, f.a, 3);
        t.add(2, f.a_kids[0], 2);
        t.add(2, f.a_kids[1], 2);
        t.add(2, f.b, 6);
        t.add(2, f.b_kids[0], 3);
        t.add(2, f.b_kids[1], 3);
        t.add(2, f.c, 4);
        t.add(2, f.c1, 2);
        t.add(2, f.c2, 3);
        t.add(2, f.c2_kids[0], 2);
        t.add(2, f.c2_kids[1], 2);
        t
    }

    #[test]
    fn fixture_frontiers_have_expected_sizes() {
        let f = frontier_fixture_tree();
        let table = frontier_fixture_table(&f);
        let frontier = select_frontiers(&table, &f.tree).unwrap();
        assert_eq!(frontier.sizes(), vec![1, 4, 6]);
        assert_eq!(frontier.per_var[0], vec![f.root]);
        // equality at B prefers the ancestor
        assert!(frontier.contains(2, f.b));

        // each frontier is an exact cut: sizes sum to the root's coverage
        let root_size = f.tree.node(f.root).size();
        for cut in &frontier.per_var {
            let total: u32 = cut.iter().map(|&n| f.tree.node(n).size()).sum();
            assert_eq!(total, root_size);
            // antichain: no frontier node is an ancestor of another
            for &x in cut {
                for &y in cut {
                    if x != y {
                        let mut cur = f.tree.node(y).parent();
                        while let Some(p) = cur {
                            assert_ne!(p, x, "frontier node above another");
                            cur = f.tree.node(p).parent();
                        }
                    }
                }
            }
        }

        let stats = frontier_stats(&frontier);
        assert!((stats.mean - 11.0 / 3.0).abs() < 1e-9);

        let pruned = prune(&f.tree, &frontier).unwrap();
        assert_eq!(pruned.leaves().len(), 7);
        pruned.check_invariants(false).unwrap();
    }

    #[test]
    fn frontier_rules_on_small_counts() {
        // root correct 5, children best 3+3 -> children win (6 > 5)
        let d = f2();
        let t = f2_tree(&d);
        let root = t.root().unwrap();
        let kids = t.node(root).children().to_vec();
        let mut table = FrontierTable::new(1);
        table.add(0, root, 5);
        table.add(0, kids[0], 3);
        table.add(0, kids[1], 3);
        let frontier = select_frontiers(&table, &t).unwrap();
        assert_eq!(frontier.per_var[0], kids);

        // root correct 6 vs the same children: equality keeps the root
        let mut table = FrontierTable::new(1);
        table.add(0, root, 6);
        table.add(0, kids[0], 3);
        table.add(0, kids[1], 3);
        let frontier = select_frontiers(&table, &t).unwrap();
        assert_eq!(frontier.per_var[0], vec![root]);
    }

    #[test]
    fn prune_to_root_and_prune_nothing() {
        let d = f2();
        let t = f2_tree(&d);
        let root = t.root().unwrap();
        let all_root = Frontier {
            per_var: vec![vec![root], vec![root]],
        };
        let pruned = prune(&t, &all_root).unwrap();
        assert_eq!(pruned.leaves(), vec![root]);
        assert_eq!(pruned.node_count(), 1);

        // frontiers at the leaves: nothing is below them
        let leaf_frontier = Frontier {
            per_var: vec![t.leaves(), t.leaves()],
        };
        let unpruned = prune(&t, &leaf_frontier).unwrap();
        assert_eq!(unpruned.dump_json(), t.dump_json());
    }

    #[test]
    fn reselect_on_pruned_tree_is_stable() {
        let f = frontier_fixture_tree();
        let table = frontier_fixture_table(&f);
        let frontier = select_frontiers(&table, &f.tree).unwrap();
        let pruned = prune(&f.tree, &frontier).unwrap();
        // the same counts restricted to surviving nodes select the same cuts
        let again = select_frontiers(&table, &pruned).unwrap();
        for var in 0..3 {
            let mut a = frontier.per_var[var].clone();
            let mut b = again.per_var[var].clone();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn reaccumulate_on_pruned_tree_selects_same_frontiers() {
        // classification paths in the pruned tree are prefixes of the
        // original ones, so the counts at surviving nodes and the selected
        // frontiers come out identical
        let mut rows = Vec::new();
        for i in 0..18 {
            let a = if i % 2 == 0 { "a" } else { "b" };
            let b = if i % 2 == 0 { "x" } else { "y" };
            let c = if i % 5 == 0 { "p" } else { "q" };
            rows.push(vec![a, b, c]);
        }
        let d = Dataset::from_rows("mixed", None, &rows).unwrap();
        let train = Ordering::new((0..12).collect());
        let t = crate::optimize::layered_build(&d, &train, ObjectiveId::Pu).unwrap();
        let validation: Vec<Observation> = d.observations[12..].to_vec();

        let table = accumulate(&t, &validation, ObjectiveId::Pu).unwrap();
        let frontier = select_frontiers(&table, &t).unwrap();
        let pruned = prune(&t, &frontier).unwrap();

        let table2 = accumulate(&pruned, &validation, ObjectiveId::Pu).unwrap();
        let frontier2 = select_frontiers(&table2, &pruned).unwrap();
        for var in 0..d.n_variables() {
            let mut a = frontier.per_var[var].clone();
            let mut b = frontier2.per_var[var].clone();
            a.sort();
            b.sort();
            assert_eq!(a, b, "frontier moved after pruning (var {var})");
        }
    }
}
