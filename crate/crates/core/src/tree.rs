//! Probabilistic categorization trees.
//!
//! Every node is a cluster summarized by an observation count and a
//! per-variable table of value counts; conditional probabilities are derived
//! on demand. Sibling clusters partition the observations covered by their
//! parent, and single observations sit at leaves. Counts are kept consistent
//! under structural edits: detaching a subtree decrements every ancestor,
//! attaching increments them back.
//!
//! Nodes live in an arena indexed by [`NodeId`]; ids are never reused, so a
//! dump of the same construction sequence is byte-identical across runs.

use std::sync::Arc;

use serde::Serialize;

use crate::dataset::{Observation, Schema};
use crate::error::{Error, Result};

/// Stable handle of a node in a [`Tree`] arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Per-variable value counts of the observations covered by a cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct CountTable(Vec<Vec<u32>>);

impl CountTable {
    pub fn zeros(schema: &Schema) -> Self {
        CountTable((0..schema.len()).map(|i| vec![0; schema.arity(i)]).collect())
    }

    pub fn one_hot(schema: &Schema, values: &[u32]) -> Self {
        let mut t = Self::zeros(schema);
        t.add_obs(values);
        t
    }

    pub fn get(&self, var: usize, val: usize) -> u32 {
        self.0[var][val]
    }

    pub fn row(&self, var: usize) -> &[u32] {
        &self.0[var]
    }

    pub fn n_vars(&self) -> usize {
        self.0.len()
    }

    pub fn add_obs(&mut self, values: &[u32]) {
        for (var, &val) in values.iter().enumerate() {
            self.0[var][val as usize] += 1;
        }
    }

    pub fn sub_obs(&mut self, values: &[u32]) {
        for (var, &val) in values.iter().enumerate() {
            self.0[var][val as usize] -= 1;
        }
    }

    pub fn add_table(&mut self, other: &CountTable) {
        for (row, orow) in self.0.iter_mut().zip(&other.0) {
            for (c, oc) in row.iter_mut().zip(orow) {
                *c += *oc;
            }
        }
    }

    pub fn sub_table(&mut self, other: &CountTable) {
        for (row, orow) in self.0.iter_mut().zip(&other.0) {
            for (c, oc) in row.iter_mut().zip(orow) {
                *c -= *oc;
            }
        }
    }
}

/// One cluster node: size, value counts, children, and (for singleton
/// leaves) the observation it stores.
#[derive(Debug, Clone)]
pub struct Node {
    id: NodeId,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    size: u32,
    counts: CountTable,
    leaf_obs: Option<u32>,
    last_modified: u64,
}

impl Node {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn children(&self) -> &[NodeId] {
        &self.children
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn counts(&self) -> &CountTable {
        &self.counts
    }

    pub fn leaf_obs(&self) -> Option<u32> {
        self.leaf_obs
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn last_modified(&self) -> u64 {
        self.last_modified
    }
}

/// A subtree removed from the tree by [`Tree::detach`]. Holds enough state
/// to either restore the original position exactly ([`Tree::reattach`]) or
/// finalize the removal ([`Tree::commit`]).
#[derive(Debug)]
pub struct Detached {
    root: NodeId,
    parent: NodeId,
    index: usize,
    collapse: Option<CollapseUndo>,
    /// Pre-detach modification stamps of every node the detach touched, so a
    /// restore leaves no trace in the change-tracking either.
    saved_stamps: Vec<(NodeId, u64)>,
}

#[derive(Debug)]
struct CollapseUndo {
    parent_node: Node,
    grandparent: NodeId,
    index_in_gp: usize,
    remnant: NodeId,
}

impl Detached {
    /// Root of the detached subtree.
    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Original parent, when it survived the detach.
    pub fn original_parent(&self) -> Option<NodeId> {
        if self.collapse.is_none() {
            Some(self.parent)
        } else {
            None
        }
    }

    /// The node that replaced a collapsed parent (the detached node's former
    /// lone sibling), when a collapse happened.
    pub fn remnant(&self) -> Option<NodeId> {
        self.collapse.as_ref().map(|c| c.remnant)
    }
}

#[derive(Serialize)]
struct DumpNode<'a> {
    id: u32,
    size: u32,
    counts: &'a CountTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    obs: Option<u32>,
    children: Vec<DumpNode<'a>>,
}

/// A probabilistic categorization tree over a fixed schema.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Option<Node>>,
    root: Option<NodeId>,
    schema: Arc<Schema>,
    height_bound: Option<usize>,
    stamp: u64,
}

impl Tree {
    /// An empty tree. `height_bound` is the maximum leaf depth (root at 0);
    /// `None` lets the tree grow without bound.
    pub fn new(schema: Arc<Schema>, height_bound: Option<usize>) -> Self {
        Tree {
            nodes: Vec::new(),
            root: None,
            schema,
            height_bound,
            stamp: 0,
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<Schema> {
        Arc::clone(&self.schema)
    }

    pub fn height_bound(&self) -> Option<usize> {
        self.height_bound
    }

    /// Remove the height bound; existing structure is untouched and later
    /// growth is unrestricted.
    pub fn clear_height_bound(&mut self) {
        self.height_bound = None;
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        self.nodes[id.0 as usize]
            .as_ref()
            .expect("dead node id")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        self.nodes[id.0 as usize]
            .as_mut()
            .expect("dead node id")
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        (id.0 as usize) < self.nodes.len() && self.nodes[id.0 as usize].is_some()
    }

    /// Number of live nodes.
    pub fn node_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_some()).count()
    }

    fn touch(&mut self, id: NodeId) {
        self.stamp += 1;
        let stamp = self.stamp;
        self.node_mut(id).last_modified = stamp;
    }

    pub fn stamp(&self) -> u64 {
        self.stamp
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let mut node = node;
        node.id = id;
        self.nodes.push(Some(node));
        id
    }

    fn free_subtree(&mut self, id: NodeId) {
        let children = self.node(id).children.clone();
        for c in children {
            self.free_subtree(c);
        }
        self.nodes[id.0 as usize] = None;
    }

    /// A fresh, unattached singleton leaf for `obs`.
    pub fn new_singleton(&mut self, obs: &Observation) -> NodeId {
        let counts = CountTable::one_hot(&self.schema, &obs.values);
        self.alloc(Node {
            id: NodeId(0),
            parent: None,
            children: Vec::new(),
            size: 1,
            counts,
            leaf_obs: Some(obs.id),
            last_modified: 0,
        })
    }

    /// A fresh internal node over the given floating subtrees, with counts
    /// summed from its children. Useful for building fixed tree shapes.
    pub fn join_nodes(&mut self, children: Vec<NodeId>) -> Result<NodeId> {
        if children.len() < 2 {
            return Err(Error::Argument("join needs at least two subtrees".into()));
        }
        let mut size = 0;
        let mut counts = CountTable::zeros(&self.schema);
        for &c in &children {
            let n = self.node(c);
            if n.parent.is_some() {
                return Err(Error::Structure(format!("{c} is already attached")));
            }
            size += n.size;
            counts.add_table(&n.counts);
        }
        let id = self.alloc(Node {
            id: NodeId(0),
            parent: None,
            children: children.clone(),
            size,
            counts,
            leaf_obs: None,
            last_modified: 0,
        });
        for c in children {
            self.node_mut(c).parent = Some(id);
        }
        Ok(id)
    }

    /// Install a floating node as the root of an empty tree.
    pub fn set_root(&mut self, id: NodeId) -> Result<()> {
        if self.root.is_some() {
            return Err(Error::Structure("tree already has a root".into()));
        }
        if self.node(id).parent.is_some() {
            return Err(Error::Structure("root candidate is still attached".into()));
        }
        self.root = Some(id);
        self.touch(id);
        Ok(())
    }

    /// Conditional probability `P(var = val | node)`.
    pub fn prob(&self, id: NodeId, var: usize, val: usize) -> Result<f64> {
        let n = self.node(id);
        if n.size == 0 {
            return Err(Error::Argument(format!("{id} covers no observations")));
        }
        Ok(n.counts.get(var, val) as f64 / n.size as f64)
    }

    /// Most frequent value of `var` at the node; ties break to the lowest
    /// value ordinal.
    pub fn most_frequent_value(&self, id: NodeId, var: usize) -> u32 {
        let row = self.node(id).counts.row(var);
        let mut best = 0usize;
        for (j, &c) in row.iter().enumerate() {
            if c > row[best] {
                best = j;
            }
        }
        best as u32
    }

    pub fn depth(&self, id: NodeId) -> usize {
        let mut d = 0;
        let mut cur = id;
        while let Some(p) = self.node(cur).parent {
            d += 1;
            cur = p;
        }
        d
    }

    /// Height of the subtree under `id` (0 for a leaf).
    pub fn height(&self, id: NodeId) -> usize {
        let n = self.node(id);
        n.children
            .iter()
            .map(|&c| 1 + self.height(c))
            .max()
            .unwrap_or(0)
    }

    /// All live node ids reachable from the root, preorder.
    pub fn node_ids(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        if let Some(r) = self.root {
            self.collect_preorder(r, &mut out);
        }
        out
    }

    fn collect_preorder(&self, id: NodeId, out: &mut Vec<NodeId>) {
        out.push(id);
        for &c in &self.node(id).children {
            self.collect_preorder(c, out);
        }
    }

    /// Leaf node ids in traversal order.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.node_ids()
            .into_iter()
            .filter(|&id| self.node(id).is_leaf())
            .collect()
    }

    /// Observation ids covered by `id`, in leaf traversal order.
    pub fn observations_under(&self, id: NodeId) -> Vec<u32> {
        let mut out = Vec::new();
        self.collect_observations(id, &mut out);
        out
    }

    fn collect_observations(&self, id: NodeId, out: &mut Vec<u32>) {
        let n = self.node(id);
        if let Some(o) = n.leaf_obs {
            out.push(o);
        }
        for &c in &n.children {
            self.collect_observations(c, out);
        }
    }

    /// Leaf node ids under `id`, in traversal order.
    pub fn leaf_nodes_under(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        self.collect_leaf_nodes(id, &mut out);
        out
    }

    fn collect_leaf_nodes(&self, id: NodeId, out: &mut Vec<NodeId>) {
        let n = self.node(id);
        if n.is_leaf() {
            out.push(id);
            return;
        }
        for &c in &n.children {
            self.collect_leaf_nodes(c, out);
        }
    }

    /// Leaf node holding observation `obs_id`, if present.
    pub fn find_leaf_of(&self, obs_id: u32) -> Option<NodeId> {
        self.node_ids()
            .into_iter()
            .find(|&id| self.node(id).leaf_obs == Some(obs_id))
    }

    fn add_to_ancestors(&mut self, start: NodeId, counts: &CountTable, size: u32) {
        let mut cur = Some(start);
        while let Some(id) = cur {
            let next = self.node(id).parent;
            {
                let n = self.node_mut(id);
                n.size += size;
                n.counts.add_table(counts);
            }
            self.touch(id);
            cur = next;
        }
    }

    fn sub_from_ancestors(&mut self, start: NodeId, counts: &CountTable, size: u32) {
        let mut cur = Some(start);
        while let Some(id) = cur {
            let next = self.node(id).parent;
            {
                let n = self.node_mut(id);
                n.size -= size;
                n.counts.sub_table(counts);
            }
            self.touch(id);
            cur = next;
        }
    }

    /// Remove `id` (with its whole subtree) from the tree, decrementing all
    /// ancestor counts. A non-root parent left with a single child collapses:
    /// the lone sibling takes the parent's place. The root never collapses.
    ///
    /// The returned [`Detached`] must be given back to [`Tree::reattach`]
    /// (exact restore) or [`Tree::commit`] (finalize removal).
    pub fn detach(&mut self, id: NodeId) -> Result<Detached> {
        if Some(id) == self.root {
            return Err(Error::Structure("cannot detach the root".into()));
        }
        let parent = self
            .node(id)
            .parent
            .ok_or_else(|| Error::Structure(format!("{id} is already detached")))?;
        if Some(parent) == self.root && self.node(parent).children.len() == 1 {
            return Err(Error::Structure(
                "detaching the root's only child would empty the tree".into(),
            ));
        }
        let index = self
            .node(parent)
            .children
            .iter()
            .position(|&c| c == id)
            .expect("child missing from parent");

        let mut saved_stamps = Vec::new();
        let mut cur = Some(parent);
        while let Some(a) = cur {
            saved_stamps.push((a, self.node(a).last_modified));
            cur = self.node(a).parent;
        }

        let (size, counts) = {
            let n = self.node(id);
            (n.size, n.counts.clone())
        };
        self.sub_from_ancestors(parent, &counts, size);
        self.node_mut(parent).children.remove(index);
        self.node_mut(id).parent = None;
        self.touch(parent);

        let mut collapse = None;
        if Some(parent) != self.root && self.node(parent).children.len() == 1 {
            let remnant = self.node(parent).children[0];
            saved_stamps.push((remnant, self.node(remnant).last_modified));
            let grandparent = self.node(parent).parent.expect("non-root has a parent");
            let index_in_gp = self
                .node(grandparent)
                .children
                .iter()
                .position(|&c| c == parent)
                .expect("parent missing from grandparent");
            let parent_node = self.nodes[parent.0 as usize]
                .take()
                .expect("parent alive");
            self.node_mut(grandparent).children[index_in_gp] = remnant;
            self.node_mut(remnant).parent = Some(grandparent);
            self.touch(grandparent);
            self.touch(remnant);
            collapse = Some(CollapseUndo {
                parent_node,
                grandparent,
                index_in_gp,
                remnant,
            });
        }

        Ok(Detached {
            root: id,
            parent,
            index,
            collapse,
            saved_stamps,
        })
    }

    /// Undo a detach exactly: counts, child order, modification stamps, and
    /// any collapsed parent are restored byte-for-byte.
    pub fn reattach(&mut self, d: Detached) {
        if let Some(c) = d.collapse {
            let parent = d.parent;
            self.nodes[parent.0 as usize] = Some(c.parent_node);
            self.node_mut(c.grandparent).children[c.index_in_gp] = parent;
            self.node_mut(c.remnant).parent = Some(parent);
            self.touch(c.grandparent);
        }
        let (size, counts) = {
            let n = self.node(d.root);
            (n.size, n.counts.clone())
        };
        self.node_mut(d.parent).children.insert(d.index, d.root);
        self.node_mut(d.root).parent = Some(d.parent);
        self.add_to_ancestors(d.parent, &counts, size);
        for (id, stamp) in d.saved_stamps {
            self.node_mut(id).last_modified = stamp;
        }
    }

    /// Finalize a detach; the subtree root id becomes a free-floating node.
    pub fn commit(&mut self, d: Detached) -> NodeId {
        // The collapsed parent's storage is dropped with the undo record.
        d.root
    }

    /// Append a floating subtree as a new child of `host`, incrementing host
    /// and ancestor counts.
    pub fn attach_subtree(&mut self, host: NodeId, sub: NodeId) -> Result<()> {
        if self.node(sub).parent.is_some() {
            return Err(Error::Structure(format!("{sub} is already attached")));
        }
        if Some(sub) == self.root {
            return Err(Error::Structure("cannot attach the root under itself".into()));
        }
        let (size, counts) = {
            let n = self.node(sub);
            (n.size, n.counts.clone())
        };
        self.node_mut(host).children.push(sub);
        self.node_mut(sub).parent = Some(host);
        self.add_to_ancestors(host, &counts, size);
        Ok(())
    }

    /// Merge a floating subtree into `host` without adding a level: the
    /// subtree's observation leaves become direct children of `host` and its
    /// internal nodes are discarded. A singleton-leaf host first demotes its
    /// own observation to a leaf child.
    pub fn flatten_merge(&mut self, host: NodeId, sub: NodeId) -> Result<()> {
        if self.node(sub).parent.is_some() {
            return Err(Error::Structure(format!("{sub} is already attached")));
        }
        if self.node(host).is_leaf() {
            self.demote_leaf_obs(host);
        }
        let (size, counts) = {
            let n = self.node(sub);
            (n.size, n.counts.clone())
        };
        let leaves = self.leaf_nodes_under(sub);
        for &l in &leaves {
            self.node_mut(l).parent = Some(host);
        }
        // Free the subtree's internal scaffolding (everything but the leaves).
        self.free_internal_only(sub);
        self.node_mut(host).children.extend(leaves);
        self.add_to_ancestors(host, &counts, size);
        Ok(())
    }

    fn free_internal_only(&mut self, id: NodeId) {
        let n = self.node(id);
        if n.is_leaf() {
            return;
        }
        let children = n.children.clone();
        for c in children {
            self.free_internal_only(c);
        }
        self.nodes[id.0 as usize] = None;
    }

    /// Turn a singleton leaf into an internal node whose first child is a new
    /// leaf holding the original observation.
    pub fn demote_leaf_obs(&mut self, id: NodeId) -> NodeId {
        let (counts, obs) = {
            let n = self.node(id);
            debug_assert!(n.is_leaf() && n.leaf_obs.is_some() && n.size == 1);
            (n.counts.clone(), n.leaf_obs)
        };
        let child = self.alloc(Node {
            id: NodeId(0),
            parent: Some(id),
            children: Vec::new(),
            size: 1,
            counts,
            leaf_obs: obs,
            last_modified: 0,
        });
        let n = self.node_mut(id);
        n.leaf_obs = None;
        n.children.push(child);
        self.touch(id);
        child
    }

    /// Replace a singleton leaf by an internal node with two children: the
    /// old observation and a new singleton for `obs`.
    pub fn extend_leaf(&mut self, leaf: NodeId, obs: &Observation) -> Result<()> {
        {
            let n = self.node(leaf);
            if !n.is_leaf() || n.leaf_obs.is_none() {
                return Err(Error::Argument(format!("{leaf} is not a singleton leaf")));
            }
        }
        if let Some(bound) = self.height_bound {
            if self.depth(leaf) + 1 > bound {
                return Err(Error::Bound(format!(
                    "extending {leaf} would place leaves at depth {}",
                    self.depth(leaf) + 1
                )));
            }
        }
        let new = self.new_singleton(obs);
        self.extend_leaf_with(leaf, new)
    }

    /// Replace a singleton leaf by an internal node with two children: the
    /// old observation and the given floating subtree.
    pub fn extend_leaf_with(&mut self, leaf: NodeId, sub: NodeId) -> Result<()> {
        if self.node(sub).parent.is_some() {
            return Err(Error::Structure(format!("{sub} is already attached")));
        }
        self.demote_leaf_obs(leaf);
        let (size, counts) = {
            let n = self.node(sub);
            (n.size, n.counts.clone())
        };
        self.node_mut(leaf).children.push(sub);
        self.node_mut(sub).parent = Some(leaf);
        self.add_to_ancestors(leaf, &counts, size);
        Ok(())
    }

    /// Limit the height of a floating subtree to `max_h` by replacing the
    /// children of nodes at relative depth `max_h - 1` with their observation
    /// leaves.
    pub fn trim_to_height(&mut self, sub: NodeId, max_h: usize) {
        debug_assert!(max_h >= 1);
        self.trim_rec(sub, max_h);
    }

    fn trim_rec(&mut self, id: NodeId, budget: usize) {
        if self.node(id).is_leaf() {
            return;
        }
        if budget == 1 {
            if self.height(id) <= 1 {
                return;
            }
            let leaves = self.leaf_nodes_under(id);
            for &l in &leaves {
                if l != id {
                    self.node_mut(l).parent = Some(id);
                }
            }
            let children = self.node(id).children.clone();
            for c in children {
                if !leaves.contains(&c) {
                    self.free_internal_keep(c, &leaves);
                }
            }
            self.node_mut(id).children = leaves;
            self.touch(id);
            return;
        }
        let children = self.node(id).children.clone();
        for c in children {
            self.trim_rec(c, budget - 1);
        }
    }

    fn free_internal_keep(&mut self, id: NodeId, keep: &[NodeId]) {
        if keep.contains(&id) {
            return;
        }
        let children = self.node(id).children.clone();
        for c in children {
            self.free_internal_keep(c, keep);
        }
        self.nodes[id.0 as usize] = None;
    }

    /// Copy the children of `src_tree`'s root (or its single top cluster, if
    /// the root has exactly one child) under `dst_host`, which must cover the
    /// same observations. Node ids are re-assigned in this arena.
    pub fn graft_children(&mut self, dst_host: NodeId, src_tree: &Tree) -> Result<()> {
        let src_root = src_tree
            .root()
            .ok_or_else(|| Error::Structure("grafting from an empty tree".into()))?;
        if src_tree.node(src_root).size != self.node(dst_host).size {
            return Err(Error::Structure(
                "graft source does not cover the host's observations".into(),
            ));
        }
        // Splice out single-child containers so the host never ends up with
        // exactly one child.
        let mut top = src_root;
        while src_tree.node(top).children.len() == 1 {
            top = src_tree.node(top).children[0];
        }
        debug_assert!(self.node(dst_host).is_leaf() || self.node(dst_host).children.is_empty());
        let kids = src_tree.node(top).children.clone();
        for k in kids {
            let copied = self.copy_from(src_tree, k);
            self.node_mut(copied).parent = Some(dst_host);
            self.node_mut(dst_host).children.push(copied);
        }
        self.node_mut(dst_host).leaf_obs = None;
        self.touch(dst_host);
        Ok(())
    }

    fn copy_from(&mut self, src: &Tree, id: NodeId) -> NodeId {
        let n = src.node(id);
        let new = self.alloc(Node {
            id: NodeId(0),
            parent: None,
            children: Vec::new(),
            size: n.size,
            counts: n.counts.clone(),
            leaf_obs: n.leaf_obs,
            last_modified: 0,
        });
        for &c in &n.children {
            let cc = self.copy_from(src, c);
            self.node_mut(cc).parent = Some(new);
            self.node_mut(new).children.push(cc);
        }
        new
    }

    /// Drop the children of every node in `make_leaf`, leaving those nodes as
    /// (possibly multi-observation) leaves. Used by pruning.
    pub fn cut_below(&mut self, make_leaf: &[NodeId]) {
        for &id in make_leaf {
            let children = self.node(id).children.clone();
            for c in children {
                self.free_subtree(c);
            }
            self.node_mut(id).children.clear();
            self.touch(id);
        }
    }

    /// Verify count and structure invariants over the whole tree.
    ///
    /// With `strict_leaves`, a childless node must be a singleton holding an
    /// observation; pruned trees relax this to allow multi-observation leaves.
    pub fn check_invariants(&self, strict_leaves: bool) -> Result<()> {
        let root = match self.root {
            Some(r) => r,
            None => return Ok(()),
        };
        if self.node(root).parent.is_some() {
            return Err(Error::Structure("root has a parent".into()));
        }
        self.check_node(root, strict_leaves, true)?;
        if let Some(bound) = self.height_bound {
            for l in self.leaves() {
                if self.depth(l) > bound {
                    return Err(Error::Structure(format!(
                        "leaf {l} at depth {} exceeds bound {bound}",
                        self.depth(l)
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_node(&self, id: NodeId, strict_leaves: bool, is_root: bool) -> Result<()> {
        let n = self.node(id);
        for var in 0..self.schema.len() {
            let s: u32 = n.counts.row(var).iter().sum();
            if s != n.size {
                return Err(Error::Structure(format!(
                    "{id}: counts of var {var} sum to {s}, size is {}",
                    n.size
                )));
            }
        }
        if n.is_leaf() {
            if strict_leaves && (n.leaf_obs.is_none() || n.size != 1) {
                return Err(Error::Structure(format!(
                    "{id}: childless node is not a singleton observation leaf"
                )));
            }
            return Ok(());
        }
        if n.leaf_obs.is_some() {
            return Err(Error::Structure(format!(
                "{id}: internal node stores an observation"
            )));
        }
        if !is_root && n.children.len() < 2 {
            return Err(Error::Structure(format!(
                "{id}: non-root internal node has {} child(ren)",
                n.children.len()
            )));
        }
        let mut size_sum = 0u32;
        let mut counts_sum = CountTable::zeros(&self.schema);
        for &c in &n.children {
            let cn = self.node(c);
            if cn.parent != Some(id) {
                return Err(Error::Structure(format!("{c}: bad parent pointer")));
            }
            size_sum += cn.size;
            counts_sum.add_table(&cn.counts);
            self.check_node(c, strict_leaves, false)?;
        }
        if size_sum != n.size || counts_sum != n.counts {
            return Err(Error::Structure(format!(
                "{id}: children do not sum to the node's counts"
            )));
        }
        Ok(())
    }

    /// Nested `{id, size, counts, children}` record of the whole tree.
    pub fn dump_value(&self) -> serde_json::Value {
        match self.root {
            None => serde_json::Value::Null,
            Some(r) => serde_json::to_value(self.dump_node(r)).expect("tree serializes"),
        }
    }

    pub fn dump_json(&self) -> String {
        match self.root {
            None => "null".to_string(),
            Some(r) => {
                serde_json::to_string_pretty(&self.dump_node(r)).expect("tree serializes")
            }
        }
    }

    fn dump_node(&self, id: NodeId) -> DumpNode<'_> {
        let n = self.node(id);
        DumpNode {
            id: id.0,
            size: n.size,
            counts: &n.counts,
            obs: n.leaf_obs,
            children: n.children.iter().map(|&c| self.dump_node(c)).collect(),
        }
    }
}

/// Detach a subtree and finalize the removal in one step.
pub fn detach_subtree(tree: &mut Tree, node: NodeId) -> Result<NodeId> {
    let d = tree.detach(node)?;
    Ok(tree.commit(d))
}

/// Attach a floating subtree under `host`, either as a
/// new child or merged flat (its observation leaves become children of the
/// host).
pub fn attach(tree: &mut Tree, host: NodeId, sub: NodeId, as_new_child: bool) -> Result<()> {
    if as_new_child {
        tree.attach_subtree(host, sub)
    } else {
        tree.flatten_merge(host, sub)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;

    fn f1() -> Dataset {
        Dataset::from_rows("f1", None, &[vec!["a"], vec!["a"], vec!["b"], vec!["b"]]).unwrap()
    }

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

    /// root -> [{a,a},{b,b}] with singleton leaves, built from public ops.
    fn f1_tree() -> (Dataset, Tree) {
        let d = f1();
        let mut t = Tree::new(d.schema.clone(), Some(2));
        let first = t.new_singleton(&d.observations[0]);
        t.set_root(first).unwrap();
        let root = first;
        // demote the first observation, grow {a,a} under it
        let a_leaf = t.demote_leaf_obs(root);
        t.extend_leaf(a_leaf, &d.observations[1]).unwrap();
        // {b} as a second top-level cluster, extended to {b,b}
        let cb = t.new_singleton(&d.observations[2]);
        t.attach_subtree(root, cb).unwrap();
        t.extend_leaf(cb, &d.observations[3]).unwrap();
        t.check_invariants(true).unwrap();
        (d, t)
    }

    #[test]
    fn singleton_counts() {
        let d = f1();
        let mut t = Tree::new(d.schema.clone(), None);
        let s = t.new_singleton(&d.observations[0]);
        assert_eq!(t.node(s).size(), 1);
        assert_eq!(t.node(s).counts().row(0), &[1, 0]);

        let d2 = f2();
        let mut t2 = Tree::new(d2.schema.clone(), None);
        let s2 = t2.new_singleton(&d2.observations[0]);
        assert_eq!(t2.node(s2).counts().row(0), &[1, 0]);
        assert_eq!(t2.node(s2).counts().row(1), &[1, 0]);
        // delta distribution
        assert_eq!(t2.prob(s2, 0, 0).unwrap(), 1.0);
        assert_eq!(t2.prob(s2, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn prob_values() {
        let (_, t) = f1_tree();
        let root = t.root().unwrap();
        assert_eq!(t.prob(root, 0, 0).unwrap(), 0.5);
        let leaf = t.leaves()[0];
        assert_eq!(t.prob(leaf, 0, 0).unwrap(), 1.0);
    }

    #[test]
    fn prob_two_thirds() {
        let d = Dataset::from_rows("m", None, &[vec!["a"], vec!["a"], vec!["b"]]).unwrap();
        let mut t = Tree::new(d.schema.clone(), None);
        let l0 = t.new_singleton(&d.observations[0]);
        t.set_root(l0).unwrap();
        let c = t.demote_leaf_obs(l0);
        let _ = c;
        let l1 = t.new_singleton(&d.observations[1]);
        let l2 = t.new_singleton(&d.observations[2]);
        t.attach_subtree(l0, l1).unwrap();
        t.attach_subtree(l0, l2).unwrap();
        assert!((t.prob(l0, 0, 0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn detach_decrements_ancestors() {
        let (_, mut t) = f1_tree();
        let root = t.root().unwrap();
        let cb = t.node(root).children()[1];
        let b_leaf = t.node(cb).children()[0];
        let det = t.detach(b_leaf).unwrap();
        assert_eq!(t.node(root).size(), 3);
        assert_eq!(t.node(root).counts().row(0), &[2, 1]);
        // the b-cluster had 2 children; removing one collapses it
        assert!(det.remnant().is_some());
        t.commit(det);
        t.check_invariants(true).unwrap();
    }

    #[test]
    fn detach_reattach_is_identity() {
        let (_, mut t) = f1_tree();
        let before = t.dump_json();
        let root = t.root().unwrap();
        let cb = t.node(root).children()[1];
        let det = t.detach(cb).unwrap();
        t.reattach(det);
        assert_eq!(t.dump_json(), before);
        t.check_invariants(true).unwrap();

        // same through a collapse
        let b_leaf = t.node(t.node(root).children()[1]).children()[0];
        let det = t.detach(b_leaf).unwrap();
        assert!(det.remnant().is_some());
        t.reattach(det);
        assert_eq!(t.dump_json(), before);
        t.check_invariants(true).unwrap();
    }

    #[test]
    fn collapse_promotes_lone_sibling() {
        let (_, mut t) = f1_tree();
        let root = t.root().unwrap();
        let cb = t.node(root).children()[1];
        let b0 = t.node(cb).children()[0];
        let b1 = t.node(cb).children()[1];
        let det = t.detach(b0).unwrap();
        assert_eq!(det.remnant(), Some(b1));
        assert!(det.original_parent().is_none());
        // the remnant leaf now sits where the cluster was
        assert_eq!(t.node(root).children()[1], b1);
        assert!(!t.is_alive(cb));
        t.commit(det);
        t.check_invariants(true).unwrap();
    }

    #[test]
    fn root_never_collapses() {
        let (_, mut t) = f1_tree();
        let root = t.root().unwrap();
        let ca = t.node(root).children()[0];
        let det = t.detach(ca).unwrap();
        assert_eq!(det.original_parent(), Some(root));
        assert_eq!(t.node(root).children().len(), 1);
        t.reattach(det);
        t.check_invariants(true).unwrap();
    }

    #[test]
    fn detach_root_is_error() {
        let (_, mut t) = f1_tree();
        let root = t.root().unwrap();
        assert!(matches!(t.detach(root), Err(Error::Structure(_))));
    }

    #[test]
    fn attach_new_child_increments() {
        let d = f1();
        let mut t = Tree::new(d.schema.clone(), None);
        let root = t.new_singleton(&d.observations[0]);
        t.set_root(root).unwrap();
        t.demote_leaf_obs(root);
        let b = t.new_singleton(&d.observations[2]);
        t.attach_subtree(root, b).unwrap();
        assert_eq!(t.node(root).size(), 2);
        assert_eq!(t.node(root).counts().row(0), &[1, 1]);
        t.check_invariants(true).unwrap();
    }

    #[test]
    fn attach_two_obs_subtree_adds_two() {
        let (d, mut t) = f1_tree();
        let root = t.root().unwrap();
        let cb = t.node(root).children()[1];
        let sub = detach_subtree(&mut t, cb).unwrap();
        assert_eq!(t.node(root).size(), 2);
        attach(&mut t, root, sub, true).unwrap();
        assert_eq!(t.node(root).size(), 4);
        let leaf_total: u32 = t.leaves().iter().map(|&l| t.node(l).size()).sum();
        assert_eq!(leaf_total, 4);
        let _ = d;
        t.check_invariants(true).unwrap();
    }

    #[test]
    fn flatten_merge_splices_leaves() {
        let (_, mut t) = f1_tree();
        let root = t.root().unwrap();
        let ca = t.node(root).children()[0];
        let cb = t.node(root).children()[1];
        let sub = detach_subtree(&mut t, cb).unwrap();
        attach(&mut t, ca, sub, false).unwrap();
        // ca now holds all four observations as direct leaves
        assert_eq!(t.node(ca).children().len(), 4);
        assert_eq!(t.node(ca).size(), 4);
        assert!(!t.is_alive(sub));
        t.check_invariants(true).unwrap();
    }

    #[test]
    fn extend_leaf_basic() {
        let d = f1();
        let mut t = Tree::new(d.schema.clone(), Some(2));
        let root = t.new_singleton(&d.observations[0]);
        t.set_root(root).unwrap();
        t.extend_leaf(root, &d.observations[2]).unwrap();
        assert_eq!(t.node(root).children().len(), 2);
        assert_eq!(t.node(root).counts().row(0), &[1, 1]);
        assert!(t.node(root).leaf_obs().is_none());
        t.check_invariants(true).unwrap();
    }

    #[test]
    fn extend_leaf_respects_bound() {
        let (d, mut t) = f1_tree();
        // leaves are at depth 2 with bound 2: extension refused
        let leaf = t.leaves()[0];
        assert!(matches!(
            t.extend_leaf(leaf, &d.observations[1]),
            Err(Error::Bound(_))
        ));
        // a depth-1 singleton is fine
        let root = t.root().unwrap();
        let extra = t.new_singleton(&d.observations[1]);
        t.attach_subtree(root, extra).unwrap();
        t.extend_leaf(extra, &d.observations[0]).unwrap();
        t.check_invariants(true).unwrap();
    }

    #[test]
    fn trim_to_height_flattens() {
        let (_, mut t) = f1_tree();
        let root = t.root().unwrap();
        let ca = t.node(root).children()[0];
        let sub = detach_subtree(&mut t, ca).unwrap();
        assert_eq!(t.height(sub), 1);
        t.trim_to_height(sub, 1);
        assert_eq!(t.height(sub), 1);
        // deeper shape: hang the subtree under a fresh singleton
        let d = f1();
        let top = t.new_singleton(&d.observations[0]);
        t.extend_leaf_with(top, sub).unwrap();
        assert_eq!(t.height(top), 2);
        let before_obs = t.observations_under(top);
        t.trim_to_height(top, 1);
        assert_eq!(t.height(top), 1);
        let mut after_obs = t.observations_under(top);
        let mut before_sorted = before_obs.clone();
        before_sorted.sort_unstable();
        after_obs.sort_unstable();
        assert_eq!(after_obs, before_sorted);
    }

    #[test]
    fn dump_shape() {
        let (_, t) = f1_tree();
        let v = t.dump_value();
        assert_eq!(v["size"], 4);
        assert_eq!(v["children"].as_array().unwrap().len(), 2);
        assert_eq!(v["counts"][0][0], 2);
        // leaves carry their observation
        assert!(v["children"][0]["children"][0]["obs"].is_number());
    }

    #[test]
    fn dump_golden() {
        // the dump format is a stable interface: same construction sequence,
        // same bytes
        let (_, t) = f1_tree();
        let golden = serde_json::json!({
            "id": 0, "size": 4, "counts": [[2, 2]],
            "children": [
                {"id": 1, "size": 2, "counts": [[2, 0]], "children": [
                    {"id": 3, "size": 1, "counts": [[1, 0]], "obs": 0, "children": []},
                    {"id": 2, "size": 1, "counts": [[1, 0]], "obs": 1, "children": []}
                ]},
                {"id": 4, "size": 2, "counts": [[0, 2]], "children": [
                    {"id": 6, "size": 1, "counts": [[0, 1]], "obs": 2, "children": []},
                    {"id": 5, "size": 1, "counts": [[0, 1]], "obs": 3, "children": []}
                ]}
            ]
        });
        assert_eq!(t.dump_value(), golden);
    }
}
