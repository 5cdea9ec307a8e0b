//! Incremental full-fledged k-d tree.
//!
//! Every arriving point is routed to the leaf containing it and becomes the
//! pivot that splits that leaf along a uniformly drawn axis. Ties go left:
//! the left child is `{z : z[axis] <= pivot[axis]}`. Samples live at the
//! leaves and migrate to the children, in arrival order, when their leaf
//! splits.
//!
//! Nodes are kept in an append-only arena, so a [`NodeId`] stays valid for
//! the lifetime of the tree and ids are assigned in creation order.

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleId(u32);

impl SampleId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Position, within a cell's own subsequence, of the sample that split it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitIndex {
    Unsplit,
    At(u64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split<F> {
    pub axis: usize,
    pub value: F,
    pub left: NodeId,
    pub right: NodeId,
}

impl<F: Real> Split<F> {
    #[inline]
    pub fn child_for(&self, point: &[F]) -> NodeId {
        if point[self.axis] <= self.value {
            self.left
        } else {
            self.right
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node<F> {
    split: Option<Split<F>>,
    stored: Vec<SampleId>,
    split_index: SplitIndex,
    depth: u32,
}

impl<F: Real> Node<F> {
    fn leaf(depth: u32, stored: Vec<SampleId>) -> Self {
        Node {
            split: None,
            stored,
            split_index: SplitIndex::Unsplit,
            depth,
        }
    }

    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    #[inline]
    pub fn split(&self) -> Option<&Split<F>> {
        self.split.as_ref()
    }

    /// Samples held by a leaf, in arrival order. Empty for internal nodes.
    pub fn stored(&self) -> &[SampleId] {
        &self.stored
    }

    pub fn split_index(&self) -> SplitIndex {
        self.split_index
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }
}

/// Result of splitting a leaf with a new pivot.
#[derive(Clone, Copy, Debug)]
pub struct SplitOutcome {
    pub left: NodeId,
    pub right: NodeId,
    /// The child now holding the pivot sample.
    pub pivot_child: NodeId,
    pub pivot: SampleId,
}

/// The randomized partition of `R^d` together with the stored samples.
#[derive(Clone, Debug)]
pub struct Partition<F> {
    dim: usize,
    nodes: Vec<Node<F>>,
    points: Vec<F>,
    labels: Vec<Option<u32>>,
    rng: ChaCha8Rng,
}

impl<F: Real> Partition<F> {
    pub fn new(dim: usize, rng: ChaCha8Rng) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(Partition {
            dim,
            nodes: vec![Node::leaf(0, Vec::new())],
            points: Vec::new(),
            labels: Vec::new(),
            rng,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn root(&self) -> &Node<F> {
        &self.nodes[0]
    }

    #[inline]
    pub fn node(&self, id: NodeId) -> &Node<F> {
        &self.nodes[id.index()]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn sample_count(&self) -> usize {
        self.labels.len()
    }

    pub fn point(&self, sample: SampleId) -> &[F] {
        let start = sample.index() * self.dim;
        &self.points[start..start + self.dim]
    }

    pub fn label(&self, sample: SampleId) -> Option<usize> {
        self.labels[sample.index()].map(|l| l as usize)
    }

    pub fn check_dim(&self, point: &[F]) -> Result<()> {
        if point.len() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dim,
                got: point.len(),
            })
        }
    }

    /// Root-to-leaf path of the cell containing `point`.
    pub fn route(&self, point: &[F]) -> Result<Vec<NodeId>> {
        let mut path = Vec::new();
        self.route_into(point, &mut path)?;
        Ok(path)
    }

    /// Like [`route`](Self::route), reusing `path`'s allocation.
    pub fn route_into(&self, point: &[F], path: &mut Vec<NodeId>) -> Result<()> {
        self.check_dim(point)?;
        path.clear();
        let mut id = NodeId::ROOT;
        path.push(id);
        while let Some(split) = &self.nodes[id.index()].split {
            id = split.child_for(point);
            path.push(id);
        }
        Ok(())
    }

    /// Number of labeled samples stored in a leaf, i.e. the length of its
    /// cell subsequence.
    pub fn labeled_in_leaf(&self, leaf: NodeId) -> u64 {
        self.nodes[leaf.index()]
            .stored
            .iter()
            .filter(|s| self.labels[s.index()].is_some())
            .count() as u64
    }

    /// Labels of the samples stored in a leaf, in arrival order, skipping
    /// a pivot whose label has not arrived yet.
    pub fn stored_labels(&self, leaf: NodeId) -> impl Iterator<Item = usize> + '_ {
        self.nodes[leaf.index()]
            .stored
            .iter()
            .filter_map(|s| self.labels[s.index()].map(|l| l as usize))
    }

    fn draw_axis(&mut self) -> usize {
        // One generator draw per split, mapped by widening multiply.
        ((self.rng.next_u64() as u128 * self.dim as u128) >> 64) as usize
    }

    /// Stores `pivot` as a new unlabeled sample and splits `leaf` around it.
    pub fn split_leaf(&mut self, leaf: NodeId, pivot: &[F]) -> Result<SplitOutcome> {
        self.check_dim(pivot)?;
        if !self.nodes[leaf.index()].is_leaf() {
            return Err(Error::InvalidParameter(format!(
                "node {} is not a leaf",
                leaf.index()
            )));
        }
        let sample = SampleId(self.labels.len() as u32);
        self.points.extend_from_slice(pivot);
        self.labels.push(None);

        let axis = self.draw_axis();
        let value = pivot[axis];
        let tau = self.labeled_in_leaf(leaf) + 1;
        let node = &mut self.nodes[leaf.index()];
        let depth = node.depth + 1;
        let stored = std::mem::take(&mut node.stored);

        let (mut left_stored, mut right_stored) = (Vec::new(), Vec::new());
        for s in stored.into_iter().chain(std::iter::once(sample)) {
            let start = s.index() * self.dim;
            if self.points[start + axis] <= value {
                left_stored.push(s);
            } else {
                right_stored.push(s);
            }
        }

        let left = NodeId(self.nodes.len() as u32);
        let right = NodeId(left.0 + 1);
        self.nodes.push(Node::leaf(depth, left_stored));
        self.nodes.push(Node::leaf(depth, right_stored));
        let node = &mut self.nodes[leaf.index()];
        node.split = Some(Split {
            axis,
            value,
            left,
            right,
        });
        node.split_index = SplitIndex::At(tau);

        // The pivot satisfies pivot[axis] <= value.
        Ok(SplitOutcome {
            left,
            right,
            pivot_child: left,
            pivot: sample,
        })
    }

    pub(crate) fn attach_label(&mut self, sample: SampleId, label: usize) {
        self.labels[sample.index()] = Some(label as u32);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn partition(dim: usize, seed: u64) -> Partition<f64> {
        Partition::new(dim, ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn insert(p: &mut Partition<f64>, point: &[f64], label: usize) -> SplitOutcome {
        let path = p.route(point).unwrap();
        let out = p.split_leaf(*path.last().unwrap(), point).unwrap();
        p.attach_label(out.pivot, label);
        out
    }

    #[test]
    fn empty_tree_routes_to_root() {
        let p = partition(3, 1);
        assert_eq!(p.route(&[0.1, 0.2, 0.3]).unwrap(), vec![NodeId::ROOT]);
        assert_eq!(
            p.route(&[0.1]),
            Err(Error::DimensionMismatch {
                expected: 3,
                got: 1
            })
        );
    }

    #[test]
    fn ties_go_left() {
        let mut p = partition(1, 7);
        let out = insert(&mut p, &[0.5], 0);
        assert_eq!(p.route(&[0.5]).unwrap(), vec![NodeId::ROOT, out.left]);
        assert_eq!(p.route(&[0.7]).unwrap(), vec![NodeId::ROOT, out.right]);
        assert_eq!(p.route(&[0.2]).unwrap(), vec![NodeId::ROOT, out.left]);
    }

    #[test]
    fn first_split_of_empty_leaf() {
        let mut p = partition(2, 3);
        let out = p.split_leaf(NodeId::ROOT, &[0.3, 0.4]).unwrap();
        assert_eq!(p.root().split_index(), SplitIndex::At(1));
        assert_eq!(p.node(out.left).stored(), &[out.pivot]);
        assert!(p.node(out.right).stored().is_empty());
        assert_eq!(p.node(out.left).split_index(), SplitIndex::Unsplit);
        assert!(p.root().stored().is_empty());
    }

    #[test]
    fn stored_samples_migrate_in_order() {
        // d = 1 so the axis is always 0.
        let mut p = partition(1, 11);
        insert(&mut p, &[0.5], 0); // root -> [<=0.5] holds 0.5
        insert(&mut p, &[0.2], 1); // left leaf splits at 0.2: {0.2} | {0.5}
        let path = p.route(&[0.6]).unwrap();
        let leaf = *path.last().unwrap();
        assert_eq!(p.labeled_in_leaf(leaf), 0);
        // A leaf holding one sample below the pivot.
        let path = p.route(&[0.4]).unwrap();
        let leaf = *path.last().unwrap();
        assert_eq!(p.stored_labels(leaf).collect::<Vec<_>>(), vec![0]);
        let out = p.split_leaf(leaf, &[0.4]).unwrap();
        assert_eq!(p.node(leaf).split_index(), SplitIndex::At(2));
        // 0.4 <= 0.4 stays left with the pivot; 0.5 moves right.
        assert_eq!(p.node(out.left).stored(), &[out.pivot]);
        assert_eq!(p.stored_labels(out.right).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn two_samples_straddling_a_pivot() {
        // Grow a d = 2 tree until some leaf holds two labeled samples, then
        // split it at their midpoint, which lies in the (convex) cell and
        // between them on every axis.
        let mut p = partition(2, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let leaf = loop {
            let x: Vec<f64> = (0..2).map(|_| rng.random()).collect();
            let label = p.sample_count() % 2;
            insert(&mut p, &x, label);
            let found = p
                .node_ids()
                .find(|&id| p.node(id).is_leaf() && p.node(id).stored().len() >= 2);
            if let Some(id) = found {
                break id;
            }
        };
        let held = p.node(leaf).stored().to_vec();
        let (a, b) = (held[0], held[1]);
        let mid: Vec<f64> = (0..2).map(|k| 0.5 * (p.point(a)[k] + p.point(b)[k])).collect();
        assert_eq!(*p.route(&mid).unwrap().last().unwrap(), leaf);
        let out = p.split_leaf(leaf, &mid).unwrap();
        let left = p.node(out.left).stored().to_vec();
        let right = p.node(out.right).stored().to_vec();
        assert_eq!(left.len() + right.len(), held.len() + 1);
        let a_left = left.contains(&a);
        assert_ne!(a_left, left.contains(&b), "a and b must be separated");
        assert!(left.windows(2).all(|w| w[0] < w[1]));
        assert!(right.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(p.node(leaf).split_index(), SplitIndex::At(held.len() as u64 + 1));
    }

    #[test]
    fn stored_samples_stay_ordered_and_contained() {
        let mut p = partition(3, 77);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for i in 0..300 {
            // Coarse grid coordinates produce plenty of ties.
            let x: Vec<f64> = (0..3).map(|_| (rng.random::<f64>() * 4.0).floor()).collect();
            insert(&mut p, &x, i % 3);
        }
        for id in p.node_ids().filter(|&id| p.node(id).is_leaf()) {
            let stored = p.node(id).stored();
            assert!(stored.windows(2).all(|w| w[0] < w[1]));
            for &s in stored {
                assert_eq!(*p.route(p.point(s)).unwrap().last().unwrap(), id);
            }
        }
    }

    #[test]
    fn counts_of_nodes_and_leaves() {
        let mut p = partition(3, 42);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for i in 0..500 {
            let x: Vec<f64> = (0..3).map(|_| rng.random()).collect();
            insert(&mut p, &x, i % 2);
        }
        let internal = p.node_ids().filter(|&id| !p.node(id).is_leaf()).count();
        assert_eq!(internal, 500);
        assert_eq!(p.leaf_count(), 501);
        let stored: usize = p.node_ids().map(|id| p.node(id).stored().len()).sum();
        assert_eq!(stored, 500);
    }

    #[test]
    fn leaves_partition_the_line() {
        // d = 1: every leaf is an interval; probe both sides of every pivot.
        let mut p = partition(1, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pivots = Vec::new();
        for i in 0..60 {
            let x: f64 = rng.random::<f64>() * 10.0 - 5.0;
            pivots.push(x);
            insert(&mut p, &[x], i % 2);
        }
        let mut probes = vec![-1e9, 1e9];
        for &x in &pivots {
            probes.extend([x, x.next_up(), x.next_down()]);
        }
        for &z in &probes {
            // Exactly one leaf contains z: count leaves whose interval holds it.
            let mut containing = 0;
            for leaf in p.node_ids().filter(|&id| p.node(id).is_leaf()) {
                if interval_contains(&p, leaf, z) {
                    containing += 1;
                }
            }
            assert_eq!(containing, 1, "probe {z}");
        }
    }

    fn interval_contains(p: &Partition<f64>, target: NodeId, z: f64) -> bool {
        // Walk from the root, recording constraints along the path to target.
        fn walk(p: &Partition<f64>, id: NodeId, target: NodeId, lo: f64, hi: f64, z: f64) -> Option<bool> {
            if id == target {
                return Some(z > lo && z <= hi);
            }
            let s = p.node(id).split()?;
            walk(p, s.left, target, lo, hi.min(s.value), z)
                .or_else(|| walk(p, s.right, target, lo.max(s.value), hi, z))
        }
        walk(p, NodeId::ROOT, target, f64::NEG_INFINITY, f64::INFINITY, z).unwrap_or(false)
    }

    #[test]
    fn duplicates_route_left_forever() {
        let mut p = partition(2, 8);
        for i in 0..20 {
            let out = insert(&mut p, &[0.5, 0.5], i % 2);
            assert_eq!(p.node(out.left).depth(), i as u32 + 1);
        }
        let max_depth = p.node_ids().map(|id| p.node(id).depth()).max().unwrap();
        assert_eq!(max_depth, 20);
    }

    #[test]
    fn axis_draws_are_reproducible() {
        let mut a = partition(5, 123);
        let mut b = partition(5, 123);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.random()).collect();
            insert(&mut a, &x, i % 2);
            insert(&mut b, &x, i % 2);
        }
        for id in a.node_ids() {
            assert_eq!(a.node(id).split(), b.node(id).split());
        }
    }
}
