//! Brute-force oracles and diagnostics.
//!
//! Nothing here is used by the online predictor. The oracles read only the
//! geometry of a realized partition (split axes, values and children) plus
//! the raw stream, and re-derive every cell's subsequence and splitting
//! index from scratch. Values are computed in any [`Field`]; with
//! [`Exact`](crate::Exact) they carry no rounding at all.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kt::Alphabet;
use crate::predictor::AlphaSchedule;
use crate::scalar::{Field, Real};
use crate::tree::{NodeId, Partition};

/// Longest cell subsequence `cts_direct` will enumerate.
pub const CTS_DIRECT_LIMIT: usize = 8;

/// Cell subsequences and splitting indices of a realized tree.
#[derive(Clone, Debug)]
pub struct Chronology {
    members: Vec<Vec<usize>>,
    tau: Vec<Option<usize>>,
    children: Vec<Option<(NodeId, NodeId)>>,
}

impl Chronology {
    /// Derives the chronology of `partition` as built from `points`, in order.
    ///
    /// A cell created when its parent was split by sample `s` is itself
    /// split by the first sample after `s` that falls in it.
    pub fn derive<F: Real>(partition: &Partition<F>, points: &[Vec<F>]) -> Result<Self> {
        let nodes = partition.node_count();
        let mut members = vec![Vec::new(); nodes];
        let mut children = vec![None; nodes];
        for id in partition.node_ids() {
            if let Some(s) = partition.node(id).split() {
                children[id.index()] = Some((s.left, s.right));
            }
        }
        for (g, z) in points.iter().enumerate() {
            partition.check_dim(z)?;
            let mut id = NodeId::ROOT;
            loop {
                members[id.index()].push(g);
                match partition.node(id).split() {
                    None => break,
                    Some(s) => {
                        id = if z[s.axis] <= s.value { s.left } else { s.right };
                    }
                }
            }
        }

        let mut tau = vec![None; nodes];
        // (node, global index of the sample that created it, or None for the root)
        let mut stack = vec![(NodeId::ROOT, None::<usize>)];
        while let Some((id, created_by)) = stack.pop() {
            let list = &members[id.index()];
            let splitter = list
                .iter()
                .position(|&g| created_by.is_none_or(|c| g > c));
            match (partition.node(id).split(), splitter) {
                (Some(s), Some(pos)) => {
                    let g = list[pos];
                    if points[g][s.axis] != s.value {
                        return Err(inconsistent(id));
                    }
                    tau[id.index()] = Some(pos + 1);
                    stack.push((s.left, Some(g)));
                    stack.push((s.right, Some(g)));
                }
                (None, None) => {}
                _ => return Err(inconsistent(id)),
            }
        }
        Ok(Chronology {
            members,
            tau,
            children,
        })
    }

    /// Global indices of the samples in the cell, in arrival order.
    pub fn members(&self, id: NodeId) -> &[usize] {
        &self.members[id.index()]
    }

    /// 1-based splitting index within the cell subsequence; `None` if unsplit.
    pub fn tau(&self, id: NodeId) -> Option<usize> {
        self.tau[id.index()]
    }

    pub fn children(&self, id: NodeId) -> Option<(NodeId, NodeId)> {
        self.children[id.index()]
    }

    pub fn node_count(&self) -> usize {
        self.members.len()
    }

    fn labels_of(&self, id: NodeId, labels: &[usize], len: usize) -> Vec<usize> {
        self.members(id)[..len].iter().map(|&g| labels[g]).collect()
    }

    /// How many of the first `len` samples of `id` fall in `child`.
    fn count_in(&self, id: NodeId, len: usize, child: NodeId) -> usize {
        let cut = self.members(id)[..len].last().copied();
        match cut {
            None => 0,
            Some(last) => self.members(child).partition_point(|&g| g <= last),
        }
    }
}

fn inconsistent(id: NodeId) -> Error {
    Error::InvalidParameter(format!(
        "stream does not reproduce the partition at node {}",
        id.index()
    ))
}

/// KT block probability in closed form:
/// `Π_s Π_{i<c_s} (2i+1) / Π_{i<n} (2i+k)`.
pub fn kt_closed_form<S: Field>(labels: &[usize], alphabet: Alphabet) -> S {
    let k = alphabet.size();
    let mut counts = vec![0u64; k];
    for &l in labels {
        counts[l] += 1;
    }
    let mut num = S::one();
    for &c in &counts {
        for i in 0..c {
            num = num * S::ratio(2 * i + 1, 1);
        }
    }
    let mut den = S::one();
    for i in 0..labels.len() as u64 {
        den = den * S::ratio(2 * i + k as u64, 1);
    }
    num / den
}

/// Switch-prior factor `α_m` as a field element.
fn alpha<S: Field>(schedule: AlphaSchedule, m: usize) -> S {
    match schedule {
        AlphaSchedule::Switch => S::ratio(1, m as u64),
        AlphaSchedule::Ctw => S::zero(),
    }
}

/// Settings shared by the switching oracles.
#[derive(Clone, Debug)]
pub struct OracleSpec<'a, S> {
    pub alphabet: Alphabet,
    pub schedule: AlphaSchedule,
    /// Fixed root model replacing KT at the root cell, if any.
    pub root_prior: Option<&'a [S]>,
}

/// Joint probability of the labels in `node`'s cell by direct enumeration
/// of all model-index sequences against the switch prior.
pub fn cts_direct<S: Field>(
    chron: &Chronology,
    node: NodeId,
    labels: &[usize],
    spec: &OracleSpec<'_, S>,
) -> Result<S> {
    let prefixes = cts_prefix_joints(chron, node, labels, spec)?;
    Ok(prefixes.last().expect("prefix 0 always present").clone())
}

/// `[Q(first t samples of the cell) for t in 0..=n]`.
fn cts_prefix_joints<S: Field>(
    chron: &Chronology,
    node: NodeId,
    labels: &[usize],
    spec: &OracleSpec<'_, S>,
) -> Result<Vec<S>> {
    let n = chron.members(node).len();
    if n > CTS_DIRECT_LIMIT {
        return Err(Error::OracleTooLarge {
            len: n,
            limit: CTS_DIRECT_LIMIT,
        });
    }
    let own = chron.labels_of(node, labels, n);

    // Model a: the cell's own estimator, per position.
    let phi_a: Vec<S> = (1..=n)
        .map(|k| match (node == NodeId::ROOT, spec.root_prior) {
            (true, Some(theta)) => theta[own[k - 1]].clone(),
            _ => kt_closed_form::<S>(&own[..k], spec.alphabet) / kt_closed_form::<S>(&own[..k - 1], spec.alphabet),
        })
        .collect();

    // Model b: KT before the split, then the child's predictive ratio.
    let tau = chron.tau(node);
    let child_prefixes = match chron.children(node) {
        Some((l, r)) => Some((
            (l, cts_prefix_joints(chron, l, labels, spec)?),
            (r, cts_prefix_joints(chron, r, labels, spec)?),
        )),
        None => None,
    };
    let phi_b: Vec<S> = (1..=n)
        .map(|k| match (tau, &child_prefixes) {
            (Some(t), Some(((l, ql), (r, qr)))) if k >= t => {
                let g = chron.members(node)[k - 1];
                let (child, q) = if chron.members(*l).binary_search(&g).is_ok() {
                    (*l, ql)
                } else {
                    (*r, qr)
                };
                let c = chron.count_in(node, k, child);
                q[c].clone() / q[c - 1].clone()
            }
            _ => kt_closed_form::<S>(&own[..k], spec.alphabet) / kt_closed_form::<S>(&own[..k - 1], spec.alphabet),
        })
        .collect();

    let mut out = Vec::with_capacity(n + 1);
    out.push(S::one());
    for t in 1..=n {
        let mut total = S::zero();
        for mask in 0u32..(1 << t) {
            // bit k set: model b at position k + 1
            let mut w = S::ratio(1, 2);
            let mut prod = S::one();
            for k in 0..t {
                let is_b = mask >> k & 1 == 1;
                if k > 0 {
                    let same = is_b == (mask >> (k - 1) & 1 == 1);
                    let a = alpha::<S>(spec.schedule, k + 1);
                    w = w * if same { S::one() - a } else { a };
                }
                prod = prod * if is_b { phi_b[k].clone() } else { phi_a[k].clone() };
            }
            total = total + w * prod;
        }
        out.push(total);
    }
    Ok(out)
}

/// Chronological context-tree weighting joint probability of `node`'s cell:
/// `½·KT(all) + ½·KT(prefix before τ)·Π_j Q(child_j) / KT(child_j's migrated prefix)`.
pub fn ctw_direct<S: Field>(chron: &Chronology, node: NodeId, labels: &[usize], alphabet: Alphabet) -> S {
    let n = chron.members(node).len();
    let all = kt_closed_form::<S>(&chron.labels_of(node, labels, n), alphabet);
    let (Some(tau), Some((l, r))) = (chron.tau(node), chron.children(node)) else {
        return all;
    };
    let prefix = tau - 1;
    let mut split = kt_closed_form::<S>(&chron.labels_of(node, labels, prefix), alphabet);
    for child in [l, r] {
        let migrated = chron.count_in(node, prefix, child);
        split = split * ctw_direct(chron, child, labels, alphabet)
            / kt_closed_form::<S>(&chron.labels_of(child, labels, migrated), alphabet);
    }
    S::ratio(1, 2) * (all + split)
}

/// Per-node weights `(w_a, w_b)` after each sample, computed by running the
/// original (non-delayed) switching updates on the final tree from the
/// start: every cell exists before any sample arrives and starts at ½, ½.
pub fn upfront_weight_trajectory<S: Field>(
    chron: &Chronology,
    labels: &[usize],
    spec: &OracleSpec<'_, S>,
) -> Vec<Vec<(S, S)>> {
    let nodes = chron.node_count();
    let half = S::ratio(1, 2);
    let mut w: Vec<(S, S)> = vec![(half.clone(), half); nodes];
    // position within each cell's subsequence of the next sample
    let mut seen = vec![0usize; nodes];
    let mut trajectory = Vec::with_capacity(labels.len());
    for (g, &label) in labels.iter().enumerate() {
        let mut path = vec![NodeId::ROOT];
        while let Some((l, r)) = chron.children(*path.last().expect("non-empty")) {
            let next = if chron.members(l).binary_search(&g).is_ok() { l } else { r };
            path.push(next);
        }
        let mut child_pred: Option<S> = None;
        for &id in path.iter().rev() {
            let i = id.index();
            let k = seen[i] + 1;
            let own = chron.labels_of(id, labels, k);
            let kt = kt_closed_form::<S>(&own, spec.alphabet) / kt_closed_form::<S>(&own[..k - 1], spec.alphabet);
            let qa = match (id == NodeId::ROOT, spec.root_prior) {
                (true, Some(theta)) => theta[label].clone(),
                _ => kt.clone(),
            };
            let qb = match (chron.tau(id), &child_pred) {
                (Some(t), Some(p)) if k >= t => p.clone(),
                _ => kt,
            };
            let (wa, wb) = w[i].clone();
            let xa = wa.clone() * qa;
            let xb = wb.clone() * qb;
            let joint = xa.clone() + xb.clone();
            child_pred = Some(joint.clone() / (wa + wb));
            let a = alpha::<S>(spec.schedule, k + 1);
            let beta = S::one() - a.clone() - a.clone();
            w[i] = (
                a.clone() * joint.clone() + beta.clone() * xa,
                a * joint + beta * xb,
            );
            seen[i] = k;
        }
        trajectory.push(w.clone());
    }
    trajectory
}

/// A pruning of the realized tree: the set of nodes kept as internal.
/// Its leaves form the partition `A`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pruning {
    internal: BTreeSet<NodeId>,
}

impl Pruning {
    pub fn root_only() -> Self {
        Pruning {
            internal: BTreeSet::new(),
        }
    }

    /// Validates that every kept node is internal in the realized tree and
    /// that its parent is kept too.
    pub fn new(chron: &Chronology, internal: BTreeSet<NodeId>) -> Result<Self> {
        for &id in &internal {
            if chron.children(id).is_none() {
                return Err(Error::InvalidParameter(format!(
                    "node {} is a leaf of the realized tree",
                    id.index()
                )));
            }
        }
        let mut reached = BTreeSet::new();
        let mut stack = vec![NodeId::ROOT];
        while let Some(id) = stack.pop() {
            if internal.contains(&id) {
                reached.insert(id);
                let (l, r) = chron.children(id).expect("checked above");
                stack.extend([l, r]);
            }
        }
        if reached != internal {
            return Err(Error::InvalidParameter("pruning is not rooted".into()));
        }
        Ok(Pruning { internal })
    }

    /// Random rooted pruning: each reachable internal node is kept with
    /// probability `keep`.
    pub fn random<R: Rng>(chron: &Chronology, keep: f64, rng: &mut R) -> Self {
        let mut internal = BTreeSet::new();
        let mut stack = vec![NodeId::ROOT];
        while let Some(id) = stack.pop() {
            if let Some((l, r)) = chron.children(id) {
                if rng.random::<f64>() < keep {
                    internal.insert(id);
                    stack.extend([l, r]);
                }
            }
        }
        Pruning { internal }
    }

    pub fn internal(&self) -> &BTreeSet<NodeId> {
        &self.internal
    }

    /// Cells of the partition `A`.
    pub fn cells(&self, chron: &Chronology) -> Vec<NodeId> {
        let mut cells = Vec::new();
        let mut stack = vec![NodeId::ROOT];
        while let Some(id) = stack.pop() {
            if self.internal.contains(&id) {
                let (l, r) = chron.children(id).expect("validated");
                stack.extend([r, l]);
            } else {
                cells.push(id);
            }
        }
        cells
    }
}

/// Number of nodes of the pruned tree representing `A`.
pub fn gamma_a(pruning: &Pruning, chron: &Chronology) -> usize {
    pruning.internal.len() + pruning.cells(chron).len()
}

/// Penalty function, in bits: `x·log|Λ|` below 1, `((|Λ|-1)/2)·log x + log|Λ|` above.
pub fn zeta(x: f64, alphabet_size: usize) -> f64 {
    let k = alphabet_size as f64;
    if x < 1.0 {
        x * k.log2()
    } else {
        (k - 1.0) / 2.0 * x.log2() + k.log2()
    }
}

/// A conditional label law constant on each cell of a pruning.
#[derive(Clone, Debug)]
pub struct PiecewiseMultinomial {
    pub cells: Vec<NodeId>,
    pub theta: Vec<Vec<f64>>,
}

impl PiecewiseMultinomial {
    /// Per-cell empirical frequencies (uniform on empty cells).
    pub fn maximum_likelihood(chron: &Chronology, pruning: &Pruning, labels: &[usize], alphabet: Alphabet) -> Self {
        let k = alphabet.size();
        let cells = pruning.cells(chron);
        let theta = cells
            .iter()
            .map(|&c| {
                let m = chron.members(c);
                let mut row = vec![0.0; k];
                for &g in m {
                    row[labels[g]] += 1.0;
                }
                if m.is_empty() {
                    return vec![1.0 / k as f64; k];
                }
                row.iter().map(|&x| x / m.len() as f64).collect()
            })
            .collect();
        PiecewiseMultinomial { cells, theta }
    }

    /// `-log2` probability of the labels.
    pub fn codelength(&self, chron: &Chronology, labels: &[usize]) -> f64 {
        self.cells
            .iter()
            .zip(&self.theta)
            .flat_map(|(&c, row)| chron.members(c).iter().map(move |&g| -row[labels[g]].log2()))
            .sum()
    }
}

/// Terms of the redundancy bound of the weighting variant for one pruning,
/// with the chronology constant computed explicitly. All in bits.
#[derive(Clone, Debug)]
pub struct PenaltyTerms {
    pub gamma_a: usize,
    pub cells: usize,
    /// `|A|·ζ(n/|A|)`.
    pub zeta_value: f64,
    /// `Σ_{C∈A} -log2 KT(C)`.
    pub kt_codelength: f64,
    /// `-log2` of the best piecewise multinomial on `A`.
    pub ml_codelength: f64,
    /// `-log2 κ`: `Σ_{internal Λ} [-log2 KT(prefix before τ) + Σ_j log2 KT(child_j migrated)]`.
    pub chronology: f64,
}

impl PenaltyTerms {
    pub fn compute(chron: &Chronology, pruning: &Pruning, labels: &[usize], alphabet: Alphabet) -> Self {
        let cells = pruning.cells(chron);
        let n = labels.len();
        let log2 = |x: f64| x.log2();
        let kt_codelength = cells
            .iter()
            .map(|&c| {
                let len = chron.members(c).len();
                -log2(kt_closed_form::<f64>(&chron.labels_of(c, labels, len), alphabet))
            })
            .sum();
        let mut chronology = 0.0;
        for &id in &pruning.internal {
            let tau = chron.tau(id).expect("internal nodes are split");
            let (l, r) = chron.children(id).expect("internal");
            chronology -= log2(kt_closed_form::<f64>(&chron.labels_of(id, labels, tau - 1), alphabet));
            for child in [l, r] {
                let migrated = chron.count_in(id, tau - 1, child);
                chronology += log2(kt_closed_form::<f64>(&chron.labels_of(child, labels, migrated), alphabet));
            }
        }
        let ml = PiecewiseMultinomial::maximum_likelihood(chron, pruning, labels, alphabet);
        PenaltyTerms {
            gamma_a: pruning.internal.len() + cells.len(),
            cells: cells.len(),
            zeta_value: cells.len() as f64 * zeta(n as f64 / cells.len() as f64, alphabet.size()),
            kt_codelength,
            ml_codelength: ml.codelength(chron, labels),
            chronology,
        }
    }

    /// Upper bound on `-log2 P_ctw` through the per-cell KT code lengths.
    pub fn kt_bound(&self) -> f64 {
        self.kt_codelength + self.gamma_a as f64 + self.chronology
    }

    /// Upper bound on `-log2 P_ctw` against the best piecewise multinomial.
    pub fn full_bound(&self) -> f64 {
        self.ml_codelength + self.zeta_value + self.gamma_a as f64 + self.chronology
    }
}

/// Insertion-depth profile: the depth of the leaf each sample split.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthStats {
    pub mean: f64,
    pub max: u32,
    /// `histogram[d]` = number of insertions at depth `d`.
    pub histogram: Vec<usize>,
}

pub fn depth_stats<F: Real>(partition: &Partition<F>) -> DepthStats {
    let mut histogram = Vec::new();
    let mut sum = 0u64;
    let mut count = 0u64;
    for id in partition.node_ids() {
        let node = partition.node(id);
        if node.is_leaf() {
            continue;
        }
        let d = node.depth() as usize;
        if histogram.len() <= d {
            histogram.resize(d + 1, 0);
        }
        histogram[d] += 1;
        sum += d as u64;
        count += 1;
    }
    DepthStats {
        mean: if count == 0 { 0.0 } else { sum as f64 / count as f64 },
        max: histogram.len().saturating_sub(1) as u32,
        histogram,
    }
}

/// Mean diameter of the leaf cells containing `probes`, with every cell
/// clipped to the box `[lo, hi]`.
pub fn diameter_stats<F: Real>(partition: &Partition<F>, probes: &[Vec<F>], lo: &[F], hi: &[F]) -> Result<f64> {
    partition.check_dim(lo)?;
    partition.check_dim(hi)?;
    if probes.is_empty() {
        return Err(Error::InvalidParameter("no probe points".into()));
    }
    let mut total = 0.0;
    for z in probes {
        partition.check_dim(z)?;
        let (mut a, mut b) = (lo.to_vec(), hi.to_vec());
        let mut id = NodeId::ROOT;
        while let Some(s) = partition.node(id).split() {
            if z[s.axis] <= s.value {
                b[s.axis] = b[s.axis].min(s.value);
                id = s.left;
            } else {
                a[s.axis] = a[s.axis].max(s.value);
                id = s.right;
            }
        }
        let sq: f64 = a
            .iter()
            .zip(&b)
            .map(|(&x, &y)| {
                let w = (y - x).max(F::zero()).to_f64().unwrap_or(0.0);
                w * w
            })
            .sum();
        total += sq.sqrt();
    }
    Ok(total / probes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{KdSwitchTree, TreeConfig};
    use crate::Exact;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grow(points: &[Vec<f64>], labels: &[usize], seed: u64) -> KdSwitchTree<f64> {
        let mut t = KdSwitchTree::from_seed(TreeConfig::new(points[0].len(), Alphabet::BINARY), seed).unwrap();
        for (z, &l) in points.iter().zip(labels) {
            t.update(z, l).unwrap();
        }
        t
    }

    fn spec(schedule: AlphaSchedule) -> OracleSpec<'static, Exact> {
        OracleSpec {
            alphabet: Alphabet::BINARY,
            schedule,
            root_prior: None,
        }
    }

    #[test]
    fn kt_closed_form_examples() {
        let b = Alphabet::BINARY;
        assert_eq!(kt_closed_form::<Exact>(&[], b), Exact::ratio(1, 1));
        assert_eq!(kt_closed_form::<Exact>(&[0, 1], b), Exact::ratio(1, 8));
        assert_eq!(kt_closed_form::<Exact>(&[0, 0], b), Exact::ratio(3, 8));
    }

    #[test]
    fn figure_chronology() {
        // z1 splits the root, z2 lands in the other cell and splits it.
        let points = vec![vec![0.3], vec![0.8]];
        let t = grow(&points, &[0, 1], 0);
        let c = Chronology::derive(t.partition(), &points).unwrap();
        assert_eq!(c.tau(NodeId::ROOT), Some(1));
        let (l, r) = c.children(NodeId::ROOT).unwrap();
        assert_eq!(c.tau(l), None);
        assert_eq!(c.tau(r), Some(1));
        let (rl, rr) = c.children(r).unwrap();
        assert_eq!((c.tau(rl), c.tau(rr)), (None, None));
        assert_eq!(c.members(r), &[1]);
    }

    #[test]
    fn chronology_rejects_foreign_stream() {
        let points = vec![vec![0.3], vec![0.8]];
        let t = grow(&points, &[0, 1], 0);
        assert!(Chronology::derive(t.partition(), &[vec![0.3], vec![0.1]]).is_err());
    }

    #[test]
    fn empty_and_single_sample_oracles() {
        let t = KdSwitchTree::<f64>::from_seed(TreeConfig::new(1, Alphabet::BINARY), 0).unwrap();
        let c = Chronology::derive(t.partition(), &[]).unwrap();
        let q: Exact = cts_direct(&c, NodeId::ROOT, &[], &spec(AlphaSchedule::Switch)).unwrap();
        assert_eq!(q, Exact::ratio(1, 1));

        let t = grow(&[vec![0.5]], &[1], 0);
        let c = Chronology::derive(t.partition(), &[vec![0.5]]).unwrap();
        let q: Exact = cts_direct(&c, NodeId::ROOT, &[1], &spec(AlphaSchedule::Switch)).unwrap();
        assert_eq!(q, Exact::ratio(1, 2));
        assert_eq!(ctw_direct::<Exact>(&c, NodeId::ROOT, &[1], Alphabet::BINARY), Exact::ratio(1, 2));
    }

    #[test]
    fn oracle_refuses_long_subsequences() {
        let points: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64]).collect();
        let labels = vec![0; 9];
        let t = grow(&points, &labels, 0);
        let c = Chronology::derive(t.partition(), &points).unwrap();
        let r = cts_direct::<f64>(&c, NodeId::ROOT, &labels, &OracleSpec {
            alphabet: Alphabet::BINARY,
            schedule: AlphaSchedule::Switch,
            root_prior: None,
        });
        assert_eq!(r, Err(Error::OracleTooLarge { len: 9, limit: 8 }));
    }

    #[test]
    fn ctw_unsplit_cell_is_kt() {
        // Hand-built: a leaf's CTW value is its KT block probability, and a
        // cell split at its first sample is ½KT + ½·Π children.
        let points = vec![vec![0.5], vec![0.1]];
        let labels = [0, 1];
        let t = grow(&points, &labels, 0);
        let c = Chronology::derive(t.partition(), &points).unwrap();
        let (l, r) = c.children(NodeId::ROOT).unwrap();
        let b = Alphabet::BINARY;
        assert_eq!(ctw_direct::<Exact>(&c, r, &labels, b), Exact::ratio(1, 1));
        let left = ctw_direct::<Exact>(&c, l, &labels, b);
        let expect = Exact::ratio(1, 2) * (kt_closed_form::<Exact>(&labels, b) + left.clone());
        assert_eq!(ctw_direct::<Exact>(&c, NodeId::ROOT, &labels, b), expect);
        // Left cell holds both samples and split at its second (τ = 2).
        assert_eq!(c.tau(l), Some(2));
    }

    #[test]
    fn ctw_equals_enumeration_with_zero_switch_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..30 {
            let n = 1 + trial % 8;
            let points: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
            let t = grow(&points, &labels, trial as u64);
            let c = Chronology::derive(t.partition(), &points).unwrap();
            let direct: Exact = cts_direct(&c, NodeId::ROOT, &labels, &spec(AlphaSchedule::Ctw)).unwrap();
            assert_eq!(direct, ctw_direct::<Exact>(&c, NodeId::ROOT, &labels, Alphabet::BINARY));
        }
    }

    #[test]
    fn zeta_examples() {
        assert!((zeta(0.5, 2) - 0.5).abs() < 1e-15);
        assert!((zeta(1.0, 2) - 1.0).abs() < 1e-15);
        for k in 2..6 {
            let below = zeta(1.0 - 1e-12, k);
            assert!((below - zeta(1.0, k)).abs() < 1e-9);
            assert!((zeta(1.0, k) - (k as f64).log2()).abs() < 1e-15);
        }
    }

    #[test]
    fn gamma_counts_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let points: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random(), rng.random()]).collect();
        let labels = vec![0; 40];
        let t = grow(&points, &labels, 5);
        let c = Chronology::derive(t.partition(), &points).unwrap();
        assert_eq!(gamma_a(&Pruning::root_only(), &c), 1);
        let one = Pruning::new(&c, [NodeId::ROOT].into()).unwrap();
        assert_eq!(gamma_a(&one, &c), 3);
        for _ in 0..20 {
            let p = Pruning::random(&c, 0.7, &mut rng);
            assert_eq!(gamma_a(&p, &c), 2 * p.internal().len() + 1);
        }
        let (l, _) = c.children(NodeId::ROOT).unwrap();
        assert!(Pruning::new(&c, [l].into()).is_err());
    }

    #[test]
    fn depth_of_small_and_degenerate_streams() {
        let t = grow(&[vec![0.1, 0.2]], &[0], 0);
        let s = depth_stats(t.partition());
        assert_eq!((s.mean, s.max), (0.0, 0));
        let n = 50;
        let dup: Vec<Vec<f64>> = vec![vec![0.5, 0.5]; n];
        let t = grow(&dup, &vec![0; n], 0);
        assert_eq!(depth_stats(t.partition()).max, n as u32 - 1);
    }

    #[test]
    fn diameter_of_fresh_unit_square() {
        let t = KdSwitchTree::<f64>::from_seed(TreeConfig::new(2, Alphabet::BINARY), 0).unwrap();
        let d = diameter_stats(t.partition(), &[vec![0.3, 0.3]], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }
}
