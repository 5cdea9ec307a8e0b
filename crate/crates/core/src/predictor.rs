//! Chronological context-tree switching over the k-d partition.
//!
//! Every node keeps two weights, `a` for "predict with the node's own
//! KT estimator" and `b` for "delegate to the child containing the point".
//! Their sum is the node's joint probability of the labels observed in its
//! cell. They are stored as that log-joint plus the two log-shares
//! `ln(w/(w_a+w_b))`, so predictive ratios only ever involve quantities of
//! order one and the joint picks up a single rounding per update.
//!
//! A sample is processed in two phases:
//!
//! 1. [`KdSwitchTree::process_features`] routes the point, splits the leaf
//!    it lands in and initializes both children with `½·KT` of the labels
//!    that migrated into them.
//! 2. [`KdSwitchTree::observe_label`] emits the predictive probability of
//!    the label and updates the weights bottom-up along the path.
//!
//! A node that is still a leaf only ever multiplies both weights by its KT
//! predictive; internal nodes mix the two weights with the switch rate
//! `α = 1/(m+1)` (`m` the node-local sample count) or `α = 0` for the
//! weighting (CTW) variant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kt::{kt_block_logprob, kt_ratio, Alphabet};
use crate::scalar::Real;
use crate::tree::{NodeId, Partition, SampleId};

/// Switch-rate schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum AlphaSchedule {
    /// `α_m = 1/m`.
    #[default]
    Switch,
    /// `α_m = 0`: a fixed Bayesian mixture over prunings.
    Ctw,
}

impl AlphaSchedule {
    /// Switch probability `α_m` used for the transition into the `m`-th
    /// model index (`m >= 2`; the first index has prior ½ regardless).
    #[inline]
    pub fn alpha(self, m: u64) -> f64 {
        debug_assert!(m >= 2);
        match self {
            AlphaSchedule::Switch => 1.0 / m as f64,
            AlphaSchedule::Ctw => 0.0,
        }
    }
}

/// Label marginal assumed by the root node.
#[derive(Clone, Debug, PartialEq)]
pub enum LabelPrior<F> {
    /// The root's own model is the KT estimator.
    Unknown,
    /// The root's own model is the fixed multinomial `θ`.
    Known(Vec<F>),
}

impl<F: Real> LabelPrior<F> {
    /// Two-label prior `(θ0, 1 - θ0)`.
    pub fn bernoulli(theta0: F) -> Result<Self> {
        let prior = LabelPrior::Known(vec![theta0, F::one() - theta0]);
        prior.validate(Alphabet::BINARY)?;
        Ok(prior)
    }

    fn validate(&self, alphabet: Alphabet) -> Result<()> {
        let LabelPrior::Known(theta) = self else {
            return Ok(());
        };
        if theta.len() != alphabet.size() {
            return Err(Error::InvalidPrior(format!(
                "{} probabilities for an alphabet of size {}",
                theta.len(),
                alphabet.size()
            )));
        }
        if theta.iter().any(|&t| !(t > F::zero() && t < F::one())) {
            return Err(Error::InvalidPrior("entries must lie in (0, 1)".into()));
        }
        let sum = theta.iter().fold(F::zero(), |acc, &t| acc + t);
        if (sum - F::one()).abs() > F::of(1e-9) {
            return Err(Error::InvalidPrior(format!("entries sum to {sum}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeConfig<F> {
    pub dim: usize,
    pub alphabet: Alphabet,
    pub schedule: AlphaSchedule,
    pub label_prior: LabelPrior<F>,
}

impl<F: Real> TreeConfig<F> {
    pub fn new(dim: usize, alphabet: Alphabet) -> Self {
        TreeConfig {
            dim,
            alphabet,
            schedule: AlphaSchedule::Switch,
            label_prior: LabelPrior::Unknown,
        }
    }

    pub fn schedule(mut self, schedule: AlphaSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn label_prior(mut self, prior: LabelPrior<F>) -> Self {
        self.label_prior = prior;
        self
    }
}

/// Conditional distribution over the alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveVector<F>(Vec<F>);

impl<F: Real> PredictiveVector<F> {
    pub fn new(probs: Vec<F>) -> Self {
        PredictiveVector(probs)
    }

    pub fn probs(&self) -> &[F] {
        &self.0
    }

    #[inline]
    pub fn get(&self, symbol: usize) -> F {
        self.0[symbol]
    }

    pub fn sum(&self) -> F {
        self.0.iter().fold(F::zero(), |acc, &p| acc + p)
    }

    pub fn into_inner(self) -> Vec<F> {
        self.0
    }
}

/// Read-only view of one node's switching state.
#[derive(Clone, Copy, Debug)]
pub struct NodeState<'a, F> {
    pub log_wa: F,
    pub log_wb: F,
    /// `ln(w_a + w_b)`: joint log-probability of the cell's labels.
    pub log_joint: F,
    pub counts: &'a [u64],
    /// Number of labeled samples observed in the cell.
    pub m: u64,
}

#[derive(Clone, Debug)]
struct Pending {
    path: Vec<NodeId>,
    pivot: SampleId,
}

/// One randomized k-d tree carrying the switching distribution.
#[derive(Clone, Debug)]
pub struct KdSwitchTree<F> {
    partition: Partition<F>,
    alphabet: Alphabet,
    schedule: AlphaSchedule,
    prior: LabelPrior<F>,
    log_joint: Vec<F>,
    log_share_a: Vec<F>,
    log_share_b: Vec<F>,
    counts: Vec<u64>,
    totals: Vec<u64>,
    cumulative: F,
    n: u64,
    pending: Option<Pending>,
    scratch: Vec<NodeId>,
}

impl<F: Real> KdSwitchTree<F> {
    pub fn new(config: TreeConfig<F>, rng: ChaCha8Rng) -> Result<Self> {
        config.label_prior.validate(config.alphabet)?;
        let half = F::of(0.5).ln();
        Ok(KdSwitchTree {
            partition: Partition::new(config.dim, rng)?,
            alphabet: config.alphabet,
            schedule: config.schedule,
            prior: config.label_prior,
            log_joint: vec![F::zero()],
            log_share_a: vec![half],
            log_share_b: vec![half],
            counts: vec![0; config.alphabet.size()],
            totals: vec![0],
            cumulative: F::zero(),
            n: 0,
            pending: None,
            scratch: Vec::new(),
        })
    }

    pub fn from_seed(config: TreeConfig<F>, seed: u64) -> Result<Self> {
        Self::new(config, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn partition(&self) -> &Partition<F> {
        &self.partition
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn schedule(&self) -> AlphaSchedule {
        self.schedule
    }

    pub fn label_prior(&self) -> &LabelPrior<F> {
        &self.prior
    }

    /// Sum of the natural-log probabilities emitted for the realized labels.
    pub fn cumulative_logprob(&self) -> F {
        self.cumulative
    }

    /// Number of labeled samples observed.
    pub fn samples_seen(&self) -> u64 {
        self.n
    }

    pub fn node_state(&self, id: NodeId) -> NodeState<'_, F> {
        let i = id.index();
        let k = self.alphabet.size();
        NodeState {
            log_wa: self.log_joint[i] + self.log_share_a[i],
            log_wb: self.log_joint[i] + self.log_share_b[i],
            log_joint: self.log_joint[i],
            counts: &self.counts[i * k..(i + 1) * k],
            m: self.totals[i],
        }
    }

    /// The path of the sample awaiting its label, if any.
    pub fn pending_path(&self) -> Option<&[NodeId]> {
        self.pending.as_ref().map(|p| p.path.as_slice())
    }

    /// Root-to-leaf path of the cell currently containing `point`.
    pub fn route(&self, point: &[F]) -> Result<Vec<NodeId>> {
        self.partition.route(point)
    }

    /// Routes `point`, splits the leaf it reaches and initializes the two
    /// new cells. Returns the root-to-new-leaf path of the point.
    pub fn process_features(&mut self, point: &[F]) -> Result<&[NodeId]> {
        if self.pending.is_some() {
            return Err(Error::SamplePending);
        }
        let mut path = std::mem::take(&mut self.scratch);
        self.partition.route_into(point, &mut path)?;
        let leaf = *path.last().expect("paths are never empty");
        let out = self.partition.split_leaf(leaf, point)?;
        for child in [out.left, out.right] {
            self.init_child_weights(child);
        }
        path.push(out.pivot_child);
        self.pending = Some(Pending {
            path,
            pivot: out.pivot,
        });
        Ok(self.pending_path().expect("just set"))
    }

    /// Starts a fresh child from the labels that migrated into it:
    /// `w_a = w_b = ½·KT(labels)`.
    fn init_child_weights(&mut self, child: NodeId) {
        let k = self.alphabet.size();
        let labels: Vec<usize> = self.partition.stored_labels(child).collect();
        let block = kt_block_logprob::<F>(&labels, self.alphabet).expect("stored labels are in range");
        let half = F::of(0.5).ln();
        debug_assert_eq!(child.index(), self.log_joint.len());
        self.log_joint.push(block);
        self.log_share_a.push(half);
        self.log_share_b.push(half);
        let base = self.counts.len();
        self.counts.resize(base + k, 0);
        for &l in &labels {
            self.counts[base + l] += 1;
        }
        self.totals.push(labels.len() as u64);
    }

    /// Probability of `symbol` under the node's own model: KT, or the fixed
    /// prior at the root when one is configured.
    #[inline]
    fn own_predictive(&self, id: NodeId, symbol: usize) -> F {
        if id == NodeId::ROOT {
            if let LabelPrior::Known(theta) = &self.prior {
                return theta[symbol];
            }
        }
        let k = self.alphabet.size();
        let i = id.index();
        kt_ratio(self.counts[i * k + symbol], self.totals[i], k)
    }

    /// Predictive distribution at the root for a point whose root-to-leaf
    /// path is `path` (as produced by [`route`](Self::route) or
    /// [`process_features`](Self::process_features)).
    pub fn predict_distribution(&self, path: &[NodeId]) -> PredictiveVector<F> {
        let k = self.alphabet.size();
        let (&leaf, inner) = path.split_last().expect("paths are never empty");
        let mut probs: Vec<F> = (0..k).map(|s| self.own_predictive(leaf, s)).collect();
        for &id in inner.iter().rev() {
            let (pa, pb) = self.mixing(id);
            for (s, p) in probs.iter_mut().enumerate() {
                *p = pa * self.own_predictive(id, s) + pb * *p;
            }
        }
        PredictiveVector(probs)
    }

    /// Posterior share of each model at a node: `w_a/(w_a+w_b)`, `w_b/(w_a+w_b)`.
    #[inline]
    fn mixing(&self, id: NodeId) -> (F, F) {
        let i = id.index();
        (self.log_share_a[i].exp(), self.log_share_b[i].exp())
    }

    /// Processes the features and returns the predictive distribution.
    pub fn predict(&mut self, point: &[F]) -> Result<PredictiveVector<F>> {
        self.process_features(point)?;
        let path = &self.pending.as_ref().expect("just set").path;
        Ok(self.predict_distribution(path))
    }

    /// Emits `ln P(label)` for the pending sample, then updates every node
    /// on its path.
    pub fn observe_label(&mut self, label: usize) -> Result<F> {
        self.alphabet.check(label)?;
        let pending = self.pending.take().ok_or(Error::NoPendingSample)?;
        let k = self.alphabet.size();
        let mut child_log_p = F::zero();
        for &id in pending.path.iter().rev() {
            let i = id.index();
            let log_qa = self.own_predictive(id, label).ln();
            let log_p = if self.partition.node(id).is_leaf() {
                // Both weights scale by the same KT factor: shares unchanged.
                log_qa
            } else {
                // Shares after observing the label, before switching.
                let xa = self.log_share_a[i] + log_qa;
                let xb = self.log_share_b[i] + child_log_p;
                let log_p = F::log_add_exp(xa, xb);
                let (ra, rb) = (xa - log_p, xb - log_p);
                let alpha = self.schedule.alpha(self.totals[i] + 2);
                let (sa, sb) = if alpha == 0.0 {
                    (ra, rb)
                } else {
                    // w' = α·S' + (1 - 2α)·w·q, divided through by S'.
                    let log_alpha = F::of(alpha.ln());
                    let log_beta = F::of((1.0 - 2.0 * alpha).ln());
                    (
                        F::log_add_exp(log_alpha, log_beta + ra),
                        F::log_add_exp(log_alpha, log_beta + rb),
                    )
                };
                let norm = F::log_add_exp(sa, sb);
                self.log_share_a[i] = sa - norm;
                self.log_share_b[i] = sb - norm;
                log_p
            };
            self.log_joint[i] = self.log_joint[i] + log_p;
            self.counts[i * k + label] += 1;
            self.totals[i] += 1;
            child_log_p = log_p;
        }
        self.partition.attach_label(pending.pivot, label);
        self.cumulative = self.cumulative + child_log_p;
        self.n += 1;
        let mut path = pending.path;
        path.clear();
        self.scratch = path;
        Ok(child_log_p)
    }

    /// One full step: features, then label. Returns the emitted log-probability.
    pub fn update(&mut self, point: &[F], label: usize) -> Result<F> {
        self.alphabet.check(label)?;
        self.process_features(point)?;
        self.observe_label(label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(dim: usize, k: usize, schedule: AlphaSchedule, seed: u64) -> KdSwitchTree<f64> {
        let cfg = TreeConfig::new(dim, Alphabet::new(k).unwrap()).schedule(schedule);
        KdSwitchTree::from_seed(cfg, seed).unwrap()
    }

    #[test]
    fn fresh_tree_is_uniform() {
        let mut t = tree(2, 2, AlphaSchedule::Switch, 0);
        let root_only = t.route(&[0.1, 0.2]).unwrap();
        assert_eq!(t.predict_distribution(&root_only).probs(), &[0.5, 0.5]);
        let p = t.predict(&[0.1, 0.2]).unwrap();
        assert_eq!(p.probs(), &[0.5, 0.5]);
        let emitted = t.observe_label(1).unwrap();
        assert!((emitted - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn first_point_splits_root_into_empty_children() {
        let mut t = tree(2, 2, AlphaSchedule::Switch, 0);
        let path = t.process_features(&[0.3, 0.3]).unwrap().to_vec();
        assert_eq!(path.len(), 2);
        assert!(!t.partition().root().is_leaf());
        let half = 0.5f64.ln();
        for id in [NodeId::ROOT, path[1]] {
            let s = t.node_state(id);
            assert_eq!((s.log_wa, s.log_wb, s.m), (half, half, 0));
        }
    }

    #[test]
    fn known_prior_without_data_predicts_theta() {
        let cfg = TreeConfig::new(1, Alphabet::BINARY).label_prior(LabelPrior::bernoulli(0.3).unwrap());
        let t = KdSwitchTree::<f64>::from_seed(cfg, 0).unwrap();
        let path = t.route(&[0.0]).unwrap();
        let p = t.predict_distribution(&path);
        assert!((p.get(0) - 0.3).abs() < 1e-15);
        assert!((p.get(1) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn invalid_priors_are_rejected() {
        assert!(LabelPrior::bernoulli(0.0f64).is_err());
        assert!(LabelPrior::bernoulli(1.0f64).is_err());
        let cfg = TreeConfig::new(1, Alphabet::new(3).unwrap()).label_prior(LabelPrior::Known(vec![0.5, 0.5]));
        assert!(matches!(KdSwitchTree::<f64>::from_seed(cfg, 0), Err(Error::InvalidPrior(_))));
    }

    #[test]
    fn label_contract_is_enforced() {
        let mut t = tree(1, 2, AlphaSchedule::Switch, 0);
        assert_eq!(t.observe_label(0), Err(Error::NoPendingSample));
        t.process_features(&[0.5]).unwrap();
        assert_eq!(t.process_features(&[0.5]).unwrap_err(), Error::SamplePending);
        assert!(matches!(t.observe_label(2), Err(Error::SymbolOutOfRange { .. })));
        t.observe_label(0).unwrap();
        assert_eq!(t.observe_label(0), Err(Error::NoPendingSample));
        assert!(matches!(t.process_features(&[0.5, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn leaf_predictive_is_kt() {
        // Duplicate points pile up in the left-most leaf.
        let mut t = tree(1, 2, AlphaSchedule::Switch, 3);
        for &l in &[0, 0, 1] {
            t.update(&[0.5], l).unwrap();
        }
        let route = t.route(&[0.5]).unwrap();
        let leaf = *route.last().unwrap();
        assert_eq!(t.node_state(leaf).counts, &[2, 1]);
        let leaf_p = t.predict_distribution(&[leaf]);
        assert!((leaf_p.get(0) - 0.625).abs() < 1e-15);
        assert!((t.predict_distribution(&route).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn leaf_update_keeps_weight_ratio() {
        let mut t = tree(1, 2, AlphaSchedule::Switch, 3);
        t.update(&[0.5], 0).unwrap();
        let path = t.process_features(&[0.5]).unwrap().to_vec();
        let leaf = *path.last().unwrap();
        let before = t.node_state(leaf);
        let (wa, wb) = (before.log_wa, before.log_wb);
        t.observe_label(1).unwrap();
        let after = t.node_state(leaf);
        assert_eq!(after.log_wa - after.log_wb, wa - wb);
        // KT(1 | one 0) = 1/4.
        assert!((after.log_wa - wa - 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn migrated_labels_initialize_children() {
        // Duplicates: after labels [0], the next duplicate splits a leaf
        // holding one labeled sample; its left child receives that label.
        let mut t = tree(1, 2, AlphaSchedule::Switch, 1);
        t.update(&[0.5], 0).unwrap();
        let path = t.process_features(&[0.5]).unwrap().to_vec();
        let child = *path.last().unwrap();
        let s = t.node_state(child);
        assert!((s.log_wa - 0.25f64.ln()).abs() < 1e-15);
        assert_eq!(s.log_wa, s.log_wb);
        assert_eq!(s.m, 1);
        t.observe_label(0).unwrap();
        let path = t.process_features(&[0.5]).unwrap().to_vec();
        let s = t.node_state(*path.last().unwrap());
        assert!((s.log_wa - (0.5f64 * 0.375).ln()).abs() < 1e-15);
    }

    #[test]
    fn cumulative_matches_root_joint() {
        use rand::{Rng, SeedableRng};
        for schedule in [AlphaSchedule::Switch, AlphaSchedule::Ctw] {
            let mut t = tree(3, 3, schedule, 10);
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            for _ in 0..2000 {
                let x: Vec<f64> = (0..3).map(|_| rng.random()).collect();
                let l = if x[0] > 0.5 { 0 } else { rng.random_range(0..3) };
                t.update(&x, l).unwrap();
                let root = t.node_state(NodeId::ROOT);
                assert!((t.cumulative_logprob() - root.log_joint).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_precision_tree_runs() {
        use rand::{Rng, SeedableRng};
        let cfg = TreeConfig::new(2, Alphabet::BINARY);
        let mut t32 = KdSwitchTree::<f32>::from_seed(cfg.clone_f32(), 4).unwrap();
        let mut t64 = KdSwitchTree::<f64>::from_seed(TreeConfig::new(2, Alphabet::BINARY), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..300 {
            let x: [f32; 2] = [rng.random(), rng.random()];
            let l = usize::from(x[1] > 0.5);
            t32.update(&x, l).unwrap();
            t64.update(&[f64::from(x[0]), f64::from(x[1])], l).unwrap();
        }
        let diff = f64::from(t32.cumulative_logprob()) - t64.cumulative_logprob();
        assert!(diff.abs() < 1e-2, "{diff}");
    }

    trait CloneF32 {
        fn clone_f32(&self) -> TreeConfig<f32>;
    }

    impl CloneF32 for TreeConfig<f64> {
        fn clone_f32(&self) -> TreeConfig<f32> {
            TreeConfig::new(self.dim, self.alphabet).schedule(self.schedule)
        }
    }
}
