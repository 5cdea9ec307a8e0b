//! Bayesian mixture over independently randomized trees.
//!
//! Each member tree sees the features through its own (optional) random
//! rotation. The mixture keeps every tree's cumulative log-probability
//! `L_j` and predicts with the posterior weights `softmax(L_j)` under a
//! uniform prior.
//!
//! Seeds: tree `j` draws its split axes from `split_seed(master, 2j)` and
//! its rotation from `split_seed(master, 2j + 1)`, so changing the number of
//! trees or toggling rotations never perturbs the other trees' draws.

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::predictor::{KdSwitchTree, PredictiveVector, TreeConfig};
use crate::scalar::Real;

/// Derives an independent 64-bit seed for sub-stream `index` of `master`.
///
/// The master seed keys a ChaCha8 generator whose stream id is `index`; the
/// first output word is the derived seed.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

/// Haar-distributed orthogonal matrix: QR of a standard Gaussian matrix
/// with the signs of `R`'s diagonal folded into `Q`.
pub fn random_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

#[derive(Clone, Debug)]
pub struct EnsembleConfig<F> {
    pub tree: TreeConfig<F>,
    pub trees: usize,
    pub rotate: bool,
    /// Fan the per-tree work out over the rayon pool. Results are combined
    /// in tree order either way, so outputs do not depend on this flag.
    pub parallel: bool,
}

impl<F> EnsembleConfig<F> {
    pub fn new(tree: TreeConfig<F>, trees: usize) -> Self {
        EnsembleConfig {
            tree,
            trees,
            rotate: false,
            parallel: false,
        }
    }

    pub fn rotate(mut self, rotate: bool) -> Self {
        self.rotate = rotate;
        self
    }

    pub fn parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }
}

#[derive(Clone, Debug)]
struct Member<F> {
    tree: KdSwitchTree<F>,
    /// Row-major rotation, absent when rotations are off.
    rotation: Option<Vec<F>>,
    buf: Vec<F>,
}

impl<F: Real> Member<F> {
    fn predict(&mut self, point: &[F]) -> Result<PredictiveVector<F>> {
        match &self.rotation {
            None => self.tree.predict(point),
            Some(r) => {
                let d = point.len();
                if d != self.tree.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.tree.dim(),
                        got: d,
                    });
                }
                self.buf.clear();
                self.buf.extend(r.chunks_exact(d).map(|row| {
                    row.iter().zip(point).fold(F::zero(), |acc, (&a, &x)| acc + a * x)
                }));
                self.tree.predict(&self.buf)
            }
        }
    }
}

/// `J` trees mixed with their Bayesian posterior weights.
#[derive(Clone, Debug)]
pub struct Ensemble<F> {
    members: Vec<Member<F>>,
    log_weights: Vec<F>,
    cumulative: F,
    n: u64,
    pending: bool,
    parallel: bool,
}

impl<F: Real> Ensemble<F> {
    pub fn new(config: EnsembleConfig<F>, master_seed: u64) -> Result<Self> {
        if config.trees == 0 {
            return Err(Error::InvalidParameter("an ensemble needs at least one tree".into()));
        }
        let dim = config.tree.dim;
        let members = (0..config.trees as u64)
            .map(|j| {
                let tree = KdSwitchTree::from_seed(config.tree.clone(), split_seed(master_seed, 2 * j))?;
                let rotation = config.rotate.then(|| {
                    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(master_seed, 2 * j + 1));
                    let r = random_rotation(dim, &mut rng);
                    // Row-major copy in the working scalar.
                    r.transpose().iter().map(|&v| F::of(v)).collect()
                });
                Ok(Member {
                    tree,
                    rotation,
                    buf: Vec::with_capacity(dim),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Ensemble {
            log_weights: vec![F::zero(); members.len()],
            members,
            cumulative: F::zero(),
            n: 0,
            pending: false,
            parallel: config.parallel,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn tree(&self, j: usize) -> &KdSwitchTree<F> {
        &self.members[j].tree
    }

    /// Row-major rotation applied before tree `j`, if rotations are on.
    pub fn rotation(&self, j: usize) -> Option<&[F]> {
        self.members[j].rotation.as_deref()
    }

    /// Per-tree cumulative natural-log probabilities `L_j`.
    pub fn log_weights(&self) -> &[F] {
        &self.log_weights
    }

    /// Cumulative natural-log probability emitted by the mixture.
    pub fn cumulative_logprob(&self) -> F {
        self.cumulative
    }

    pub fn samples_seen(&self) -> u64 {
        self.n
    }

    /// Largest per-tree cumulative log-probability.
    pub fn best_tree_logprob(&self) -> F {
        self.log_weights
            .iter()
            .copied()
            .fold(F::neg_infinity(), F::max)
    }

    /// `ln Σ_j exp(L_j) / J`: the mixture's joint log-probability computed
    /// from the per-tree totals.
    pub fn mixture_logprob_from_weights(&self) -> F {
        log_sum_exp(&self.log_weights) - F::of(self.len() as f64).ln()
    }

    /// Mixture cumulative log-probability minus `max_j L_j - ln J`. A Bayes
    /// mixture never loses more than `ln J` to its best member, so this is
    /// non-negative up to rounding.
    pub fn dominance_slack(&self) -> F {
        self.cumulative - (self.best_tree_logprob() - F::of(self.len() as f64).ln())
    }

    /// Processes the features in every tree and returns the mixture
    /// predictive distribution.
    pub fn predict(&mut self, point: &[F]) -> Result<PredictiveVector<F>> {
        if self.pending {
            return Err(Error::SamplePending);
        }
        let preds: Vec<PredictiveVector<F>> = if self.parallel {
            self.members.par_iter_mut().map(|m| m.predict(point)).collect::<Result<_>>()?
        } else {
            self.members.iter_mut().map(|m| m.predict(point)).collect::<Result<_>>()?
        };
        self.pending = true;
        let norm = log_sum_exp(&self.log_weights);
        let k = preds[0].probs().len();
        let mut probs = vec![F::zero(); k];
        for (p, &l) in preds.iter().zip(&self.log_weights) {
            let w = (l - norm).exp();
            for (acc, &q) in probs.iter_mut().zip(p.probs()) {
                *acc = *acc + w * q;
            }
        }
        Ok(PredictiveVector::new(probs))
    }

    /// Feeds the label to every tree and returns the mixture's `ln P(label)`.
    pub fn observe_label(&mut self, label: usize) -> Result<F> {
        if !self.pending {
            return Err(Error::NoPendingSample);
        }
        self.members[0].tree.alphabet().check(label)?;
        let emitted: Vec<F> = if self.parallel {
            self.members
                .par_iter_mut()
                .map(|m| m.tree.observe_label(label))
                .collect::<Result<_>>()?
        } else {
            self.members
                .iter_mut()
                .map(|m| m.tree.observe_label(label))
                .collect::<Result<_>>()?
        };
        self.pending = false;
        let norm = log_sum_exp(&self.log_weights);
        let mut log_p = F::neg_infinity();
        for (l, &e) in self.log_weights.iter_mut().zip(&emitted) {
            log_p = F::log_add_exp(log_p, *l - norm + e);
            *l = *l + e;
        }
        self.cumulative = self.cumulative + log_p;
        self.n += 1;
        Ok(log_p)
    }

    /// One full step. Returns the mixture's `ln P(label)`.
    pub fn update(&mut self, point: &[F], label: usize) -> Result<F> {
        self.members[0].tree.alphabet().check(label)?;
        self.predict(point)?;
        self.observe_label(label)
    }
}

fn log_sum_exp<F: Real>(xs: &[F]) -> F {
    xs.iter().fold(F::neg_infinity(), |acc, &x| F::log_add_exp(acc, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kt::Alphabet;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

    fn config(dim: usize, trees: usize) -> EnsembleConfig<f64> {
        EnsembleConfig::new(TreeConfig::new(dim, Alphabet::BINARY), trees)
    }

    fn stream(seed: u64, n: usize, dim: usize) -> Vec<(Vec<f64>, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
                let l = usize::from(z[0] + 0.3 * rng.random::<f64>() > 0.65);
                (z, l)
            })
            .collect()
    }

    #[test]
    fn rotation_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [1, 2, 3, 7, 20] {
            let r = random_rotation(d, &mut rng);
            let err = (r.transpose() * &r - DMatrix::<f64>::identity(d, d)).amax();
            assert!(err < 1e-9, "d={d}: {err}");
            assert!((r.determinant().abs() - 1.0).abs() < 1e-9);
            let x = DMatrix::<f64>::from_fn(d, 1, |_, _| rng.sample(StandardNormal));
            assert!(((&r * &x).norm() - x.norm()).abs() < 1e-9);
        }
        let one = random_rotation(1, &mut rng);
        assert_eq!(one[(0, 0)].abs(), 1.0);
    }

    #[test]
    fn rotation_is_seed_deterministic() {
        let a = random_rotation(4, &mut ChaCha8Rng::seed_from_u64(9));
        let b = random_rotation(4, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn split_seeds_differ_by_index() {
        let s: Vec<u64> = (0..8).map(|i| split_seed(42, i)).collect();
        for i in 0..s.len() {
            for j in 0..i {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(split_seed(42, 3), s[3]);
    }

    #[test]
    fn single_tree_mixture_is_the_tree() {
        let data = stream(1, 300, 2);
        let mut ens = Ensemble::new(config(2, 1), 77).unwrap();
        let mut tree = KdSwitchTree::from_seed(TreeConfig::new(2, Alphabet::BINARY), split_seed(77, 0)).unwrap();
        for (z, l) in &data {
            let pe = ens.predict(z).unwrap();
            let pt = tree.predict(z).unwrap();
            assert_eq!(pe.probs(), pt.probs());
            assert_eq!(ens.observe_label(*l).unwrap(), tree.observe_label(*l).unwrap());
        }
    }

    #[test]
    fn telescoping_and_dominance() {
        let data = stream(2, 2000, 3);
        let mut ens = Ensemble::new(config(3, 6).rotate(true), 3).unwrap();
        for (z, l) in &data {
            let p = ens.predict(z).unwrap();
            assert!((p.sum() - 1.0).abs() < 1e-12);
            let e = ens.observe_label(*l).unwrap();
            assert!((e - p.get(*l).ln()).abs() < 1e-9);
            assert!(ens.dominance_slack() >= -1e-9);
        }
        let direct = ens.mixture_logprob_from_weights();
        assert!((ens.cumulative_logprob() - direct).abs() <= 1e-9 * direct.abs());
    }

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let data = stream(3, 500, 2);
        let mut a = Ensemble::new(config(2, 5).rotate(true), 11).unwrap();
        let mut b = Ensemble::new(config(2, 5).rotate(true).parallel(true), 11).unwrap();
        for (z, l) in &data {
            assert_eq!(a.predict(z).unwrap().probs(), b.predict(z).unwrap().probs());
            assert_eq!(a.observe_label(*l).unwrap(), b.observe_label(*l).unwrap());
        }
        assert_eq!(a.log_weights(), b.log_weights());
    }

    #[test]
    fn label_contract() {
        let mut ens = Ensemble::new(config(2, 2), 0).unwrap();
        assert!(matches!(ens.observe_label(0), Err(Error::NoPendingSample)));
        ens.predict(&[0.1, 0.2]).unwrap();
        assert!(matches!(ens.predict(&[0.1, 0.2]), Err(Error::SamplePending)));
        assert!(matches!(ens.observe_label(2), Err(Error::SymbolOutOfRange { .. })));
        ens.observe_label(1).unwrap();
        assert!(matches!(ens.observe_label(1), Err(Error::NoPendingSample)));
        assert!(Ensemble::new(config(2, 0), 0).is_err());
    }

    #[test]
    fn diverging_tree_loses_weight() {
        let mut ens = Ensemble::new(config(1, 2), 0).unwrap();
        ens.log_weights = vec![0.0, -200.0];
        let p = ens.predict(&[0.5]).unwrap();
        let first = ens.members[0].tree.predict_distribution(ens.members[0].tree.pending_path().unwrap());
        assert!((p.get(0) - first.get(0)).abs() < 1e-80);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn equal_weights_give_plain_average(seed in any::<u64>(), j in 1usize..6) {
            let mut ens = Ensemble::new(config(2, j).rotate(true), seed).unwrap();
            let p = ens.predict(&[0.3, 0.7]).unwrap();
            let avg: f64 = (0..j)
                .map(|t| ens.members[t].tree.predict_distribution(ens.members[t].tree.pending_path().unwrap()).get(1))
                .sum::<f64>() / j as f64;
            prop_assert!((p.get(1) - avg).abs() < 1e-15);
        }

        #[test]
        fn mixture_dominates_best_tree(seed in any::<u64>(), j in 1usize..5) {
            let data = stream(seed, 150, 2);
            let mut ens = Ensemble::new(config(2, j), seed).unwrap();
            for (z, l) in &data {
                ens.update(z, *l).unwrap();
                prop_assert!(ens.dominance_slack() >= -1e-10);
            }
        }
    }
}
