//! Sequential two-sample test with an anytime-valid p-value.
//!
//! Each observation is a pair (population label, features), where the label
//! is drawn Bernoulli(θ0) independently of everything else. Under the null
//! the features carry no information about the label, so the likelihood
//! ratio `P(l^n) / Q(l^n | z^n)` of the Bernoulli null to the kd-switch
//! ensemble is a nonnegative supermartingale with expectation at most one.
//! By Ville's inequality its running minimum stays below `α` with
//! probability at most `α`, at every stopping time.

use crate::error::{Error, Result};
use crate::forest::{Ensemble, EnsembleConfig};
use crate::kt::Alphabet;
use crate::predictor::{AlphaSchedule, LabelPrior, TreeConfig};
use crate::scalar::Real;

pub const DEFAULT_THETA0: f64 = 0.5;
pub const DEFAULT_TREES: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Reject,
    Continue,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::Reject => "REJECT",
            Decision::Continue => "CONTINUE",
        })
    }
}

#[derive(Clone, Debug)]
pub struct TstConfig<F> {
    pub dim: usize,
    pub theta0: F,
    pub trees: usize,
    pub schedule: AlphaSchedule,
    pub rotate: bool,
    pub parallel: bool,
}

impl<F: Real> TstConfig<F> {
    pub fn new(dim: usize) -> Self {
        TstConfig {
            dim,
            theta0: F::of(DEFAULT_THETA0),
            trees: DEFAULT_TREES,
            schedule: AlphaSchedule::Switch,
            rotate: true,
            parallel: false,
        }
    }

    pub fn theta0(mut self, theta0: F) -> Self {
        self.theta0 = theta0;
        self
    }

    pub fn trees(mut self, trees: usize) -> Self {
        self.trees = trees;
        self
    }

    pub fn schedule(mut self, schedule: AlphaSchedule) -> Self {
        self.schedule = schedule;
        self
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
pub struct TwoSampleTest<F> {
    theta0: F,
    ensemble: Ensemble<F>,
    log_null: F,
    log_alt: F,
    p_current: F,
    p_running: F,
    n: u64,
}

impl<F: Real> TwoSampleTest<F> {
    pub fn new(config: TstConfig<F>, seed: u64) -> Result<Self> {
        let prior = LabelPrior::bernoulli(config.theta0)?;
        let tree = TreeConfig::new(config.dim, Alphabet::BINARY)
            .schedule(config.schedule)
            .label_prior(prior);
        let ensemble = Ensemble::new(
            EnsembleConfig::new(tree, config.trees)
                .rotate(config.rotate)
                .parallel(config.parallel),
            seed,
        )?;
        Ok(TwoSampleTest {
            theta0: config.theta0,
            ensemble,
            log_null: F::zero(),
            log_alt: F::zero(),
            p_current: F::one(),
            p_running: F::one(),
            n: 0,
        })
    }

    /// Feeds one observation and returns `(p_current, p_running)`.
    pub fn observe(&mut self, label: usize, features: &[F]) -> Result<(F, F)> {
        let null_p = match label {
            0 => self.theta0,
            1 => F::one() - self.theta0,
            _ => return Err(Error::SymbolOutOfRange { symbol: label, size: 2 }),
        };
        self.ensemble.predict(features)?;
        let log_q = self.ensemble.observe_label(label)?;
        self.log_null = self.log_null + null_p.ln();
        self.log_alt = self.log_alt + log_q;
        self.p_current = (self.log_null - self.log_alt).exp().min(F::one());
        self.p_running = self.p_running.min(self.p_current);
        self.n += 1;
        Ok((self.p_current, self.p_running))
    }

    /// `Reject` once the running p-value has reached `alpha`; permanent
    /// because the running minimum never increases.
    pub fn decision(&self, alpha: F) -> Result<Decision> {
        if !(alpha > F::zero() && alpha < F::one()) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(if self.p_running <= alpha {
            Decision::Reject
        } else {
            Decision::Continue
        })
    }

    pub fn theta0(&self) -> F {
        self.theta0
    }

    pub fn log_null(&self) -> F {
        self.log_null
    }

    pub fn log_alt(&self) -> F {
        self.log_alt
    }

    pub fn p_current(&self) -> F {
        self.p_current
    }

    pub fn p_running(&self) -> F {
        self.p_running
    }

    pub fn samples_seen(&self) -> u64 {
        self.n
    }

    pub fn ensemble(&self) -> &Ensemble<F> {
        &self.ensemble
    }
}
