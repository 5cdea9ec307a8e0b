//! Online prediction of discrete labels from continuous features with a
//! randomized k-d tree carrying a chronological context-tree switching
//! distribution.
//!
//! The crate is organized bottom-up:
//!
//! - [`kt`]: Krichevsky–Trofimov estimator over a finite alphabet.
//! - [`tree`]: incremental full-fledged k-d tree partition.
//! - [`predictor`]: switching (or weighting) distribution over one tree.
//! - [`forest`]: Bayesian mixture of independently randomized trees.
//! - [`tst`]: sequential two-sample test with an anytime-valid p-value.
//! - [`datagen`]: synthetic benchmark sources.
//! - [`reference`]: brute-force oracles and diagnostics for verification.
//!
//! Core types are generic over the scalar ([`Real`] for the online
//! predictor, [`Field`] for the oracles); aliases for the usual
//! instantiations live at the crate root.

pub mod datagen;
pub mod error;
pub mod forest;
pub mod kt;
pub mod predictor;
pub mod reference;
pub mod scalar;
pub mod tree;
pub mod tst;

pub use datagen::{EntropyRef, Generator, LabeledStream, Sample, StreamMeta};
pub use error::{Error, Result};
pub use forest::{random_rotation, split_seed, Ensemble, EnsembleConfig};
pub use kt::{Alphabet, SymbolCounts};
pub use predictor::{AlphaSchedule, KdSwitchTree, LabelPrior, NodeState, PredictiveVector, TreeConfig};
pub use scalar::{Dyadic, Field, Real};
pub use tree::{NodeId, Partition, SampleId, SplitIndex};
pub use tst::{Decision, TstConfig, TwoSampleTest};

/// Exact rational scalar for the oracles.
pub type Exact = num_rational::BigRational;

pub type TreeF64 = KdSwitchTree<f64>;
pub type TreeF32 = KdSwitchTree<f32>;

pub type EnsembleF64 = Ensemble<f64>;
pub type EnsembleF32 = Ensemble<f32>;
pub type TwoSampleTestF64 = TwoSampleTest<f64>;
