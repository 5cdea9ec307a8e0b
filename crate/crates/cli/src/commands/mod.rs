//! Subcommand implementations and the pieces they share.

use std::collections::BTreeMap;

use kdswitch::{EntropyRef, Sample, StreamMeta};
use serde::Serialize;

use crate::dataset::{read_csv, DatasetSpec};
use crate::error::{CliError, Result};
use crate::output::Num;
use crate::RunArgs;

pub mod bench;
pub mod generate;
pub mod predict;
pub mod tst;

/// Sub-seed indices under the run seed.
pub(crate) const DATA_STREAM: u64 = 0;
pub(crate) const MODEL_STREAM: u64 = 1;
pub(crate) const SHUFFLE_STREAM: u64 = 2;

#[derive(Debug, Serialize)]
pub struct DatasetInfo {
    pub source: &'static str,
    pub name: String,
    pub dim: usize,
    pub alphabet: usize,
    pub params: BTreeMap<String, Num>,
    pub conditional_entropy_bits: Option<Num>,
    pub conditional_entropy_is_estimate: Option<bool>,
    pub conditional_entropy_std_error: Option<Num>,
    pub shuffled: bool,
    /// Original label strings in index order, for CSV input.
    pub label_mapping: Option<Vec<String>>,
}

impl DatasetInfo {
    pub fn from_meta(meta: &StreamMeta) -> Self {
        let (bits, est, se) = match meta.conditional_entropy {
            None => (None, None, None),
            Some(EntropyRef::Exact(b)) => (Some(Num(b)), Some(false), None),
            Some(EntropyRef::MonteCarlo { bits, std_error, .. }) => (Some(Num(bits)), Some(true), Some(Num(std_error))),
        };
        DatasetInfo {
            source: "generator",
            name: meta.generator.clone(),
            dim: meta.dim,
            alphabet: meta.alphabet,
            params: meta.params.iter().map(|(k, &v)| (k.clone(), Num(v))).collect(),
            conditional_entropy_bits: bits,
            conditional_entropy_is_estimate: est,
            conditional_entropy_std_error: se,
            shuffled: meta.shuffled,
            label_mapping: None,
        }
    }
}

/// The run parameters echoed into every summary.
#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub trees: usize,
    pub mode: &'static str,
    pub seed: u64,
    pub theta0: Option<Num>,
    pub rotate: bool,
    pub n: u64,
    pub trials: usize,
    pub alpha: Num,
    pub max_seconds: Option<Num>,
}

impl ConfigEcho {
    pub fn new(args: &RunArgs, trees: usize, theta0: Option<f64>, rotate: bool) -> Self {
        ConfigEcho {
            trees,
            mode: args.mode.as_str(),
            seed: args.seed,
            theta0: theta0.map(Num),
            rotate,
            n: args.n,
            trials: args.trials,
            alpha: Num(args.alpha),
            max_seconds: args.max_seconds.map(Num),
        }
    }
}

/// A fully materialized or lazily generated input stream.
pub struct Input {
    pub samples: Box<dyn Iterator<Item = Sample> + Send>,
    pub info: DatasetInfo,
}

pub(crate) fn dataset_spec(args: &RunArgs, default: Option<&str>) -> Result<Option<DatasetSpec>> {
    match (&args.dataset, &args.csv, default) {
        (Some(s), _, _) => DatasetSpec::parse(s).map(Some),
        (None, Some(_), _) => Ok(None),
        (None, None, Some(d)) => DatasetSpec::parse(d).map(Some),
        (None, None, None) => Err(CliError::Config("one of --dataset or --csv is required".into())),
    }
}

/// Reads `--csv` input. Every row is used; `--n` does not apply.
pub(crate) fn csv_input(args: &RunArgs) -> Result<Input> {
    let path = args.csv.as_ref().expect("caller checked");
    let data = read_csv(path, &args.label_col)?;
    let alphabet = data.labels.len().max(2);
    let info = DatasetInfo {
        source: "csv",
        name: path.display().to_string(),
        dim: data.dim,
        alphabet,
        params: BTreeMap::new(),
        conditional_entropy_bits: None,
        conditional_entropy_is_estimate: None,
        conditional_entropy_std_error: None,
        shuffled: false,
        label_mapping: Some(data.labels),
    };
    Ok(Input {
        samples: Box::new(data.samples.into_iter()),
        info,
    })
}

/// `log2(x)` of a natural-log quantity.
pub(crate) fn bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

/// Mixture-versus-best-tree check: per-symbol NLL gap against `log2(J)/n`.
#[derive(Debug, Serialize)]
pub struct Dominance {
    pub best_tree_nll_bits: Num,
    pub gap_bits_per_symbol: Num,
    pub bound_bits_per_symbol: Num,
    /// Smallest value of `ln Q_mix - (max_j L_j - ln J)` seen over the run.
    pub min_slack_nats: Num,
    pub holds: bool,
}

/// Tracks the dominance slack at every step.
pub(crate) struct DominanceTracker {
    min_slack: f64,
    holds: bool,
}

impl DominanceTracker {
    pub fn new() -> Self {
        DominanceTracker {
            min_slack: f64::INFINITY,
            holds: true,
        }
    }

    pub fn check(&mut self, ens: &kdswitch::EnsembleF64) {
        let slack = ens.dominance_slack();
        self.min_slack = self.min_slack.min(slack);
        // Rounding in the running sums is the only admissible violation.
        let tol = 1e-9 * (1.0 + ens.cumulative_logprob().abs());
        if !(slack >= -tol) {
            self.holds = false;
        }
    }

    pub fn finish(&self, ens: &kdswitch::EnsembleF64) -> Dominance {
        let n = ens.samples_seen().max(1) as f64;
        let j = ens.len() as f64;
        let nll = -bits(ens.cumulative_logprob()) / n;
        let best = -bits(ens.best_tree_logprob()) / n;
        Dominance {
            best_tree_nll_bits: Num(best),
            gap_bits_per_symbol: Num(nll - best),
            bound_bits_per_symbol: Num(j.log2() / n),
            min_slack_nats: Num(if ens.samples_seen() == 0 { 0.0 } else { self.min_slack }),
            holds: self.holds,
        }
    }
}
