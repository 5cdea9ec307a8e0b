//! `kdswitch bench`: wall-clock cost per decade of stream length.
//!
//! The whole stream is generated before the clock starts. A row is emitted
//! at every power of ten up to `n` and at `n` itself; `per_sample_us` is the
//! mean cost over the samples since the previous row.

use std::time::Instant;

use kdswitch::{split_seed, Alphabet, Ensemble, EnsembleConfig, LabelPrior, Sample, TreeConfig};
use serde::Serialize;

use super::{csv_input, dataset_spec, ConfigEcho, DatasetInfo, Dominance, DominanceTracker, DATA_STREAM, MODEL_STREAM};
use crate::error::Result;
use crate::output::{self, fmt_num, to_json, Num};
use crate::RunArgs;

pub const DEFAULT_DATASET: &str = "threshold:d=2,noise=0.1";

#[derive(Debug, Serialize)]
pub struct Row {
    pub n: u64,
    pub seconds: Num,
    pub per_sample_us: Num,
}

#[derive(Debug, Serialize)]
struct Summary {
    command: &'static str,
    dataset: DatasetInfo,
    config: ConfigEcho,
    samples: u64,
    rows: Vec<Row>,
    /// Per-sample cost of the last decade over that of the decade ending at 1000.
    cost_ratio_vs_1e3: Option<Num>,
    nll_bits: Num,
    dominance: Dominance,
}

/// Row boundaries: powers of ten below `n`, then `n`.
pub fn checkpoints(n: u64) -> Vec<u64> {
    let mut out: Vec<u64> = std::iter::successors(Some(10u64), |&c| c.checked_mul(10))
        .take_while(|&c| c < n)
        .collect();
    out.push(n);
    out
}

pub fn run(args: &RunArgs) -> Result<String> {
    let trees = args.trees.unwrap_or(1);
    let rotate = args.rotate_or(false);
    let (samples, info): (Vec<Sample>, DatasetInfo) = match dataset_spec(args, Some(DEFAULT_DATASET))? {
        Some(mut spec) => {
            spec.apply_theta0(args.theta0)?;
            let stream = spec.generator.stream(args.n, split_seed(args.seed, DATA_STREAM))?;
            let info = DatasetInfo::from_meta(stream.meta());
            (stream.collect(), info)
        }
        None => {
            let input = csv_input(args)?;
            (input.samples.collect(), input.info)
        }
    };
    let prior = match args.theta0 {
        Some(t) if info.alphabet == 2 => LabelPrior::bernoulli(t)?,
        _ => LabelPrior::Unknown,
    };
    let tree = TreeConfig::new(info.dim, Alphabet::new(info.alphabet)?)
        .schedule(args.mode.schedule())
        .label_prior(prior);
    let mut ens = Ensemble::new(
        EnsembleConfig::new(tree, trees).rotate(rotate),
        split_seed(args.seed, MODEL_STREAM),
    )?;

    let total = samples.len() as u64;
    let marks = checkpoints(total.max(1));
    let mut rows = Vec::with_capacity(marks.len());
    let mut dominance = DominanceTracker::new();
    let mut next = 0;
    let (mut prev_n, mut prev_t) = (0u64, 0.0f64);
    let start = Instant::now();
    for s in &samples {
        if let Some(limit) = args.max_seconds {
            if start.elapsed().as_secs_f64() > limit {
                break;
            }
        }
        ens.predict(&s.features)?;
        ens.observe_label(s.label)?;
        dominance.check(&ens);
        let n = ens.samples_seen();
        if next < marks.len() && n == marks[next] {
            let t = start.elapsed().as_secs_f64();
            rows.push(Row {
                n,
                seconds: Num(t),
                per_sample_us: Num((t - prev_t) * 1e6 / (n - prev_n) as f64),
            });
            (prev_n, prev_t) = (n, t);
            next += 1;
        }
    }

    if let Some(path) = &args.out {
        let mut w = csv::Writer::from_writer(output::create(path)?);
        w.write_record(["n", "seconds", "per_sample_us"])?;
        for r in &rows {
            w.write_record([r.n.to_string(), fmt_num(r.seconds.0), fmt_num(r.per_sample_us.0)])?;
        }
        w.flush()?;
    }

    let at = |n: u64| rows.iter().find(|r| r.n == n).map(|r| r.per_sample_us.0);
    let ratio = match (rows.last(), at(1000)) {
        (Some(last), Some(base)) if last.n > 1000 => Some(Num(last.per_sample_us.0 / base)),
        _ => None,
    };
    let n = ens.samples_seen().max(1) as f64;
    let summary = Summary {
        command: "bench",
        config: ConfigEcho::new(args, trees, args.theta0, rotate),
        samples: ens.samples_seen(),
        cost_ratio_vs_1e3: ratio,
        nll_bits: Num(-super::bits(ens.cumulative_logprob()) / n),
        dominance: dominance.finish(&ens),
        rows,
        dataset: info,
    };
    Ok(to_json(&summary))
}
