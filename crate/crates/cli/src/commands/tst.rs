//! `kdswitch tst`: sequential two-sample test, one or many trials.
//!
//! Trial `t` draws its data from `split_seed(split_seed(seed, t), 0)` and
//! its trees from `split_seed(split_seed(seed, t), 1)`. A trial stops at
//! the first step whose running p-value reaches `alpha`, or after `n`
//! samples. Power at a checkpoint is the fraction of trials stopped by it;
//! checkpoints share their trials, so the power curve is non-decreasing.

use std::time::Instant;

use kdswitch::tst::DEFAULT_TREES;
use kdswitch::{split_seed, Sample, TstConfig, TwoSampleTest};
use rayon::prelude::*;
use serde::Serialize;

use super::{csv_input, dataset_spec, ConfigEcho, DatasetInfo, DATA_STREAM, MODEL_STREAM};
use crate::dataset::DatasetSpec;
use crate::error::{CliError, Result};
use crate::output::{self, fmt_num, to_json, Num};
use crate::RunArgs;

#[derive(Debug, Serialize)]
struct PowerRow {
    n: u64,
    rejections: usize,
    rate: Num,
    std_error: Num,
}

#[derive(Debug, Serialize)]
struct TrialRow {
    trial: usize,
    /// Samples processed: the stopping time when rejected.
    samples: u64,
    rejected: bool,
    p_current: Num,
    p_running: Num,
}

#[derive(Debug, Serialize)]
struct Summary {
    command: &'static str,
    dataset: DatasetInfo,
    config: ConfigEcho,
    decision: &'static str,
    rejections: usize,
    rejection_rate: Num,
    std_error: Num,
    power: Vec<PowerRow>,
    mean_stopping_time: Num,
    stopped_early: bool,
    trials: Vec<TrialRow>,
    runtime_seconds: Option<Num>,
}

struct TrialResult {
    samples: u64,
    rejected: bool,
    p_current: f64,
    p_running: f64,
    truncated: bool,
    trajectory: Vec<[String; 5]>,
}

struct TrialSetup<'a> {
    args: &'a RunArgs,
    config: TstConfig<f64>,
    record: bool,
    start: Instant,
}

impl TrialSetup<'_> {
    fn run<I: Iterator<Item = Sample>>(&self, samples: I, model_seed: u64) -> Result<TrialResult> {
        let mut test = TwoSampleTest::new(self.config.clone(), model_seed)?;
        let mut res = TrialResult {
            samples: 0,
            rejected: false,
            p_current: 1.0,
            p_running: 1.0,
            truncated: false,
            trajectory: Vec::new(),
        };
        for s in samples {
            if let Some(limit) = self.args.max_seconds {
                if self.start.elapsed().as_secs_f64() > limit {
                    res.truncated = true;
                    break;
                }
            }
            let (pc, pr) = test.observe(s.label, &s.features).map_err(|e| match e {
                kdswitch::Error::SymbolOutOfRange { symbol, .. } => {
                    CliError::Data(format!("two-sample test needs labels 0/1, got label index {symbol}"))
                }
                other => other.into(),
            })?;
            res.samples = test.samples_seen();
            res.p_current = pc;
            res.p_running = pr;
            if self.record {
                res.trajectory.push([
                    String::new(),
                    res.samples.to_string(),
                    s.label.to_string(),
                    fmt_num(pc),
                    fmt_num(pr),
                ]);
            }
            if pr <= self.args.alpha {
                res.rejected = true;
                break;
            }
        }
        Ok(res)
    }
}

fn binomial_se(k: usize, n: usize) -> f64 {
    let p = k as f64 / n as f64;
    (p * (1.0 - p) / n as f64).sqrt()
}

pub fn run(args: &RunArgs) -> Result<String> {
    let start = Instant::now();
    let trees = args.trees.unwrap_or(DEFAULT_TREES);
    let rotate = args.rotate_or(true);
    let spec: Option<DatasetSpec> = dataset_spec(args, None)?;
    let theta0 = match &spec {
        Some(s) => {
            let mut s = s.clone();
            s.apply_theta0(args.theta0)?
        }
        None => None,
    }
    .or(args.theta0)
    .unwrap_or(kdswitch::tst::DEFAULT_THETA0);

    let mut checkpoints = args.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    if checkpoints.iter().any(|&c| c == 0 || c > args.n) {
        return Err(CliError::Config(format!("checkpoints must lie in 1..={}", args.n)));
    }
    if checkpoints.last() != Some(&args.n) {
        checkpoints.push(args.n);
    }

    let setup = TrialSetup {
        args,
        config: TstConfig::new(0)
            .theta0(theta0)
            .trees(trees)
            .schedule(args.mode.schedule())
            .rotate(rotate)
            .parallel(args.trials == 1 && trees > 1),
        record: args.out.is_some(),
        start,
    };

    let (info, results) = match spec {
        Some(mut spec) => {
            spec.apply_theta0(Some(theta0))?;
            // Metadata of the first trial's stream.
            let first = spec.generator.stream(0, split_seed(split_seed(args.seed, 0), DATA_STREAM))?;
            let info = DatasetInfo::from_meta(first.meta());
            let setup = TrialSetup {
                config: TstConfig { dim: spec.generator.dim(), ..setup.config.clone() },
                ..setup
            };
            let results = (0..args.trials)
                .into_par_iter()
                .map(|t| {
                    let master = split_seed(args.seed, t as u64);
                    let data = spec.generator.stream(args.n, split_seed(master, DATA_STREAM))?;
                    setup.run(data, split_seed(master, MODEL_STREAM))
                })
                .collect::<Result<Vec<_>>>()?;
            (info, results)
        }
        None => {
            if args.trials != 1 {
                return Err(CliError::Config("--csv input supports a single trial".into()));
            }
            let input = csv_input(args)?;
            if input.info.alphabet != 2 {
                return Err(CliError::Data(format!(
                    "two-sample test needs exactly two labels, found {}",
                    input.info.alphabet
                )));
            }
            let setup = TrialSetup {
                config: TstConfig { dim: input.info.dim, ..setup.config.clone() },
                ..setup
            };
            let master = split_seed(args.seed, 0);
            let res = setup.run(input.samples, split_seed(master, MODEL_STREAM))?;
            (input.info, vec![res])
        }
    };

    if let Some(path) = &args.out {
        let mut w = csv::Writer::from_writer(output::create(path)?);
        w.write_record(["trial", "n", "label", "p_current", "p_running"])?;
        for (t, r) in results.iter().enumerate() {
            for row in &r.trajectory {
                let mut row = row.clone();
                row[0] = t.to_string();
                w.write_record(&row)?;
            }
        }
        w.flush()?;
    }

    let k = results.len();
    let rejections = results.iter().filter(|r| r.rejected).count();
    let power = checkpoints
        .iter()
        .map(|&c| {
            let r = results.iter().filter(|r| r.rejected && r.samples <= c).count();
            PowerRow {
                n: c,
                rejections: r,
                rate: Num(r as f64 / k as f64),
                std_error: Num(binomial_se(r, k)),
            }
        })
        .collect();
    let summary = Summary {
        command: "tst",
        config: ConfigEcho::new(args, trees, Some(theta0), rotate),
        decision: if k == 1 && rejections == 1 { "REJECT" } else if k == 1 { "CONTINUE" } else { "AGGREGATE" },
        rejections,
        rejection_rate: Num(rejections as f64 / k as f64),
        std_error: Num(binomial_se(rejections, k)),
        power,
        mean_stopping_time: Num(results.iter().map(|r| r.samples as f64).sum::<f64>() / k as f64),
        stopped_early: results.iter().any(|r| r.truncated),
        trials: results
            .iter()
            .enumerate()
            .map(|(t, r)| TrialRow {
                trial: t,
                samples: r.samples,
                rejected: r.rejected,
                p_current: Num(r.p_current),
                p_running: Num(r.p_running),
            })
            .collect(),
        runtime_seconds: args.timing.then(|| Num(start.elapsed().as_secs_f64())),
        dataset: info,
    };
    Ok(to_json(&summary))
}
