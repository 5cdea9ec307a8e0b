//! `kdswitch predict`: per-step log loss and cumulative NLL.

use std::time::Instant;

use kdswitch::{split_seed, Alphabet, Ensemble, EnsembleConfig, LabelPrior, TreeConfig};
use serde::Serialize;

use super::{bits, csv_input, dataset_spec, ConfigEcho, DatasetInfo, Dominance, DominanceTracker, Input};
use super::{DATA_STREAM, MODEL_STREAM, SHUFFLE_STREAM};
use crate::error::{CliError, Result};
use crate::output::{self, fmt_num, to_json, Num};
use crate::RunArgs;

#[derive(Debug, Serialize)]
struct Summary {
    command: &'static str,
    dataset: DatasetInfo,
    config: ConfigEcho,
    samples: u64,
    stopped_early: bool,
    nll_bits: Num,
    conditional_entropy_bits: Option<Num>,
    excess_nll_bits: Option<Num>,
    dominance: Dominance,
    runtime_seconds: Option<Num>,
}

pub fn run(args: &RunArgs) -> Result<String> {
    let trees = args.trees.unwrap_or(1);
    let rotate = args.rotate_or(false);
    let Input { samples, info } = match dataset_spec(args, None)? {
        Some(mut spec) => {
            spec.apply_theta0(args.theta0)?;
            let stream = spec.generator.stream(args.n, split_seed(args.seed, DATA_STREAM))?;
            if args.theta0.is_some() {
                let info = DatasetInfo::from_meta(stream.meta());
                Input { samples: Box::new(stream), info }
            } else {
                // Unknown prior: the pooled sample arrives in random order.
                let stream = stream.shuffled(split_seed(args.seed, SHUFFLE_STREAM));
                let info = DatasetInfo::from_meta(stream.meta());
                Input { samples: Box::new(stream), info }
            }
        }
        None => csv_input(args)?,
    };
    let alphabet = Alphabet::new(info.alphabet)?;
    let prior = match args.theta0 {
        None => LabelPrior::Unknown,
        Some(t) => {
            if info.alphabet != 2 {
                return Err(CliError::Data(format!(
                    "--theta0 needs binary labels, found {} distinct labels",
                    info.alphabet
                )));
            }
            LabelPrior::bernoulli(t)?
        }
    };
    let tree = TreeConfig::new(info.dim, alphabet).schedule(args.mode.schedule()).label_prior(prior);
    let mut ens = Ensemble::new(
        EnsembleConfig::new(tree, trees).rotate(rotate).parallel(trees > 1),
        split_seed(args.seed, MODEL_STREAM),
    )?;

    let mut records = match &args.out {
        Some(path) => {
            let mut w = csv::Writer::from_writer(output::create(path)?);
            let mut header = vec!["n", "label", "prob", "loss_bits", "nll_bits"];
            if args.timing {
                header.push("wall_us");
            }
            w.write_record(&header)?;
            Some(w)
        }
        None => None,
    };

    let start = Instant::now();
    let mut dominance = DominanceTracker::new();
    let mut stopped_early = false;
    for s in samples {
        if let Some(limit) = args.max_seconds {
            if start.elapsed().as_secs_f64() > limit {
                stopped_early = true;
                break;
            }
        }
        if s.label >= info.alphabet {
            return Err(CliError::Data(format!("label {} outside the alphabet", s.label)));
        }
        let step = Instant::now();
        let p = ens.predict(&s.features)?;
        let log_p = ens.observe_label(s.label)?;
        let wall = step.elapsed();
        dominance.check(&ens);
        if let Some(w) = records.as_mut() {
            let n = ens.samples_seen();
            let mut row = vec![
                n.to_string(),
                s.label.to_string(),
                fmt_num(p.get(s.label)),
                fmt_num(-bits(log_p)),
                fmt_num(-bits(ens.cumulative_logprob()) / n as f64),
            ];
            if args.timing {
                row.push(fmt_num(wall.as_secs_f64() * 1e6));
            }
            w.write_record(&row)?;
        }
    }
    if let Some(mut w) = records {
        w.flush()?;
    }
    let runtime = start.elapsed().as_secs_f64();

    let n = ens.samples_seen();
    let nll = if n == 0 { 0.0 } else { -bits(ens.cumulative_logprob()) / n as f64 };
    let h = info.conditional_entropy_bits;
    let summary = Summary {
        command: "predict",
        config: ConfigEcho::new(args, trees, args.theta0, rotate),
        samples: n,
        stopped_early,
        nll_bits: Num(nll),
        conditional_entropy_bits: h,
        excess_nll_bits: h.map(|h| Num(nll - h.0)),
        dominance: dominance.finish(&ens),
        runtime_seconds: args.timing.then_some(Num(runtime)),
        dataset: info,
    };
    Ok(to_json(&summary))
}
