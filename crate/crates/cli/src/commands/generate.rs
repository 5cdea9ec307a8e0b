//! `kdswitch generate`: write a synthetic stream as CSV.

use std::io;

use kdswitch::datagen::write_csv;
use kdswitch::split_seed;
use serde::Serialize;

use super::{dataset_spec, DatasetInfo, DATA_STREAM};
use crate::error::{CliError, Result};
use crate::output::{self, to_json};
use crate::RunArgs;

#[derive(Debug, Serialize)]
struct Summary {
    command: &'static str,
    dataset: DatasetInfo,
    seed: u64,
    rows: u64,
}

/// Uses the same data seed as `predict`, so a generated file replays the
/// exact stream `predict --theta0 ...` would have drawn.
pub fn run(args: &RunArgs) -> Result<String> {
    if args.csv.is_some() {
        return Err(CliError::Config("generate takes --dataset, not --csv".into()));
    }
    let mut spec = dataset_spec(args, None)?.expect("--dataset is required without --csv");
    spec.apply_theta0(args.theta0)?;
    let stream = spec.generator.stream(args.n, split_seed(args.seed, DATA_STREAM))?;
    let info = DatasetInfo::from_meta(stream.meta());
    let dim = info.dim;
    let rows = match &args.out {
        Some(path) => write_csv(stream, dim, output::create(path)?)?,
        None => write_csv(stream, dim, io::stdout().lock())?,
    };
    Ok(to_json(&Summary {
        command: "generate",
        dataset: info,
        seed: args.seed,
        rows,
    }))
}
