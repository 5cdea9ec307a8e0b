//! Dataset specs (`name:key=value,...`) and CSV ingestion.

use std::collections::BTreeMap;
use std::path::Path;

use kdswitch::datagen::{BlobsParams, GaussianPair, MultiscaleParams, ThresholdParams};
use kdswitch::{Generator, Sample};

use crate::error::{CliError, Result};

/// A parsed `--dataset` value. `theta0` is reported separately because the
/// command decides whether it also configures the predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub generator: Generator,
    /// Whether the spec string set the generator's label prior explicitly.
    pub explicit_theta0: bool,
}

const GAUSSIAN_DEFAULT_DIM: usize = 50;

fn parse_kv(body: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("dataset parameter `{part}` is not key=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("dataset parameter `{k}` has non-numeric value `{v}`")))?;
        if out.insert(k.trim().to_string(), v).is_some() {
            return Err(CliError::Config(format!("dataset parameter `{k}` given twice")));
        }
    }
    Ok(out)
}

struct Params {
    name: &'static str,
    kv: BTreeMap<String, f64>,
}

impl Params {
    fn take(&mut self, key: &str) -> Option<f64> {
        self.kv.remove(key)
    }

    fn float(&mut self, key: &str, default: f64) -> f64 {
        self.take(key).unwrap_or(default)
    }

    fn count(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(v as usize),
            Some(v) => Err(CliError::Config(format!("{}: `{key}` must be a non-negative integer, got {v}", self.name))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.kv.keys().next() {
            None => Ok(()),
            Some(k) => Err(CliError::Config(format!("{}: unknown parameter `{k}`", self.name))),
        }
    }
}

impl DatasetSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, body) = spec.split_once(':').unwrap_or((spec, ""));
        let kv = parse_kv(body)?;
        let explicit_theta0 = kv.contains_key("theta0");
        let name = name.trim();
        let gaussian = |p: &mut Params, shift: f64, variance: f64| -> Result<GaussianPair> {
            Ok(GaussianPair {
                dim: p.count("d", GAUSSIAN_DEFAULT_DIM)?,
                theta0: p.float("theta0", 0.5),
                mean_shift: p.float("shift", shift),
                variance: p.float("variance", variance),
            })
        };
        let mut p = Params {
            name: match name {
                "sg" => "sg",
                "gmd" => "gmd",
                "gvd" => "gvd",
                "blobs" => "blobs",
                "multiscale_gmm" => "multiscale_gmm",
                "threshold" => "threshold",
                other => return Err(CliError::Config(format!("unknown dataset `{other}`"))),
            },
            kv,
        };
        let generator = match p.name {
            "sg" => {
                let g = GaussianPair {
                    dim: p.count("d", GAUSSIAN_DEFAULT_DIM)?,
                    theta0: p.float("theta0", 0.5),
                    mean_shift: 0.0,
                    variance: 1.0,
                };
                Generator::Sg(g)
            }
            "gmd" => Generator::Gmd(gaussian(&mut p, 1.0, 1.0)?),
            "gvd" => Generator::Gvd(gaussian(&mut p, 0.0, 2.0)?),
            "blobs" => {
                let d = BlobsParams::default();
                Generator::Blobs(BlobsParams {
                    grid: p.count("grid", d.grid)?,
                    pitch: p.float("pitch", d.pitch),
                    stretch: p.float("stretch", d.stretch),
                    angle: p.float("angle", d.angle),
                    scale: p.float("scale", d.scale),
                    theta0: p.float("theta0", d.theta0),
                })
            }
            "multiscale_gmm" => {
                let d = MultiscaleParams::default();
                Generator::MultiscaleGmm(MultiscaleParams {
                    theta0: p.float("theta0", d.theta0),
                    entropy_draws: p.count("entropy_draws", d.entropy_draws as usize)? as u64,
                })
            }
            _ => Generator::Threshold(ThresholdParams {
                dim: p.count("d", 2)?,
                noise: p.float("noise", 0.1),
            }),
        };
        p.finish()?;
        Ok(DatasetSpec {
            generator,
            explicit_theta0,
        })
    }

    /// Sets the generator's label prior unless the spec string fixed it.
    /// Returns the prior the generator ends up with, if it has one.
    pub fn apply_theta0(&mut self, theta0: Option<f64>) -> Result<Option<f64>> {
        let slot = match &mut self.generator {
            Generator::Sg(g) | Generator::Gmd(g) | Generator::Gvd(g) => Some(&mut g.theta0),
            Generator::Blobs(b) => Some(&mut b.theta0),
            Generator::MultiscaleGmm(m) => Some(&mut m.theta0),
            Generator::Threshold(_) => None,
        };
        match (slot, theta0) {
            (None, _) => Ok(None),
            (Some(cur), None) => Ok(Some(*cur)),
            (Some(cur), Some(t)) => {
                if self.explicit_theta0 && *cur != t {
                    return Err(CliError::Config(format!(
                        "--theta0 {t} contradicts theta0={cur} in the dataset spec"
                    )));
                }
                *cur = t;
                Ok(Some(t))
            }
        }
    }
}

/// Labeled rows read from a CSV file.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvData {
    pub samples: Vec<Sample>,
    pub dim: usize,
    pub feature_names: Vec<String>,
    /// Original label strings in index order (first appearance).
    pub labels: Vec<String>,
}

/// Reads a headed CSV. The label column is named by `label_col`; every
/// other column is a numeric feature, in file order.
pub fn read_csv(path: &Path, label_col: &str) -> Result<CsvData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_col)
        .ok_or_else(|| CliError::Data(format!("{}: no column named `{label_col}`", path.display())))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    if feature_names.is_empty() {
        return Err(CliError::Data(format!("{}: no feature columns", path.display())));
    }
    let mut labels: Vec<String> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut samples = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let mut features = Vec::with_capacity(feature_names.len());
        for (i, field) in row.iter().enumerate() {
            if i == label_idx {
                continue;
            }
            let x: f64 = field.trim().parse().map_err(|_| {
                CliError::Data(format!(
                    "{} line {line}: column `{}` is not a number: `{field}`",
                    path.display(),
                    &headers[i]
                ))
            })?;
            if !x.is_finite() {
                return Err(CliError::Data(format!("{} line {line}: non-finite feature", path.display())));
            }
            features.push(x);
        }
        let raw = &row[label_idx];
        let label = *index.entry(raw.to_string()).or_insert_with(|| {
            labels.push(raw.to_string());
            labels.len() - 1
        });
        samples.push(Sample { label, features });
    }
    Ok(CsvData {
        samples,
        dim: feature_names.len(),
        feature_names,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_specs_with_defaults() {
        let s = DatasetSpec::parse("threshold:d=3,noise=0.25").unwrap();
        assert_eq!(s.generator, Generator::Threshold(ThresholdParams { dim: 3, noise: 0.25 }));
        assert_eq!(DatasetSpec::parse("sg").unwrap().generator, Generator::sg(50));
        assert_eq!(DatasetSpec::parse("gmd:d=10").unwrap().generator, Generator::gmd(10));
        let b = DatasetSpec::parse("blobs:grid=3").unwrap().generator;
        assert!(matches!(b, Generator::Blobs(BlobsParams { grid: 3, .. })));
        assert!(DatasetSpec::parse("sg:theta0=0.3").unwrap().explicit_theta0);
    }

    #[test]
    fn rejects_bad_specs() {
        for bad in ["nope", "sg:d", "sg:d=x", "sg:shift=1", "sg:d=1.5", "threshold:d=2,d=3"] {
            assert!(matches!(DatasetSpec::parse(bad), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn theta0_flag_and_spec_interplay() {
        let mut s = DatasetSpec::parse("gmd:d=2").unwrap();
        assert_eq!(s.apply_theta0(Some(0.3)).unwrap(), Some(0.3));
        let mut s = DatasetSpec::parse("gmd:d=2,theta0=0.4").unwrap();
        assert!(s.apply_theta0(Some(0.3)).is_err());
        assert_eq!(s.apply_theta0(None).unwrap(), Some(0.4));
        let mut t = DatasetSpec::parse("threshold").unwrap();
        assert_eq!(t.apply_theta0(Some(0.3)).unwrap(), None);
    }

    #[test]
    fn csv_labels_map_by_first_appearance() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "x,class,y\n1.5,dog,2\n0.5,cat,-1\n3,dog,0").unwrap();
        let d = read_csv(f.path(), "class").unwrap();
        assert_eq!(d.labels, ["dog", "cat"]);
        assert_eq!(d.feature_names, ["x", "y"]);
        assert_eq!(d.samples[1], Sample { label: 1, features: vec![0.5, -1.0] });
    }

    #[test]
    fn csv_errors_name_the_line() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "label,z0\n0,1.0\n1,abc").unwrap();
        match read_csv(f.path(), "label") {
            Err(CliError::Data(msg)) => assert!(msg.contains("line 3"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_csv(f.path(), "missing"), Err(CliError::Data(_))));
        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "label,z0\n0,1.0\n1,2.0,3.0").unwrap();
        assert!(matches!(read_csv(g.path(), "label"), Err(CliError::Data(_))));
    }
}
