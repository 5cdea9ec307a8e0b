//! Synthetic labeled sources.
//!
//! Every generator is a pure function of its parameters and seed. Labels are
//! drawn first (label 0 with probability `theta0`) and the features are then
//! sampled from the label's population, except for the threshold source,
//! which draws features first and derives a noisy label from them.
//!
//! Seeds: the stream's sampling generator is keyed by `split_seed(seed, 1)`.
//! Sources with random parameters (the multiscale mixture) draw them from
//! `split_seed(seed, 0)`, and Monte-Carlo entropy estimates use
//! `split_seed(seed, 2)`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, LN_2, PI};
use std::io;

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Dirichlet, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::forest::split_seed;

/// One observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub label: usize,
    pub features: Vec<f64>,
}

/// Reference value of the conditional entropy `H(L|Z)` in bits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EntropyRef {
    Exact(f64),
    MonteCarlo { bits: f64, std_error: f64, draws: u64 },
}

impl EntropyRef {
    pub fn bits(&self) -> f64 {
        match *self {
            EntropyRef::Exact(b) => b,
            EntropyRef::MonteCarlo { bits, .. } => bits,
        }
    }

    pub fn is_estimate(&self) -> bool {
        matches!(self, EntropyRef::MonteCarlo { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamMeta {
    pub generator: String,
    pub dim: usize,
    pub alphabet: usize,
    pub seed: u64,
    pub n: u64,
    pub conditional_entropy: Option<EntropyRef>,
    /// Every numeric parameter the source was built from, defaults included.
    pub params: BTreeMap<String, f64>,
    pub shuffled: bool,
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    h(p) + h(1.0 - p)
}

/// Two Gaussian populations. Population 0 is standard normal; population 1
/// has coordinate 0 scaled to variance `variance` and shifted by
/// `mean_shift`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPair {
    pub dim: usize,
    pub theta0: f64,
    pub mean_shift: f64,
    pub variance: f64,
}

/// Mixture of Gaussian blobs centered on a square lattice. Population 0
/// blobs are isotropic; population 1 blobs have the same trace but
/// eigenvalue ratio `stretch`, with the long axis at `angle`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlobsParams {
    pub grid: usize,
    pub pitch: f64,
    pub stretch: f64,
    pub angle: f64,
    /// Within-blob standard deviation multiplier.
    pub scale: f64,
    pub theta0: f64,
}

impl Default for BlobsParams {
    fn default() -> Self {
        BlobsParams {
            grid: 4,
            pitch: 5.0,
            stretch: 2.0,
            angle: FRAC_PI_4,
            scale: 1.0,
            theta0: 0.5,
        }
    }
}

/// Two nine-component mixtures in the unit square sharing means and
/// weights; covariances are drawn per label from an inverse-Wishart with
/// `dim + 2` degrees of freedom and scale `I`, `.01 I` or `.0001 I` for
/// each third of the components.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiscaleParams {
    pub theta0: f64,
    /// Draws behind the Monte-Carlo `H(L|Z)` estimate.
    pub entropy_draws: u64,
}

impl Default for MultiscaleParams {
    fn default() -> Self {
        MultiscaleParams {
            theta0: 0.5,
            entropy_draws: 200_000,
        }
    }
}

pub const MULTISCALE_COMPONENTS: usize = 9;
const MULTISCALE_DIM: usize = 2;

/// Uniform features on `[0,1]^dim`; label `1{z0 > ½}` flipped with
/// probability `noise`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdParams {
    pub dim: usize,
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    Sg(GaussianPair),
    Gmd(GaussianPair),
    Gvd(GaussianPair),
    Blobs(BlobsParams),
    MultiscaleGmm(MultiscaleParams),
    Threshold(ThresholdParams),
}

impl Generator {
    pub fn sg(dim: usize) -> Self {
        Generator::Sg(GaussianPair {
            dim,
            theta0: 0.5,
            mean_shift: 0.0,
            variance: 1.0,
        })
    }

    pub fn gmd(dim: usize) -> Self {
        Generator::Gmd(GaussianPair {
            dim,
            theta0: 0.5,
            mean_shift: 1.0,
            variance: 1.0,
        })
    }

    pub fn gvd(dim: usize) -> Self {
        Generator::Gvd(GaussianPair {
            dim,
            theta0: 0.5,
            mean_shift: 0.0,
            variance: 2.0,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Generator::Sg(_) => "sg",
            Generator::Gmd(_) => "gmd",
            Generator::Gvd(_) => "gvd",
            Generator::Blobs(_) => "blobs",
            Generator::MultiscaleGmm(_) => "multiscale_gmm",
            Generator::Threshold(_) => "threshold",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Generator::Sg(g) | Generator::Gmd(g) | Generator::Gvd(g) => g.dim,
            Generator::Blobs(_) => 2,
            Generator::MultiscaleGmm(_) => MULTISCALE_DIM,
            Generator::Threshold(t) => t.dim,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let prob = |name: &str, p: f64, open: bool| -> Result<()> {
            let ok = if open { p > 0.0 && p < 1.0 } else { (0.0..=1.0).contains(&p) };
            if ok {
                Ok(())
            } else {
                bad(format!("{name} must lie in {} 1), got {p}", if open { "(0," } else { "[0," }))
            }
        };
        match self {
            Generator::Sg(g) | Generator::Gmd(g) | Generator::Gvd(g) => {
                prob("theta0", g.theta0, true)?;
                if g.dim == 0 {
                    return Err(Error::ZeroDimension);
                }
                if !(g.variance > 0.0) || !g.mean_shift.is_finite() {
                    return bad(format!("invalid shift {} / variance {}", g.mean_shift, g.variance));
                }
            }
            Generator::Blobs(b) => {
                prob("theta0", b.theta0, true)?;
                if b.grid == 0 || !(b.pitch > 0.0) || !(b.stretch > 0.0) || !(b.scale >= 0.0) || !b.angle.is_finite() {
                    return bad(format!("invalid blobs parameters {b:?}"));
                }
            }
            Generator::MultiscaleGmm(m) => prob("theta0", m.theta0, true)?,
            Generator::Threshold(t) => {
                prob("noise", t.noise, false)?;
                if t.dim == 0 {
                    return Err(Error::ZeroDimension);
                }
            }
        }
        Ok(())
    }

    fn params(&self) -> BTreeMap<String, f64> {
        let mut p = BTreeMap::new();
        let mut put = |k: &str, v: f64| {
            p.insert(k.to_string(), v);
        };
        match self {
            Generator::Sg(g) | Generator::Gmd(g) | Generator::Gvd(g) => {
                put("d", g.dim as f64);
                put("theta0", g.theta0);
                put("shift", g.mean_shift);
                put("variance", g.variance);
            }
            Generator::Blobs(b) => {
                put("grid", b.grid as f64);
                put("pitch", b.pitch);
                put("stretch", b.stretch);
                put("angle", b.angle);
                put("scale", b.scale);
                put("theta0", b.theta0);
            }
            Generator::MultiscaleGmm(m) => {
                put("theta0", m.theta0);
                put("components", MULTISCALE_COMPONENTS as f64);
                put("entropy_draws", m.entropy_draws as f64);
            }
            Generator::Threshold(t) => {
                put("d", t.dim as f64);
                put("noise", t.noise);
            }
        }
        p
    }

    /// A stream of `n` samples.
    pub fn stream(&self, n: u64, seed: u64) -> Result<LabeledStream> {
        self.validate()?;
        let (source, conditional_entropy) = match self {
            Generator::Sg(g) | Generator::Gmd(g) | Generator::Gvd(g) => {
                let h = matches!(self, Generator::Sg(_)).then(|| EntropyRef::Exact(binary_entropy(g.theta0)));
                (Source::Gaussian(g.clone()), h)
            }
            Generator::Blobs(b) => (Source::Blobs(BlobSource::new(b)), None),
            Generator::MultiscaleGmm(m) => {
                let mix = MultiscaleMixture::sample_params(m.theta0, &mut ChaCha8Rng::seed_from_u64(split_seed(seed, 0)));
                let h = (m.entropy_draws > 0).then(|| {
                    mix.entropy_estimate(m.entropy_draws, &mut ChaCha8Rng::seed_from_u64(split_seed(seed, 2)))
                });
                (Source::Multiscale(Box::new(mix)), h)
            }
            Generator::Threshold(t) => (Source::Threshold(t.clone()), Some(EntropyRef::Exact(binary_entropy(t.noise)))),
        };
        Ok(LabeledStream {
            meta: StreamMeta {
                generator: self.name().to_string(),
                dim: self.dim(),
                alphabet: 2,
                seed,
                n,
                conditional_entropy,
                params: self.params(),
                shuffled: false,
            },
            inner: Inner::Live {
                source,
                rng: ChaCha8Rng::seed_from_u64(split_seed(seed, 1)),
                remaining: n,
            },
        })
    }
}

/// Same standard Gaussian for both populations.
pub fn gen_sg(d: usize, n: u64, seed: u64) -> Result<LabeledStream> {
    Generator::sg(d).stream(n, seed)
}

/// Population 1 shifted by +1 on coordinate 0.
pub fn gen_gmd(d: usize, n: u64, seed: u64) -> Result<LabeledStream> {
    Generator::gmd(d).stream(n, seed)
}

/// Population 1 with variance 2 on coordinate 0.
pub fn gen_gvd(d: usize, n: u64, seed: u64) -> Result<LabeledStream> {
    Generator::gvd(d).stream(n, seed)
}

pub fn gen_blobs(n: u64, seed: u64) -> Result<LabeledStream> {
    Generator::Blobs(BlobsParams::default()).stream(n, seed)
}

pub fn gen_multiscale_gmm(n: u64, seed: u64) -> Result<LabeledStream> {
    Generator::MultiscaleGmm(MultiscaleParams::default()).stream(n, seed)
}

pub fn gen_threshold(d: usize, n: u64, noise: f64, seed: u64) -> Result<LabeledStream> {
    Generator::Threshold(ThresholdParams { dim: d, noise }).stream(n, seed)
}

#[derive(Clone, Debug)]
enum Source {
    Gaussian(GaussianPair),
    Blobs(BlobSource),
    Multiscale(Box<MultiscaleMixture>),
    Threshold(ThresholdParams),
}

fn draw_label<R: Rng>(theta0: f64, rng: &mut R) -> usize {
    usize::from(rng.random::<f64>() >= theta0)
}

impl Source {
    fn draw<R: Rng>(&self, rng: &mut R) -> Sample {
        match self {
            Source::Gaussian(g) => {
                let label = draw_label(g.theta0, rng);
                let mut z: Vec<f64> = (0..g.dim).map(|_| rng.sample(StandardNormal)).collect();
                if label == 1 {
                    z[0] = z[0] * g.variance.sqrt() + g.mean_shift;
                }
                Sample { label, features: z }
            }
            Source::Blobs(b) => b.draw(rng),
            Source::Multiscale(m) => m.draw(rng),
            Source::Threshold(t) => {
                let z: Vec<f64> = (0..t.dim).map(|_| rng.random::<f64>()).collect();
                let flip = rng.random::<f64>() < t.noise;
                let label = usize::from((z[0] > 0.5) != flip);
                Sample { label, features: z }
            }
        }
    }
}

#[derive(Clone, Debug)]
struct BlobSource {
    params: BlobsParams,
    /// Cholesky factor of population 1's within-blob covariance.
    chol1: Matrix2<f64>,
}

impl BlobSource {
    fn new(params: &BlobsParams) -> Self {
        // Eigenvalues (2s/(1+s), 2/(1+s)) keep the trace at 2, like the
        // isotropic blobs.
        let s = params.stretch;
        let (l1, l2) = (2.0 * s / (1.0 + s), 2.0 / (1.0 + s));
        let (c, si) = (params.angle.cos(), params.angle.sin());
        let rot = Matrix2::new(c, -si, si, c);
        let cov = rot * Matrix2::new(l1, 0.0, 0.0, l2) * rot.transpose();
        let chol1 = cov.cholesky().expect("positive definite by construction").l();
        BlobSource {
            params: params.clone(),
            chol1,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Sample {
        let p = &self.params;
        let label = draw_label(p.theta0, rng);
        let cx = rng.random_range(0..p.grid) as f64 * p.pitch;
        let cy = rng.random_range(0..p.grid) as f64 * p.pitch;
        let e = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let e = if label == 1 { self.chol1 * e } else { e };
        Sample {
            label,
            features: vec![cx + p.scale * e[0], cy + p.scale * e[1]],
        }
    }
}

/// Inverse-Wishart draw with `df` degrees of freedom and scale `psi`:
/// the inverse of a Bartlett-decomposition Wishart draw with scale `psi⁻¹`.
pub fn inverse_wishart<R: Rng + ?Sized>(psi: &DMatrix<f64>, df: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let d = psi.nrows();
    if psi.ncols() != d || d == 0 {
        return Err(Error::InvalidParameter("inverse-Wishart scale must be square".into()));
    }
    if !(df > (d - 1) as f64) {
        return Err(Error::InvalidParameter(format!("inverse-Wishart needs df > {}, got {df}", d - 1)));
    }
    let not_pd = || Error::InvalidParameter("inverse-Wishart scale must be positive definite".into());
    let psi_inv = psi.clone().try_inverse().ok_or_else(not_pd)?;
    let l = psi_inv.cholesky().ok_or_else(not_pd)?.l();
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(df - i as f64).expect("df checked above");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let la = l * a;
    let w = &la * la.transpose();
    w.try_inverse().ok_or_else(not_pd)
}

#[derive(Clone, Debug)]
struct Component {
    chol: Matrix2<f64>,
    chol_inv: Matrix2<f64>,
    log_norm: f64,
}

impl Component {
    fn new(cov: Matrix2<f64>) -> Self {
        let chol = cov.cholesky().expect("inverse-Wishart draws are positive definite").l();
        let chol_inv = chol.try_inverse().expect("triangular with positive diagonal");
        let log_det = 2.0 * (chol[(0, 0)].ln() + chol[(1, 1)].ln());
        Component {
            chol,
            chol_inv,
            log_norm: -(2.0 * PI).ln() - 0.5 * log_det,
        }
    }

    fn log_density(&self, dz: Vector2<f64>) -> f64 {
        self.log_norm - 0.5 * (self.chol_inv * dz).norm_squared()
    }
}

/// The drawn parameters of the two multiscale mixtures.
#[derive(Clone, Debug)]
pub struct MultiscaleMixture {
    theta0: f64,
    means: Vec<Vector2<f64>>,
    weights: Vec<f64>,
    picker: WeightedIndex<f64>,
    /// `components[label][k]`.
    components: [Vec<Component>; 2],
}

impl MultiscaleMixture {
    fn sample_params<R: Rng>(theta0: f64, rng: &mut R) -> Self {
        let means: Vec<Vector2<f64>> = (0..MULTISCALE_COMPONENTS)
            .map(|_| Vector2::new(rng.random::<f64>(), rng.random::<f64>()))
            .collect();
        let weights: [f64; MULTISCALE_COMPONENTS] = Dirichlet::new([1.0; MULTISCALE_COMPONENTS])
            .expect("unit concentrations")
            .sample(rng);
        let df = (MULTISCALE_DIM + 2) as f64;
        let draw_components = |rng: &mut R| -> Vec<Component> {
            (0..MULTISCALE_COMPONENTS)
                .map(|k| {
                    let scale = [1.0, 1e-2, 1e-4][3 * k / MULTISCALE_COMPONENTS];
                    let psi = DMatrix::<f64>::identity(MULTISCALE_DIM, MULTISCALE_DIM) * scale;
                    let cov = inverse_wishart(&psi, df, rng).expect("valid scale and df");
                    Component::new(Matrix2::from_iterator(cov.iter().copied()))
                })
                .collect()
        };
        let components = [draw_components(rng), draw_components(rng)];
        MultiscaleMixture {
            theta0,
            picker: WeightedIndex::new(weights).expect("Dirichlet weights are positive"),
            weights: weights.to_vec(),
            means,
            components,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Sample {
        let label = draw_label(self.theta0, rng);
        let k = self.picker.sample(rng);
        let e = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let z = self.means[k] + self.components[label][k].chol * e;
        Sample {
            label,
            features: vec![z[0], z[1]],
        }
    }

    /// `ln p(z | label)`.
    fn log_density(&self, label: usize, z: Vector2<f64>) -> f64 {
        self.components[label]
            .iter()
            .zip(&self.means)
            .zip(&self.weights)
            .fold(f64::NEG_INFINITY, |acc, ((c, m), w)| {
                let x = w.ln() + c.log_density(z - m);
                let (hi, lo) = if acc > x { (acc, x) } else { (x, acc) };
                if lo == f64::NEG_INFINITY {
                    hi
                } else {
                    hi + (lo - hi).exp().ln_1p()
                }
            })
    }

    /// `-log2 P(label | z)` under the true joint.
    pub fn posterior_surprisal(&self, label: usize, z: [f64; 2]) -> f64 {
        let z = Vector2::new(z[0], z[1]);
        let prior = [self.theta0.ln(), (1.0 - self.theta0).ln()];
        let lj = [prior[0] + self.log_density(0, z), prior[1] + self.log_density(1, z)];
        let (hi, lo) = if lj[0] > lj[1] { (lj[0], lj[1]) } else { (lj[1], lj[0]) };
        let norm = hi + (lo - hi).exp().ln_1p();
        (norm - lj[label]) / LN_2
    }

    /// Monte-Carlo estimate of `H(L|Z)` in bits from `draws` joint samples.
    pub fn entropy_estimate<R: Rng>(&self, draws: u64, rng: &mut R) -> EntropyRef {
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..draws {
            let s = self.draw(rng);
            let v = self.posterior_surprisal(s.label, [s.features[0], s.features[1]]);
            sum += v;
            sum_sq += v * v;
        }
        let n = draws as f64;
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0);
        EntropyRef::MonteCarlo {
            bits: mean,
            std_error: (var / n).sqrt(),
            draws,
        }
    }
}

/// Rebuilds the multiscale mixture a stream with this seed samples from.
pub fn multiscale_mixture(params: &MultiscaleParams, seed: u64) -> MultiscaleMixture {
    MultiscaleMixture::sample_params(params.theta0, &mut ChaCha8Rng::seed_from_u64(split_seed(seed, 0)))
}

#[derive(Debug)]
enum Inner {
    Live {
        source: Source,
        rng: ChaCha8Rng,
        remaining: u64,
    },
    Buffered(std::vec::IntoIter<Sample>),
}

/// A finite stream of labeled samples with its provenance.
#[derive(Debug)]
pub struct LabeledStream {
    meta: StreamMeta,
    inner: Inner,
}

impl LabeledStream {
    pub fn meta(&self) -> &StreamMeta {
        &self.meta
    }

    /// Pools the remaining samples and returns them in a uniformly random
    /// order, so the label sequence no longer comes from a known prior.
    pub fn shuffled(self, seed: u64) -> LabeledStream {
        let mut meta = self.meta.clone();
        let mut samples: Vec<Sample> = self.collect();
        samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        meta.shuffled = true;
        meta.n = samples.len() as u64;
        LabeledStream {
            meta,
            inner: Inner::Buffered(samples.into_iter()),
        }
    }
}

impl Iterator for LabeledStream {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        match &mut self.inner {
            Inner::Live { source, rng, remaining } => {
                if *remaining == 0 {
                    return None;
                }
                *remaining -= 1;
                Some(source.draw(rng))
            }
            Inner::Buffered(it) => it.next(),
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        match &self.inner {
            Inner::Live { remaining, .. } => (*remaining as usize, Some(*remaining as usize)),
            Inner::Buffered(it) => it.size_hint(),
        }
    }
}

/// Formats a float with 17 significant digits, enough to round-trip.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes samples as CSV with header `label,z0,...,z{d-1}`.
pub fn write_csv<W: io::Write, I: IntoIterator<Item = Sample>>(samples: I, dim: usize, out: W) -> Result<u64> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["label".to_string()];
    header.extend((0..dim).map(|i| format!("z{i}")));
    w.write_record(&header)?;
    let mut rows = 0;
    let mut record = Vec::with_capacity(dim + 1);
    for s in samples {
        if s.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.features.len(),
            });
        }
        record.clear();
        record.push(s.label.to_string());
        record.extend(s.features.iter().map(|&x| format_f64(x)));
        w.write_record(&record)?;
        rows += 1;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(rows)
}
