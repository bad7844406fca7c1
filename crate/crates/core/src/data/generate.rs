//! Synthetic datasets.
//!
//! Gaussian vectors are `μ + Lz` with `L` the Cholesky factor of the
//! covariance and `z` standard normals from the ziggurat sampler of
//! `rand_distr`, driven by ChaCha8 seeded through [`rng_from_seed`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{Cell, Dataset};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Four-cell Gaussian mixture. Cells are ordered as [`Cell::ALL`]:
/// (a=1,y=1), (a=0,y=1), (a=1,y=0), (a=0,y=0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub cell_probs: [f64; 4],
    pub cell_means: [Vec<f64>; 4],
    pub cell_covs: [Vec<Vec<f64>>; 4],
}

impl Default for MixtureSpec {
    fn default() -> Self {
        let diag = |a: f64, b: f64| vec![vec![a, 0.0], vec![0.0, b]];
        MixtureSpec {
            cell_probs: [0.2, 0.1, 0.3, 0.4],
            cell_means: [vec![6.0, 0.0], vec![-2.0, 0.0], vec![6.0, 0.0], vec![-4.0, 0.0]],
            cell_covs: [diag(3.5, 5.0), diag(5.0, 5.0), diag(3.5, 5.0), diag(5.0, 5.0)],
        }
    }
}

impl MixtureSpec {
    pub fn dim(&self) -> usize {
        self.cell_means[0].len()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MixtureSpec = serde_json::from_str(text).map_err(|e| Error::Format {
            path: "<mixture spec>".into(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler().map(|_| ())
    }

    fn sampler(&self) -> Result<MixtureSampler> {
        let invalid = |m: String| Err(Error::InvalidArgument(m));
        let total: f64 = self.cell_probs.iter().sum();
        if self.cell_probs.iter().any(|&p| !(p > 0.0 && p < 1.0)) || (total - 1.0).abs() > 1e-9 {
            return invalid(format!("cell probabilities {:?} must lie in (0,1) and sum to 1", self.cell_probs));
        }
        let d = self.dim();
        if d == 0 {
            return invalid("cell means must be nonempty".into());
        }
        let mut gaussians = Vec::with_capacity(4);
        for (k, cell) in Cell::ALL.iter().enumerate() {
            if self.cell_means[k].len() != d {
                return invalid(format!("mean of cell {cell} has length {}, expected {d}", self.cell_means[k].len()));
            }
            gaussians.push(Gaussian::new(&self.cell_means[k], &self.cell_covs[k]).map_err(|m| {
                Error::InvalidArgument(format!("covariance of cell {cell}: {m}"))
            })?);
        }
        Ok(MixtureSampler {
            probs: self.cell_probs,
            gaussians,
        })
    }
}

pub(crate) struct Gaussian {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    inv: DMatrix<f64>,
    log_norm: f64,
}

impl Gaussian {
    pub(crate) fn new(mean: &[f64], cov: &[Vec<f64>]) -> std::result::Result<Self, String> {
        let d = mean.len();
        if cov.len() != d || cov.iter().any(|r| r.len() != d) {
            return Err(format!("must be {d}x{d}"));
        }
        let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        if m.iter().any(|v| !v.is_finite()) || (0..d).any(|i| (0..i).any(|j| m[(i, j)] != m[(j, i)])) {
            return Err("must be finite and symmetric".into());
        }
        let chol = m.cholesky().ok_or("is not positive definite")?;
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Gaussian {
            mean: DVector::from_column_slice(mean),
            inv: chol.inverse(),
            chol: l,
            log_norm: -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
        })
    }

    pub(crate) fn sample_into(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        let d = self.mean.len();
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        out.extend((&self.mean + &self.chol * z).iter());
    }

    pub(crate) fn log_pdf(&self, x: &[f64]) -> f64 {
        let r = DVector::from_column_slice(x) - &self.mean;
        self.log_norm - 0.5 * r.dot(&(&self.inv * &r))
    }
}

struct MixtureSampler {
    probs: [f64; 4],
    gaussians: Vec<Gaussian>,
}

impl MixtureSampler {
    fn pick(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in self.probs.iter().enumerate().take(3) {
            acc += p;
            if u < acc {
                return k;
            }
        }
        3
    }
}

/// `n` draws: the cell from `cell_probs`, then features from that cell's Gaussian.
pub fn generate_mixture(n: usize, spec: &MixtureSpec, seed: u64) -> Result<Dataset<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let sampler = spec.sampler()?;
    let mut rng = rng_from_seed(seed);
    let mut features = Vec::with_capacity(n * spec.dim());
    let mut sensitive = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = sampler.pick(&mut rng);
        sampler.gaussians[k].sample_into(&mut rng, &mut features);
        sensitive.push(Cell::ALL[k].a);
        labels.push(Cell::ALL[k].y);
    }
    Dataset::from_flat(features, spec.dim(), sensitive, labels)
}

/// Fixed number of draws per cell (ordered as [`Cell::ALL`]); `cell_probs` is ignored.
pub fn generate_mixture_per_cell(counts: [usize; 4], spec: &MixtureSpec, seed: u64) -> Result<Dataset<f64>> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return Err(Error::InvalidArgument("at least one row is required".into()));
    }
    let sampler = spec.sampler()?;
    let mut rng = rng_from_seed(seed);
    let mut features = Vec::with_capacity(n * spec.dim());
    let mut sensitive = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (k, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            sampler.gaussians[k].sample_into(&mut rng, &mut features);
            sensitive.push(Cell::ALL[k].a);
            labels.push(Cell::ALL[k].y);
        }
    }
    Dataset::from_flat(features, spec.dim(), sensitive, labels)
}

/// The π/4 rotation matrix `R` of the landscape generator. Features are
/// treated as row vectors, so the rotated point is `x′ = xR`.
pub fn landscape_rotation() -> [[f64; 2]; 2] {
    let c = std::f64::consts::FRAC_1_SQRT_2;
    [[c, -c], [c, c]]
}

/// `x′ = xR` for the landscape rotation `R`.
pub fn landscape_rotate(x: [f64; 2]) -> [f64; 2] {
    let r = landscape_rotation();
    [x[0] * r[0][0] + x[1] * r[1][0], x[0] * r[0][1] + x[1] * r[1][1]]
}

/// `Y ~ Bernoulli(1/2)`, `X | Y=1 ~ N((2,2), [5 1; 1 5])`, `X | Y=0 ~ N((−2,−2), [10 1; 1 3])`,
/// and `A = 1` with probability `p₁(x′) / (p₁(x′) + p₀(x′))` where `x′ = xR` (see [`landscape_rotation`])
/// and `p_y` are the two class-conditional densities.
pub fn generate_landscape_data(n: usize, seed: u64) -> Result<Dataset<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let pos = Gaussian::new(&[2.0, 2.0], &[vec![5.0, 1.0], vec![1.0, 5.0]]).expect("fixed covariance");
    let neg = Gaussian::new(&[-2.0, -2.0], &[vec![10.0, 1.0], vec![1.0, 3.0]]).expect("fixed covariance");
    let mut rng = rng_from_seed(seed);
    let mut features = Vec::with_capacity(2 * n);
    let mut sensitive = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.random_bool(0.5) as u8;
        let start = features.len();
        if y == 1 { &pos } else { &neg }.sample_into(&mut rng, &mut features);
        let xr = landscape_rotate([features[start], features[start + 1]]);
        let (l1, l0) = (pos.log_pdf(&xr), neg.log_pdf(&xr));
        let p1 = 1.0 / (1.0 + (l0 - l1).exp());
        sensitive.push(rng.random_bool(p1) as u8);
        labels.push(y);
    }
    Dataset::from_flat(features, 2, sensitive, labels)
}
