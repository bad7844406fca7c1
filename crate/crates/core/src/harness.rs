//! Monte Carlo experiments: null rejection rates, limit histograms, fairness
//! landscapes and regularization sweeps.
//!
//! Replication `r` of a run with base seed `s` and sample size `n` draws its
//! data from `derive_seed(derive_seed(s, n), r)`, so results do not depend on
//! the number of worker threads.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::audit::{run_test, Criterion};
use crate::data::{accuracy, generate_landscape_data, generate_mixture, train_logistic, MixtureSpec, TrainConfig};
use crate::domain::{compute_marginals, Dataset, LogisticModel};
use crate::error::{Error, Result};
use crate::limits::{chi1_quantile, check_alpha, estimate_theta_opp, odd_limit_sample, DEFAULT_MC_SAMPLES};
use crate::projection::Projector;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub alphas: Vec<f64>,
    pub base_seed: u64,
    pub criterion: Criterion,
    pub mixture: MixtureSpec,
    pub model: LogisticModel<f64>,
    /// Monte Carlo draws for the equalized odds quantile.
    pub mc_samples: usize,
}

impl Default for ExperimentConfig {
    /// Fair model `β = (0, 1)` on the default mixture.
    fn default() -> Self {
        ExperimentConfig {
            sample_sizes: vec![100, 500, 1000],
            replications: 2000,
            alphas: vec![0.5, 0.3, 0.1, 0.05, 0.01],
            base_seed: 0,
            criterion: Criterion::Opp,
            mixture: MixtureSpec::default(),
            model: LogisticModel::new(vec![0.0, 1.0], 0.0).expect("nonzero"),
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be at least 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::InvalidArgument("sample sizes must be positive".into()));
        }
        if self.alphas.is_empty() {
            return Err(Error::InvalidArgument("at least one alpha is required".into()));
        }
        for &a in &self.alphas {
            check_alpha(a)?;
        }
        if self.model.dim() != self.mixture.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.mixture.dim(),
                found: self.model.dim(),
            });
        }
        self.mixture.validate()
    }

    fn data_seed(&self, n: usize, rep: usize) -> u64 {
        derive_seed(derive_seed(self.base_seed, n as u64), rep as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionRow {
    pub n: usize,
    pub alpha: f64,
    /// Rejections divided by the replications that were not skipped.
    pub rate: f64,
    /// Replications with an empty `(a, y)` cell.
    pub skipped: usize,
}

/// Statistic and the quantile at each requested level, or `None` for a skipped replication.
fn replicate(cfg: &ExperimentConfig, n: usize, rep: usize) -> Result<Option<(f64, Vec<f64>)>> {
    let seed = cfg.data_seed(n, rep);
    let data = generate_mixture(n, &cfg.mixture, seed)?;
    let marg = match compute_marginals(&data) {
        Ok(m) => m,
        Err(Error::ImproperMarginals { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let projector = Projector::default();
    let (statistic, quantiles) = match cfg.criterion {
        Criterion::Opp => {
            let r = projector.opp(&data, &cfg.model)?.r_squared;
            let theta = estimate_theta_opp(&data, &marg, &cfg.model)?.theta_hat;
            let q = cfg
                .alphas
                .iter()
                .map(|&a| chi1_quantile(1.0 - a).map(|c| theta * c))
                .collect::<Result<Vec<_>>>()?;
            (r, q)
        }
        Criterion::Odd => {
            let r = projector.odd(&data, &cfg.model)?.r_squared;
            let sample = odd_limit_sample(&data, &marg, &cfg.model, cfg.mc_samples, derive_seed(seed, 0))?;
            (r, cfg.alphas.iter().map(|&a| sample.quantile(1.0 - a)).collect())
        }
    };
    Ok(Some((n as f64 * statistic, quantiles)))
}

/// Fraction of replications rejecting a true null at every `(n, α)`.
pub fn run_null_rejection(cfg: &ExperimentConfig) -> Result<Vec<RejectionRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.sample_sizes {
        let outcomes = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| replicate(cfg, n, rep))
            .collect::<Result<Vec<_>>>()?;
        let done: Vec<_> = outcomes.iter().flatten().collect();
        let skipped = cfg.replications - done.len();
        for (j, &alpha) in cfg.alphas.iter().enumerate() {
            let rejects = done.iter().filter(|(s, q)| *s > q[j]).count();
            let rate = if done.is_empty() { f64::NAN } else { rejects as f64 / done.len() as f64 };
            rows.push(RejectionRow { n, alpha, rate, skipped });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitHistogram {
    pub n: usize,
    /// `N · R` per replication; `NaN` for skipped replications.
    pub statistics: Vec<f64>,
    /// `θ` estimated on one large sample.
    pub theta_ref: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitRow {
    pub rep: usize,
    pub statistic: f64,
}

impl LimitHistogram {
    pub fn rows(&self) -> Vec<LimitRow> {
        self.statistics
            .iter()
            .enumerate()
            .map(|(rep, &statistic)| LimitRow { rep, statistic })
            .collect()
    }

    pub fn completed(&self) -> Vec<f64> {
        self.statistics.iter().copied().filter(|v| v.is_finite()).collect()
    }

    /// Kolmogorov–Smirnov distance to `θ_ref · χ²₁`.
    pub fn ks_to_limit(&self) -> f64 {
        let theta = self.theta_ref;
        ks_distance(&self.completed(), |x| crate::limits::chi1_cdf(x / theta))
    }
}

/// Equal opportunity statistics at sample size `n` (the first of `cfg.sample_sizes`)
/// and `θ` from an `oracle_n`-row draw.
pub fn run_limit_histogram(cfg: &ExperimentConfig, oracle_n: usize) -> Result<LimitHistogram> {
    cfg.validate()?;
    if oracle_n == 0 {
        return Err(Error::InvalidArgument("oracle_n must be positive".into()));
    }
    let n = cfg.sample_sizes[0];
    let statistics = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let data = generate_mixture(n, &cfg.mixture, cfg.data_seed(n, rep))?;
            match Projector::default().opp(&data, &cfg.model) {
                Ok(p) => Ok(n as f64 * p.r_squared),
                Err(Error::ImproperMarginals { .. }) => Ok(f64::NAN),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let oracle = generate_mixture(oracle_n, &cfg.mixture, derive_seed(cfg.base_seed, u64::MAX))?;
    let marg = compute_marginals(&oracle)?;
    let theta_ref = estimate_theta_opp(&oracle, &marg, &cfg.model)?.theta_hat;
    Ok(LimitHistogram {
        n,
        statistics,
        theta_ref,
    })
}

/// `sup_x |F̂(x) − F(x)|` for the empirical CDF of `samples` and a continuous `F`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let m = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((f - i as f64 / m).abs()).max(((j + 1) as f64 / m - f).abs());
        i = j + 1;
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LandscapeRow {
    pub beta1: f64,
    pub beta2: f64,
    /// `|P̂(h ≥ τ | A=1, Y=1) − P̂(h ≥ τ | A=0, Y=1)|`.
    pub gap_thr: f64,
    /// `|Ê[h | A=1, Y=1] − Ê[h | A=0, Y=1]|`.
    pub gap_prob: f64,
}

/// Intercept of the landscape classifier `h(x) = 1 / (1 + exp(1/3 − βᵀx))`.
pub const LANDSCAPE_INTERCEPT: f64 = -1.0 / 3.0;

/// Both equal opportunity gaps for every grid point, on one shared sample.
pub fn run_landscape(n: usize, beta_grid: &[(f64, f64)], tau: f64, seed: u64) -> Result<Vec<LandscapeRow>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {tau} outside (0, 1)")));
    }
    let data = generate_landscape_data(n, seed)?;
    let positives: Vec<(usize, [f64; 2])> = (0..data.len())
        .filter(|&i| data.labels()[i] == 1)
        .map(|i| (data.sensitive()[i] as usize, [data.row(i)[0], data.row(i)[1]]))
        .collect();
    let mut count = [0usize; 2];
    for (a, _) in &positives {
        count[*a] += 1;
    }
    if count.contains(&0) {
        return Err(Error::ImproperMarginals {
            empty: (0..2u8)
                .filter(|&a| count[a as usize] == 0)
                .map(|a| crate::domain::Cell::new(a, 1))
                .collect(),
        });
    }
    Ok(beta_grid
        .par_iter()
        .map(|&(b1, b2)| {
            let mut thr = [0.0; 2];
            let mut prob = [0.0; 2];
            for (a, x) in &positives {
                let h = crate::scalar::sigmoid(b1 * x[0] + b2 * x[1] + LANDSCAPE_INTERCEPT);
                prob[*a] += h;
                thr[*a] += (h >= tau) as u8 as f64;
            }
            let (c1, c0) = (count[1] as f64, count[0] as f64);
            LandscapeRow {
                beta1: b1,
                beta2: b2,
                gap_thr: (thr[1] / c1 - thr[0] / c0).abs(),
                gap_prob: (prob[1] / c1 - prob[0] / c0).abs(),
            }
        })
        .collect())
}

/// `steps` equally spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => vec![],
        1 => vec![lo],
        _ => (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect(),
    }
}

/// Cartesian grid `values × values`, first coordinate varying slowest.
pub fn square_grid(values: &[f64]) -> Vec<(f64, f64)> {
    values.iter().flat_map(|&a| values.iter().map(move |&b| (a, b))).collect()
}

/// Two features and equiprobable cells. `x1` has low variance, separates the
/// labels and is shifted by the sensitive attribute among positives; `x2` has
/// high variance and the same distribution in both groups. Penalized fits
/// lean on `x2` and become fairer while losing accuracy.
pub fn biased_sweep_spec() -> MixtureSpec {
    let cov = || vec![vec![0.09, 0.0], vec![0.0, 36.0]];
    MixtureSpec {
        cell_probs: [0.25; 4],
        cell_means: [vec![0.9, 6.0], vec![0.3, 6.0], vec![0.0, 0.0], vec![0.0, 0.0]],
        cell_covs: [cov(), cov(), cov(), cov()],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub statistic: f64,
    pub quantile: f64,
    pub accuracy: f64,
    pub reject: bool,
    /// False when training stopped at its iteration limit.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub alpha: f64,
    pub criterion: Criterion,
    pub mc_samples: usize,
    pub seed: u64,
    pub tau: f64,
    pub train: TrainConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            lambdas: linspace(0.0, 100.0, 50),
            alpha: 0.05,
            criterion: Criterion::Opp,
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
            tau: 0.5,
            train: TrainConfig::default(),
        }
    }
}

/// Trains one model per penalty and audits it on the test split.
pub fn run_regularization_sweep(train: &Dataset<f64>, test: &Dataset<f64>, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    check_alpha(cfg.alpha)?;
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            found: test.dim(),
        });
    }
    cfg.lambdas
        .par_iter()
        .map(|&lambda| {
            let tc = TrainConfig {
                l2_penalty: lambda,
                ..cfg.train
            };
            let out = train_logistic(train, &tc)?;
            let report = run_test(cfg.criterion, test, &out.model, cfg.alpha, cfg.mc_samples, cfg.seed)?;
            Ok(SweepRow {
                lambda,
                statistic: report.statistic,
                quantile: report.quantile,
                accuracy: accuracy(test, &out.model, cfg.tau)?,
                reject: report.reject,
                converged: out.converged,
            })
        })
        .collect()
}

/// Writes experiment rows as CSV with a header named after the row fields.
pub fn write_table<W: Write, R: Serialize>(rows: &[R], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_table<R: Serialize>(rows: &[R], path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_table(rows, std::io::BufWriter::new(file)).map_err(|e| io_err(std::io::Error::other(e)))
}
