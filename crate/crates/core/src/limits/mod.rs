//! Limiting distributions of the scaled projection statistics and the test quantiles.
//!
//! Equal opportunity: `N·R → θ·χ²₁` with `θ = σ₁² / (T · p₀₁² · p₁₁²)`.
//!
//! Equalized odds: `N·R` converges to
//! `sup_{γ,ζ} γH₁ + ζH₀ − ¼(γ²Q₁₁ + ζ²Q₀₀)` with `H_y ~ N(0, σ_y²)/(p₁y·p₀y)`.
//! The quadratic form is written with the concave `−¼` sign (the first-order
//! expansion of the inner problems), which keeps the supremum finite. Its
//! off-diagonal entry vanishes identically because no sample belongs to both
//! label groups, so the supremum is `H₁²/Q₁₁ + H₀²/Q₀₀`.

mod special;

pub use special::{chi1_cdf, normal_cdf, normal_quantile};

use rand_distr::{Distribution, StandardNormal};

use crate::domain::{Dataset, LogisticModel, Marginals};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid_slope, Real};
use crate::seed::{derive_seed, rng_from_seed};

/// Default Monte Carlo sample count for the equalized odds quantile.
pub const DEFAULT_MC_SAMPLES: usize = 10_000;

/// Plug-in estimate of the equal opportunity scale `θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaEstimate<T> {
    pub theta_hat: T,
    /// Sample average estimate of `E‖∇h(X)(1₁₁/p₁₁ − 1₀₁/p₀₁)‖²`.
    pub t_hat: T,
    pub sigma1_sq_hat: T,
}

/// Diagonal quadratic form of the equalized odds limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticForm<T> {
    /// `γγ` entry (label group `y = 1`).
    pub q11: T,
    /// `ζζ` entry (label group `y = 0`).
    pub q00: T,
    /// `γζ` entry, computed term by term.
    pub cross: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OddQuantileEstimate<T> {
    pub eta_hat: T,
    pub level: T,
    pub mc_samples: usize,
    pub seed: u64,
    pub sigma0_sq_hat: T,
    pub sigma1_sq_hat: T,
    pub q11: T,
    pub q00: T,
}

/// Monte Carlo draws from the plug-in equalized odds limit, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct OddLimitSample<T> {
    pub values: Vec<T>,
    pub seed: u64,
    pub sigma0_sq_hat: T,
    pub sigma1_sq_hat: T,
    pub form: QuadraticForm<T>,
}

impl<T: Real> OddLimitSample<T> {
    /// Empirical quantile `v_(⌈level·M⌉)` (inverse of the empirical CDF).
    pub fn quantile(&self, level: T) -> T {
        empirical_quantile(&self.values, level)
    }
}

pub(crate) fn empirical_quantile<T: Real>(sorted: &[T], level: T) -> T {
    let m = sorted.len();
    let rank = (level * T::from_count(m)).ceil().to_usize().unwrap_or(0);
    sorted[rank.clamp(1, m) - 1]
}

/// `p̂₁y`, `p̂₀y` and the model scores, shared by the estimators.
struct Scores<'a, T> {
    data: &'a Dataset<T>,
    model: &'a LogisticModel<T>,
}

impl<'a, T: Real> Scores<'a, T> {
    fn new(data: &'a Dataset<T>, marg: &Marginals<T>, model: &'a LogisticModel<T>) -> Result<Self> {
        model.check_dim(data.dim())?;
        if marg.n() != data.len() {
            return Err(Error::InvalidArgument("marginals were computed from a different dataset".into()));
        }
        Ok(Scores { data, model })
    }
}

/// Sample average `(1/N) Σ Ẑᵢ²` of the influence variable of group `y`.
///
/// `Ẑᵢ = h(x̂ᵢ)(p̂₀y·1₁y − p̂₁y·1₀y) + 1₀y·m̂₁y − 1₁y·m̂₀y` with
/// `m̂ₐy = (1/N) Σⱼ 1ₐy(âⱼ, ŷⱼ) h(x̂ⱼ)`.
pub fn estimate_sigma_sq<T: Real>(
    data: &Dataset<T>,
    marg: &Marginals<T>,
    model: &LogisticModel<T>,
    y: u8,
) -> Result<T> {
    let s = Scores::new(data, marg, model)?;
    require_cells(marg, y)?;
    let n = T::from_count(data.len());
    let (p1, p0) = (marg.get(1, y), marg.get(0, y));
    let mut m = [T::zero(); 2];
    let scores: Vec<T> = s.data.rows().map(|x| s.model.score_unchecked(x)).collect();
    for (i, &h) in scores.iter().enumerate() {
        if data.labels()[i] == y {
            let a = data.sensitive()[i] as usize;
            m[a] = m[a] + h;
        }
    }
    let (m1, m0) = (m[1] / n, m[0] / n);
    let total: T = scores
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            if data.labels()[i] != y {
                return T::zero();
            }
            let z = if data.sensitive()[i] == 1 { h * p0 - m0 } else { m1 - h * p1 };
            z * z
        })
        .sum();
    Ok(total / n)
}

/// `Q̂_yy = (‖β‖²/N) Σ h²(1−h)² (1₁y/p̂₁y² + 1₀y/p̂₀y²)`.
pub fn gradient_energy<T: Real>(
    data: &Dataset<T>,
    marg: &Marginals<T>,
    model: &LogisticModel<T>,
    y: u8,
) -> Result<T> {
    Scores::new(data, marg, model)?;
    require_cells(marg, y)?;
    let weight = [marg.get(0, y).powi(2).recip(), marg.get(1, y).powi(2).recip()];
    let total: T = data
        .rows()
        .enumerate()
        .filter(|(i, _)| data.labels()[*i] == y)
        .map(|(i, x)| {
            let g = sigmoid_slope(model.logit_unchecked(x));
            g * g * weight[data.sensitive()[i] as usize]
        })
        .sum();
    Ok(model.beta_norm_sq() * total / T::from_count(data.len()))
}

/// The full 2×2 gradient quadratic form, cross term included.
pub fn quadratic_form<T: Real>(data: &Dataset<T>, marg: &Marginals<T>, model: &LogisticModel<T>) -> Result<QuadraticForm<T>> {
    let q11 = gradient_energy(data, marg, model, 1)?;
    let q00 = gradient_energy(data, marg, model, 0)?;
    let signed = |a: u8, y: u8, target: u8| {
        if y != target {
            T::zero()
        } else if a == 1 {
            marg.get(1, y).recip()
        } else {
            -marg.get(0, y).recip()
        }
    };
    let cross: T = data
        .rows()
        .enumerate()
        .map(|(i, x)| {
            let (a, y) = (data.sensitive()[i], data.labels()[i]);
            let g = sigmoid_slope(model.logit_unchecked(x));
            g * g * signed(a, y, 1) * signed(a, y, 0)
        })
        .sum();
    Ok(QuadraticForm {
        q11,
        q00,
        cross: model.beta_norm_sq() * cross / T::from_count(data.len()),
    })
}

fn require_cells<T: Real>(marg: &Marginals<T>, y: u8) -> Result<()> {
    let empty: Vec<_> = [1u8, 0]
        .into_iter()
        .filter(|&a| marg.count(a, y) == 0)
        .map(|a| crate::domain::Cell::new(a, y))
        .collect();
    if empty.is_empty() {
        Ok(())
    } else {
        Err(Error::ImproperMarginals { empty })
    }
}

/// `θ̂ = σ̂₁² / (T̂ · p̂₀₁² · p̂₁₁²)`.
pub fn estimate_theta_opp<T: Real>(data: &Dataset<T>, marg: &Marginals<T>, model: &LogisticModel<T>) -> Result<ThetaEstimate<T>> {
    model.require_nonzero()?;
    let t_hat = gradient_energy(data, marg, model, 1)?;
    if !(t_hat > T::zero()) {
        return Err(Error::DegenerateVariance(
            "expected squared gradient T̂ is zero: the sigmoid is saturated on every y=1 row".into(),
        ));
    }
    let sigma1_sq_hat = estimate_sigma_sq(data, marg, model, 1)?;
    let theta_hat = sigma1_sq_hat / (t_hat * marg.get(0, 1).powi(2) * marg.get(1, 1).powi(2));
    if !(theta_hat > T::zero()) || !theta_hat.is_finite() {
        return Err(Error::DegenerateVariance(format!("theta estimate {theta_hat} is not positive")));
    }
    Ok(ThetaEstimate {
        theta_hat,
        t_hat,
        sigma1_sq_hat,
    })
}

/// Quantile of chi-square(1) at level `p ∈ (0, 1)`.
pub fn chi1_quantile<T: Real>(p: T) -> Result<T> {
    let p = p.as_f64();
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("probability level {p} outside (0, 1)")));
    }
    Ok(T::lit(special::chi1_quantile_f64(p)))
}

/// `η̂₁₋α = θ̂ · χ²₁(1 − α)`.
pub fn quantile_opp<T: Real>(theta: &ThetaEstimate<T>, alpha: T) -> Result<T> {
    check_alpha(alpha)?;
    if !(theta.theta_hat > T::zero()) {
        return Err(Error::DegenerateVariance("theta estimate must be positive".into()));
    }
    Ok(theta.theta_hat * chi1_quantile(T::one() - alpha)?)
}

pub(crate) fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidArgument(format!("significance level {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// Closed-form supremum of `γH₁ + ζH₀ − ¼(γ²Q₁₁ + ζ²Q₀₀)`.
pub fn odd_limit_value<T: Real>(h1: T, h0: T, q11: T, q00: T) -> T {
    h1 * h1 / q11 + h0 * h0 / q00
}

/// The concave objective whose supremum defines the equalized odds limit.
pub fn odd_limit_objective<T: Real>(gamma: T, zeta: T, h1: T, h0: T, q11: T, q00: T) -> T {
    gamma * h1 + zeta * h0 - (gamma * gamma * q11 + zeta * zeta * q00) / T::lit(4.0)
}

/// Draws `mc_samples` values of the plug-in equalized odds limit.
///
/// Sample `j` uses its own generator seeded with `derive_seed(seed, j)`;
/// `H₁` and `H₀` are drawn independently from standard normals (ziggurat).
pub fn odd_limit_sample<T: Real>(
    data: &Dataset<T>,
    marg: &Marginals<T>,
    model: &LogisticModel<T>,
    mc_samples: usize,
    seed: u64,
) -> Result<OddLimitSample<T>> {
    model.require_nonzero()?;
    if mc_samples == 0 {
        return Err(Error::InvalidArgument("mc_samples must be positive".into()));
    }
    let form = quadratic_form(data, marg, model)?;
    if !(form.q11 > T::zero()) || !(form.q00 > T::zero()) {
        return Err(Error::DegenerateVariance(format!(
            "diagonal quadratic terms must be positive (Q11 = {}, Q00 = {})",
            form.q11, form.q00
        )));
    }
    let sigma1_sq_hat = estimate_sigma_sq(data, marg, model, 1)?;
    let sigma0_sq_hat = estimate_sigma_sq(data, marg, model, 0)?;
    let scale1 = sigma1_sq_hat.sqrt() / (marg.get(1, 1) * marg.get(0, 1));
    let scale0 = sigma0_sq_hat.sqrt() / (marg.get(1, 0) * marg.get(0, 0));
    let mut values: Vec<T> = (0..mc_samples as u64)
        .map(|j| {
            let mut rng = rng_from_seed(derive_seed(seed, j));
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z0: f64 = StandardNormal.sample(&mut rng);
            odd_limit_value(scale1 * T::lit(z1), scale0 * T::lit(z0), form.q11, form.q00)
        })
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite limit draws"));
    Ok(OddLimitSample {
        values,
        seed,
        sigma0_sq_hat,
        sigma1_sq_hat,
        form,
    })
}

/// Monte Carlo `(1 − α)` quantile of the equalized odds limit.
pub fn quantile_odd<T: Real>(
    data: &Dataset<T>,
    marg: &Marginals<T>,
    model: &LogisticModel<T>,
    alpha: T,
    mc_samples: usize,
    seed: u64,
) -> Result<OddQuantileEstimate<T>> {
    check_alpha(alpha)?;
    let sample = odd_limit_sample(data, marg, model, mc_samples, seed)?;
    let level = T::one() - alpha;
    Ok(OddQuantileEstimate {
        eta_hat: sample.quantile(level),
        level,
        mc_samples,
        seed,
        sigma0_sq_hat: sample.sigma0_sq_hat,
        sigma1_sq_hat: sample.sigma1_sq_hat,
        q11: sample.form.q11,
        q00: sample.form.q00,
    })
}
