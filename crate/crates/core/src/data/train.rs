//! L2-regularized logistic regression by gradient descent.

use crate::domain::{Dataset, LogisticModel};
use crate::error::{Error, Result};
use crate::scalar::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Fixed(f64),
    /// Armijo backtracking; each iteration starts from twice the previous accepted step.
    Backtracking { initial: f64, shrink: f64, sufficient_decrease: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking {
            initial: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Penalty `λ` on `‖β‖²`; the intercept is not penalized.
    pub l2_penalty: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm is at most this value.
    pub tolerance: f64,
    pub step_rule: StepRule,
    pub fit_intercept: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2_penalty: 0.0,
            max_iters: 20_000,
            tolerance: 1e-7,
            step_rule: StepRule::default(),
            fit_intercept: true,
        }
    }
}

impl TrainConfig {
    pub fn with_penalty(l2_penalty: f64) -> Self {
        TrainConfig {
            l2_penalty,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.l2_penalty >= 0.0) || !self.l2_penalty.is_finite() {
            return Err(Error::InvalidArgument(format!("l2 penalty {} must be finite and nonnegative", self.l2_penalty)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        match self.step_rule {
            StepRule::Fixed(s) if !(s > 0.0) => Err(Error::InvalidArgument("step size must be positive".into())),
            StepRule::Backtracking { initial, shrink, sufficient_decrease }
                if !(initial > 0.0) || !(shrink > 0.0 && shrink < 1.0) || !(sufficient_decrease > 0.0 && sufficient_decrease < 1.0) =>
            {
                Err(Error::InvalidArgument("invalid backtracking parameters".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: LogisticModel<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub loss: f64,
    /// False when `max_iters` was reached before the tolerance.
    pub converged: bool,
}

/// `log(1 + eᶻ)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `params = (β, b)`: mean logistic loss plus `λ‖β‖²`.
pub fn regularized_loss(data: &Dataset<f64>, params: &[f64], l2_penalty: f64) -> f64 {
    let d = data.dim();
    let (beta, b) = (&params[..d], params[d]);
    let n = data.len() as f64;
    let total: f64 = data
        .rows()
        .zip(data.labels())
        .map(|(x, &y)| {
            let z = dot(beta, x) + b;
            softplus(z) - y as f64 * z
        })
        .sum();
    total / n + l2_penalty * dot(beta, beta)
}

/// Gradient of [`regularized_loss`] with respect to `(β, b)`.
pub fn regularized_gradient(data: &Dataset<f64>, params: &[f64], l2_penalty: f64) -> Vec<f64> {
    let d = data.dim();
    let (beta, b) = (&params[..d], params[d]);
    let n = data.len() as f64;
    let mut g = vec![0.0; d + 1];
    for (x, &y) in data.rows().zip(data.labels()) {
        let r = sigmoid(dot(beta, x) + b) - y as f64;
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj += r * xj;
        }
        g[d] += r;
    }
    for j in 0..d {
        g[j] = g[j] / n + 2.0 * l2_penalty * beta[j];
    }
    g[d] /= n;
    g
}

/// `regularized_loss(q) − regularized_loss(p)` evaluated from per-row differences,
/// accurate even when the change is far below the rounding level of the loss itself.
fn loss_change(data: &Dataset<f64>, p: &[f64], q: &[f64], l2_penalty: f64) -> f64 {
    let d = data.dim();
    let total: f64 = data
        .rows()
        .zip(data.labels())
        .map(|(x, &y)| {
            let z = dot(&p[..d], x) + p[d];
            let dz = dot(&q[..d], x) + q[d] - z;
            (sigmoid(z) * dz.exp_m1()).ln_1p() - y as f64 * dz
        })
        .sum();
    let penalty: f64 = p[..d].iter().zip(&q[..d]).map(|(a, b)| (b - a) * (b + a)).sum();
    total / data.len() as f64 + l2_penalty * penalty
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient descent from zero. Deterministic; there is no random initialization.
pub fn train_logistic(data: &Dataset<f64>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let d = data.dim();
    let mut params = vec![0.0; d + 1];
    let mask = |g: &mut Vec<f64>| {
        if !cfg.fit_intercept {
            g[d] = 0.0;
        }
    };
    let mut grad = regularized_gradient(data, &params, cfg.l2_penalty);
    mask(&mut grad);
    let mut step = match cfg.step_rule {
        StepRule::Fixed(s) => s,
        StepRule::Backtracking { initial, .. } => initial,
    };
    let mut iterations = 0;
    let mut gnorm = dot(&grad, &grad).sqrt();
    while gnorm > cfg.tolerance && iterations < cfg.max_iters {
        iterations += 1;
        let g2 = gnorm * gnorm;
        let candidate = |t: f64| -> Vec<f64> { params.iter().zip(&grad).map(|(p, g)| p - t * g).collect() };
        let next = match cfg.step_rule {
            StepRule::Fixed(s) => candidate(s),
            StepRule::Backtracking { shrink, sufficient_decrease, .. } => {
                let mut t = step * 2.0;
                loop {
                    let next = candidate(t);
                    if loss_change(data, &params, &next, cfg.l2_penalty) <= -sufficient_decrease * t * g2 {
                        step = t;
                        break next;
                    }
                    t *= shrink;
                    if t < 1e-300 {
                        break params.clone();
                    }
                }
            }
        };
        if next == params {
            break;
        }
        params = next;
        grad = regularized_gradient(data, &params, cfg.l2_penalty);
        mask(&mut grad);
        gnorm = dot(&grad, &grad).sqrt();
    }
    let loss = regularized_loss(data, &params, cfg.l2_penalty);
    let intercept = params.pop().expect("intercept slot");
    Ok(TrainOutcome {
        model: LogisticModel::new(params, intercept)?,
        iterations,
        gradient_norm: gnorm,
        loss,
        converged: gnorm <= cfg.tolerance,
    })
}

/// Fraction of rows where the rule "predict 1 iff h(x) ≥ τ" matches the label.
pub fn accuracy(data: &Dataset<f64>, model: &LogisticModel<f64>, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {tau} outside (0, 1)")));
    }
    model.check_dim(data.dim())?;
    let hits = data
        .rows()
        .zip(data.labels())
        .filter(|(x, &y)| (model.score_unchecked(x) >= tau) == (y == 1))
        .count();
    Ok(hits as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate::{generate_mixture, MixtureSpec};

    fn fixture() -> Dataset<f64> {
        generate_mixture(400, &MixtureSpec::default(), 17).unwrap()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let d = fixture();
        let params = [0.13, -0.07, 0.4];
        let g = regularized_gradient(&d, &params, 0.3);
        for j in 0..3 {
            let h = 1e-6;
            let mut p = params;
            p[j] += h;
            let up = regularized_loss(&d, &p, 0.3);
            p[j] -= 2.0 * h;
            let down = regularized_loss(&d, &p, 0.3);
            assert!((g[j] - (up - down) / (2.0 * h)).abs() < 1e-6, "{j}");
        }
    }

    #[test]
    fn returned_model_is_stationary() {
        let d = fixture();
        let out = train_logistic(&d, &TrainConfig::with_penalty(0.05)).unwrap();
        assert!(out.converged, "{out:?}");
        let mut p = out.model.beta().to_vec();
        p.push(out.model.intercept());
        let g = regularized_gradient(&d, &p, 0.05);
        for j in 0..3 {
            let h = 1e-6;
            let mut q = p.clone();
            q[j] += h;
            let up = regularized_loss(&d, &q, 0.05);
            q[j] -= 2.0 * h;
            let fd = (up - regularized_loss(&d, &q, 0.05)) / (2.0 * h);
            assert!(fd.abs() < 1e-6 && (fd - g[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn loss_change_matches_direct_difference() {
        let d = fixture();
        let p = [0.3, -0.1, 0.2];
        let q = [0.25, 0.05, -0.4];
        let direct = regularized_loss(&d, &q, 0.7) - regularized_loss(&d, &p, 0.7);
        assert!((loss_change(&d, &p, &q, 0.7) - direct).abs() < 1e-13);
    }

    #[test]
    fn heavy_penalty_shrinks_to_zero() {
        let out = train_logistic(&fixture(), &TrainConfig::with_penalty(1e6)).unwrap();
        assert!(out.model.beta_norm_sq().sqrt() <= 1e-3);
    }

    #[test]
    fn separable_clusters() {
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                vec![3.0 * s + 0.01 * (i as f64).sin(), 0.02 * (i as f64).cos()]
            })
            .collect();
        let labels: Vec<u8> = (0..200).map(|i| (i % 2 == 0) as u8).collect();
        let a: Vec<u8> = (0..200).map(|i| ((i / 2) % 2) as u8).collect();
        let d = Dataset::from_rows(rows, a, labels).unwrap();
        let out = train_logistic(&d, &TrainConfig::with_penalty(0.01)).unwrap();
        assert!(accuracy(&d, &out.model, 0.5).unwrap() >= 0.99);
    }

    #[test]
    fn loss_decreases_each_step() {
        let d = fixture();
        let mut prev = f64::INFINITY;
        for iters in 1..30 {
            let cfg = TrainConfig {
                max_iters: iters,
                ..TrainConfig::with_penalty(0.01)
            };
            let out = train_logistic(&d, &cfg).unwrap();
            assert!(out.loss <= prev);
            prev = out.loss;
        }
    }

    #[test]
    fn accuracy_tie_convention() {
        let d = fixture();
        let ones = d.labels().iter().filter(|&&y| y == 1).count() as f64 / d.len() as f64;
        let m = LogisticModel::new(vec![0.0, 0.0], 0.0).unwrap();
        assert_eq!(accuracy(&d, &m, 0.5).unwrap(), ones);
        let m = LogisticModel::new(vec![0.0, 0.0], 50.0).unwrap();
        assert_eq!(accuracy(&d, &m, 0.5).unwrap(), ones);
        assert!(accuracy(&d, &m, 1.0).is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let d = fixture();
        assert!(train_logistic(&d, &TrainConfig::with_penalty(-1.0)).is_err());
        let cfg = TrainConfig {
            tolerance: 0.0,
            ..Default::default()
        };
        assert!(train_logistic(&d, &cfg).is_err());
    }
}
