//! End-to-end hypothesis tests: statistic, quantile, decision and diagnostics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{compute_marginals, fairness_gap, Dataset, LogisticModel, Marginals};
use crate::error::{Error, Result};
use crate::limits::{check_alpha, estimate_theta_opp, quantile_odd, quantile_opp};
use crate::projection::Projector;
use crate::scalar::Real;

/// Smallest Monte Carlo sample count accepted by [`test_odd`].
pub const MIN_MC_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Probabilistic equal opportunity.
    Opp,
    /// Probabilistic equalized odds.
    Odd,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Opp => "opp",
            Criterion::Odd => "odd",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "opp" => Ok(Criterion::Opp),
            "odd" => Ok(Criterion::Odd),
            other => Err(Error::InvalidArgument(format!("unknown criterion '{other}' (expected opp or odd)"))),
        }
    }
}

/// Outcome of one audit. Serializes to a flat JSON object whose key names are stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub criterion: Criterion,
    pub n: usize,
    /// `N · R`.
    pub statistic: f64,
    pub quantile: f64,
    pub alpha: f64,
    pub reject: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_hat: Option<f64>,
    pub sigma1_sq_hat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0_sq_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q11: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q00: Option<f64>,
    pub r_squared: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_n: Option<f64>,
    pub gamma_star: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta_star: Option<f64>,
    pub gap_y1: f64,
    pub gap_y0: f64,
    pub p11: f64,
    pub p01: f64,
    pub p10: f64,
    pub p00: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
}

impl TestReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format {
            path: "<report>".into(),
            message: e.to_string(),
        })
    }
}

struct Common {
    gap_y1: f64,
    gap_y0: f64,
    p: [f64; 4],
}

fn common<T: Real>(data: &Dataset<T>, model: &LogisticModel<T>, alpha: T) -> Result<(Marginals<T>, Common)> {
    check_alpha(alpha)?;
    let marg = compute_marginals(data)?;
    let gap_y1 = fairness_gap(data, model, 1)?.as_f64();
    let gap_y0 = fairness_gap(data, model, 0)?.as_f64();
    let p = [marg.get(1, 1), marg.get(0, 1), marg.get(1, 0), marg.get(0, 0)].map(|v| v.as_f64());
    Ok((marg, Common { gap_y1, gap_y0, p }))
}

/// Test of probabilistic equal opportunity at level `alpha`.
pub fn test_opp<T: Real>(data: &Dataset<T>, model: &LogisticModel<T>, alpha: T) -> Result<TestReport> {
    let (marg, c) = common(data, model, alpha)?;
    let proj = Projector::default().opp(data, model)?;
    let theta = estimate_theta_opp(data, &marg, model)?;
    let quantile = quantile_opp(&theta, alpha)?;
    let statistic = T::from_count(data.len()) * proj.r_squared;
    Ok(TestReport {
        criterion: Criterion::Opp,
        n: data.len(),
        statistic: statistic.as_f64(),
        quantile: quantile.as_f64(),
        alpha: alpha.as_f64(),
        reject: statistic > quantile,
        theta_hat: Some(theta.theta_hat.as_f64()),
        t_hat: Some(theta.t_hat.as_f64()),
        sigma1_sq_hat: theta.sigma1_sq_hat.as_f64(),
        sigma0_sq_hat: None,
        q11: None,
        q00: None,
        r_squared: proj.r_squared.as_f64(),
        u_n: None,
        gamma_star: proj.gamma_star.as_f64(),
        zeta_star: None,
        gap_y1: c.gap_y1,
        gap_y0: c.gap_y0,
        p11: c.p[0],
        p01: c.p[1],
        p10: c.p[2],
        p00: c.p[3],
        seed: None,
        mc_samples: None,
    })
}

/// Test of probabilistic equalized odds at level `alpha` with a Monte Carlo quantile.
pub fn test_odd<T: Real>(
    data: &Dataset<T>,
    model: &LogisticModel<T>,
    alpha: T,
    mc_samples: usize,
    seed: u64,
) -> Result<TestReport> {
    if mc_samples < MIN_MC_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "mc_samples must be at least {MIN_MC_SAMPLES}, got {mc_samples}"
        )));
    }
    let (marg, c) = common(data, model, alpha)?;
    let proj = Projector::default().odd(data, model)?;
    let q = quantile_odd(data, &marg, model, alpha, mc_samples, seed)?;
    let statistic = T::from_count(data.len()) * proj.r_squared;
    Ok(TestReport {
        criterion: Criterion::Odd,
        n: data.len(),
        statistic: statistic.as_f64(),
        quantile: q.eta_hat.as_f64(),
        alpha: alpha.as_f64(),
        reject: statistic > q.eta_hat,
        theta_hat: None,
        t_hat: None,
        sigma1_sq_hat: q.sigma1_sq_hat.as_f64(),
        sigma0_sq_hat: Some(q.sigma0_sq_hat.as_f64()),
        q11: Some(q.q11.as_f64()),
        q00: Some(q.q00.as_f64()),
        r_squared: proj.r_squared.as_f64(),
        u_n: proj.u_n.map(|v| v.as_f64()),
        gamma_star: proj.gamma_star.as_f64(),
        zeta_star: proj.zeta_star.map(|v| v.as_f64()),
        gap_y1: c.gap_y1,
        gap_y0: c.gap_y0,
        p11: c.p[0],
        p01: c.p[1],
        p10: c.p[2],
        p00: c.p[3],
        seed: Some(seed),
        mc_samples: Some(mc_samples),
    })
}

/// Runs the test for `criterion`; `seed` and `mc_samples` are only used by equalized odds.
pub fn run_test<T: Real>(
    criterion: Criterion,
    data: &Dataset<T>,
    model: &LogisticModel<T>,
    alpha: T,
    mc_samples: usize,
    seed: u64,
) -> Result<TestReport> {
    match criterion {
        Criterion::Opp => test_opp(data, model, alpha),
        Criterion::Odd => test_odd(data, model, alpha, mc_samples, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Both sensitive groups share the same feature rows within each label.
    fn symmetric() -> Dataset<f64> {
        let base = [[0.5, 1.0], [-0.3, 2.0], [1.2, -0.7]];
        let mut rows = Vec::new();
        let mut a = Vec::new();
        let mut y = Vec::new();
        for label in [1u8, 0] {
            for group in [1u8, 0] {
                for r in base {
                    rows.push(vec![r[0] + label as f64, r[1] * 0.5]);
                    a.push(group);
                    y.push(label);
                }
            }
        }
        Dataset::from_rows(rows, a, y).unwrap()
    }

    fn model() -> LogisticModel<f64> {
        LogisticModel::new(vec![0.8, -0.4], 0.2).unwrap()
    }

    #[test]
    fn zero_gap_never_rejects() {
        let d = symmetric();
        let r = test_opp(&d, &model(), 0.99).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
        assert_eq!(r.gap_y1, 0.0);
        let r = test_odd(&d, &model(), 0.5, 1000, 3).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(!r.reject);
    }

    #[test]
    fn alpha_outside_unit_interval() {
        let d = symmetric();
        for alpha in [0.0, 1.0, 1.5, -0.1, f64::NAN] {
            assert!(matches!(test_opp(&d, &model(), alpha), Err(Error::InvalidArgument(_))));
        }
        assert!(test_odd(&d, &model(), 0.05, 999, 0).is_err());
    }

    #[test]
    fn report_round_trip_and_keys() {
        let mut d = symmetric();
        let mut f = d.features().to_vec();
        f[0] += 0.9;
        d = d.with_features(f).unwrap();
        let r = test_odd(&d, &model(), 0.05, 1000, 42).unwrap();
        let text = r.to_json();
        assert_eq!(TestReport::from_json(&text).unwrap(), r);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let obj = v.as_object().unwrap();
        for key in ["criterion", "statistic", "quantile", "reject", "seed", "mc_samples", "zeta_star", "p00"] {
            assert!(obj.contains_key(key), "{key}");
        }
        assert!(obj.values().all(|v| !v.is_object() && !v.is_array()));
        assert_eq!(obj["criterion"], "odd");
        let opp = test_opp(&d, &model(), 0.05).unwrap();
        let v: serde_json::Value = serde_json::from_str(&opp.to_json()).unwrap();
        assert!(v.get("zeta_star").is_none() && v.get("seed").is_none());
        assert!(v.get("theta_hat").is_some());
    }

    #[test]
    fn criterion_parsing() {
        assert_eq!("opp".parse::<Criterion>().unwrap(), Criterion::Opp);
        assert_eq!(Criterion::Odd.to_string(), "odd");
        assert!("both".parse::<Criterion>().is_err());
    }
}
