//! Audit data, the logistic score function and the empirical (A, Y) cell structure.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Real};

/// One of the four (sensitive attribute, label) cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub a: u8,
    pub y: u8,
}

impl Cell {
    /// Cells in the order (1,1), (0,1), (1,0), (0,0).
    pub const ALL: [Cell; 4] = [
        Cell { a: 1, y: 1 },
        Cell { a: 0, y: 1 },
        Cell { a: 1, y: 0 },
        Cell { a: 0, y: 0 },
    ];

    pub const fn new(a: u8, y: u8) -> Self {
        Cell { a, y }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(a={},y={})", self.a, self.y)
    }
}

/// `N` audit samples `(x, a, y)` with `x ∈ ℝᵈ` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    dim: usize,
    sensitive: Vec<u8>,
    labels: Vec<u8>,
}

impl<T: Real> Dataset<T> {
    /// Builds a dataset from row-major features.
    pub fn from_flat(features: Vec<T>, dim: usize, sensitive: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        let n = sensitive.len();
        if n == 0 {
            return Err(Error::InvalidArgument("dataset must contain at least one row".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be at least 1".into()));
        }
        if labels.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} sensitive values but {} labels",
                n,
                labels.len()
            )));
        }
        if features.len() != n * dim {
            return Err(Error::InvalidArgument(format!(
                "feature buffer holds {} values, expected {} rows x {} columns",
                features.len(),
                n,
                dim
            )));
        }
        if let Some(i) = sensitive.iter().position(|&a| a > 1) {
            return Err(Error::InvalidArgument(format!("row {i}: sensitive attribute must be 0 or 1")));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidArgument(format!("row {i}: label must be 0 or 1")));
        }
        if let Some(k) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("row {}: non-finite feature", k / dim)));
        }
        Ok(Dataset {
            features,
            dim,
            sensitive,
            labels,
        })
    }

    /// Builds a dataset from one feature vector per row.
    pub fn from_rows(rows: Vec<Vec<T>>, sensitive: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::from_flat(rows.into_iter().flatten().collect(), dim, sensitive, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.features.chunks_exact(self.dim)
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn sensitive(&self) -> &[u8] {
        &self.sensitive
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn cell(&self, i: usize) -> Cell {
        Cell::new(self.sensitive[i], self.labels[i])
    }

    /// Same sensitive attributes and labels, new feature matrix.
    pub fn with_features(&self, features: Vec<T>) -> Result<Self> {
        Self::from_flat(features, self.dim, self.sensitive.clone(), self.labels.clone())
    }
}

/// Logistic classifier `h(x) = 1 / (1 + exp(−(βᵀx + b)))`.
///
/// The intercept shifts the logit only. It is not part of `‖β‖` and is never
/// perturbed by a projection.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel<T> {
    beta: Vec<T>,
    intercept: T,
}

impl<T: Real> LogisticModel<T> {
    pub fn new(beta: Vec<T>, intercept: T) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidArgument("beta must have at least one entry".into()));
        }
        if beta.iter().any(|b| !b.is_finite()) || !intercept.is_finite() {
            return Err(Error::InvalidArgument("model coefficients must be finite".into()));
        }
        Ok(LogisticModel { beta, intercept })
    }

    pub fn without_intercept(beta: Vec<T>) -> Result<Self> {
        Self::new(beta, T::zero())
    }

    pub fn beta(&self) -> &[T] {
        &self.beta
    }

    pub fn intercept(&self) -> T {
        self.intercept
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_norm_sq(&self) -> T {
        self.beta.iter().map(|&b| b * b).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.beta.iter().all(|b| b.is_zero())
    }

    /// `βᵀx + b`; the caller guarantees matching dimensions.
    #[inline]
    pub(crate) fn logit_unchecked(&self, x: &[T]) -> T {
        self.beta
            .iter()
            .zip(x)
            .fold(self.intercept, |acc, (&b, &v)| acc + b * v)
    }

    #[inline]
    pub(crate) fn score_unchecked(&self, x: &[T]) -> T {
        sigmoid(self.logit_unchecked(x))
    }

    pub fn logit(&self, x: &[T]) -> Result<T> {
        self.check_dim(x.len())?;
        Ok(self.logit_unchecked(x))
    }

    pub(crate) fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.beta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta.len(),
                found,
            });
        }
        Ok(())
    }

    /// Rejects the zero classifier, which every distribution renders fair.
    pub(crate) fn require_nonzero(&self) -> Result<()> {
        if self.is_zero() {
            return Err(Error::InvalidArgument(
                "beta = 0 is trivially fair; the test requires a nonzero classifier".into(),
            ));
        }
        Ok(())
    }
}

/// `h(x)` for a single feature vector.
pub fn sigmoid_score<T: Real>(model: &LogisticModel<T>, x: &[T]) -> Result<T> {
    Ok(sigmoid(model.logit(x)?))
}

/// Empirical probabilities of the four (A, Y) cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals<T> {
    counts: [[usize; 2]; 2],
    n: usize,
    p_hat: [[T; 2]; 2],
}

impl<T: Real> Marginals<T> {
    pub fn get(&self, a: u8, y: u8) -> T {
        self.p_hat[a as usize][y as usize]
    }

    pub fn count(&self, a: u8, y: u8) -> usize {
        self.counts[a as usize][y as usize]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn of(&self, cell: Cell) -> T {
        self.get(cell.a, cell.y)
    }
}

/// Cell counts for a dataset (no properness check).
pub fn cell_counts<T: Real>(data: &Dataset<T>) -> [[usize; 2]; 2] {
    let mut counts = [[0usize; 2]; 2];
    for (&a, &y) in data.sensitive().iter().zip(data.labels()) {
        counts[a as usize][y as usize] += 1;
    }
    counts
}

/// Empirical marginals `p̂_ay = #{i : (aᵢ, yᵢ) = (a, y)} / N`; every cell must be nonempty.
pub fn compute_marginals<T: Real>(data: &Dataset<T>) -> Result<Marginals<T>> {
    let counts = cell_counts(data);
    let empty: Vec<Cell> = Cell::ALL
        .iter()
        .copied()
        .filter(|c| counts[c.a as usize][c.y as usize] == 0)
        .collect();
    if !empty.is_empty() {
        return Err(Error::ImproperMarginals { empty });
    }
    let n = data.len();
    let nt = T::from_count(n);
    let p = |a: usize, y: usize| T::from_count(counts[a][y]) / nt;
    Ok(Marginals {
        counts,
        n,
        p_hat: [[p(0, 0), p(0, 1)], [p(1, 0), p(1, 1)]],
    })
}

/// Per-sample weights `λᵢ = ±1/p̂_{aᵢyᵢ}`, positive for `a = 1` and negative for `a = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaCoefficients<T> {
    pub lambda: Vec<T>,
}

impl<T: Real> LambdaCoefficients<T> {
    pub fn get(&self, i: usize) -> T {
        self.lambda[i]
    }
}

pub fn lambda_coefficients<T: Real>(data: &Dataset<T>, marg: &Marginals<T>) -> LambdaCoefficients<T> {
    let lambda = (0..data.len())
        .map(|i| {
            let c = data.cell(i);
            let inv = marg.of(c).recip();
            if c.a == 1 {
                inv
            } else {
                -inv
            }
        })
        .collect();
    LambdaCoefficients { lambda }
}

/// Within-cell sample means of `h` for cells (1, y) and (0, y).
pub(crate) fn cell_score_means<T: Real>(
    data: &Dataset<T>,
    model: &LogisticModel<T>,
    y: u8,
) -> Result<(T, T)> {
    model.check_dim(data.dim())?;
    let mut sum = [T::zero(); 2];
    let mut count = [0usize; 2];
    for (i, x) in data.rows().enumerate() {
        if data.labels()[i] != y {
            continue;
        }
        let a = data.sensitive()[i] as usize;
        sum[a] = sum[a] + model.score_unchecked(x);
        count[a] += 1;
    }
    let empty: Vec<Cell> = [1u8, 0]
        .into_iter()
        .filter(|&a| count[a as usize] == 0)
        .map(|a| Cell::new(a, y))
        .collect();
    if !empty.is_empty() {
        return Err(Error::ImproperMarginals { empty });
    }
    Ok((
        sum[1] / T::from_count(count[1]),
        sum[0] / T::from_count(count[0]),
    ))
}

/// Empirical fairness gap `Ê[h | A=1, Y=y] − Ê[h | A=0, Y=y]`.
pub fn fairness_gap<T: Real>(data: &Dataset<T>, model: &LogisticModel<T>, y: u8) -> Result<T> {
    let (m1, m0) = cell_score_means(data, model, y)?;
    Ok(m1 - m0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_per_cell() -> Dataset<f64> {
        Dataset::from_rows(
            vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]],
            vec![1, 0, 1, 0],
            vec![1, 1, 0, 0],
        )
        .unwrap()
    }

    #[test]
    fn sigmoid_zero_logit() {
        let m = LogisticModel::<f64>::new(vec![0.0, 1.0], 0.0).unwrap();
        assert_eq!(sigmoid_score(&m, &[5.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        let m = LogisticModel::<f64>::new(vec![0.0, 1.0], 0.0).unwrap();
        let s = sigmoid_score(&m, &[0.0, 50.0]).unwrap();
        assert!(1.0 - s < 1e-20);
        let far = LogisticModel::<f64>::new(vec![1.0], 0.0).unwrap();
        assert!(sigmoid_score(&far, &[-700.0]).unwrap() > 0.0);
        assert!(sigmoid_score(&far, &[700.0]).unwrap().is_finite());
    }

    #[test]
    fn sigmoid_with_intercept() {
        // 1/(1+exp(5/3)) = 0.158869104880915151375...
        let m = LogisticModel::<f64>::new(vec![1.0, 3.0], 1.0 / 3.0).unwrap();
        let s = sigmoid_score(&m, &[1.0, -1.0]).unwrap();
        assert!((s - 0.158_869_104_880_915_15).abs() < 1e-15, "{s}");
    }

    #[test]
    fn sigmoid_dimension_mismatch() {
        let m = LogisticModel::<f64>::new(vec![1.0, 3.0], 0.0).unwrap();
        assert!(matches!(
            sigmoid_score(&m, &[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn uniform_cells() {
        let m = compute_marginals(&one_per_cell()).unwrap();
        for c in Cell::ALL {
            assert_eq!(m.of(c), 0.25);
        }
    }

    #[test]
    fn empty_cell_is_named() {
        let d = Dataset::from_rows(vec![vec![0.0]; 3], vec![1, 1, 0], vec![1, 0, 0]).unwrap();
        match compute_marginals(&d) {
            Err(Error::ImproperMarginals { empty }) => assert_eq!(empty, vec![Cell::new(0, 1)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lambda_by_cell() {
        let d = one_per_cell();
        let l = lambda_coefficients(&d, &compute_marginals(&d).unwrap());
        assert_eq!(l.lambda, vec![4.0, -4.0, 4.0, -4.0]);

        // p̂01 = 0.1: one (0,1) row out of ten.
        let mut a = vec![1u8; 10];
        let mut y = vec![1u8; 10];
        a[0] = 0;
        a[1] = 0;
        y[1] = 0;
        a[2] = 1;
        y[2] = 0;
        let d = Dataset::from_rows(vec![vec![0.0f64]; 10], a, y).unwrap();
        let l = lambda_coefficients(&d, &compute_marginals(&d).unwrap());
        assert!((l.get(0) + 10.0).abs() < 1e-12);
    }

    #[test]
    fn gap_of_two_rows() {
        let d = Dataset::from_rows(vec![vec![1.0], vec![0.0]], vec![1, 0], vec![1, 1]).unwrap();
        let m = LogisticModel::<f64>::new(vec![1.0], 0.0).unwrap();
        // σ(1) − 1/2 = 0.23105857863000487...
        let g = fairness_gap(&d, &m, 1).unwrap();
        assert!((g - 0.231_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn gap_zero_for_constant_score() {
        let d = Dataset::from_rows(vec![vec![1.0], vec![-3.0]], vec![1, 0], vec![1, 1]).unwrap();
        let m = LogisticModel::<f64>::new(vec![0.0], 0.0).unwrap();
        assert_eq!(fairness_gap(&d, &m, 1).unwrap(), 0.0);
    }

    #[test]
    fn gap_requires_both_groups() {
        let d = one_per_cell();
        let only_y1 = Dataset::from_rows(vec![vec![1.0], vec![2.0]], vec![1, 1], vec![1, 1]).unwrap();
        let m = LogisticModel::new(vec![1.0], 0.0).unwrap();
        assert!(fairness_gap(&d, &m, 0).is_ok());
        assert!(matches!(fairness_gap(&only_y1, &m, 1), Err(Error::ImproperMarginals { .. })));
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(Dataset::<f64>::from_rows(vec![], vec![], vec![]).is_err());
        assert!(Dataset::from_rows(vec![vec![0.0]], vec![2], vec![0]).is_err());
        assert!(Dataset::from_rows(vec![vec![f64::NAN]], vec![1], vec![0]).is_err());
        assert!(Dataset::from_rows(vec![vec![0.0], vec![0.0, 1.0]], vec![1, 0], vec![0, 0]).is_err());
        assert!(LogisticModel::new(vec![f64::INFINITY], 0.0).is_err());
    }
}
