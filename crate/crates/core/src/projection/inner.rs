//! Per-sample inner problem of the dual reformulation.
//!
//! For a sample with logit `ℓ = βᵀx̂ + b` and coefficient `ω`, the
//! d-dimensional problem `inf_x ‖x − x̂‖² + ω·h(x)` collapses onto the line
//! `x = x̂ − kωβ` and becomes
//!
//! ```text
//! L(k) = ω²‖β‖²k² + ω·σ(ℓ − kω‖β‖²),   k ∈ [0, 1/8].
//! ```
//!
//! `L` is smooth but not convex and may have two local minima.

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Real};

/// Minimizer of `L` over `[0, 1/8]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolution<T> {
    pub k_star: T,
    pub value: T,
    pub omega: T,
}

/// Global strategy for minimizing `L` on `[0, 1/8]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerSolver {
    /// Splits `[0, 1/8]` into pieces on which `L'` is monotone and solves
    /// `L'(k) = 0` on each one to machine precision.
    #[default]
    Segmented,
    /// Uniform grid followed by golden-section refinement around the best node.
    Grid { points: usize },
}

impl InnerSolver {
    pub const DEFAULT_GRID_POINTS: usize = 4097;

    pub fn grid() -> Self {
        InnerSolver::Grid {
            points: Self::DEFAULT_GRID_POINTS,
        }
    }
}

/// `L(k)` for the given inner problem.
#[inline]
pub fn inner_objective<T: Real>(omega: T, beta_norm_sq: T, logit_hat: T, k: T) -> T {
    let c = omega * beta_norm_sq;
    omega * c * k * k + omega * sigmoid(logit_hat - k * c)
}

/// Global minimizer of `L` on `[0, 1/8]` with the default solver.
pub fn inner_min<T: Real>(omega: T, beta_norm_sq: T, logit_hat: T) -> Result<InnerSolution<T>> {
    inner_min_with(InnerSolver::default(), omega, beta_norm_sq, logit_hat)
}

pub fn inner_min_with<T: Real>(
    solver: InnerSolver,
    omega: T,
    beta_norm_sq: T,
    logit_hat: T,
) -> Result<InnerSolution<T>> {
    if !(beta_norm_sq > T::zero()) || !beta_norm_sq.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "squared norm of beta must be positive, got {beta_norm_sq}"
        )));
    }
    if !omega.is_finite() || !logit_hat.is_finite() {
        return Err(Error::InvalidArgument("inner problem inputs must be finite".into()));
    }
    Ok(solve(solver, omega, beta_norm_sq, logit_hat))
}

/// Unchecked entry point used inside the dual evaluations.
#[inline]
pub(crate) fn solve<T: Real>(solver: InnerSolver, omega: T, beta_norm_sq: T, logit_hat: T) -> InnerSolution<T> {
    if omega.is_zero() {
        return InnerSolution {
            k_star: T::zero(),
            value: T::zero(),
            omega,
        };
    }
    let problem = Inner {
        omega,
        c: omega * beta_norm_sq,
        logit: logit_hat,
    };
    let k_star = match solver {
        InnerSolver::Segmented => problem.segmented(),
        InnerSolver::Grid { points } => problem.grid(points.max(3)),
    };
    InnerSolution {
        k_star,
        value: problem.value(k_star),
        omega,
    }
}

/// `ln(2 + √3)`: the logits at which `σ'` has its inflection points.
const SLOPE_INFLECTION: f64 = 1.316_957_896_924_816_6;
/// `max |σ''| = 1/(6√3)`.
const MAX_SLOPE_DERIVATIVE: f64 = 0.096_225_044_864_937_63;

struct Inner<T> {
    omega: T,
    c: T,
    logit: T,
}

impl<T: Real> Inner<T> {
    #[inline]
    fn value(&self, k: T) -> T {
        self.omega * self.c * k * k + self.omega * sigmoid(self.logit - k * self.c)
    }

    /// `L'(k) / (ω²‖β‖²) = 2k − σ'(ℓ − ck)`.
    #[inline]
    fn grad(&self, k: T) -> T {
        let s = sigmoid(self.logit - k * self.c);
        k + k - s * (T::one() - s)
    }

    /// Derivative of [`Self::grad`] in `k`: `2 + c·σ''(ℓ − ck)`.
    #[inline]
    fn curvature(&self, k: T) -> T {
        let s = sigmoid(self.logit - k * self.c);
        let slope = s * (T::one() - s);
        T::lit(2.0) + self.c * slope * (T::one() - s - s)
    }

    fn upper() -> T {
        T::lit(0.125)
    }

    fn segmented(&self) -> T {
        let upper = Self::upper();
        let mut knots = vec![T::zero(), upper];

        // grad is strictly increasing unless |c| is large enough for the
        // sigmoid curvature to beat the quadratic term.
        if self.c.abs() * T::lit(MAX_SLOPE_DERIVATIVE) >= T::lit(2.0) {
            let u0 = T::lit(SLOPE_INFLECTION);
            for u in [u0, -u0] {
                let k = (self.logit - u) / self.c;
                if k > T::zero() && k < upper {
                    knots.push(k);
                }
            }
            sort(&mut knots);
            // curvature is monotone between consecutive knots; its zeros
            // split [0, 1/8] into pieces where grad is monotone.
            let mut extra = Vec::new();
            for w in knots.windows(2) {
                let (p, q) = (w[0], w[1]);
                let (cp, cq) = (self.curvature(p), self.curvature(q));
                if (cp < T::zero()) != (cq < T::zero()) {
                    extra.push(bisect(|k| self.curvature(k), p, q, cp));
                }
            }
            knots.extend(extra);
            sort(&mut knots);
        }

        let tie = T::epsilon() * T::lit(8.0);
        let mut best: Option<(T, T)> = None;
        let consider = |k: T, best: &mut Option<(T, T)>| {
            let v = self.value(k);
            match best {
                Some((_, bv)) if !(v < *bv - tie * (v.abs().max(bv.abs()))) => {}
                _ => *best = Some((k, v)),
            }
        };

        let g0 = self.grad(T::zero());
        if g0 >= T::zero() {
            // σ' underflowed at the starting logit.
            consider(T::zero(), &mut best);
        }
        for w in knots.windows(2) {
            let (p, q) = (w[0], w[1]);
            let (gp, gq) = (self.grad(p), self.grad(q));
            if gp < T::zero() && gq >= T::zero() {
                let k = self.newton_root(p, q);
                consider(k, &mut best);
            }
        }
        best.map(|(k, _)| k).unwrap_or_else(T::zero)
    }

    /// Root of the monotone increasing `grad` on `[lo, hi]`, `grad(lo) < 0 ≤ grad(hi)`.
    fn newton_root(&self, mut lo: T, mut hi: T) -> T {
        let two = T::lit(2.0);
        let mut x = (lo + hi) / two;
        for _ in 0..200 {
            let g = self.grad(x);
            if g.is_zero() {
                return x;
            }
            if g < T::zero() {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.curvature(x);
            let newton = x - g / d;
            let next = if d > T::zero() && newton > lo && newton < hi {
                newton
            } else {
                (lo + hi) / two
            };
            let step = (next - x).abs();
            x = next;
            if step <= T::epsilon() * x.abs() || hi - lo <= T::epsilon() * hi.abs() {
                break;
            }
        }
        x
    }

    fn grid(&self, points: usize) -> T {
        let upper = Self::upper();
        let step = upper / T::from_count(points - 1);
        let mut best_j = 0;
        let mut best_v = self.value(T::zero());
        for j in 1..points {
            let v = self.value(step * T::from_count(j));
            if v < best_v {
                best_v = v;
                best_j = j;
            }
        }
        let lo = step * T::from_count(best_j.saturating_sub(1));
        let hi = (step * T::from_count(best_j + 1)).min(upper);
        let k = golden_section_min(|k| self.value(k), lo, hi, T::epsilon().sqrt() * upper);
        if self.value(k) <= best_v {
            k
        } else {
            step * T::from_count(best_j)
        }
    }
}

fn sort<T: Real>(v: &mut [T]) {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
}

/// Root of `f` on `[lo, hi]` by bisection, given `f(lo)`.
fn bisect<T: Real>(f: impl Fn(T) -> T, mut lo: T, mut hi: T, f_lo: T) -> T {
    let lo_neg = f_lo < T::zero();
    let two = T::lit(2.0);
    for _ in 0..200 {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < T::zero()) == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / two
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_section_min<T: Real>(f: impl Fn(T) -> T, mut lo: T, mut hi: T, tol: T) -> T {
    let inv_phi = T::lit(0.618_033_988_749_894_8);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}
