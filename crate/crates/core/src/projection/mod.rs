//! Squared Wasserstein projection distances onto the fairness manifolds.
//!
//! Each label group `y` contributes a concave one-dimensional dual problem
//!
//! ```text
//! sup_t (1/N) Σ_{i : yᵢ = y} min_{k ∈ [0, 1/8]} L_i(k; t·λᵢ)
//! ```
//!
//! whose supergradient at `t` is the fairness gap of the samples moved to
//! their inner minimizers. The maximizer is bracketed by doubling and then
//! located as the sign change of that supergradient.

mod inner;

pub use inner::{inner_min, inner_min_with, inner_objective, InnerSolution, InnerSolver};

use crate::domain::{compute_marginals, lambda_coefficients, Dataset, LambdaCoefficients, LogisticModel, Marginals};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Real};

/// Optimal transport projection of the empirical distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult<T> {
    /// Squared projection distance `R`.
    pub r_squared: T,
    /// Contribution of the `y = 1` dual (equals `r_squared` for equal opportunity).
    pub r_opp: T,
    /// Contribution `U_N` of the `y = 0` dual, equalized odds only.
    pub u_n: Option<T>,
    pub gamma_star: T,
    pub zeta_star: Option<T>,
    /// Inner minimizers per sample; zero for samples the criterion leaves untouched.
    pub k_star: Vec<T>,
    /// Row-major `N × d` displacements `Δᵢ = kᵢ⋆ · t⋆ · λᵢ · β`.
    pub displacements: Vec<T>,
    pub dim: usize,
    /// Samples whose inner problem has two global minimizers at the optimal
    /// multiplier; part of their mass moves to the second minimizer.
    pub splits: Vec<Split<T>>,
}

/// A share of one sample's mass sent to an alternative inner minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub row: usize,
    pub k: T,
    /// Fraction of the sample's mass in `(0, 1)` using `k` instead of `k_star[row]`.
    pub share: T,
    pub displacement: Vec<T>,
}

impl<T: Real> ProjectionResult<T> {
    pub fn displacement(&self, i: usize) -> &[T] {
        &self.displacements[i * self.dim..(i + 1) * self.dim]
    }

    /// `(1/N) Σ ‖Δᵢ‖²`, the transport cost of the plan, split samples weighted by their shares.
    pub fn transport_cost(&self) -> T {
        let n = T::from_count(self.k_star.len());
        let sq = |v: &[T]| v.iter().map(|&x| x * x).sum::<T>();
        let mut total = self.displacements.iter().map(|&v| v * v).sum::<T>();
        for s in &self.splits {
            total = total + s.share * (sq(&s.displacement) - sq(self.displacement(s.row)));
        }
        total / n
    }
}

/// Projection solver configuration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Projector {
    pub solver: InnerSolver,
}

impl Projector {
    pub fn new(solver: InnerSolver) -> Self {
        Projector { solver }
    }

    /// Projection onto the probabilistic equal opportunity manifold.
    pub fn opp<T: Real>(&self, data: &Dataset<T>, model: &LogisticModel<T>) -> Result<ProjectionResult<T>> {
        let ctx = Context::new(data, model)?;
        let dual = LabelDual::new(&ctx, 1, self.solver);
        let opt = dual.maximize("gamma")?;
        let mut out = ctx.empty_result();
        out.r_squared = opt.value;
        out.r_opp = opt.value;
        out.gamma_star = opt.multiplier;
        dual.write_plan(&opt, &mut out);
        Ok(out)
    }

    /// Projection onto the probabilistic equalized odds manifold.
    ///
    /// The two constraints act on disjoint label groups, so the dual splits
    /// into the equal opportunity problem plus an independent `y = 0` term.
    pub fn odd<T: Real>(&self, data: &Dataset<T>, model: &LogisticModel<T>) -> Result<ProjectionResult<T>> {
        let ctx = Context::new(data, model)?;
        let dual1 = LabelDual::new(&ctx, 1, self.solver);
        let dual0 = LabelDual::new(&ctx, 0, self.solver);
        let opt1 = dual1.maximize("gamma")?;
        let opt0 = dual0.maximize("zeta")?;
        let mut out = ctx.empty_result();
        out.r_opp = opt1.value;
        out.u_n = Some(opt0.value);
        out.r_squared = opt1.value + opt0.value;
        out.gamma_star = opt1.multiplier;
        out.zeta_star = Some(opt0.multiplier);
        dual1.write_plan(&opt1, &mut out);
        dual0.write_plan(&opt0, &mut out);
        Ok(out)
    }
}

pub fn squared_projection_opp<T: Real>(data: &Dataset<T>, model: &LogisticModel<T>) -> Result<ProjectionResult<T>> {
    Projector::default().opp(data, model)
}

pub fn squared_projection_odd<T: Real>(data: &Dataset<T>, model: &LogisticModel<T>) -> Result<ProjectionResult<T>> {
    Projector::default().odd(data, model)
}

/// Dual objective `(1/N) Σ_{yᵢ = y} min_k L_i(k; t·λᵢ)` of a single label group.
pub fn dual_objective<T: Real>(
    y: u8,
    multiplier: T,
    data: &Dataset<T>,
    marg: &Marginals<T>,
    lambdas: &LambdaCoefficients<T>,
    model: &LogisticModel<T>,
) -> Result<T> {
    model.check_dim(data.dim())?;
    if marg.n() != data.len() {
        return Err(Error::InvalidArgument("marginals were computed from a different dataset".into()));
    }
    if lambdas.lambda.len() != data.len() {
        return Err(Error::InvalidArgument("one lambda coefficient per row required".into()));
    }
    let ctx = Context {
        data,
        model,
        lambdas: lambdas.clone(),
        beta_norm_sq: beta_norm_checked(model)?,
    };
    Ok(LabelDual::new(&ctx, y, InnerSolver::default()).eval(multiplier, false).value)
}

/// Equal opportunity dual objective at `γ`.
pub fn dual_objective_opp<T: Real>(
    gamma: T,
    data: &Dataset<T>,
    marg: &Marginals<T>,
    lambdas: &LambdaCoefficients<T>,
    model: &LogisticModel<T>,
) -> Result<T> {
    dual_objective(1, gamma, data, marg, lambdas, model)
}

/// Equalized odds dual objective at `(γ, ζ)`.
pub fn dual_objective_odd<T: Real>(
    gamma: T,
    zeta: T,
    data: &Dataset<T>,
    marg: &Marginals<T>,
    lambdas: &LambdaCoefficients<T>,
    model: &LogisticModel<T>,
) -> Result<T> {
    Ok(dual_objective(1, gamma, data, marg, lambdas, model)? + dual_objective(0, zeta, data, marg, lambdas, model)?)
}

fn beta_norm_checked<T: Real>(model: &LogisticModel<T>) -> Result<T> {
    model.require_nonzero()?;
    let bn = model.beta_norm_sq();
    if !(bn > T::zero()) || !bn.is_finite() {
        return Err(Error::InvalidArgument(format!("‖beta‖² = {bn} is not usable")));
    }
    Ok(bn)
}

struct Context<'a, T> {
    data: &'a Dataset<T>,
    model: &'a LogisticModel<T>,
    lambdas: LambdaCoefficients<T>,
    beta_norm_sq: T,
}

impl<'a, T: Real> Context<'a, T> {
    fn new(data: &'a Dataset<T>, model: &'a LogisticModel<T>) -> Result<Self> {
        model.check_dim(data.dim())?;
        let beta_norm_sq = beta_norm_checked(model)?;
        let marg = compute_marginals(data)?;
        let lambdas = lambda_coefficients(data, &marg);
        Ok(Context {
            data,
            model,
            lambdas,
            beta_norm_sq,
        })
    }

    fn empty_result(&self) -> ProjectionResult<T> {
        ProjectionResult {
            r_squared: T::zero(),
            r_opp: T::zero(),
            u_n: None,
            gamma_star: T::zero(),
            zeta_star: None,
            k_star: vec![T::zero(); self.data.len()],
            displacements: vec![T::zero(); self.data.len() * self.data.dim()],
            dim: self.data.dim(),
            splits: Vec::new(),
        }
    }
}

struct Evaluation<T> {
    value: T,
    /// Gap of the moved samples: a supergradient of the dual at the probe.
    slope: T,
    k: Vec<T>,
}

struct Optimum<T> {
    multiplier: T,
    value: T,
    k: Vec<T>,
    /// `(position in the label group, alternative k, share)`.
    splits: Vec<(usize, T, T)>,
}

struct LabelDual<'c, 'a, T> {
    ctx: &'c Context<'a, T>,
    solver: InnerSolver,
    rows: Vec<usize>,
    logits: Vec<T>,
    count: [usize; 2],
}

impl<'c, 'a, T: Real> LabelDual<'c, 'a, T> {
    fn new(ctx: &'c Context<'a, T>, y: u8, solver: InnerSolver) -> Self {
        let data = ctx.data;
        let rows: Vec<usize> = (0..data.len()).filter(|&i| data.labels()[i] == y).collect();
        let logits = rows.iter().map(|&i| ctx.model.logit_unchecked(data.row(i))).collect();
        let mut count = [0usize; 2];
        for &i in &rows {
            count[data.sensitive()[i] as usize] += 1;
        }
        LabelDual {
            ctx,
            solver,
            rows,
            logits,
            count,
        }
    }

    fn eval(&self, multiplier: T, keep_k: bool) -> Evaluation<T> {
        let bn = self.ctx.beta_norm_sq;
        let mut value = T::zero();
        let mut moved = [T::zero(); 2];
        let mut k = Vec::with_capacity(if keep_k { self.rows.len() } else { 0 });
        for (&i, &logit) in self.rows.iter().zip(&self.logits) {
            let omega = multiplier * self.ctx.lambdas.get(i);
            let sol = inner::solve(self.solver, omega, bn, logit);
            value = value + sol.value;
            let a = self.ctx.data.sensitive()[i] as usize;
            moved[a] = moved[a] + sigmoid(logit - sol.k_star * omega * bn);
            if keep_k {
                k.push(sol.k_star);
            }
        }
        let slope = if self.count[0] == 0 || self.count[1] == 0 {
            T::zero()
        } else {
            moved[1] / T::from_count(self.count[1]) - moved[0] / T::from_count(self.count[0])
        };
        Evaluation {
            value: value / T::from_count(self.ctx.data.len()),
            slope,
            k,
        }
    }

    fn maximize(&self, name: &'static str) -> Result<Optimum<T>> {
        let s0 = self.eval(T::zero(), false).slope;
        if s0.is_zero() {
            return Ok(Optimum {
                multiplier: T::zero(),
                value: T::zero(),
                k: vec![T::zero(); self.rows.len()],
                splits: Vec::new(),
            });
        }
        let dir = s0.signum();
        let slope = |t: T| dir * self.eval(dir * t, false).slope;

        let cap = T::lit(2f64.powi(40));
        let (mut lo, mut s_lo) = (T::zero(), s0.abs());
        let mut hi = T::one();
        let mut s_hi = slope(hi);
        while s_hi > T::zero() {
            lo = hi;
            s_lo = s_hi;
            hi = hi + hi;
            if hi > cap {
                return Err(Error::BracketOverflow { multiplier: name });
            }
            s_hi = slope(hi);
        }

        let rel_tol = T::epsilon() * T::lit(512.0);
        let root = illinois(slope, lo, s_lo, hi, s_hi, rel_tol);
        let multiplier = dir * root.t;
        let at = self.eval(multiplier, true);
        let mut opt = Optimum {
            multiplier,
            value: at.value.max(T::zero()),
            k: at.k,
            splits: Vec::new(),
        };
        if root.b - root.a <= rel_tol * root.b.abs().max(T::one()) {
            self.split_at_kink(&mut opt, dir * root.a, dir * root.b);
        }
        Ok(opt)
    }

    /// At a kink of the dual the supergradient jumps across zero: some samples
    /// have one minimizer just left of the optimum and another just right of
    /// it, both optimal at the optimum itself. Mixing the two with a common
    /// share makes the gap of the moved samples exactly zero.
    fn split_at_kink(&self, opt: &mut Optimum<T>, left: T, right: T) {
        let k_left = self.eval(left, true).k;
        let k_right = self.eval(right, true).k;
        let switch_tol = T::epsilon().sqrt() * T::lit(0.125);
        let switching: Vec<usize> = (0..self.rows.len())
            .filter(|&j| (k_left[j] - k_right[j]).abs() > switch_tol)
            .collect();
        if switching.is_empty() {
            return;
        }
        let mut primary = opt.k.clone();
        let mut alternative = opt.k.clone();
        for &j in &switching {
            primary[j] = k_left[j];
            alternative[j] = k_right[j];
        }
        let g_primary = self.gap_with(opt.multiplier, &primary);
        let g_alternative = self.gap_with(opt.multiplier, &alternative);
        if !(g_primary.signum() * g_alternative.signum() < T::zero()) {
            return;
        }
        let share = g_primary / (g_primary - g_alternative);
        opt.k = primary;
        opt.splits = switching.into_iter().map(|j| (j, k_right[j], share)).collect();
    }

    /// Gap of the samples moved with the given inner minimizers at `multiplier`.
    fn gap_with(&self, multiplier: T, k: &[T]) -> T {
        let bn = self.ctx.beta_norm_sq;
        let mut moved = [T::zero(); 2];
        for ((&i, &logit), &kj) in self.rows.iter().zip(&self.logits).zip(k) {
            let omega = multiplier * self.ctx.lambdas.get(i);
            let a = self.ctx.data.sensitive()[i] as usize;
            moved[a] = moved[a] + sigmoid(logit - kj * omega * bn);
        }
        moved[1] / T::from_count(self.count[1]) - moved[0] / T::from_count(self.count[0])
    }

    fn write_plan(&self, opt: &Optimum<T>, out: &mut ProjectionResult<T>) {
        let beta = self.ctx.model.beta();
        let d = beta.len();
        for (j, &i) in self.rows.iter().enumerate() {
            let k = opt.k[j];
            out.k_star[i] = k;
            let scale = k * opt.multiplier * self.ctx.lambdas.get(i);
            for (dst, &b) in out.displacements[i * d..(i + 1) * d].iter_mut().zip(beta) {
                *dst = scale * b;
            }
        }
        for &(j, k, share) in &opt.splits {
            let i = self.rows[j];
            let scale = k * opt.multiplier * self.ctx.lambdas.get(i);
            out.splits.push(Split {
                row: i,
                k,
                share,
                displacement: beta.iter().map(|&b| scale * b).collect(),
            });
        }
    }
}

struct Root<T> {
    t: T,
    /// Final bracket with `f(a) > 0 ≥ f(b)`.
    a: T,
    b: T,
}

/// Sign change of a nonincreasing function on `[lo, hi]` with `f(lo) > 0 ≥ f(hi)`,
/// by regula falsi with the Illinois modification and periodic bisection.
fn illinois<T: Real>(f: impl Fn(T) -> T, mut a: T, fa_true: T, mut b: T, fb_true: T, rel_tol: T) -> Root<T> {
    let two = T::lit(2.0);
    let (mut fa, mut fb) = (fa_true, fb_true);
    let (mut best, mut best_abs) = if fa_true.abs() <= fb_true.abs() {
        (a, fa_true.abs())
    } else {
        (b, fb_true.abs())
    };
    if fb_true.is_zero() {
        return Root { t: b, a: b, b };
    }
    let mut side = 0i8;
    let mut width_mark = b - a;
    for iter in 0..300 {
        if b - a <= rel_tol * b.abs().max(T::one()) {
            break;
        }
        let mut x = (a * fb - b * fa) / (fb - fa);
        if iter % 3 == 2 {
            if b - a > width_mark / two {
                x = (a + b) / two;
            }
            width_mark = b - a;
        }
        if !(x > a && x < b) {
            x = (a + b) / two;
        }
        let fx = f(x);
        if fx.abs() < best_abs {
            best = x;
            best_abs = fx.abs();
        }
        if fx.is_zero() {
            return Root { t: x, a: x, b: x };
        }
        if fx > T::zero() {
            a = x;
            fa = fx;
            if side == 1 {
                fb = fb / two;
            }
            side = 1;
        } else {
            b = x;
            fb = fx;
            if side == -1 {
                fa = fa / two;
            }
            side = -1;
        }
    }
    // A jump in the supergradient leaves both ends nonzero; either end is optimal
    // up to the bracket width, so prefer the probe closest to stationarity.
    let t = if b - a <= rel_tol * b.abs().max(T::one()) && best_abs > T::zero() {
        best
    } else {
        (a + b) / two
    };
    Root { t, a, b }
}
