//! LASSO by cyclic coordinate descent.
//!
//! Minimizes `(1/2n)‖y − Aβ‖² + λ‖β‖₁`. After each full sweep the solver
//! repeats sweeps over the current active set, then re-checks the KKT
//! conditions on a freshly computed residual.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::model::{residual, DesignMatrix};
use crate::Scalar;

/// Multiple of the universal threshold `σ√(2 ln p / n)` used as the default `λ`.
pub const LAMBDA_SCALE: f64 = 0.5;

/// Active-set sweeps allowed between two full sweeps.
const MAX_ACTIVE_SWEEPS: usize = 1000;

pub fn soft_threshold<F: Scalar>(x: F, t: F) -> F {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        F::zero()
    }
}

/// `LAMBDA_SCALE · σ √(2 ln p / n)`.
pub fn default_lambda<F: Scalar>(sigma: F, n: usize, p: usize) -> F {
    let rate = (2.0 * (p.max(2) as f64).ln() / n as f64).sqrt();
    sigma * F::of(LAMBDA_SCALE * rate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoConfig<F> {
    pub lambda: F,
    /// KKT tolerance, relative to `‖Aᵀy‖∞ / n`.
    pub tol: F,
    /// Budget in coordinate sweeps (full and active-set combined).
    pub max_iters: usize,
    pub warm_start: Option<Array1<F>>,
}

impl<F: Scalar> LassoConfig<F> {
    pub fn new(lambda: F) -> Self {
        LassoConfig { lambda, tol: F::of(1e-8), max_iters: 100_000, warm_start: None }
    }

    pub fn tol(mut self, tol: F) -> Self {
        self.tol = tol;
        self
    }

    pub fn max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn warm_start(mut self, beta: Array1<F>) -> Self {
        self.warm_start = Some(beta);
        self
    }

    fn validate(&self, n: usize, p: usize) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < F::zero() {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.lambda == F::zero() && n < p {
            return Err(Error::invalid(format!("lambda = 0 requires n >= p, got n={n}, p={p}")));
        }
        if !(self.tol > F::zero()) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        if let Some(w) = &self.warm_start {
            if w.len() != p {
                return Err(Error::mismatch("warm start length", p, w.len()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoEstimate<F> {
    pub beta_hat: Array1<F>,
    pub lambda: F,
    /// Number of coordinate sweeps.
    pub iterations: usize,
    /// KKT violation divided by `‖Aᵀy‖∞ / n` (or 1 when that is zero).
    pub kkt_residual: F,
    pub objective: F,
}

/// Largest violation of the LASSO optimality conditions at `beta`:
/// `max(|g_j| − λ, 0)` where `β_j = 0` and `|g_j − λ sign β_j|` elsewhere,
/// with `g = Aᵀ(y − Aβ)/n`.
pub fn kkt_residual<F: Scalar>(
    a: &DesignMatrix<F>,
    y: ArrayView1<'_, F>,
    beta: ArrayView1<'_, F>,
    lambda: F,
) -> Result<F> {
    check_dims(a, y, beta.len())?;
    let r = residual(a, y, beta);
    Ok(kkt_from_residual(a, r.view(), beta, lambda))
}

fn kkt_from_residual<F: Scalar>(a: &DesignMatrix<F>, r: ArrayView1<'_, F>, beta: ArrayView1<'_, F>, lambda: F) -> F {
    let n = F::of_usize(a.nrows());
    let g = a.rmatvec(r) / n;
    g.iter()
        .zip(beta.iter())
        .map(|(&gj, &bj)| {
            if bj == F::zero() {
                (gj.abs() - lambda).max(F::zero())
            } else {
                (gj - lambda * bj.signum()).abs()
            }
        })
        .fold(F::zero(), F::max)
}

pub fn lasso_objective<F: Scalar>(r: ArrayView1<'_, F>, beta: ArrayView1<'_, F>, lambda: F) -> F {
    let n = F::of_usize(r.len());
    r.dot(&r) / (F::of(2.0) * n) + lambda * beta.iter().fold(F::zero(), |s, b| s + b.abs())
}

fn check_dims<F: Scalar>(a: &DesignMatrix<F>, y: ArrayView1<'_, F>, p: usize) -> Result<()> {
    if y.len() != a.nrows() {
        return Err(Error::mismatch("response length vs design rows", a.nrows(), y.len()));
    }
    if p != a.ncols() {
        return Err(Error::mismatch("coefficient length vs design columns", a.ncols(), p));
    }
    Ok(())
}

struct Sweeper<'a, F> {
    a: &'a DesignMatrix<F>,
    /// `‖a_j‖² / n`
    curvature: Array1<F>,
    n: F,
    lambda: F,
}

impl<F: Scalar> Sweeper<'_, F> {
    /// Updates coordinate `j`; returns the KKT violation it had before the update.
    fn update(&self, j: usize, beta: &mut Array1<F>, r: &mut Array1<F>) -> F {
        let d = self.curvature[j];
        if d == F::zero() {
            return F::zero();
        }
        let col = self.a.column(j);
        let g = col.dot(r) / self.n;
        let old = beta[j];
        let violation = if old == F::zero() {
            (g.abs() - self.lambda).max(F::zero())
        } else {
            (g - self.lambda * old.signum()).abs()
        };
        let new = soft_threshold(old + g / d, self.lambda / d);
        if new != old {
            r.scaled_add(old - new, &col);
            beta[j] = new;
        }
        violation
    }
}

pub fn fit_lasso<F: Scalar>(
    a: &DesignMatrix<F>,
    y: ArrayView1<'_, F>,
    cfg: &LassoConfig<F>,
) -> Result<LassoEstimate<F>> {
    let (n, p) = (a.nrows(), a.ncols());
    check_dims(a, y, p)?;
    cfg.validate(n, p)?;

    let nf = F::of_usize(n);
    let lambda = cfg.lambda;
    let lambda_max = a.rmatvec(y).iter().fold(F::zero(), |m, g| m.max(g.abs())) / nf;
    let scale = if lambda_max > F::zero() { lambda_max } else { F::one() };
    let target = cfg.tol * scale;

    let sweeper = Sweeper { a, curvature: a.col_sq_norms().mapv(|d| d / nf), n: nf, lambda };
    let mut beta = cfg.warm_start.clone().unwrap_or_else(|| Array1::zeros(p));
    let mut r = residual(a, y, beta.view());
    let mut iterations = 0;
    let mut last_objective = lasso_objective(r.view(), beta.view(), lambda);

    let debug_monotone = |obj: F, last: &mut F| {
        debug_assert!(
            obj <= *last + F::of(1e-9) * last.abs().max(F::one()),
            "objective increased across a sweep: {} -> {}",
            *last,
            obj
        );
        *last = obj;
    };

    loop {
        for j in 0..p {
            sweeper.update(j, &mut beta, &mut r);
        }
        iterations += 1;
        if cfg!(debug_assertions) {
            debug_monotone(lasso_objective(r.view(), beta.view(), lambda), &mut last_objective);
        }

        r = residual(a, y, beta.view());
        let kkt = kkt_from_residual(a, r.view(), beta.view(), lambda);
        if kkt <= target {
            return Ok(LassoEstimate {
                objective: lasso_objective(r.view(), beta.view(), lambda),
                beta_hat: beta,
                lambda,
                iterations,
                kkt_residual: kkt / scale,
            });
        }
        if iterations >= cfg.max_iters {
            return Err(Error::Convergence {
                solver: "lasso coordinate descent",
                iterations,
                residual: (kkt / scale).as_f64(),
                last_iterate: beta.iter().map(|b| b.as_f64()).collect(),
            });
        }

        let active: Vec<usize> = (0..p).filter(|&j| beta[j] != F::zero()).collect();
        for _ in 0..MAX_ACTIVE_SWEEPS {
            if iterations >= cfg.max_iters {
                break;
            }
            let worst = active
                .iter()
                .map(|&j| sweeper.update(j, &mut beta, &mut r))
                .fold(F::zero(), F::max);
            iterations += 1;
            if cfg!(debug_assertions) {
                debug_monotone(lasso_objective(r.view(), beta.view(), lambda), &mut last_objective);
            }
            if worst <= target * F::of(0.1) {
                break;
            }
        }
    }
}
