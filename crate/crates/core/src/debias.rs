//! Closed-form debiasing weights and the one-step debiasing update.
//!
//! Column `j` of the closed-form weight matrix is `n(1−μ)/‖a_j‖² · a_j`.
//! It is the unique minimizer of `(1/n)‖w‖²` subject to
//! `‖(1/n)Aᵀw − e_j‖∞ ≤ μ` exactly when `ρ/(1+ρ) ≤ μ ≤ 1`.

use ndarray::{Array1, Array2, ArrayView1, ShapeBuilder};
use serde::Serialize;

use crate::coherence::CoherenceStats;
use crate::error::{Error, Result};
use crate::model::{residual, DesignMatrix};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    ClosedForm,
    QpSolver,
}

/// What is known about the optimality of a weight matrix for its `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Optimality {
    /// Not checked against the coherence threshold.
    Unverified,
    /// `mu` is at or above `rho/(1+rho)`.
    Optimal,
    /// `mu` is below `rho/(1+rho)`; the closed form violates the constraint.
    Infeasible,
    /// Certified by the QP solver's duality gap.
    Certified,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightStorage<F> {
    Dense(Array2<F>),
    /// Column `j` is `scales[j] · a_j`; the design is needed to expand it.
    ColumnScaled(Array1<F>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebiasWeights<F> {
    pub storage: WeightStorage<F>,
    pub mu: F,
    pub provenance: Provenance,
    pub optimality: Optimality,
    /// `(1/n)‖w_j‖²` per column.
    pub per_column_objective: Array1<F>,
}

impl<F: Scalar> DebiasWeights<F> {
    /// Wraps an explicit `n × p` weight matrix.
    pub fn from_dense(w: Array2<F>, mu: F, provenance: Provenance) -> Self {
        let n = F::of_usize(w.nrows());
        let per_column_objective = w.columns().into_iter().map(|c| c.dot(&c) / n).collect();
        DebiasWeights {
            storage: WeightStorage::Dense(w),
            mu,
            provenance,
            optimality: Optimality::Unverified,
            per_column_objective,
        }
    }

    pub fn ncols(&self) -> usize {
        self.per_column_objective.len()
    }

    pub fn is_matrix_free(&self) -> bool {
        matches!(self.storage, WeightStorage::ColumnScaled(_))
    }

    pub fn as_dense(&self) -> Option<&Array2<F>> {
        match &self.storage {
            WeightStorage::Dense(w) => Some(w),
            WeightStorage::ColumnScaled(_) => None,
        }
    }

    /// Materializes the weights against the design they were built from.
    pub fn to_dense(&self, a: &DesignMatrix<F>) -> Array2<F> {
        match &self.storage {
            WeightStorage::Dense(w) => w.clone(),
            WeightStorage::ColumnScaled(scales) => {
                let mut w = Array2::zeros((a.nrows(), a.ncols()).f());
                for (j, mut col) in w.columns_mut().into_iter().enumerate() {
                    col.assign(&(&a.column(j) * scales[j]));
                }
                w
            }
        }
    }

    pub fn column(&self, a: &DesignMatrix<F>, j: usize) -> Array1<F> {
        match &self.storage {
            WeightStorage::Dense(w) => w.column(j).to_owned(),
            WeightStorage::ColumnScaled(s) => &a.column(j) * s[j],
        }
    }

    fn check_shape(&self, a: &DesignMatrix<F>) -> Result<()> {
        if self.ncols() != a.ncols() {
            return Err(Error::mismatch("weight columns vs design columns", a.ncols(), self.ncols()));
        }
        if let WeightStorage::Dense(w) = &self.storage {
            if w.nrows() != a.nrows() {
                return Err(Error::mismatch("weight rows vs design rows", a.nrows(), w.nrows()));
            }
        }
        Ok(())
    }
}

fn check_mu<F: Scalar>(mu: F) -> Result<()> {
    if !(mu >= F::zero() && mu <= F::one()) {
        return Err(Error::invalid(format!("mu must lie in [0, 1], got {mu}")));
    }
    Ok(())
}

/// The `p` scalars `n(1−μ)/‖a_j‖²`.
pub fn closed_form_scales<F: Scalar>(a: &DesignMatrix<F>, mu: F) -> Result<Array1<F>> {
    check_mu(mu)?;
    a.ensure_nonzero_columns()?;
    let factor = F::of_usize(a.nrows()) * (F::one() - mu);
    Ok(a.col_sq_norms().mapv(|d| factor / d))
}

fn closed_form_objective<F: Scalar>(a: &DesignMatrix<F>, mu: F) -> Array1<F> {
    let n = F::of_usize(a.nrows());
    let slack = (F::one() - mu) * (F::one() - mu);
    a.col_sq_norms().mapv(|d| slack / (d / n))
}

/// Dense closed-form weights. Optimality is left unverified; use
/// [`closed_form_weights_checked`] to compare `mu` with the threshold.
pub fn closed_form_weights<F: Scalar>(a: &DesignMatrix<F>, mu: F) -> Result<DebiasWeights<F>> {
    let scales = closed_form_scales(a, mu)?;
    let mut w = Array2::zeros((a.nrows(), a.ncols()).f());
    for (j, mut col) in w.columns_mut().into_iter().enumerate() {
        col.assign(&a.column(j));
        col *= scales[j];
    }
    Ok(DebiasWeights {
        storage: WeightStorage::Dense(w),
        mu,
        provenance: Provenance::ClosedForm,
        optimality: Optimality::Unverified,
        per_column_objective: closed_form_objective(a, mu),
    })
}

/// Closed-form weights storing only the `p` column scales.
pub fn closed_form_weights_matrix_free<F: Scalar>(a: &DesignMatrix<F>, mu: F) -> Result<DebiasWeights<F>> {
    Ok(DebiasWeights {
        storage: WeightStorage::ColumnScaled(closed_form_scales(a, mu)?),
        mu,
        provenance: Provenance::ClosedForm,
        optimality: Optimality::Unverified,
        per_column_objective: closed_form_objective(a, mu),
    })
}

/// Closed-form weights flagged [`Optimality::Infeasible`] when `mu` is below
/// the coherence threshold (the weights are still returned).
pub fn closed_form_weights_checked<F: Scalar>(
    a: &DesignMatrix<F>,
    mu: F,
    stats: &CoherenceStats<F>,
) -> Result<DebiasWeights<F>> {
    let mut w = closed_form_weights(a, mu)?;
    w.optimality = if mu >= stats.mu_threshold { Optimality::Optimal } else { Optimality::Infeasible };
    Ok(w)
}

/// `‖(1/n)Aᵀw_j − e_j‖∞` for every column.
pub fn feasibility_margin<F: Scalar>(a: &DesignMatrix<F>, w: &DebiasWeights<F>) -> Result<Array1<F>> {
    w.check_shape(a)?;
    let n = F::of_usize(a.nrows());
    let margins = match &w.storage {
        WeightStorage::Dense(wd) => {
            let g = a.entries().t().dot(wd) / n;
            g.columns()
                .into_iter()
                .enumerate()
                .map(|(j, c)| column_margin(c, j))
                .collect()
        }
        WeightStorage::ColumnScaled(scales) => (0..a.ncols())
            .map(|j| {
                let c = a.rmatvec(a.column(j)) * (scales[j] / n);
                column_margin(c.view(), j)
            })
            .collect(),
    };
    Ok(margins)
}

/// `‖g − e_j‖∞` for the column `g = (1/n)Aᵀw_j`.
pub fn column_margin<F: Scalar>(g: ArrayView1<'_, F>, j: usize) -> F {
    g.iter()
        .enumerate()
        .map(|(i, &v)| if i == j { (v - F::one()).abs() } else { v.abs() })
        .fold(F::zero(), F::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedEstimate<F> {
    pub beta_d: Array1<F>,
    /// `σ ‖w_j‖ / n`
    pub stderr: Array1<F>,
    pub mu: F,
    pub sigma: F,
}

/// `β̂_d = β̂ + (1/n) Wᵀ(y − Aβ̂)` with per-coordinate standard errors.
pub fn debias<F: Scalar>(
    a: &DesignMatrix<F>,
    y: ArrayView1<'_, F>,
    sigma: F,
    beta_hat: ArrayView1<'_, F>,
    w: &DebiasWeights<F>,
) -> Result<DebiasedEstimate<F>> {
    let (n, p) = (a.nrows(), a.ncols());
    if y.len() != n {
        return Err(Error::mismatch("response length vs design rows", n, y.len()));
    }
    if beta_hat.len() != p {
        return Err(Error::mismatch("estimate length vs design columns", p, beta_hat.len()));
    }
    if !(sigma >= F::zero()) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    w.check_shape(a)?;
    let nf = F::of_usize(n);
    let r = residual(a, y, beta_hat);
    let correction = match &w.storage {
        WeightStorage::Dense(wd) => wd.t().dot(&r) / nf,
        WeightStorage::ColumnScaled(s) => a.rmatvec(r.view()) * s / nf,
    };
    let beta_d = &beta_hat + &correction;
    // (1/n)‖w_j‖² = objective_j, so σ‖w_j‖/n = σ √(objective_j / n)
    let stderr = w.per_column_objective.mapv(|obj| sigma * (obj / nf).sqrt());
    Ok(DebiasedEstimate { beta_d, stderr, mu: w.mu, sigma })
}
