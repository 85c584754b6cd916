//! Column-coherence statistics of a design and the probabilistic bounds
//! that control them.
//!
//! For columns `a_j` with squared norms `d_j`:
//!
//! * `rho = max_{i≠j} |a_iᵀa_j| / d_j` (ordered pairs, denominator is column `j`),
//! * `L   = min_j d_j / n`,
//! * `nu  = max_{i≠j} |a_iᵀa_j| / n`,
//!
//! and `rho/(1+rho) <= rho <= nu/L` holds for every matrix.

use std::f64::consts::{FRAC_2_PI, SQRT_2};

use ndarray::s;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DesignMatrix, Ensemble};
use crate::Scalar;

/// Columns per Gram block; bounds the scratch buffer at `p × GRAM_BLOCK`.
pub const GRAM_BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherenceStats<F> {
    pub rho: F,
    #[serde(rename = "L")]
    pub l: F,
    pub nu: F,
    pub mu_threshold: F,
}

/// Off-diagonal Gram extremes from a single pass.
#[derive(Debug, Clone, Copy)]
struct GramScan<F> {
    /// max over ordered pairs of |G_ij| / d_j
    max_ratio: F,
    /// max over i≠j of |G_ij|
    max_abs: F,
}

fn scan_gram<F: Scalar>(a: &DesignMatrix<F>) -> GramScan<F> {
    let p = a.ncols();
    let entries = a.entries();
    let norms = a.col_sq_norms();
    let mut scan = GramScan { max_ratio: F::zero(), max_abs: F::zero() };
    let mut start = 0;
    while start < p {
        let end = (start + GRAM_BLOCK).min(p);
        let block = entries.t().dot(&entries.slice(s![.., start..end]));
        for (k, col) in block.columns().into_iter().enumerate() {
            let j = start + k;
            let mut col_max = F::zero();
            for (i, &g) in col.iter().enumerate() {
                if i != j {
                    col_max = col_max.max(g.abs());
                }
            }
            scan.max_abs = scan.max_abs.max(col_max);
            scan.max_ratio = scan.max_ratio.max(col_max / norms[j]);
        }
        start = end;
    }
    scan
}

/// Computes `rho`, `L`, `nu` and `rho/(1+rho)` with one Gram pass.
pub fn coherence_stats<F: Scalar>(a: &DesignMatrix<F>) -> Result<CoherenceStats<F>> {
    a.ensure_nonzero_columns()?;
    let scan = scan_gram(a);
    let n = F::of_usize(a.nrows());
    Ok(CoherenceStats {
        rho: scan.max_ratio,
        l: compute_l(a),
        nu: scan.max_abs / n,
        mu_threshold: mu_from_rho(scan.max_ratio)?,
    })
}

pub fn compute_rho<F: Scalar>(a: &DesignMatrix<F>) -> Result<F> {
    a.ensure_nonzero_columns()?;
    Ok(scan_gram(a).max_ratio)
}

pub fn compute_l<F: Scalar>(a: &DesignMatrix<F>) -> F {
    let n = F::of_usize(a.nrows());
    a.col_sq_norms().iter().fold(F::infinity(), |m, &d| m.min(d)) / n
}

pub fn compute_nu<F: Scalar>(a: &DesignMatrix<F>) -> F {
    scan_gram(a).max_abs / F::of_usize(a.nrows())
}

/// `rho / (1 + rho)`, the smallest slack for which the closed-form weights are optimal.
pub fn mu_from_rho<F: Scalar>(rho: F) -> Result<F> {
    if !(rho >= F::zero()) {
        return Err(Error::invalid(format!("rho must be nonnegative, got {rho}")));
    }
    if rho.is_infinite() {
        return Ok(F::one());
    }
    Ok(rho / (F::one() + rho))
}

/// `(rho/(1+rho), rho, nu/L)` together with whether the chain is ordered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundChain<F> {
    pub mu_threshold: F,
    pub rho: F,
    pub nu_over_l: F,
    pub holds: bool,
}

/// Evaluates the chain `rho/(1+rho) <= rho <= nu/L`.
///
/// `nu/L` is formed as `max|G_ij| / min d_j` from the same Gram values that
/// give `rho`, so the comparison is exact in floating point.
pub fn bound_chain<F: Scalar>(a: &DesignMatrix<F>) -> Result<BoundChain<F>> {
    a.ensure_nonzero_columns()?;
    let scan = scan_gram(a);
    let d_min = a.col_sq_norms().iter().fold(F::infinity(), |m, &d| m.min(d));
    let rho = scan.max_ratio;
    let mu_threshold = mu_from_rho(rho)?;
    let nu_over_l = scan.max_abs / d_min;
    Ok(BoundChain { mu_threshold, rho, nu_over_l, holds: mu_threshold <= rho && rho <= nu_over_l })
}

/// Sub-Gaussian norm `sup_{q>=1} q^{-1/2} (E|x|^q)^{1/q}` of a standardized
/// entry, maximized over unit directions.
///
/// Standard Gaussian: the supremum is attained at `q = 1`, giving `E|g| = sqrt(2/pi)`.
/// Rademacher: `q^{-1/2}` for a coordinate direction, attained at `q = 1`, and
/// Khintchine's inequality keeps other directions below it, giving 1.
pub fn subgaussian_norm(kind: Ensemble) -> f64 {
    match kind {
        Ensemble::Gaussian => FRAC_2_PI.sqrt(),
        Ensemble::Rademacher => 1.0,
    }
}

/// Population constants entering the sample-size hypothesis and the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoreticalBoundParams {
    pub kappa: f64,
    pub c_min: f64,
    pub c_max: f64,
    pub c: f64,
}

impl TheoreticalBoundParams {
    /// Lower end of the admissible open interval for `c`.
    pub const C_LOWER: f64 = SQRT_2 / (1.0 + SQRT_2);

    pub fn new(kappa: f64, c_min: f64, c_max: f64, c: f64) -> Result<Self> {
        let params = TheoreticalBoundParams { kappa, c_min, c_max, c };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.c_min > 0.0 && self.c_min <= self.c_max && self.c_max.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < c_min <= c_max, got c_min={} c_max={}",
                self.c_min, self.c_max
            )));
        }
        if !(self.c > Self::C_LOWER && self.c < 1.0) {
            return Err(Error::invalid(format!(
                "c must lie in ({:.6}, 1), got {}",
                Self::C_LOWER,
                self.c
            )));
        }
        Ok(())
    }

    /// Smallest `n` with `n >= 4 c_max² κ⁴ / (c_min² (1-c)²) · ln p`.
    pub fn min_sample_size(&self, p: usize) -> usize {
        let k4 = self.kappa.powi(4);
        let bound = 4.0 * self.c_max.powi(2) * k4 / (self.c_min.powi(2) * (1.0 - self.c).powi(2))
            * (p as f64).ln();
        bound.ceil().max(1.0) as usize
    }

    pub fn check_sample_size(&self, n: usize, p: usize) -> Result<()> {
        let min_n = self.min_sample_size(p);
        if n < min_n {
            return Err(Error::SampleSize { n, min_n });
        }
        Ok(())
    }

    /// `2√2 (κ²/c) (c_max/c_min) √(ln p / n)`, without the sample-size guard.
    pub fn mu_formula(&self, n: usize, p: usize) -> f64 {
        2.0 * SQRT_2 * self.kappa.powi(2) / self.c * (self.c_max / self.c_min)
            * ((p as f64).ln() / n as f64).sqrt()
    }

    /// Upper bound on `nu` holding with probability at least `1 - 1/p²`.
    pub fn nu_bound(&self, n: usize, p: usize) -> f64 {
        2.0 * SQRT_2 * self.c_max * self.kappa.powi(2) * ((p as f64).ln() / n as f64).sqrt()
    }

    /// Lower bound on `L` holding with probability at least `1 - 2/p`.
    pub fn l_bound(&self) -> f64 {
        self.c * self.c_min
    }
}

/// Slack `mu` that makes the closed form optimal with high probability.
/// Fails with the minimal admissible `n` when the sample-size hypothesis is violated.
pub fn theoretical_mu(params: &TheoreticalBoundParams, n: usize, p: usize) -> Result<f64> {
    params.validate()?;
    if p < 2 {
        return Err(Error::invalid(format!("need p >= 2, got {p}")));
    }
    params.check_sample_size(n, p)?;
    Ok(params.mu_formula(n, p))
}
