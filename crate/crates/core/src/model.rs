//! Synthetic linear models `y = A β* + η`: design matrices, sparse signals,
//! the noise-level rule and measurement sampling.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder, Zip};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::Scalar;

/// Fraction of the mean absolute clean response used as the noise level.
pub const NOISE_FRACTION: f64 = 0.05;

/// Entry distribution of a random design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    Gaussian,
    Rademacher,
}

impl std::str::FromStr for Ensemble {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Ensemble::Gaussian),
            "rademacher" | "sign" => Ok(Ensemble::Rademacher),
            other => Err(Error::invalid(format!("unknown ensemble `{other}`"))),
        }
    }
}

/// Ensemble with an optional per-column standard deviation (a diagonal
/// population covariance). Correlated rows are not supported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: Ensemble,
    pub column_scales: Option<Vec<f64>>,
}

impl EnsembleSpec {
    pub fn new(kind: Ensemble) -> Self {
        EnsembleSpec { kind, column_scales: None }
    }

    pub fn gaussian() -> Self {
        Self::new(Ensemble::Gaussian)
    }

    pub fn rademacher() -> Self {
        Self::new(Ensemble::Rademacher)
    }

    pub fn with_column_scales(mut self, scales: Vec<f64>) -> Self {
        self.column_scales = Some(scales);
        self
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if let Some(scales) = &self.column_scales {
            if scales.len() != p {
                return Err(Error::mismatch("column_scales length", p, scales.len()));
            }
            if let Some(bad) = scales.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::invalid(format!(
                    "column scale {bad} must be finite and strictly positive"
                )));
            }
        }
        Ok(())
    }

    fn scale(&self, j: usize) -> f64 {
        self.column_scales.as_ref().map_or(1.0, |s| s[j])
    }

    /// Extreme eigenvalues of the (diagonal) population covariance.
    pub fn covariance_bounds(&self) -> (f64, f64) {
        match &self.column_scales {
            None => (1.0, 1.0),
            Some(s) => s.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &x| {
                (lo.min(x * x), hi.max(x * x))
            }),
        }
    }
}

/// An `n × p` design stored column-major, with cached squared column norms.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<F> {
    entries: Array2<F>,
    col_sq_norms: Array1<F>,
    ensemble: Option<EnsembleSpec>,
}

impl<F: Scalar> DesignMatrix<F> {
    pub fn new(entries: Array2<F>) -> Result<Self> {
        let (n, p) = entries.dim();
        if n == 0 || p == 0 {
            return Err(Error::invalid(format!("design must be non-empty, got {n}x{p}")));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("design contains non-finite entries"));
        }
        let mut cm = Array2::zeros((n, p).f());
        cm.assign(&entries);
        let col_sq_norms = cm.columns().into_iter().map(|c| c.dot(&c)).collect();
        Ok(DesignMatrix { entries: cm, col_sq_norms, ensemble: None })
    }

    /// Builds from a column-major buffer of length `n * p`.
    pub fn from_column_major(n: usize, p: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != n * p {
            return Err(Error::mismatch("column-major buffer length", n * p, data.len()));
        }
        let entries = Array2::from_shape_vec((n, p).f(), data)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Self::new(entries)
    }

    pub fn with_ensemble(mut self, ensemble: EnsembleSpec) -> Self {
        self.ensemble = Some(ensemble);
        self
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> ArrayView2<'_, F> {
        self.entries.view()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, F> {
        self.entries.column(j)
    }

    pub fn col_sq_norms(&self) -> ArrayView1<'_, F> {
        self.col_sq_norms.view()
    }

    pub fn ensemble(&self) -> Option<&EnsembleSpec> {
        self.ensemble.as_ref()
    }

    /// Entries in column-major order.
    pub fn column_major_data(&self) -> Vec<F> {
        self.entries.t().iter().copied().collect()
    }

    /// `AᵀA / n`, materialized.
    pub fn sample_covariance(&self) -> Array2<F> {
        let n = F::of_usize(self.nrows());
        self.entries.t().dot(&self.entries) / n
    }

    pub fn matvec(&self, x: ArrayView1<'_, F>) -> Array1<F> {
        self.entries.dot(&x)
    }

    /// `Aᵀ v`.
    pub fn rmatvec(&self, v: ArrayView1<'_, F>) -> Array1<F> {
        self.entries.t().dot(&v)
    }

    /// Errors on the first column with zero norm.
    pub fn ensure_nonzero_columns(&self) -> Result<()> {
        match self.col_sq_norms.iter().position(|&c| c <= F::zero()) {
            Some(column) => Err(Error::ZeroColumn { column }),
            None => Ok(()),
        }
    }

    /// Largest relative discrepancy between cached and recomputed norms.
    pub fn norm_cache_error(&self) -> F {
        self.entries
            .columns()
            .into_iter()
            .zip(self.col_sq_norms.iter())
            .map(|(c, &cached)| {
                let fresh = c.iter().fold(F::zero(), |acc, &x| acc + x * x);
                if fresh == F::zero() {
                    cached.abs()
                } else {
                    ((fresh - cached) / fresh).abs()
                }
            })
            .fold(F::zero(), F::max)
    }

    /// Reorders columns: column `k` of the result is column `order[k]` here.
    pub fn permute_columns(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.ncols() {
            return Err(Error::mismatch("permutation length", self.ncols(), order.len()));
        }
        let mut out = Array2::zeros((self.nrows(), self.ncols()).f());
        for (k, &j) in order.iter().enumerate() {
            out.column_mut(k).assign(&self.entries.column(j));
        }
        Self::new(out)
    }
}

/// Draws an `n × p` design with i.i.d. entries from `ensemble`.
pub fn generate_design<F: Scalar>(
    n: usize,
    p: usize,
    ensemble: &EnsembleSpec,
    seed: u64,
) -> Result<DesignMatrix<F>> {
    if n == 0 || p == 0 {
        return Err(Error::invalid(format!("dimensions must be positive, got n={n}, p={p}")));
    }
    ensemble.validate(p)?;
    let mut rng = stream_rng(seed, Stream::Matrix);
    let mut data = Vec::with_capacity(n * p);
    for j in 0..p {
        let scale = ensemble.scale(j);
        for _ in 0..n {
            let x: f64 = match ensemble.kind {
                Ensemble::Gaussian => StandardNormal.sample(&mut rng),
                Ensemble::Rademacher => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            data.push(F::of(scale * x));
        }
    }
    Ok(DesignMatrix::from_column_major(n, p, data)?.with_ensemble(ensemble.clone()))
}

/// Ground-truth coefficient vector with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal<F> {
    values: Array1<F>,
    support: Vec<usize>,
}

impl<F: Scalar> SparseSignal<F> {
    pub fn new(values: Array1<F>) -> Self {
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != F::zero())
            .map(|(j, _)| j)
            .collect();
        SparseSignal { values, support }
    }

    pub fn zeros(p: usize) -> Self {
        Self::new(Array1::zeros(p))
    }

    pub fn values(&self) -> ArrayView1<'_, F> {
        self.values.view()
    }

    /// Sorted indices of the nonzero entries.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// 0/1 indicator of the support.
    pub fn indicator(&self) -> Vec<bool> {
        self.values.iter().map(|v| *v != F::zero()).collect()
    }

    pub fn permute(&self, order: &[usize]) -> Self {
        Self::new(order.iter().map(|&j| self.values[j]).collect())
    }
}

/// Draws an `s`-sparse signal of length `p` with values uniform on `[lo, hi]`
/// at uniformly chosen positions (partial Fisher–Yates).
pub fn generate_signal<F: Scalar>(
    p: usize,
    s: usize,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Result<SparseSignal<F>> {
    if s > p {
        return Err(Error::invalid(format!("sparsity {s} exceeds dimension {p}")));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!("need finite lo < hi, got [{lo}, {hi}]")));
    }
    let mut support_rng = stream_rng(seed, Stream::SignalSupport);
    let mut support = index::sample(&mut support_rng, p, s).into_vec();
    support.sort_unstable();

    let mut value_rng = stream_rng(seed, Stream::SignalValues);
    let dist = Uniform::new_inclusive(lo, hi).map_err(|e| Error::invalid(e.to_string()))?;
    let mut values = Array1::zeros(p);
    for &j in &support {
        let v = loop {
            let v = F::of(dist.sample(&mut value_rng));
            if v != F::zero() {
                break v;
            }
        };
        values[j] = v;
    }
    Ok(SparseSignal { values, support })
}

/// `σ = 0.05 · (1/n) Σᵢ |⟨aᵢ, β*⟩|`.
pub fn noise_sigma<F: Scalar>(a: &DesignMatrix<F>, beta: &SparseSignal<F>) -> Result<F> {
    check_signal(a, beta)?;
    let clean = a.matvec(beta.values());
    let mean_abs = clean.iter().fold(F::zero(), |acc, x| acc + x.abs()) / F::of_usize(a.nrows());
    Ok(F::of(NOISE_FRACTION) * mean_abs)
}

/// Response vector with the noise level and seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement<F> {
    pub y: Array1<F>,
    pub sigma: F,
    pub seed: u64,
}

impl<F: Scalar> Measurement<F> {
    pub fn new(y: Array1<F>, sigma: F) -> Self {
        Measurement { y, sigma, seed: 0 }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// `y = A β* + η` with `η ~ N(0, σ² I)`.
pub fn sample_measurements<F: Scalar>(
    a: &DesignMatrix<F>,
    beta: &SparseSignal<F>,
    sigma: F,
    seed: u64,
) -> Result<Measurement<F>> {
    check_signal(a, beta)?;
    if !(sigma >= F::zero()) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise level must be finite and >= 0, got {sigma}")));
    }
    let mut y = a.matvec(beta.values());
    if sigma > F::zero() {
        let mut rng = stream_rng(seed, Stream::Noise);
        y.mapv_inplace(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + sigma * F::of(z)
        });
    }
    Ok(Measurement { y, sigma, seed })
}

fn check_signal<F: Scalar>(a: &DesignMatrix<F>, beta: &SparseSignal<F>) -> Result<()> {
    if beta.len() != a.ncols() {
        return Err(Error::mismatch("signal length vs design columns", a.ncols(), beta.len()));
    }
    Ok(())
}

/// `y - A β`.
pub fn residual<F: Scalar>(a: &DesignMatrix<F>, y: ArrayView1<'_, F>, beta: ArrayView1<'_, F>) -> Array1<F> {
    let mut r = y.to_owned();
    Zip::from(&mut r).and(&a.matvec(beta)).for_each(|r, &f| *r -= f);
    r
}
