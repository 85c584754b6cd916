//! Monte Carlo drivers: the support-recovery table, the `μ` sweep and the
//! coverage check of the probabilistic bounds, plus their output files.
//!
//! Configuration files are plain `key = value` lines; `#` starts a comment and
//! unknown keys are rejected.
//!
//! ```text
//! p = 500
//! s = 10
//! n_grid = 200, 250, 300, 350, 400, 450, 500
//! trials = 25
//! ensemble = gaussian              # or rademacher
//! column_scales = 1.0, 2.0, ...    # optional, one per column
//! master_seed = 1
//! sigma_rule = mean_abs            # σ = 0.05 · mean |⟨a_i, β*⟩|
//! mu_rule = auto                   # auto | fixed:0.3 | sweep:0.20,0.60,0.01
//! lambda_rule = default            # default | fixed:0.8
//! signal_lo = 50
//! signal_hi = 1000
//! alpha = 0.05
//! fast = false                     # skip the QP path
//! lasso_tol = 1e-8
//! qp_tol = 1e-8
//! qp_max_iters = 100000
//! bound_c = 0.9
//! kappa = 0.7978845608             # defaults to the ensemble's table value
//! kappa_grid = 0.7, 0.8, 0.9, 1.0, 1.2
//! ```
//!
//! Every trial draws its matrix, signal and noise from
//! [`trial_seed`]`(master_seed, n, trial)`, so results do not depend on the
//! number of worker threads.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::coherence::{bound_chain, coherence_stats, subgaussian_norm, TheoreticalBoundParams};
use crate::debias::{closed_form_weights, debias, DebiasWeights};
use crate::error::{Error, Result};
use crate::inference::{score_support, test_support};
use crate::lasso::{default_lambda, fit_lasso, LassoConfig};
use crate::model::{generate_design, generate_signal, noise_sigma, sample_measurements, DesignMatrix, EnsembleSpec};
use crate::qp::{solve_all, QpConfig};
use crate::rng::trial_seed;

/// Bumped whenever a column of an emitted CSV changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Floor applied to zero relative errors in log-scale plot data.
pub const PLOT_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRule {
    /// `σ = 0.05 · (1/n) Σᵢ |⟨aᵢ, β*⟩|`
    MeanAbsResponse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MuRule {
    /// `μ = ρ/(1+ρ)` of each matrix.
    RhoAuto,
    Fixed(f64),
    Sweep { lo: f64, hi: f64, step: f64 },
}

impl MuRule {
    /// Grid `lo, lo+step, ..., hi` built by index so endpoints are exact.
    pub fn sweep_values(&self) -> Vec<f64> {
        match *self {
            MuRule::Sweep { lo, hi, step } => {
                let count = ((hi - lo) / step + 1e-9).floor() as usize;
                (0..=count).map(|k| lo + k as f64 * step).collect()
            }
            MuRule::RhoAuto | MuRule::Fixed(_) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// [`default_lambda`] of the trial's `σ`, `n`, `p`.
    Default,
    Fixed(f64),
}

impl LambdaRule {
    pub fn lambda(&self, sigma: f64, n: usize, p: usize) -> f64 {
        match *self {
            LambdaRule::Default => default_lambda(sigma, n, p),
            LambdaRule::Fixed(l) => l,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub p: usize,
    pub s: usize,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub sigma_rule: SigmaRule,
    pub mu_rule: MuRule,
    pub ensemble: EnsembleSpec,
    pub master_seed: u64,
    pub lambda_rule: LambdaRule,
    pub signal_lo: f64,
    pub signal_hi: f64,
    /// Level of the per-coordinate z-tests.
    pub alpha: f64,
    /// Closed form only; no QP solves.
    pub fast: bool,
    pub lasso_tol: f64,
    pub qp: QpConfig,
    /// `c` of the bound-validation experiment.
    pub bound_c: f64,
    /// Overrides the ensemble's sub-Gaussian norm.
    pub kappa: Option<f64>,
    pub kappa_grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::table1()
    }
}

impl ExperimentConfig {
    /// `p = 500`, `s = 10`, `n ∈ {200, 250, ..., 500}`, 25 trials.
    pub fn table1() -> Self {
        ExperimentConfig {
            p: 500,
            s: 10,
            n_grid: (200..=500).step_by(50).collect(),
            trials: 25,
            sigma_rule: SigmaRule::MeanAbsResponse,
            mu_rule: MuRule::RhoAuto,
            ensemble: EnsembleSpec::gaussian(),
            master_seed: 1,
            lambda_rule: LambdaRule::Default,
            signal_lo: 50.0,
            signal_hi: 1000.0,
            alpha: 0.05,
            fast: false,
            lasso_tol: 1e-8,
            qp: QpConfig::default().sequential(),
            bound_c: 0.9,
            kappa: None,
            kappa_grid: vec![0.7, 0.75, 0.8, 0.85, 0.9, 1.0, 1.1, 1.2],
        }
    }

    /// One `80 × 100` matrix, `μ = 0.20, 0.21, ..., 0.60`.
    pub fn mu_sweep() -> Self {
        ExperimentConfig {
            p: 100,
            n_grid: vec![80],
            trials: 1,
            mu_rule: MuRule::Sweep { lo: 0.2, hi: 0.6, step: 0.01 },
            qp: QpConfig::default(),
            ..Self::table1()
        }
    }

    /// `n = 4000`, `p = 100`, 200 draws, `c = 0.9`.
    pub fn bounds() -> Self {
        ExperimentConfig { p: 100, n_grid: vec![4000], trials: 200, ..Self::table1() }
    }

    /// Overrides fields of `self` with the `key = value` lines of `text`.
    pub fn parse_overrides(mut self, text: &str) -> Result<Self> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected `key = value`", lineno + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::invalid(format!("line {}: {e}", lineno + 1)))?;
        }
        self.validate()?;
        Ok(self)
    }

    /// Reads a config file on top of `base`.
    pub fn load(path: &Path, base: Self) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        base.parse_overrides(&text)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "p" => self.p = num(key, value)?,
            "s" => self.s = num(key, value)?,
            "n_grid" => self.n_grid = list(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "master_seed" | "seed" => self.master_seed = num(key, value)?,
            "sigma_rule" => match value {
                "mean_abs" | "mean_abs_response" => self.sigma_rule = SigmaRule::MeanAbsResponse,
                _ => return Err(Error::invalid(format!("unknown sigma_rule `{value}`"))),
            },
            "mu_rule" => self.mu_rule = parse_mu_rule(value)?,
            "lambda_rule" => {
                self.lambda_rule = match value.split_once(':') {
                    None if value == "default" => LambdaRule::Default,
                    Some(("fixed", v)) => LambdaRule::Fixed(num("lambda_rule", v.trim())?),
                    _ => return Err(Error::invalid(format!("unknown lambda_rule `{value}`"))),
                }
            }
            "ensemble" => self.ensemble.kind = value.parse()?,
            "column_scales" => self.ensemble.column_scales = Some(list(key, value)?),
            "signal_lo" => self.signal_lo = num(key, value)?,
            "signal_hi" => self.signal_hi = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "fast" => self.fast = num(key, value)?,
            "lasso_tol" => self.lasso_tol = num(key, value)?,
            "qp_tol" => self.qp.tol = num(key, value)?,
            "qp_max_iters" => self.qp.max_iters = num(key, value)?,
            "qp_parallel" => self.qp.parallel = num(key, value)?,
            "bound_c" => self.bound_c = num(key, value)?,
            "kappa" => self.kappa = Some(num(key, value)?),
            "kappa_grid" => self.kappa_grid = list(key, value)?,
            _ => return Err(Error::invalid(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::invalid("n_grid must be a nonempty list of positive sizes"));
        }
        if self.p < 2 {
            return Err(Error::invalid(format!("p must be at least 2, got {}", self.p)));
        }
        if self.s == 0 || self.s >= self.p {
            return Err(Error::invalid(format!("need 1 <= s < p, got s={} p={}", self.s, self.p)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.signal_lo.is_finite() && self.signal_hi.is_finite() && self.signal_lo < self.signal_hi) {
            return Err(Error::invalid("need finite signal_lo < signal_hi"));
        }
        if !(self.lasso_tol > 0.0) {
            return Err(Error::invalid("lasso_tol must be positive"));
        }
        match self.mu_rule {
            MuRule::RhoAuto => {}
            MuRule::Fixed(mu) => {
                if !(mu > 0.0 && mu < 1.0) {
                    return Err(Error::invalid(format!("fixed mu must lie in (0, 1), got {mu}")));
                }
            }
            MuRule::Sweep { lo, hi, step } => {
                if !(lo > 0.0 && hi < 1.0 && lo <= hi && step > 0.0) {
                    return Err(Error::invalid(format!(
                        "sweep needs 0 < lo <= hi < 1 and step > 0, got {lo}, {hi}, {step}"
                    )));
                }
            }
        }
        if let LambdaRule::Fixed(l) = self.lambda_rule {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::invalid(format!("lambda must be finite and >= 0, got {l}")));
            }
        }
        if self.kappa_grid.iter().any(|k| !(*k > 0.0)) {
            return Err(Error::invalid("kappa_grid entries must be positive"));
        }
        self.ensemble.validate(self.p)
    }

    /// `κ` used for the bounds: the override or the ensemble's table value.
    pub fn kappa(&self) -> f64 {
        self.kappa.unwrap_or_else(|| subgaussian_norm(self.ensemble.kind))
    }

    pub fn bound_params(&self) -> Result<TheoreticalBoundParams> {
        let (c_min, c_max) = self.ensemble.covariance_bounds();
        TheoreticalBoundParams::new(self.kappa(), c_min, c_max, self.bound_c)
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| num(key, v.trim())).collect()
}

fn parse_mu_rule(value: &str) -> Result<MuRule> {
    match value.split_once(':') {
        None if value == "auto" => Ok(MuRule::RhoAuto),
        Some(("fixed", v)) => Ok(MuRule::Fixed(num("mu_rule", v.trim())?)),
        Some(("sweep", v)) => match list::<f64>("mu_rule", v)?.as_slice() {
            &[lo, hi, step] => Ok(MuRule::Sweep { lo, hi, step }),
            _ => Err(Error::invalid("sweep expects `lo,hi,step`")),
        },
        _ => Err(Error::invalid(format!("unknown mu_rule `{value}`"))),
    }
}

/// `‖W_o − W_e‖_F / ‖W_e‖_F`.
pub fn relative_error(wo: &DebiasWeights<f64>, we: &DebiasWeights<f64>, a: &DesignMatrix<f64>) -> Result<f64> {
    if wo.ncols() != we.ncols() {
        return Err(Error::mismatch("weight columns", we.ncols(), wo.ncols()));
    }
    let (o, e) = (wo.to_dense(a), we.to_dense(a));
    if o.dim() != e.dim() {
        return Err(Error::mismatch("weight rows", e.nrows(), o.nrows()));
    }
    let den = e.iter().map(|x| x * x).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num = o.iter().zip(e.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    Ok(num / den)
}

/// One trial of the support-recovery experiment. `*_o` fields are `None` in
/// fast mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub n: usize,
    pub trial_id: usize,
    pub sens_o: Option<f64>,
    pub sens_e: f64,
    pub spec_o: Option<f64>,
    pub spec_e: f64,
    pub time_o: Option<f64>,
    pub time_e: f64,
    pub rel_err: Option<f64>,
    pub mu: f64,
    pub rho_over_1_plus_rho: f64,
    pub lambda: f64,
    pub sigma: f64,
    /// Coordinates where the two paths reach different decisions.
    pub disagreements: Option<usize>,
}

/// Means over the trials of one `n` (times are totals).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Row {
    pub n: usize,
    pub trials: usize,
    pub sens_o: Option<f64>,
    pub sens_e: f64,
    pub spec_o: Option<f64>,
    pub spec_e: f64,
    pub time_o: Option<f64>,
    pub time_e: f64,
    pub rel_err: Option<f64>,
    pub mu: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Result {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub rows: Vec<Table1Row>,
    pub trials: Vec<TrialOutcome>,
}

/// Runs every `(n, trial)` cell on the rayon pool and aggregates per `n`.
pub fn run_table1(cfg: &ExperimentConfig) -> Result<Table1Result> {
    cfg.validate()?;
    if matches!(cfg.mu_rule, MuRule::Sweep { .. }) {
        return Err(Error::invalid("the support-recovery table needs mu_rule = auto or fixed"));
    }
    let cells: Vec<(usize, usize)> =
        cfg.n_grid.iter().flat_map(|&n| (0..cfg.trials).map(move |t| (n, t))).collect();
    let mut trials: Vec<TrialOutcome> = cells
        .into_par_iter()
        .map(|(n, t)| run_trial(cfg, n, t).map_err(|e| Error::Trial { n, trial: t, source: Box::new(e) }))
        .collect::<Result<_>>()?;
    trials.sort_by_key(|o| (o.n, o.trial_id));

    let mut grid = cfg.n_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    let rows = grid
        .iter()
        .map(|&n| aggregate(n, trials.iter().filter(|o| o.n == n).collect()))
        .collect();
    Ok(Table1Result { schema_version: SCHEMA_VERSION, config: cfg.clone(), rows, trials })
}

/// Draws one instance and runs both weight paths on it.
pub fn run_trial(cfg: &ExperimentConfig, n: usize, trial: usize) -> Result<TrialOutcome> {
    let (p, seed) = (cfg.p, trial_seed(cfg.master_seed, n, trial));
    let a = generate_design::<f64>(n, p, &cfg.ensemble, seed)?;
    let beta = generate_signal::<f64>(p, cfg.s, cfg.signal_lo, cfg.signal_hi, seed)?;
    let sigma = match cfg.sigma_rule {
        SigmaRule::MeanAbsResponse => noise_sigma(&a, &beta)?,
    };
    let meas = sample_measurements(&a, &beta, sigma, seed)?;
    let lambda = cfg.lambda_rule.lambda(sigma, n, p);
    let est = fit_lasso(&a, meas.y.view(), &LassoConfig::new(lambda).tol(cfg.lasso_tol))?;

    let threshold = coherence_stats(&a)?.mu_threshold;
    let mu = match cfg.mu_rule {
        MuRule::Fixed(mu) => mu,
        MuRule::RhoAuto | MuRule::Sweep { .. } => threshold,
    };

    let start = Instant::now();
    let we = closed_form_weights(&a, mu)?;
    let time_e = start.elapsed().as_secs_f64();
    let call_e = test_support(&debias(&a, meas.y.view(), sigma, est.beta_hat.view(), &we)?, cfg.alpha)?;
    let score_e = score_support(&call_e, &beta)?;

    let mut outcome = TrialOutcome {
        n,
        trial_id: trial,
        sens_o: None,
        sens_e: defined(score_e.sensitivity)?,
        spec_o: None,
        spec_e: defined(score_e.specificity)?,
        time_o: None,
        time_e,
        rel_err: None,
        mu,
        rho_over_1_plus_rho: threshold,
        lambda,
        sigma,
        disagreements: None,
    };
    if !cfg.fast {
        let start = Instant::now();
        let (wo, _) = solve_all(&a, mu, &cfg.qp)?;
        outcome.time_o = Some(start.elapsed().as_secs_f64());
        let call_o = test_support(&debias(&a, meas.y.view(), sigma, est.beta_hat.view(), &wo)?, cfg.alpha)?;
        let score_o = score_support(&call_o, &beta)?;
        outcome.sens_o = Some(defined(score_o.sensitivity)?);
        outcome.spec_o = Some(defined(score_o.specificity)?);
        outcome.rel_err = Some(relative_error(&wo, &we, &a)?);
        outcome.disagreements = Some(call_o.b_hat.iter().zip(&call_e.b_hat).filter(|(o, e)| o != e).count());
    }
    Ok(outcome)
}

fn defined(rate: Option<f64>) -> Result<f64> {
    rate.ok_or_else(|| Error::invalid("rate undefined: truth support is empty or full"))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    sum / count as f64
}

fn mean_opt<'a>(outs: &[&'a TrialOutcome], f: impl Fn(&'a TrialOutcome) -> Option<f64>) -> Option<f64> {
    let vals: Option<Vec<f64>> = outs.iter().map(|o| f(o)).collect();
    vals.map(|v| mean(v.into_iter()))
}

fn aggregate(n: usize, outs: Vec<&TrialOutcome>) -> Table1Row {
    Table1Row {
        n,
        trials: outs.len(),
        sens_o: mean_opt(&outs, |o| o.sens_o),
        sens_e: mean(outs.iter().map(|o| o.sens_e)),
        spec_o: mean_opt(&outs, |o| o.spec_o),
        spec_e: mean(outs.iter().map(|o| o.spec_e)),
        time_o: mean_opt(&outs, |o| o.time_o).map(|t| t * outs.len() as f64),
        time_e: outs.iter().map(|o| o.time_e).sum(),
        rel_err: mean_opt(&outs, |o| o.rel_err),
        mu: mean(outs.iter().map(|o| o.mu)),
        lambda: mean(outs.iter().map(|o| o.lambda)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub mu: f64,
    /// `None` when the weight problem was certified infeasible at this `μ`.
    pub rel_err: Option<f64>,
    /// Largest `‖(1/n)Aᵀw_e − e_j‖∞ − μ` of the closed form.
    pub closed_form_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuSweep {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub n: usize,
    pub p: usize,
    /// `ρ/(1+ρ)` of the swept matrix.
    pub threshold: f64,
    pub points: Vec<SweepPoint>,
}

/// Solves the QP on one matrix for every swept `μ` and compares with the
/// closed form.
pub fn run_mu_sweep(cfg: &ExperimentConfig) -> Result<MuSweep> {
    cfg.validate()?;
    if !matches!(cfg.mu_rule, MuRule::Sweep { .. }) {
        return Err(Error::invalid("the mu sweep needs mu_rule = sweep:lo,hi,step"));
    }
    let a = sweep_design(cfg)?;
    let threshold = coherence_stats(&a)?.mu_threshold;
    let points = sweep_matrix(&a, &cfg.mu_rule.sweep_values(), &cfg.qp)?;
    Ok(MuSweep { schema_version: SCHEMA_VERSION, config: cfg.clone(), n: a.nrows(), p: a.ncols(), threshold, points })
}

/// The single matrix swept by [`run_mu_sweep`]: the first `n` of the grid, trial 0.
pub fn sweep_design(cfg: &ExperimentConfig) -> Result<DesignMatrix<f64>> {
    let n = cfg.n_grid[0];
    generate_design(n, cfg.p, &cfg.ensemble, trial_seed(cfg.master_seed, n, 0))
}

/// QP versus closed form on `a` at each `μ` of `mus`.
pub fn sweep_matrix(a: &DesignMatrix<f64>, mus: &[f64], qp: &QpConfig) -> Result<Vec<SweepPoint>> {
    mus.iter().map(|&mu| sweep_point(a, mu, qp)).collect()
}

fn sweep_point(a: &DesignMatrix<f64>, mu: f64, qp: &QpConfig) -> Result<SweepPoint> {
    let we = closed_form_weights(a, mu)?;
    let closed_form_excess =
        crate::debias::feasibility_margin(a, &we)?.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x)) - mu;
    let rel_err = match solve_all(a, mu, qp) {
        Ok((wo, _)) => Some(relative_error(&wo, &we, a)?),
        Err(e) if is_infeasible(&e) => None,
        Err(e) => return Err(e),
    };
    Ok(SweepPoint { mu, rel_err, closed_form_excess })
}

fn is_infeasible(e: &Error) -> bool {
    match e {
        Error::Infeasible { .. } => true,
        Error::Column { source, .. } => is_infeasible(source),
        _ => false,
    }
}

/// Empirical frequency of one event against its guaranteed floor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventCoverage {
    pub event: &'static str,
    pub frequency: f64,
    pub floor: f64,
    /// Three binomial standard errors at the floor.
    pub slack: f64,
    pub pass: bool,
}

impl EventCoverage {
    fn new(event: &'static str, hits: usize, trials: usize, floor: f64) -> Self {
        let frequency = hits as f64 / trials as f64;
        let floor = floor.clamp(0.0, 1.0);
        let slack = 3.0 * (floor * (1.0 - floor) / trials as f64).sqrt();
        EventCoverage { event, frequency, floor, slack, pass: frequency >= floor - slack }
    }
}

/// Coverage of the `κ`-dependent events at one `κ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaRow {
    pub kappa: f64,
    pub min_sample_size: usize,
    /// Whether `n` satisfies the sample-size hypothesis at this `κ`.
    pub admissible: bool,
    pub mu_bound: f64,
    pub nu_bound: f64,
    pub mu_event: f64,
    pub nu_event: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCell {
    pub n: usize,
    pub p: usize,
    pub trials: usize,
    pub params: TheoreticalBoundParams,
    pub mean_mu_threshold: f64,
    pub mean_l: f64,
    pub mean_nu: f64,
    /// Chain, `μ` bound, `L` bound and `ν` bound, in that order.
    pub events: Vec<EventCoverage>,
    pub kappa_table: Vec<KappaRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub cells: Vec<BoundCell>,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(|c| c.events.iter().all(|e| e.pass))
    }
}

#[derive(Debug, Clone, Copy)]
struct Draw {
    mu_threshold: f64,
    l: f64,
    nu: f64,
    chain: bool,
}

/// Monte Carlo frequencies of the chain, `μ`, `L` and `ν` events for every
/// `n` of the grid, plus the `κ` table.
pub fn run_bound_validation(
    cfg: &ExperimentConfig,
    params: &TheoreticalBoundParams,
    trials: usize,
) -> Result<BoundReport> {
    cfg.validate()?;
    params.validate()?;
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let p = cfg.p;
    let mut cells = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        params.check_sample_size(n, p)?;
        let draws: Vec<Draw> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let a = generate_design::<f64>(n, p, &cfg.ensemble, trial_seed(cfg.master_seed, n, t))?;
                let stats = coherence_stats(&a)?;
                let chain = bound_chain(&a)?;
                Ok(Draw { mu_threshold: stats.mu_threshold, l: stats.l, nu: stats.nu, chain: chain.holds })
            })
            .collect::<Result<_>>()?;

        let pf = p as f64;
        let count = |f: &dyn Fn(&Draw) -> bool| draws.iter().filter(|d| f(d)).count();
        let mu_bound = params.mu_formula(n, p);
        let nu_bound = params.nu_bound(n, p);
        let l_bound = params.l_bound();
        let events = vec![
            EventCoverage::new("chain", count(&|d| d.chain), trials, 1.0),
            EventCoverage::new("mu_bound", count(&|d| d.mu_threshold <= mu_bound), trials, 1.0 - 2.0 / pf - 1.0 / (pf * pf)),
            EventCoverage::new("l_bound", count(&|d| d.l >= l_bound), trials, 1.0 - 2.0 / pf),
            EventCoverage::new("nu_bound", count(&|d| d.nu <= nu_bound), trials, 1.0 - 1.0 / (pf * pf)),
        ];
        let kappa_table = cfg
            .kappa_grid
            .iter()
            .map(|&kappa| {
                let k = TheoreticalBoundParams { kappa, ..*params };
                let (mu_b, nu_b) = (k.mu_formula(n, p), k.nu_bound(n, p));
                KappaRow {
                    kappa,
                    min_sample_size: k.min_sample_size(p),
                    admissible: n >= k.min_sample_size(p),
                    mu_bound: mu_b,
                    nu_bound: nu_b,
                    mu_event: count(&|d| d.mu_threshold <= mu_b) as f64 / trials as f64,
                    nu_event: count(&|d| d.nu <= nu_b) as f64 / trials as f64,
                }
            })
            .collect();
        cells.push(BoundCell {
            n,
            p,
            trials,
            params: *params,
            mean_mu_threshold: mean(draws.iter().map(|d| d.mu_threshold)),
            mean_l: mean(draws.iter().map(|d| d.l)),
            mean_nu: mean(draws.iter().map(|d| d.nu)),
            events,
            kappa_table,
        });
    }
    Ok(BoundReport { schema_version: SCHEMA_VERSION, config: cfg.clone(), cells })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

/// Deterministic table columns; timings live in `timing.csv`.
pub fn table1_csv(result: &Table1Result) -> String {
    let mut out = String::from("schema,n,trials,sens_o,sens_e,spec_o,spec_e,rel_err,mu,lambda\n");
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{SCHEMA_VERSION},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.trials,
            opt(r.sens_o),
            r.sens_e,
            opt(r.spec_o),
            r.spec_e,
            opt(r.rel_err),
            r.mu,
            r.lambda
        );
    }
    out
}

pub fn table1_timing_csv(result: &Table1Result) -> String {
    let mut out = String::from("schema,n,trials,time_o,time_e\n");
    for r in &result.rows {
        let _ = writeln!(out, "{SCHEMA_VERSION},{},{},{},{}", r.n, r.trials, opt(r.time_o), r.time_e);
    }
    out
}

pub fn mu_sweep_csv(sweep: &MuSweep) -> String {
    let mut out = String::from("schema,mu,rel_err,closed_form_excess,threshold\n");
    for pt in &sweep.points {
        let rel = pt.rel_err.map_or_else(|| "infeasible".to_string(), |v| v.to_string());
        let _ = writeln!(out, "{SCHEMA_VERSION},{},{rel},{},{}", pt.mu, pt.closed_form_excess, sweep.threshold);
    }
    out
}

pub fn bounds_csv(report: &BoundReport) -> String {
    let mut out = String::from("schema,n,p,trials,kappa,c,event,frequency,floor,slack,pass\n");
    for cell in &report.cells {
        for e in &cell.events {
            let _ = writeln!(
                out,
                "{SCHEMA_VERSION},{},{},{},{},{},{},{},{},{},{}",
                cell.n, cell.p, cell.trials, cell.params.kappa, cell.params.c, e.event, e.frequency, e.floor, e.slack, e.pass
            );
        }
    }
    out
}

fn tsv(points: impl IntoIterator<Item = (f64, f64)>) -> String {
    points.into_iter().fold(String::new(), |mut s, (x, y)| {
        let _ = writeln!(s, "{x}\t{y}");
        s
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn prepare(dir: &Path) -> Result<std::path::PathBuf> {
    let plot = dir.join("plotdata");
    fs::create_dir_all(&plot)?;
    Ok(plot)
}

type Series = fn(&Table1Row) -> Option<f64>;

pub fn write_table1(dir: &Path, result: &Table1Result) -> Result<()> {
    let plot = prepare(dir)?;
    fs::write(dir.join("results.csv"), table1_csv(result))?;
    fs::write(dir.join("timing.csv"), table1_timing_csv(result))?;
    write_json(&dir.join("results.json"), result)?;
    let rows = &result.rows;
    let series: [(&str, Series); 7] = [
        ("sensitivity_e", |r| Some(r.sens_e)),
        ("specificity_e", |r| Some(r.spec_e)),
        ("sensitivity_o", |r| r.sens_o),
        ("specificity_o", |r| r.spec_o),
        ("time_e", |r| Some(r.time_e)),
        ("time_o", |r| r.time_o),
        ("rel_err", |r| r.rel_err.map(|v| v.max(PLOT_FLOOR))),
    ];
    for (name, f) in series {
        let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| f(r).map(|v| (r.n as f64, v))).collect();
        if !pts.is_empty() {
            fs::write(plot.join(format!("{name}.tsv")), tsv(pts))?;
        }
    }
    fs::write(dir.join("plot.gp"), TABLE1_GNUPLOT)?;
    Ok(())
}

pub fn write_mu_sweep(dir: &Path, sweep: &MuSweep) -> Result<()> {
    let plot = prepare(dir)?;
    fs::write(dir.join("results.csv"), mu_sweep_csv(sweep))?;
    write_json(&dir.join("results.json"), sweep)?;
    let pts = sweep.points.iter().filter_map(|pt| pt.rel_err.map(|r| (pt.mu, r.max(PLOT_FLOOR))));
    fs::write(plot.join("mu_sweep.tsv"), tsv(pts))?;
    fs::write(plot.join("threshold.tsv"), tsv([(sweep.threshold, PLOT_FLOOR), (sweep.threshold, 1.0)]))?;
    fs::write(dir.join("plot.gp"), MU_SWEEP_GNUPLOT)?;
    Ok(())
}

pub fn write_bounds(dir: &Path, report: &BoundReport) -> Result<()> {
    let plot = prepare(dir)?;
    fs::write(dir.join("results.csv"), bounds_csv(report))?;
    write_json(&dir.join("results.json"), report)?;
    for cell in &report.cells {
        let rows = &cell.kappa_table;
        let mu = tsv(rows.iter().map(|r| (r.kappa, r.mu_event)));
        let nu = tsv(rows.iter().map(|r| (r.kappa, r.nu_event)));
        fs::write(plot.join(format!("kappa_mu_n{}.tsv", cell.n)), mu)?;
        fs::write(plot.join(format!("kappa_nu_n{}.tsv", cell.n)), nu)?;
    }
    Ok(())
}

const TABLE1_GNUPLOT: &str = "\
set terminal pngcairo size 900,400
set output 'table1.png'
set multiplot layout 1,2
set xlabel 'n'
set key bottom right
plot 'plotdata/sensitivity_e.tsv' with linespoints title 'sensitivity', \\
     'plotdata/specificity_e.tsv' with linespoints title 'specificity'
set logscale y
set ylabel 'seconds'
plot 'plotdata/time_e.tsv' with linespoints title 'closed form', \\
     'plotdata/time_o.tsv' with linespoints title 'QP'
unset multiplot
";

const MU_SWEEP_GNUPLOT: &str = "\
set terminal pngcairo size 600,400
set output 'mu_sweep.png'
set logscale y
set xlabel 'mu'
set ylabel '||W_o - W_e||_F / ||W_e||_F'
plot 'plotdata/mu_sweep.tsv' with linespoints title 'relative error', \\
     'plotdata/threshold.tsv' with lines lc rgb 'black' title 'rho/(1+rho)'
";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::debias::Provenance;
    use ndarray::array;

    #[test]
    fn relative_error_cases() {
        let a = DesignMatrix::new(array![[1.0, 0.0], [0.0, 2.0]]).unwrap();
        let we = DebiasWeights::from_dense(array![[1.0, 2.0], [3.0, 4.0]], 0.1, Provenance::ClosedForm);
        let wo2 = DebiasWeights::from_dense(array![[2.0, 4.0], [6.0, 8.0]], 0.1, Provenance::QpSolver);
        assert_eq!(relative_error(&we, &we, &a).unwrap(), 0.0);
        assert!((relative_error(&wo2, &we, &a).unwrap() - 1.0).abs() < 1e-15);
        let zero = DebiasWeights::from_dense(ndarray::Array2::zeros((2, 2)), 1.0, Provenance::ClosedForm);
        assert!(matches!(relative_error(&we, &zero, &a), Err(Error::ZeroReference)));
    }

    #[test]
    fn config_parsing() {
        let text = "p = 50\ns=5 # sparse\nn_grid = 40, 60\nmu_rule = sweep:0.2,0.6,0.01\nensemble = rademacher\nfast = true\n";
        let cfg = ExperimentConfig::table1().parse_overrides(text).unwrap();
        assert_eq!((cfg.p, cfg.s, cfg.n_grid.clone()), (50, 5, vec![40, 60]));
        assert!(cfg.fast);
        assert_eq!(cfg.ensemble.kind, crate::model::Ensemble::Rademacher);
        let mus = cfg.mu_rule.sweep_values();
        assert_eq!(mus.len(), 41);
        assert!((mus[40] - 0.6).abs() < 1e-12);

        let base = ExperimentConfig::table1();
        assert!(base.clone().parse_overrides("trials = 0").is_err());
        assert!(base.clone().parse_overrides("n_grid =").is_err());
        assert!(base.clone().parse_overrides("mu_rule = sweep:0.2,1.2,0.1").is_err());
        assert!(base.clone().parse_overrides("colour = blue").is_err());
        assert!(base.parse_overrides("just words").is_err());
    }

    #[test]
    fn single_cell_gives_single_row() {
        let cfg = ExperimentConfig { p: 60, s: 3, n_grid: vec![40], trials: 1, ..ExperimentConfig::table1() };
        let res = run_table1(&cfg).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert_eq!(res.trials.len(), 1);
        let t = &res.trials[0];
        assert!(t.rel_err.unwrap() <= 1e-6);
        assert_eq!(t.sens_o, Some(t.sens_e));
        assert_eq!(t.spec_o, Some(t.spec_e));
        assert_eq!(t.disagreements, Some(0));
        assert!(t.time_e > 0.0 && t.time_o.unwrap() > 0.0);
    }

    #[test]
    fn sweep_needs_sweep_rule() {
        assert!(run_mu_sweep(&ExperimentConfig::table1()).is_err());
        assert!(run_table1(&ExperimentConfig::mu_sweep()).is_err());
    }

    #[test]
    fn bounds_guard_reports_minimal_n() {
        let cfg = ExperimentConfig { n_grid: vec![50], ..ExperimentConfig::bounds() };
        let params = cfg.bound_params().unwrap();
        let err = run_bound_validation(&cfg, &params, 5).unwrap_err();
        assert!(matches!(err, Error::SampleSize { n: 50, min_n } if min_n == params.min_sample_size(100)));
    }
}
