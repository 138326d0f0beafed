//! Data-generating processes for the shock models and the Monte Carlo
//! harness that scores the forecasting pipeline on simulated pools.
//!
//! Every series follows
//! `y_t = eta + alpha * 1{t = T*+1} + phi * y_{t-1} + theta' x_t + eps_t`
//! with model-specific shock effects:
//!
//! * `M1`: `alpha = mu_alpha + e`,
//! * `M21`: `alpha = mu_alpha + delta' x_{T*+1} + e` with fixed `delta`,
//! * `M22`: as `M21` but `delta ~ N(mu_delta, delta_var * I)` per series,
//!
//! where `e ~ N(0, sigma_alpha^2)`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{assess_all, BootstrapConfig, Procedure, WeightOptions};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::loocv::{loocv, LoocvConfig, LoocvMode};
use crate::panel::{DonorPool, TimeSeries};
use crate::rng::{derive_seed, stream, tag};

/// Attempts at regenerating a repetition whose fits turn out singular.
pub const MAX_REGENERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    M1,
    M21,
    M22,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `y_0 = 0`.
    Zero,
    /// `y_0` at the noiseless stationary mean `(eta + theta' E[x]) / (1 - phi)`.
    StationaryMean,
}

/// A scalar broadcasts to every covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Loading {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Loading {
    pub fn expand(&self, p: usize) -> Result<Vec<f64>> {
        match self {
            Loading::Scalar(v) => Ok(vec![*v; p]),
            Loading::Vector(v) if v.len() == p => Ok(v.clone()),
            Loading::Vector(v) => Err(Error::invalid(format!(
                "mu_delta has {} entries, p = {p}",
                v.len()
            ))),
        }
    }
}

/// `T = max(round(Gamma(shape, rate) * multiplier), min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthLaw {
    pub shape: f64,
    pub rate: f64,
    pub multiplier: f64,
    pub min: usize,
}

impl Default for LengthLaw {
    fn default() -> Self {
        Self {
            shape: 15.0,
            rate: 10.0,
            multiplier: 100.0,
            min: 90,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaLaw {
    pub shape: f64,
    pub scale: f64,
}

impl Default for GammaLaw {
    fn default() -> Self {
        Self {
            shape: 1.0,
            scale: 2.0,
        }
    }
}

/// Optional grid; each listed value replaces the scalar setting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub sigma_alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub model: Model,
    pub n: usize,
    pub p: usize,
    pub mu_alpha: f64,
    pub sigma_alpha: f64,
    pub sigma: f64,
    pub mu_delta: Loading,
    /// Per-coordinate variance of `delta_i` under `M22`.
    pub delta_var: f64,
    pub sigma_eta: f64,
    pub theta_mean: f64,
    pub theta_var: f64,
    /// `phi ~ Uniform(phi_range[0], phi_range[1])`, inside (-1, 1).
    pub phi_range: [f64; 2],
    pub t_law: LengthLaw,
    pub covariate_law: GammaLaw,
    pub init: Init,
    pub seed: u64,
    pub mc_reps: usize,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub k: usize,
    pub procedure: Procedure,
    pub weights: WeightOptions,
    pub grid: Option<Grid>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            model: Model::M22,
            n: 10,
            p: 25,
            mu_alpha: 2.0,
            sigma_alpha: 5.0,
            sigma: 10.0,
            mu_delta: Loading::Scalar(1.0),
            delta_var: 0.5,
            sigma_eta: 1.0,
            theta_mean: 0.0,
            theta_var: 1.0,
            phi_range: [0.0, 1.0],
            t_law: LengthLaw::default(),
            covariate_law: GammaLaw::default(),
            init: Init::Zero,
            seed: 0,
            mc_reps: 30,
            replicates: 200,
            k: 5,
            procedure: Procedure::Bu,
            weights: WeightOptions::default(),
            grid: None,
        }
    }
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} must be finite and nonnegative, got {v}"
        )))
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::invalid("n must be at least 1"));
        }
        if self.p < 1 {
            return Err(Error::invalid("p must be at least 1"));
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("sigma_alpha", self.sigma_alpha),
            ("sigma_eta", self.sigma_eta),
            ("delta_var", self.delta_var),
            ("theta_var", self.theta_var),
        ] {
            nonneg(name, v)?;
        }
        if !self.mu_alpha.is_finite() || !self.theta_mean.is_finite() {
            return Err(Error::invalid("mu_alpha and theta_mean must be finite"));
        }
        let [lo, hi] = self.phi_range;
        if !(-1.0 < lo && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid(format!(
                "phi range [{lo}, {hi}] must lie in (-1, 1)"
            )));
        }
        let t = &self.t_law;
        if !(t.shape > 0.0 && t.rate > 0.0 && t.multiplier > 0.0) {
            return Err(Error::invalid("length law parameters must be positive"));
        }
        if t.min < self.p + 5 {
            return Err(Error::invalid(format!(
                "minimum length {} leaves no room for T* in {{p+4, ..., T-1}}",
                t.min
            )));
        }
        if !(self.covariate_law.shape > 0.0 && self.covariate_law.scale > 0.0) {
            return Err(Error::invalid("covariate law parameters must be positive"));
        }
        self.mu_delta.expand(self.p)?;
        if let Some(g) = &self.grid {
            if g.n.iter().any(|&n| n < 1) {
                return Err(Error::invalid("grid n values must be at least 1"));
            }
            for &v in g.sigma.iter().chain(&g.sigma_alpha) {
                nonneg("grid value", v)?;
            }
        }
        Ok(())
    }

    /// Settings the Monte Carlo harness additionally needs.
    pub fn validate_harness(&self) -> Result<()> {
        self.validate()?;
        if self.mc_reps < 1 {
            return Err(Error::invalid("mc_reps must be at least 1"));
        }
        let ns = self
            .grid
            .as_ref()
            .filter(|g| !g.n.is_empty())
            .map_or(vec![self.n], |g| g.n.clone());
        for n in ns {
            if n < 2 {
                return Err(Error::invalid("Monte Carlo harness needs n >= 2 for LOOCV"));
            }
            if self.k < 1 || self.k > n {
                return Err(Error::invalid(format!(
                    "k = {} draws from {n} donors",
                    self.k
                )));
            }
        }
        if self.replicates < 2 {
            return Err(Error::invalid("B must be at least 2"));
        }
        Ok(())
    }

    /// Expected shock effect of a series with shock-time covariates `x`.
    pub fn expected_alpha(&self, x: &[f64]) -> Result<f64> {
        Ok(match self.model {
            Model::M1 => self.mu_alpha,
            Model::M21 | Model::M22 => {
                let d = self.mu_delta.expand(self.p)?;
                self.mu_alpha + d.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            }
        })
    }
}

/// Structural parameters of one series. Everything except the idiosyncratic
/// errors is fixed here, so repeated calls to [`generate_series`] share Θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesParams {
    pub id: String,
    pub eta: f64,
    pub phi: f64,
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub t_star: usize,
    /// `x[t-1]` holds x_t for t = 1..=T.
    pub x: Vec<Vec<f64>>,
    pub y0: f64,
}

impl SeriesParams {
    pub fn len_t(&self) -> usize {
        self.x.len()
    }

    pub fn shock_covariates(&self) -> &[f64] {
        &self.x[self.t_star]
    }
}

/// Draws Θ for one series. The shock effect uses the model's law, including
/// its `N(0, sigma_alpha^2)` component.
pub fn draw_params<R: Rng>(cfg: &SimConfig, id: &str, rng: &mut R) -> Result<SeriesParams> {
    let p = cfg.p;
    let bad = |e: &dyn std::fmt::Display| Error::invalid(format!("distribution parameters: {e}"));
    let eta = Normal::new(0.0, cfg.sigma_eta)
        .map_err(|e| bad(&e))?
        .sample(rng);
    let [lo, hi] = cfg.phi_range;
    let phi = if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    };
    let theta_law = Normal::new(cfg.theta_mean, cfg.theta_var.sqrt()).map_err(|e| bad(&e))?;
    let theta: Vec<f64> = (0..p).map(|_| theta_law.sample(rng)).collect();

    let t_law = Gamma::new(cfg.t_law.shape, 1.0 / cfg.t_law.rate).map_err(|e| bad(&e))?;
    let t_len = ((t_law.sample(rng) * cfg.t_law.multiplier).round() as usize).max(cfg.t_law.min);
    let t_star = Uniform::new(p + 4, t_len).map_err(|e| bad(&e))?.sample(rng);

    let x_law =
        Gamma::new(cfg.covariate_law.shape, cfg.covariate_law.scale).map_err(|e| bad(&e))?;
    let x: Vec<Vec<f64>> = (0..t_len)
        .map(|_| (0..p).map(|_| x_law.sample(rng)).collect())
        .collect();

    let x_shock = &x[t_star];
    let loading = match cfg.model {
        Model::M1 => 0.0,
        Model::M21 => {
            let d = cfg.mu_delta.expand(p)?;
            d.iter().zip(x_shock).map(|(a, b)| a * b).sum()
        }
        Model::M22 => {
            let d = cfg.mu_delta.expand(p)?;
            let sd = cfg.delta_var.sqrt();
            d.iter()
                .zip(x_shock)
                .map(|(m, xv)| {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    (m + sd * z) * xv
                })
                .sum()
        }
    };
    let e_alpha: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * cfg.sigma_alpha;
    let alpha = cfg.mu_alpha + loading + e_alpha;

    let y0 = match cfg.init {
        Init::Zero => 0.0,
        Init::StationaryMean => {
            let ex = cfg.covariate_law.shape * cfg.covariate_law.scale;
            (eta + theta.iter().sum::<f64>() * ex) / (1.0 - phi)
        }
    };
    Ok(SeriesParams {
        id: id.to_string(),
        eta,
        phi,
        theta,
        alpha,
        t_star,
        x,
        y0,
    })
}

/// Generates y_0..y_T with fresh `N(0, sigma^2)` errors.
pub fn generate_series<R: Rng>(
    params: &SeriesParams,
    sigma: f64,
    rng: &mut R,
) -> Result<TimeSeries> {
    let t_len = params.len_t();
    let mut y = Vec::with_capacity(t_len + 1);
    y.push(params.y0);
    for t in 1..=t_len {
        let x = &params.x[t - 1];
        let shock = if t == params.t_star + 1 {
            params.alpha
        } else {
            0.0
        };
        let e: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) * sigma;
        let fx: f64 = params.theta.iter().zip(x).map(|(a, b)| a * b).sum();
        y.push(params.eta + shock + params.phi * y[t - 1] + fx + e);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("series {} diverged", params.id)));
    }
    TimeSeries::new(params.id.clone(), y, params.x.clone(), params.t_star, true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPool {
    pub pool: DonorPool,
    /// Realized shock effects, donors first in pool order, then the target.
    pub alphas: Vec<f64>,
    pub expected_target_alpha: f64,
}

pub fn donor_id(i: usize) -> String {
    format!("donor_{:02}", i + 1)
}

pub const TARGET_ID: &str = "target";

fn simulate_attempt(cfg: &SimConfig, rep: usize, attempt: usize) -> Result<SimulatedPool> {
    let draw = |slot: usize, id: &str| -> Result<(SeriesParams, TimeSeries)> {
        let mut rng = stream(
            cfg.seed,
            &[tag::SIM_SERIES, rep as u64, attempt as u64, slot as u64],
        );
        let params = draw_params(cfg, id, &mut rng)?;
        let series = generate_series(&params, cfg.sigma, &mut rng)?;
        Ok((params, series))
    };
    let mut alphas = Vec::with_capacity(cfg.n + 1);
    let mut donors = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let (params, series) = draw(i + 1, &donor_id(i))?;
        alphas.push(params.alpha);
        donors.push(series);
    }
    let (params, target) = draw(0, TARGET_ID)?;
    alphas.push(params.alpha);
    let expected_target_alpha = cfg.expected_alpha(params.shock_covariates())?;
    Ok(SimulatedPool {
        pool: DonorPool::new(donors, target)?,
        alphas,
        expected_target_alpha,
    })
}

/// Simulated pool for repetition `rep`; deterministic in `(cfg.seed, rep)`.
pub fn simulate_pool(cfg: &SimConfig, rep: usize) -> Result<SimulatedPool> {
    cfg.validate()?;
    simulate_attempt(cfg, rep, 0)
}

/// Mean with standard error `sd / sqrt(reps)`; the latter is absent for one rep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: Option<f64>,
}

impl Stat {
    pub fn from_samples(xs: &[f64]) -> Self {
        let (mean, var) = crate::bootstrap::mean_var(xs);
        let se = (xs.len() > 1).then(|| (var / xs.len() as f64).sqrt());
        Self { mean, se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub n: usize,
    pub sigma: f64,
    pub sigma_alpha: f64,
    pub reps: usize,
    /// Mean of I(delta_hat > 0).
    pub guess: BTreeMap<Method, Stat>,
    pub c_bar: BTreeMap<Method, Stat>,
    /// Keys: `original`, `adj`, `wadj`, `ivw`.
    pub distance: BTreeMap<String, Stat>,
    /// Repetitions regenerated after a numerical failure.
    pub regenerations: usize,
}

/// Per-repetition outcome of the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub guess: BTreeMap<Method, bool>,
    pub c_bar: BTreeMap<Method, f64>,
    pub distance: BTreeMap<String, f64>,
    pub attempts: usize,
}

fn run_attempt(cfg: &SimConfig, rep: usize, attempt: usize) -> Result<RepOutcome> {
    let sim = simulate_attempt(cfg, rep, attempt)?;
    let boot = BootstrapConfig {
        procedure: cfg.procedure,
        replicates: cfg.replicates,
        seed: derive_seed(cfg.seed, &[tag::SIM_BOOT, rep as u64, attempt as u64]),
        estimators: Method::AGGREGATORS.to_vec(),
        weights: cfg.weights,
    };
    let a = assess_all(&sim.pool, &boot)?;
    let cv = loocv(
        &sim.pool,
        &LoocvConfig {
            mode: LoocvMode::KDraws(cfg.k),
            seed: derive_seed(cfg.seed, &[tag::SIM_LOOCV, rep as u64, attempt as u64]),
            bootstrap: boot.clone(),
        },
    )?;
    let actual = a.actual.expect("simulated targets are shocked");
    let mut distance = BTreeMap::new();
    distance.insert("original".to_string(), (actual - a.forecast1).abs());
    for (m, f) in &a.forecast2 {
        distance.insert(m.as_str().to_string(), (actual - f).abs());
    }
    Ok(RepOutcome {
        guess: a.risk.iter().map(|r| (r.estimator, r.decision)).collect(),
        c_bar: cv.c_bar,
        distance,
        attempts: attempt + 1,
    })
}

/// Runs one repetition, regenerating the pool after numerical failures.
pub fn run_rep(cfg: &SimConfig, rep: usize) -> Result<RepOutcome> {
    let mut last = String::new();
    for attempt in 0..MAX_REGENERATIONS {
        match run_attempt(cfg, rep, attempt) {
            Ok(o) => return Ok(o),
            Err(e) if e.is_numerical() => last = e.to_string(),
            Err(e) => return Err(e),
        }
    }
    Err(Error::SimulationFailed {
        rep,
        attempts: MAX_REGENERATIONS,
        last,
    })
}

/// Monte Carlo summary for a single (n, sigma, sigma_alpha) cell.
pub fn run_cell(cfg: &SimConfig) -> Result<SimRow> {
    cfg.validate_harness()?;
    let outcomes = (0..cfg.mc_reps)
        .into_par_iter()
        .map(|r| run_rep(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let stat = |f: &dyn Fn(&RepOutcome) -> f64| {
        Stat::from_samples(&outcomes.iter().map(f).collect::<Vec<_>>())
    };
    let methods = Method::AGGREGATORS;
    let guess = methods
        .iter()
        .map(|&m| (m, stat(&|o| if o.guess[&m] { 1.0 } else { 0.0 })))
        .collect();
    let c_bar = methods
        .iter()
        .map(|&m| (m, stat(&|o| o.c_bar[&m])))
        .collect();
    let distance = std::iter::once("original")
        .chain(methods.iter().map(|m| m.as_str()))
        .map(|k| (k.to_string(), stat(&|o| o.distance[k])))
        .collect();
    Ok(SimRow {
        n: cfg.n,
        sigma: cfg.sigma,
        sigma_alpha: cfg.sigma_alpha,
        reps: cfg.mc_reps,
        guess,
        c_bar,
        distance,
        regenerations: outcomes.iter().map(|o| o.attempts - 1).sum(),
    })
}

/// The cells of the configured grid (a single cell without a grid), ordered
/// by n, then sigma, then sigma_alpha.
pub fn grid_cells(cfg: &SimConfig) -> Vec<SimConfig> {
    let g = cfg.grid.clone().unwrap_or_default();
    let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
    let ns = if g.n.is_empty() {
        vec![cfg.n]
    } else {
        g.n.clone()
    };
    let mut cells = Vec::new();
    for &n in &ns {
        for &sigma in &or(&g.sigma, cfg.sigma) {
            for &sigma_alpha in &or(&g.sigma_alpha, cfg.sigma_alpha) {
                cells.push(SimConfig {
                    n,
                    sigma,
                    sigma_alpha,
                    grid: None,
                    ..cfg.clone()
                });
            }
        }
    }
    cells
}

pub fn run_monte_carlo(cfg: &SimConfig) -> Result<Vec<SimRow>> {
    cfg.validate_harness()?;
    grid_cells(cfg).iter().map(run_cell).collect()
}
