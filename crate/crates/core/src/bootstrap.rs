//! Residual bootstrap of the aggregated shock estimators, plug-in risk
//! reduction and the adjust / don't-adjust decision.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    alpha_adj, alpha_ivw, alpha_wadj, solve_weights, DonorShock, Method, ShockEstimate,
    WeightVector,
};
use crate::panel::{
    fit_donor, fit_target, forecast_one, DonorPool, DonorRefitter, FitResult, TimeSeries,
};
use crate::rng::{stream, tag};

/// Redraws allowed per replicate before the run is aborted.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Procedure {
    /// Donor indices are resampled with replacement in every replicate.
    Bu,
    /// The donor pool is held fixed.
    Bf,
}

impl std::str::FromStr for Procedure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bu" => Ok(Procedure::Bu),
            "bf" => Ok(Procedure::Bf),
            other => Err(Error::invalid(format!(
                "unknown bootstrap procedure {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightOptions {
    pub norm_order: f64,
    pub standardize: bool,
}

impl Default for WeightOptions {
    fn default() -> Self {
        Self {
            norm_order: 2.0,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub procedure: Procedure,
    /// Number of bootstrap replicates B.
    pub replicates: usize,
    pub seed: u64,
    pub estimators: Vec<Method>,
    #[serde(default)]
    pub weights: WeightOptions,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            procedure: Procedure::Bf,
            replicates: 200,
            seed: 0,
            estimators: Method::AGGREGATORS.to_vec(),
            weights: WeightOptions::default(),
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::invalid("bootstrap needs at least 2 replicates"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("no estimators requested"));
        }
        if let Some(m) = self
            .estimators
            .iter()
            .find(|m| !Method::AGGREGATORS.contains(m))
        {
            return Err(Error::invalid(format!(
                "{} is not a donor-pool estimator",
                m.as_str()
            )));
        }
        Ok(())
    }

    /// Requested estimators plus `wadj`, which is always needed as the
    /// plug-in for the target's expected shock.
    fn computed(&self) -> Vec<Method> {
        Method::AGGREGATORS
            .into_iter()
            .filter(|m| *m == Method::Wadj || self.estimators.contains(m))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorDraws {
    pub method: Method,
    pub draws: Vec<f64>,
    pub sample_mean: f64,
    /// Unbiased sample variance of `draws`.
    pub sample_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDistribution {
    pub procedure: Procedure,
    pub estimators: Vec<EstimatorDraws>,
    /// Replicates that had to be redrawn because a refit was singular.
    pub redraws: usize,
    /// Simplex weights used in each replicate.
    #[serde(skip)]
    pub replicate_weights: Vec<Vec<f64>>,
}

impl BootstrapDistribution {
    pub fn get(&self, method: Method) -> Option<&EstimatorDraws> {
        self.estimators.iter().find(|e| e.method == method)
    }
}

pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        f64::NAN
    };
    (mean, var)
}

/// Everything needed to regenerate one donor under its fitted model.
struct DonorModel<'a> {
    series: &'a TimeSeries,
    coef: Vec<f64>,
    residuals: Vec<f64>,
    refitter: DonorRefitter,
}

impl<'a> DonorModel<'a> {
    fn new(series: &'a TimeSeries, fit: &FitResult) -> Result<Self> {
        // The shock row is fitted exactly by its own indicator, so its residual
        // is structurally zero and carries no information about the noise.
        let shock_row = series.t_star();
        let pool: Vec<f64> = fit
            .residuals
            .iter()
            .enumerate()
            .filter(|&(r, _)| r != shock_row)
            .map(|(_, &e)| e)
            .collect();
        let (mean, var) = mean_var(&pool);
        let rms_y =
            (series.y().iter().map(|v| v * v).sum::<f64>() / series.y().len() as f64).sqrt();
        if var.is_nan() || var.sqrt() <= 1e-9 * rms_y.max(1.0) {
            return Err(Error::DegenerateResiduals {
                donor: series.id().to_string(),
            });
        }
        Ok(Self {
            series,
            coef: fit.coef.clone(),
            residuals: pool.iter().map(|e| e - mean).collect(),
            refitter: DonorRefitter::new(series)?,
        })
    }

    /// Regenerates y_0..y_T from the fitted model with resampled residuals.
    fn regenerate<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let s = self.series;
        let (eta, alpha, phi) = (self.coef[0], self.coef[1], self.coef[2]);
        let theta = &self.coef[3..];
        let mut y = Vec::with_capacity(s.len_t() + 1);
        y.push(s.y()[0]);
        for t in 1..=s.len_t() {
            let x = s.x_row(t).expect("row exists for observed t");
            let e = self.residuals[rng.random_range(0..self.residuals.len())];
            let shock = if t == s.t_star() + 1 { alpha } else { 0.0 };
            let mean =
                eta + shock + phi * y[t - 1] + theta.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            y.push(mean + e);
        }
        y
    }
}

struct Replicate {
    values: Vec<f64>,
    weights: Vec<f64>,
    redraws: usize,
}

/// Draws the bootstrap distribution of the aggregated shock estimators.
pub fn bootstrap(pool: &DonorPool, cfg: &BootstrapConfig) -> Result<BootstrapDistribution> {
    cfg.validate()?;
    let fits = pool
        .donors()
        .iter()
        .map(fit_donor)
        .collect::<Result<Vec<_>>>()?;
    bootstrap_with_fits(pool, &fits, cfg)
}

fn bootstrap_with_fits(
    pool: &DonorPool,
    fits: &[FitResult],
    cfg: &BootstrapConfig,
) -> Result<BootstrapDistribution> {
    let models = pool
        .donors()
        .iter()
        .zip(fits)
        .map(|(s, f)| DonorModel::new(s, f))
        .collect::<Result<Vec<_>>>()?;
    let methods = cfg.computed();
    let x_target = pool.target().shock_covariates();
    let fixed_weights = match cfg.procedure {
        Procedure::Bf => Some(donor_weights(x_target, pool.donors().iter(), &cfg.weights)?),
        Procedure::Bu => None,
    };
    let n = models.len();

    let run = |b: usize| -> Result<Replicate> {
        let mut last = String::new();
        for attempt in 0..MAX_REDRAWS {
            let coords = [b as u64, attempt as u64];
            let picks: Vec<usize> = match cfg.procedure {
                Procedure::Bf => (0..n).collect(),
                Procedure::Bu => {
                    let mut rng = stream(cfg.seed, &[tag::BOOT_SELECT, coords[0], coords[1]]);
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                }
            };
            match replicate_once(
                &models,
                &picks,
                cfg,
                &methods,
                fixed_weights.as_ref(),
                x_target,
                coords,
            ) {
                Ok((values, weights)) => {
                    return Ok(Replicate {
                        values,
                        weights,
                        redraws: attempt,
                    });
                }
                Err(e) if e.is_numerical() => last = e.to_string(),
                Err(e) => return Err(e),
            }
        }
        Err(Error::BootstrapFailed {
            replicate: b,
            attempts: MAX_REDRAWS,
            last,
        })
    };
    let reps = (0..cfg.replicates)
        .into_par_iter()
        .map(run)
        .collect::<Result<Vec<_>>>()?;

    let estimators = methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let draws: Vec<f64> = reps.iter().map(|r| r.values[k]).collect();
            let (sample_mean, sample_var) = mean_var(&draws);
            EstimatorDraws {
                method,
                draws,
                sample_mean,
                sample_var,
            }
        })
        .collect();
    Ok(BootstrapDistribution {
        procedure: cfg.procedure,
        estimators,
        redraws: reps.iter().map(|r| r.redraws).sum(),
        replicate_weights: reps.into_iter().map(|r| r.weights).collect(),
    })
}

fn replicate_once(
    models: &[DonorModel<'_>],
    picks: &[usize],
    cfg: &BootstrapConfig,
    methods: &[Method],
    fixed_weights: Option<&WeightVector>,
    x_target: &[f64],
    coords: [u64; 2],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut alphas = Vec::with_capacity(picks.len());
    let mut vars = Vec::with_capacity(picks.len());
    for (slot, &i) in picks.iter().enumerate() {
        let model = &models[i];
        let mut rng = stream(
            cfg.seed,
            &[tag::BOOT_RESIDUALS, coords[0], coords[1], slot as u64],
        );
        let y = model.regenerate(&mut rng);
        let (alpha, var) = model
            .refitter
            .refit(&y)
            .map_err(|e| e.with_series(model.series.id()))?;
        alphas.push(alpha);
        vars.push(var);
    }
    let weights = match fixed_weights {
        Some(w) => w.w.clone(),
        None => {
            let rows: Vec<Vec<f64>> = picks
                .iter()
                .map(|&i| models[i].series.shock_covariates().to_vec())
                .collect();
            solve_weights(
                x_target,
                &rows,
                cfg.weights.norm_order,
                cfg.weights.standardize,
            )?
            .w
        }
    };
    let n = alphas.len() as f64;
    let values = methods
        .iter()
        .map(|m| {
            Ok(match m {
                Method::Adj => alphas.iter().sum::<f64>() / n,
                Method::Ivw => {
                    if let Some(k) = vars.iter().position(|v| v.is_nan() || *v <= 0.0) {
                        let donor = models[picks[k]].series.id().to_string();
                        return Err(Error::DegenerateVariance { donor });
                    }
                    let num: f64 = alphas.iter().zip(&vars).map(|(a, v)| a / v).sum();
                    let den: f64 = vars.iter().map(|v| 1.0 / v).sum();
                    num / den
                }
                Method::Wadj => alphas.iter().zip(&weights).map(|(a, w)| a * w).sum(),
                Method::Additive => unreachable!("validated"),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((values, weights))
}

fn donor_weights<'a>(
    x_target: &[f64],
    donors: impl Iterator<Item = &'a TimeSeries>,
    opts: &WeightOptions,
) -> Result<WeightVector> {
    let rows: Vec<Vec<f64>> = donors.map(|d| d.shock_covariates().to_vec()).collect();
    solve_weights(x_target, &rows, opts.norm_order, opts.standardize)
}

/// Plug-in risk reduction for one estimator.
///
/// `alpha_wadj` stands in for the target's expected shock. Estimators other
/// than `wadj` also pay their squared distance to it as a bias term.
pub fn risk_reduction(method: Method, alpha: f64, alpha_wadj: f64, bootstrap_var: f64) -> f64 {
    let base = alpha_wadj * alpha_wadj - bootstrap_var;
    match method {
        Method::Wadj => base,
        _ => base - (alpha - alpha_wadj).powi(2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub estimator: Method,
    pub delta_hat: f64,
    /// Use the adjusted forecast iff `delta_hat > 0`.
    pub decision: bool,
    pub alpha_hat: f64,
    pub alpha_wadj: f64,
    pub bootstrap_var: f64,
}

/// Point estimates of the aggregators on the observed pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEstimates {
    pub estimates: Vec<ShockEstimate>,
}

impl PoolEstimates {
    pub fn get(&self, method: Method) -> Option<&ShockEstimate> {
        self.estimates.iter().find(|e| e.method == method)
    }
}

pub fn delta_hat(
    estimates: &PoolEstimates,
    dist: &BootstrapDistribution,
    method: Method,
) -> Result<RiskAssessment> {
    let missing =
        |what: &str| Error::invalid(format!("no {what} for estimator {}", method.as_str()));
    let alpha_wadj = estimates
        .get(Method::Wadj)
        .ok_or_else(|| Error::invalid("wadj estimate required as plug-in"))?
        .value;
    let alpha_hat = estimates
        .get(method)
        .ok_or_else(|| missing("estimate"))?
        .value;
    let bootstrap_var = dist
        .get(method)
        .ok_or_else(|| missing("bootstrap draws"))?
        .sample_var;
    let delta = risk_reduction(method, alpha_hat, alpha_wadj, bootstrap_var);
    Ok(RiskAssessment {
        estimator: method,
        delta_hat: delta,
        decision: delta > 0.0,
        alpha_hat,
        alpha_wadj,
        bootstrap_var,
    })
}

/// Full analysis of one pool: donor fits, estimators, bootstrap, decisions
/// and both forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub target_id: String,
    pub donor_shocks: Vec<DonorShock>,
    pub weights: WeightVector,
    pub estimates: PoolEstimates,
    pub risk: Vec<RiskAssessment>,
    pub forecast1: f64,
    pub forecast2: BTreeMap<Method, f64>,
    /// Observed y_{T*+1} of the target, when available.
    pub actual: Option<f64>,
    pub bootstrap: BootstrapDistribution,
    #[serde(skip)]
    pub target_fit: Option<FitResult>,
}

impl Assessment {
    pub fn risk_for(&self, method: Method) -> Option<&RiskAssessment> {
        self.risk.iter().find(|r| r.estimator == method)
    }
}

pub fn pool_estimates(
    shocks: &[DonorShock],
    weights: &WeightVector,
    methods: &[Method],
) -> Result<PoolEstimates> {
    let estimates = methods
        .iter()
        .map(|m| match m {
            Method::Adj => alpha_adj(shocks),
            Method::Ivw => alpha_ivw(shocks),
            Method::Wadj => alpha_wadj(shocks, weights),
            Method::Additive => Err(Error::invalid("additive is not a pool estimator")),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PoolEstimates { estimates })
}

pub fn assess_all(pool: &DonorPool, cfg: &BootstrapConfig) -> Result<Assessment> {
    cfg.validate()?;
    let fits = pool
        .donors()
        .iter()
        .map(fit_donor)
        .collect::<Result<Vec<_>>>()?;
    let shocks = pool
        .donors()
        .iter()
        .zip(&fits)
        .map(|(s, f)| DonorShock::from_fit(s, f))
        .collect::<Result<Vec<_>>>()?;
    let target = pool.target();
    let weights = donor_weights(
        target.shock_covariates(),
        pool.donors().iter(),
        &cfg.weights,
    )?;
    let estimates = pool_estimates(&shocks, &weights, &cfg.computed())?;

    let target_fit = fit_target(target)?;
    let forecast1 = forecast_one(&target_fit, target, None)?;
    let dist = bootstrap_with_fits(pool, &fits, cfg)?;

    let mut risk = Vec::new();
    let mut forecast2 = BTreeMap::new();
    for &m in Method::AGGREGATORS
        .iter()
        .filter(|m| cfg.estimators.contains(m))
    {
        risk.push(delta_hat(&estimates, &dist, m)?);
        let value = estimates.get(m).expect("computed").value;
        forecast2.insert(m, forecast_one(&target_fit, target, Some(value))?);
    }
    Ok(Assessment {
        target_id: target.id().to_string(),
        donor_shocks: shocks,
        weights,
        estimates,
        risk,
        forecast1,
        forecast2,
        actual: target.post_shock_response(),
        bootstrap: dist,
        target_fit: Some(target_fit),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_arithmetic_from_reference_values() {
        // alpha_wadj = -4.805, alpha_adj = -4.872, S^2 = 0.419
        let d = risk_reduction(Method::Adj, -4.872, -4.805, 0.419);
        let expected = 4.805f64.powi(2) - 0.419 - 0.067f64.powi(2);
        assert!((d - expected).abs() < 1e-12);
        assert!((d - 22.66).abs() < 1e-2, "{d}");
    }

    #[test]
    fn delta_edge_cases() {
        assert!(risk_reduction(Method::Wadj, 0.0, 0.0, 0.3) <= 0.0);
        assert_eq!(risk_reduction(Method::Adj, 2.5, 2.5, 0.0), 6.25);
        assert_eq!(risk_reduction(Method::Wadj, 9.0, 2.0, 1.0), 3.0);
    }

    #[test]
    fn mean_var_is_unbiased() {
        let (m, v) = mean_var(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((v - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut cfg = BootstrapConfig {
            replicates: 1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.replicates = 2;
        cfg.estimators = vec![Method::Additive];
        assert!(cfg.validate().is_err());
        cfg.estimators = vec![Method::Adj];
        assert_eq!(cfg.computed(), vec![Method::Adj, Method::Wadj]);
    }
}
