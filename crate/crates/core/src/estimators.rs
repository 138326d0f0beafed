//! Aggregation of donor shock effects into an estimate for the series of
//! interest: simple average, inverse-variance weighting, covariate-matched
//! simplex weighting, and additive composition of separate estimates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{FitResult, TimeSeries};
use crate::simplex;

/// A donor's estimated shock effect and the covariates at its shock time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DonorShock {
    pub donor_id: String,
    pub alpha_hat: f64,
    /// `sigma2_hat * (U'U)^{-1}_{22}`.
    pub var_hat: f64,
    pub x_shock: Vec<f64>,
}

impl DonorShock {
    pub fn new(
        donor_id: impl Into<String>,
        alpha_hat: f64,
        var_hat: f64,
        x_shock: Vec<f64>,
    ) -> Result<Self> {
        let donor_id = donor_id.into();
        if var_hat.is_nan() || var_hat < 0.0 || !alpha_hat.is_finite() {
            return Err(Error::invalid(format!(
                "donor {donor_id}: shock estimate {alpha_hat} with variance {var_hat}"
            )));
        }
        Ok(Self {
            donor_id,
            alpha_hat,
            var_hat,
            x_shock,
        })
    }

    /// Extracts the shock estimate from a donor fit.
    pub fn from_fit(series: &TimeSeries, fit: &FitResult) -> Result<Self> {
        let (Some(alpha), Some(var)) = (fit.shock(), fit.shock_variance()) else {
            return Err(Error::invalid(format!(
                "fit for {} has no shock coefficient",
                series.id()
            )));
        };
        Self::new(series.id(), alpha, var, series.shock_covariates().to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Adj,
    Ivw,
    Wadj,
    Additive,
}

impl Method {
    /// The three donor-pool aggregators, in report order.
    pub const AGGREGATORS: [Method; 3] = [Method::Adj, Method::Wadj, Method::Ivw];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Adj => "adj",
            Method::Ivw => "ivw",
            Method::Wadj => "wadj",
            Method::Additive => "additive",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adj" => Ok(Method::Adj),
            "ivw" => Ok(Method::Ivw),
            "wadj" => Ok(Method::Wadj),
            "additive" => Ok(Method::Additive),
            other => Err(Error::invalid(format!("unknown estimator {other}"))),
        }
    }
}

/// Simplex weights matching the target's shock-time covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w: Vec<f64>,
    /// Attained `||X_1 - W'X||` in the (possibly standardized) coordinates.
    pub objective: f64,
    pub norm_order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Components {
    Donors(Vec<DonorShock>),
    Parts(Vec<ShockEstimate>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockEstimate {
    pub value: f64,
    pub method: Method,
    /// Aggregation weights over `components` (empty for additive compositions).
    pub weights: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_vector: Option<WeightVector>,
    pub components: Components,
}

fn weighted(shocks: &[DonorShock], w: &[f64]) -> f64 {
    shocks.iter().zip(w).map(|(s, w)| s.alpha_hat * w).sum()
}

fn nonempty(shocks: &[DonorShock]) -> Result<()> {
    if shocks.is_empty() {
        Err(Error::invalid("no donor shock estimates"))
    } else {
        Ok(())
    }
}

/// Simple average of donor shock estimates.
pub fn alpha_adj(shocks: &[DonorShock]) -> Result<ShockEstimate> {
    nonempty(shocks)?;
    let n = shocks.len();
    let weights = vec![1.0 / n as f64; n];
    Ok(ShockEstimate {
        value: shocks.iter().map(|s| s.alpha_hat).sum::<f64>() / n as f64,
        method: Method::Adj,
        weights,
        weight_vector: None,
        components: Components::Donors(shocks.to_vec()),
    })
}

/// Inverse-variance weighted average. Refuses zero variances, which would
/// hand all weight to one donor.
pub fn alpha_ivw(shocks: &[DonorShock]) -> Result<ShockEstimate> {
    nonempty(shocks)?;
    if let Some(s) = shocks
        .iter()
        .find(|s| s.var_hat.is_nan() || s.var_hat <= 0.0)
    {
        return Err(Error::DegenerateVariance {
            donor: s.donor_id.clone(),
        });
    }
    let inv: Vec<f64> = shocks.iter().map(|s| 1.0 / s.var_hat).collect();
    let total: f64 = inv.iter().sum();
    let weights: Vec<f64> = inv.iter().map(|v| v / total).collect();
    let value = shocks
        .iter()
        .zip(&inv)
        .map(|(s, v)| s.alpha_hat * v)
        .sum::<f64>()
        / total;
    Ok(ShockEstimate {
        value,
        method: Method::Ivw,
        weights,
        weight_vector: None,
        components: Components::Donors(shocks.to_vec()),
    })
}

/// Centers and scales every covariate by its mean and sample standard
/// deviation over the donor rows plus the target row.
pub fn standardize(x_target: &[f64], donor_rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = x_target.len();
    let m = donor_rows.len() + 1;
    let mut target = x_target.to_vec();
    let mut rows = donor_rows.to_vec();
    for j in 0..p {
        let vals = || {
            donor_rows
                .iter()
                .map(move |r| r[j])
                .chain(std::iter::once(x_target[j]))
        };
        let mean = vals().sum::<f64>() / m as f64;
        let var = vals().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let sd = var.sqrt();
        if sd.is_nan() || sd <= 1e-12 * (1.0 + mean.abs()) {
            return Err(Error::Standardization { column: j + 1 });
        }
        target[j] = (target[j] - mean) / sd;
        for r in rows.iter_mut() {
            r[j] = (r[j] - mean) / sd;
        }
    }
    Ok((target, rows))
}

/// Solves `min_{W in simplex} ||x_target - W' X||_p` where `X` stacks the
/// donor rows.
///
/// With `norm_order = 2` the minimizer is exact; when several weight vectors
/// attain the minimum the one reached from uniform weights is returned.
pub fn solve_weights(
    x_target: &[f64],
    donor_rows: &[Vec<f64>],
    norm_order: f64,
    standardize_cols: bool,
) -> Result<WeightVector> {
    let n = donor_rows.len();
    let p = x_target.len();
    if n == 0 || p == 0 {
        return Err(Error::invalid(
            "weight problem needs at least one donor and one covariate",
        ));
    }
    if let Some(r) = donor_rows.iter().find(|r| r.len() != p) {
        return Err(Error::invalid(format!(
            "donor covariate row has {} entries, target has {p}",
            r.len()
        )));
    }
    if !(norm_order > 1.0 && norm_order.is_finite()) {
        return Err(Error::invalid(format!(
            "norm order must be a finite value above 1, got {norm_order}"
        )));
    }
    let (target, rows) = if standardize_cols {
        standardize(x_target, donor_rows)?
    } else {
        (x_target.to_vec(), donor_rows.to_vec())
    };
    let a = DMatrix::from_fn(p, n, |i, j| rows[j][i]);
    let b = DVector::from_column_slice(&target);
    let w = if norm_order == 2.0 {
        simplex::least_squares(&a, &b)
    } else {
        simplex::pnorm_descent(&a, &b, norm_order)
    };
    let objective = simplex::pnorm(&(&a * DVector::from_column_slice(&w) - &b), norm_order);
    Ok(WeightVector {
        w,
        objective,
        norm_order,
    })
}

/// Similarity-weighted average with precomputed simplex weights.
pub fn alpha_wadj(shocks: &[DonorShock], weights: &WeightVector) -> Result<ShockEstimate> {
    nonempty(shocks)?;
    if weights.w.len() != shocks.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} donors",
            weights.w.len(),
            shocks.len()
        )));
    }
    Ok(ShockEstimate {
        value: weighted(shocks, &weights.w),
        method: Method::Wadj,
        weights: weights.w.clone(),
        weight_vector: Some(weights.clone()),
        components: Components::Donors(shocks.to_vec()),
    })
}

/// Sum of separately estimated shock components (e.g. supply and demand).
pub fn compose_additive(parts: &[ShockEstimate]) -> Result<ShockEstimate> {
    if parts.is_empty() {
        return Err(Error::invalid(
            "additive composition needs at least one part",
        ));
    }
    Ok(ShockEstimate {
        value: parts.iter().map(|p| p.value).sum(),
        method: Method::Additive,
        weights: Vec::new(),
        weight_vector: None,
        components: Components::Parts(parts.to_vec()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shocks(alphas: &[f64], vars: &[f64]) -> Vec<DonorShock> {
        alphas
            .iter()
            .zip(vars)
            .enumerate()
            .map(|(i, (&a, &v))| DonorShock::new(format!("d{i}"), a, v, vec![i as f64]).unwrap())
            .collect()
    }

    const FIVE_SHOCKS: [f64; 5] = [-0.922, -7.063, -5.777, -6.395, -4.207];

    #[test]
    fn adj_reproduces_reference_average() {
        let s = shocks(&FIVE_SHOCKS, &[1.0; 5]);
        let est = alpha_adj(&s).unwrap();
        assert!((est.value - (-24.364 / 5.0)).abs() < 1e-12);
        assert!((est.value - (-4.872)).abs() < 1e-3, "{}", est.value);
        assert_eq!(
            alpha_adj(&shocks(&[1.0, 2.0, 3.0], &[1.0; 3]))
                .unwrap()
                .value,
            2.0
        );
        assert!(alpha_adj(&[]).is_err());
    }

    #[test]
    fn wadj_reproduces_reference_weighting() {
        let s = shocks(&FIVE_SHOCKS, &[1.0; 5]);
        let w = WeightVector {
            w: vec![0.0, 0.0, 0.0, 0.273, 0.727],
            objective: 3.44,
            norm_order: 2.0,
        };
        let est = alpha_wadj(&s, &w).unwrap();
        assert!((est.value - (-4.805)).abs() < 2e-3, "{}", est.value);
        let short = WeightVector {
            w: vec![1.0],
            objective: 0.0,
            norm_order: 2.0,
        };
        assert!(alpha_wadj(&s, &short).is_err());
    }

    #[test]
    fn ivw_arithmetic() {
        assert_eq!(
            alpha_ivw(&shocks(&[1.0, 3.0], &[1.0, 1.0])).unwrap().value,
            2.0
        );
        // (1/1 + 3/3) / (1/1 + 1/3) = 1.5
        let v = alpha_ivw(&shocks(&[1.0, 3.0], &[1.0, 3.0])).unwrap().value;
        assert!((v - 1.5).abs() < 1e-12);
        let eq = shocks(&FIVE_SHOCKS, &[0.7; 5]);
        assert!((alpha_ivw(&eq).unwrap().value - alpha_adj(&eq).unwrap().value).abs() < 1e-12);
        assert!(matches!(
            alpha_ivw(&shocks(&[1.0, 3.0], &[1.0, 0.0])),
            Err(Error::DegenerateVariance { .. })
        ));
    }

    #[test]
    fn additive_sums_parts() {
        let a = alpha_adj(&shocks(&[1.0, 3.0], &[1.0, 1.0])).unwrap();
        let b = alpha_adj(&shocks(&[-0.5], &[1.0])).unwrap();
        assert_eq!(
            compose_additive(std::slice::from_ref(&a)).unwrap().value,
            a.value
        );
        let sum = compose_additive(&[a, b]).unwrap();
        assert_eq!(sum.value, 1.5);
        assert_eq!(sum.method, Method::Additive);
        assert!(compose_additive(&[]).is_err());
    }

    #[test]
    fn weights_examples() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let w = solve_weights(&[1.0, 0.0], &rows, 2.0, false).unwrap();
        assert!((w.w[1] - 1.0).abs() < 1e-12 && w.objective < 1e-12);
        let w = solve_weights(&[2.0], &[vec![1.0], vec![3.0]], 2.0, false).unwrap();
        assert!((w.w[0] - 0.5).abs() < 1e-12 && w.objective < 1e-12);
        let w = solve_weights(&[2.0, 2.0], &rows, 2.0, false).unwrap();
        assert!((w.objective - (1.5f64 * 1.5 * 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn standardization_rejects_flat_column() {
        let rows = vec![vec![1.0, 5.0], vec![2.0, 5.0]];
        assert!(matches!(
            solve_weights(&[1.5, 5.0], &rows, 2.0, true),
            Err(Error::Standardization { column: 2 })
        ));
        assert!(solve_weights(&[1.5, 5.0], &rows, 2.0, false).is_ok());
        assert!(solve_weights(&[1.5, 5.0], &rows, 1.0, false).is_err());
    }

    #[test]
    fn standardization_preserves_exact_convex_combinations() {
        let rows = vec![
            vec![1.0, 10.0, 0.0],
            vec![3.0, -20.0, 4.0],
            vec![0.0, 5.0, 9.0],
        ];
        let target: Vec<f64> = (0..3)
            .map(|j| 0.2 * rows[0][j] + 0.5 * rows[1][j] + 0.3 * rows[2][j])
            .collect();
        let w = solve_weights(&target, &rows, 2.0, true).unwrap();
        for (got, want) in w.w.iter().zip([0.2, 0.5, 0.3]) {
            assert!((got - want).abs() < 1e-9);
        }
    }
}
