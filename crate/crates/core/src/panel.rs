//! Shock-augmented AR(1) panel: series storage, design matrices, OLS fits and
//! one-step-ahead forecasts.
//!
//! Every series follows
//!
//! ```text
//! y_t = eta + alpha * D_t + phi * y_{t-1} + theta' x_t + eps_t,   D_t = 1{t = T* + 1}
//! ```
//!
//! Design columns are always ordered `[1, D_t, y_{t-1}, x_t1 .. x_tp]`, with the
//! shock column present only for donor fits. The shock coefficient therefore
//! sits at index 1 and its variance factor at `gram_inv[(1, 1)]`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Reciprocal condition number below which a design is rejected.
pub const RCOND_MIN: f64 = 1e-12;

/// One unit's response path with its covariates and shock timing.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    id: String,
    /// `y[t]` for t = 0..=T.
    y: Vec<f64>,
    /// `x[t - 1]` is the covariate row at time t, for t = 1..=max(T, T* + 1).
    x: Vec<Vec<f64>>,
    t_star: usize,
    shocked: bool,
}

impl TimeSeries {
    /// Validates and builds a series.
    ///
    /// `y` holds y_0..y_T. `x` holds rows for t = 1..T, plus the forecast row
    /// T*+1 when the post-shock response is unobserved (then T = T*).
    pub fn new(
        id: impl Into<String>,
        y: Vec<f64>,
        x: Vec<Vec<f64>>,
        t_star: usize,
        shocked: bool,
    ) -> Result<Self> {
        let id = id.into();
        let bad = |msg: String| Err(Error::invalid(format!("series {id}: {msg}")));
        if id.is_empty() {
            return Err(Error::invalid("series id must not be empty"));
        }
        if y.len() < 2 {
            return bad("need at least y_0 and y_1".into());
        }
        let t_len = y.len() - 1;
        let p = match x.first() {
            Some(row) if !row.is_empty() => row.len(),
            _ => return bad("covariate matrix needs at least one column".into()),
        };
        if let Some(k) = x.iter().position(|row| row.len() != p) {
            return bad(format!(
                "covariate row t={} has {} entries, expected {p}",
                k + 1,
                x[k].len()
            ));
        }
        if y.iter().chain(x.iter().flatten()).any(|v| !v.is_finite()) {
            return bad("non-finite value".into());
        }
        if shocked {
            if t_star < 1 || t_star >= t_len {
                return bad(format!(
                    "shocked series needs 1 <= T* < T, got T*={t_star}, T={t_len}"
                ));
            }
        } else if t_star != t_len {
            return bad(format!(
                "unshocked series must end at T* (T*={t_star}, T={t_len})"
            ));
        }
        if t_star < p + 3 {
            return bad(format!(
                "T*={t_star} too short for p={p} covariates (need T* >= p+3)"
            ));
        }
        let rows = t_len.max(t_star + 1);
        if x.len() != rows {
            return bad(format!(
                "expected {rows} covariate rows (t=1..{rows}), got {}",
                x.len()
            ));
        }
        Ok(Self {
            id,
            y,
            x,
            t_star,
            shocked,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Last observed time index T.
    pub fn len_t(&self) -> usize {
        self.y.len() - 1
    }

    pub fn t_star(&self) -> usize {
        self.t_star
    }

    pub fn shocked(&self) -> bool {
        self.shocked
    }

    /// Number of covariates.
    pub fn p(&self) -> usize {
        self.x[0].len()
    }

    /// Responses y_0..y_T.
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Covariate row at time `t` (1-based).
    pub fn x_row(&self, t: usize) -> Option<&[f64]> {
        t.checked_sub(1)
            .and_then(|k| self.x.get(k))
            .map(Vec::as_slice)
    }

    pub fn x_rows(&self) -> &[Vec<f64>] {
        &self.x
    }

    /// Covariates at the shock time T*+1.
    pub fn shock_covariates(&self) -> &[f64] {
        &self.x[self.t_star]
    }

    /// Observed post-shock response y_{T*+1}, if any.
    pub fn post_shock_response(&self) -> Option<f64> {
        self.shocked.then(|| self.y[self.t_star + 1])
    }

    /// Same series with a new id.
    pub fn renamed(&self, id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            ..self.clone()
        }
    }
}

/// The series of interest together with its donor pool.
#[derive(Debug, Clone, PartialEq)]
pub struct DonorPool {
    donors: Vec<TimeSeries>,
    target: TimeSeries,
}

impl DonorPool {
    pub fn new(donors: Vec<TimeSeries>, target: TimeSeries) -> Result<Self> {
        if donors.is_empty() {
            return Err(Error::invalid("donor pool is empty"));
        }
        let p = target.p();
        let mut seen = std::collections::HashSet::new();
        for d in &donors {
            if !d.shocked() {
                return Err(Error::invalid(format!(
                    "donor {} has no observed post-shock response",
                    d.id()
                )));
            }
            if d.p() != p {
                return Err(Error::invalid(format!(
                    "donor {} has {} covariates, target has {p}",
                    d.id(),
                    d.p()
                )));
            }
            if !seen.insert(d.id()) {
                return Err(Error::invalid(format!("duplicate donor id {}", d.id())));
            }
        }
        if seen.contains(target.id()) {
            return Err(Error::invalid(format!(
                "target id {} also appears among donors",
                target.id()
            )));
        }
        Ok(Self { donors, target })
    }

    pub fn donors(&self) -> &[TimeSeries] {
        &self.donors
    }

    pub fn target(&self) -> &TimeSeries {
        &self.target
    }

    pub fn n(&self) -> usize {
        self.donors.len()
    }

    pub fn p(&self) -> usize {
        self.target.p()
    }

    /// Pool in which donor `m` plays the series of interest and the remaining
    /// donors form the pool. The original target is dropped.
    pub fn leave_out(&self, m: usize) -> Result<Self> {
        if self.n() < 2 {
            return Err(Error::invalid("leave-one-out needs at least two donors"));
        }
        let held = self
            .donors
            .get(m)
            .ok_or_else(|| Error::invalid(format!("donor index {m} out of range")))?
            .clone();
        let rest = self
            .donors
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != m)
            .map(|(_, d)| d.clone())
            .collect();
        Self::new(rest, held)
    }
}

/// OLS fit of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// `[eta, (alpha), phi, theta_1..theta_p]`.
    pub coef: Vec<f64>,
    pub residuals: Vec<f64>,
    pub sigma2_hat: f64,
    /// `(U'U)^{-1}`.
    pub gram_inv: DMatrix<f64>,
    pub n_obs: usize,
    pub n_params: usize,
    pub(crate) has_shock: bool,
}

impl FitResult {
    pub fn has_shock(&self) -> bool {
        self.has_shock
    }

    pub fn intercept(&self) -> f64 {
        self.coef[0]
    }

    /// Estimated shock effect (donor fits only).
    pub fn shock(&self) -> Option<f64> {
        self.has_shock.then(|| self.coef[1])
    }

    pub fn lag(&self) -> f64 {
        self.coef[1 + self.has_shock as usize]
    }

    pub fn theta(&self) -> &[f64] {
        &self.coef[2 + self.has_shock as usize..]
    }

    /// `sigma2_hat * (U'U)^{-1}_{22}`, the estimated variance of the shock coefficient.
    pub fn shock_variance(&self) -> Option<f64> {
        self.has_shock
            .then(|| self.sigma2_hat * self.gram_inv[(1, 1)])
    }
}

/// Design matrix and response for rows t = 1..=`end_t`.
pub fn build_design(
    series: &TimeSeries,
    include_shock: bool,
    end_t: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let p = series.p();
    let cols = p + 2 + include_shock as usize;
    let id = series.id();
    if end_t > series.len_t() {
        return Err(Error::invalid(format!(
            "series {id}: end_t={end_t} beyond last observation T={}",
            series.len_t()
        )));
    }
    if end_t < cols {
        return Err(Error::invalid(format!(
            "series {id}: {end_t} rows cannot identify {cols} coefficients"
        )));
    }
    if include_shock && end_t < series.t_star() + 1 {
        return Err(Error::invalid(format!(
            "series {id}: shock at t={} lies outside rows 1..{end_t}",
            series.t_star() + 1
        )));
    }
    let lag = 1 + include_shock as usize;
    let mut u = DMatrix::zeros(end_t, cols);
    for t in 1..=end_t {
        let r = t - 1;
        u[(r, 0)] = 1.0;
        if include_shock && t == series.t_star() + 1 {
            u[(r, 1)] = 1.0;
        }
        u[(r, lag)] = series.y[t - 1];
        for (j, &v) in series.x[t - 1].iter().enumerate() {
            u[(r, lag + 1 + j)] = v;
        }
    }
    let response = DVector::from_column_slice(&series.y[1..=end_t]);
    Ok((u, response))
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn singular(rcond: f64) -> Error {
    Error::SingularDesign {
        series: None,
        rcond,
    }
}

/// Reciprocal 1-norm condition of an equilibrated Gram matrix and its inverse.
fn check_rcond(gs: &DMatrix<f64>, gs_inv: &DMatrix<f64>) -> Result<()> {
    let rcond = 1.0 / (norm1(gs) * norm1(gs_inv));
    if !rcond.is_finite() || rcond < RCOND_MIN {
        return Err(singular(if rcond.is_finite() { rcond } else { 0.0 }));
    }
    Ok(())
}

/// Ordinary least squares via Householder QR on the column-equilibrated design.
pub fn fit_ols(design: &DMatrix<f64>, response: &DVector<f64>) -> Result<FitResult> {
    let (m, k) = design.shape();
    if response.len() != m {
        return Err(Error::invalid(format!(
            "design has {m} rows but response has {}",
            response.len()
        )));
    }
    if k == 0 || m <= k {
        return Err(Error::invalid(format!(
            "OLS needs more rows than columns ({m} x {k})"
        )));
    }
    let scale: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
    if scale.iter().any(|&s| s == 0.0 || !s.is_finite()) {
        return Err(singular(0.0));
    }
    let mut us = design.clone();
    for (j, &s) in scale.iter().enumerate() {
        us.column_mut(j).scale_mut(1.0 / s);
    }
    let qr = us.qr();
    let r = qr.r();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| singular(0.0))?;
    let gs = r.transpose() * &r;
    let gs_inv = &r_inv * r_inv.transpose();
    check_rcond(&gs, &gs_inv)?;

    let qty = qr.q().transpose() * response;
    let beta_s = &r_inv * qty;
    let coef: Vec<f64> = beta_s.iter().zip(&scale).map(|(b, s)| b / s).collect();
    let mut gram_inv = gs_inv;
    for i in 0..k {
        for j in 0..k {
            gram_inv[(i, j)] /= scale[i] * scale[j];
        }
    }
    let gram_inv = (&gram_inv + gram_inv.transpose()) * 0.5;
    let fitted = design * DVector::from_column_slice(&coef);
    let residuals: Vec<f64> = (response - fitted).iter().copied().collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    Ok(FitResult {
        coef,
        residuals,
        sigma2_hat: rss / (m - k) as f64,
        gram_inv,
        n_obs: m,
        n_params: k,
        has_shock: false,
    })
}

/// Donor fit over t = 1..T with the shock indicator.
pub fn fit_donor(series: &TimeSeries) -> Result<FitResult> {
    if !series.shocked() {
        return Err(Error::invalid(format!(
            "series {} has no observed post-shock response",
            series.id()
        )));
    }
    let (u, y) = build_design(series, true, series.len_t())?;
    let mut fit = fit_ols(&u, &y).map_err(|e| e.with_series(series.id()))?;
    fit.has_shock = true;
    Ok(fit)
}

/// Fit of the series of interest over the pre-shock window t = 1..T*.
pub fn fit_target(series: &TimeSeries) -> Result<FitResult> {
    let (u, y) = build_design(series, false, series.t_star())?;
    fit_ols(&u, &y).map_err(|e| e.with_series(series.id()))
}

/// One-step-ahead forecast of y_{T*+1} from a target fit; `alpha` turns
/// Forecast 1 into Forecast 2.
pub fn forecast_one(fit: &FitResult, series: &TimeSeries, alpha: Option<f64>) -> Result<f64> {
    if fit.has_shock {
        return Err(Error::invalid("forecast needs a pre-shock (target) fit"));
    }
    let t_star = series.t_star();
    let x = series.x_row(t_star + 1).ok_or_else(|| {
        Error::invalid(format!(
            "series {}: missing covariate row T*+1",
            series.id()
        ))
    })?;
    if x.len() != fit.theta().len() {
        return Err(Error::invalid(format!(
            "series {}: fit has {} covariate coefficients, row has {}",
            series.id(),
            fit.theta().len(),
            x.len()
        )));
    }
    let base = fit.intercept()
        + fit.lag() * series.y[t_star]
        + fit.theta().iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    Ok(base + alpha.unwrap_or(0.0))
}

/// Repeated donor refits on regenerated responses.
///
/// Only the lag column of the donor design depends on the response, so the
/// cross-products of the remaining columns are computed once and the normal
/// equations are re-solved per replicate. Same equilibration and condition
/// gate as [`fit_ols`].
#[derive(Debug, Clone)]
pub(crate) struct DonorRefitter {
    design: DMatrix<f64>,
    gram: DMatrix<f64>,
    lag_col: usize,
}

impl DonorRefitter {
    pub(crate) fn new(series: &TimeSeries) -> Result<Self> {
        let (design, _) = build_design(series, true, series.len_t())?;
        let gram = design.transpose() * &design;
        Ok(Self {
            design,
            gram,
            lag_col: 2,
        })
    }

    /// Refits on `y` (indexed t = 0..=T) and returns `(alpha_hat, var_hat)`.
    pub(crate) fn refit(&self, y: &[f64]) -> Result<(f64, f64)> {
        let (m, k) = self.design.shape();
        debug_assert_eq!(y.len(), m + 1);
        let lag = &y[..m];
        let resp = &y[1..];
        let mut gram = self.gram.clone();
        let mut rhs = DVector::<f64>::zeros(k);
        for j in 0..k {
            let col = self.design.column(j);
            let cross = if j == self.lag_col {
                lag.iter().map(|v| v * v).sum()
            } else {
                col.iter().zip(lag).map(|(a, b)| a * b).sum()
            };
            gram[(j, self.lag_col)] = cross;
            gram[(self.lag_col, j)] = cross;
            rhs[j] = if j == self.lag_col {
                lag.iter().zip(resp).map(|(a, b)| a * b).sum()
            } else {
                col.iter().zip(resp).map(|(a, b)| a * b).sum()
            };
        }
        let scale: Vec<f64> = (0..k).map(|j| gram[(j, j)].sqrt()).collect();
        if scale.iter().any(|&s| s == 0.0 || !s.is_finite()) {
            return Err(singular(0.0));
        }
        let mut gs = gram;
        for i in 0..k {
            for j in 0..k {
                gs[(i, j)] /= scale[i] * scale[j];
            }
        }
        let chol = Cholesky::new(gs.clone()).ok_or_else(|| singular(0.0))?;
        let gs_inv = chol.inverse();
        check_rcond(&gs, &gs_inv)?;
        let rhs_s = DVector::from_iterator(k, (0..k).map(|j| rhs[j] / scale[j]));
        let beta_s = &gs_inv * rhs_s;
        let beta: Vec<f64> = (0..k).map(|j| beta_s[j] / scale[j]).collect();
        let mut rss = 0.0;
        for r in 0..m {
            let mut fitted = 0.0;
            for (j, b) in beta.iter().enumerate() {
                let u = if j == self.lag_col {
                    lag[r]
                } else {
                    self.design[(r, j)]
                };
                fitted += u * b;
            }
            let e = resp[r] - fitted;
            rss += e * e;
        }
        let sigma2 = rss / (m - k) as f64;
        let g22 = gs_inv[(1, 1)] / (scale[1] * scale[1]);
        Ok((beta[1], sigma2 * g22))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y_t = 2 + 0.5 y_{t-1} + 1.5 x_t, no noise.
    fn noiseless(t_len: usize, t_star: usize, alpha: f64) -> TimeSeries {
        let x: Vec<Vec<f64>> = (1..=t_len)
            .map(|t| vec![((t * 7) % 5) as f64 + 0.3 * t as f64])
            .collect();
        let mut y = vec![1.0];
        for t in 1..=t_len {
            let d = if t == t_star + 1 { alpha } else { 0.0 };
            y.push(2.0 + d + 0.5 * y[t - 1] + 1.5 * x[t - 1][0]);
        }
        TimeSeries::new("s", y, x, t_star, true).unwrap()
    }

    #[test]
    fn design_has_single_shock_indicator() {
        let s = noiseless(6, 4, 3.0);
        let (u, y) = build_design(&s, true, 6).unwrap();
        assert_eq!(u.shape(), (6, 4));
        let shock: Vec<f64> = u.column(1).iter().copied().collect();
        assert_eq!(shock, vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(u.column(0).sum(), 6.0);
        for t in 1..=6 {
            assert_eq!(u[(t - 1, 2)], s.y()[t - 1]);
            assert_eq!(u[(t - 1, 3)], s.x_row(t).unwrap()[0]);
            assert_eq!(y[t - 1], s.y()[t]);
        }
    }

    #[test]
    fn pre_shock_design_has_no_shock_column() {
        let s = noiseless(10, 6, 3.0);
        let (u, y) = build_design(&s, false, 6).unwrap();
        assert_eq!(u.shape(), (6, 3));
        assert_eq!(y.len(), 6);
    }

    #[test]
    fn design_preconditions() {
        let s = noiseless(10, 6, 3.0);
        assert!(build_design(&s, false, 11).is_err());
        assert!(build_design(&s, false, 2).is_err());
        assert!(build_design(&s, true, 6).is_err());
    }

    #[test]
    fn noiseless_recovery() {
        let s = noiseless(30, 20, 4.25);
        let fit = fit_donor(&s).unwrap();
        for (got, want) in fit.coef.iter().zip([2.0, 4.25, 0.5, 1.5]) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        assert!(fit.sigma2_hat < 1e-20);
        let target = fit_target(&s).unwrap();
        assert_eq!(target.n_obs, 20);
        for (got, want) in target.coef.iter().zip([2.0, 0.5, 1.5]) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn collinear_design_is_singular_and_named() {
        // x_t = 1 duplicates the intercept.
        let x = vec![vec![1.0]; 12];
        let y: Vec<f64> = (0..=12).map(|t| t as f64).collect();
        let s = TimeSeries::new("flat", y, x, 8, true).unwrap();
        match fit_donor(&s) {
            Err(Error::SingularDesign {
                series: Some(id), ..
            }) => assert_eq!(id, "flat"),
            other => panic!("expected singular design, got {other:?}"),
        }
    }

    #[test]
    fn forecast_adjustment_is_additive() {
        let s = noiseless(30, 20, 4.0);
        let fit = fit_target(&s).unwrap();
        let f1 = forecast_one(&fit, &s, None).unwrap();
        assert_eq!(f1, forecast_one(&fit, &s, Some(0.0)).unwrap());
        let f2 = forecast_one(&fit, &s, Some(10.22)).unwrap();
        assert!((f2 - f1 - 10.22).abs() < 1e-12);
        // noiseless: Forecast 1 misses by exactly the shock
        assert!((s.post_shock_response().unwrap() - f1 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn refitter_matches_qr_fit() {
        let mut s = noiseless(40, 25, 2.0);
        let mut y = s.y().to_vec();
        for (t, v) in y.iter_mut().enumerate() {
            *v += ((t * 37 % 11) as f64 - 5.0) * 0.1;
        }
        s = TimeSeries::new("s", y.clone(), s.x_rows().to_vec(), 25, true).unwrap();
        let fit = fit_donor(&s).unwrap();
        let re = DonorRefitter::new(&s).unwrap();
        let (a, v) = re.refit(&y).unwrap();
        assert!((a - fit.shock().unwrap()).abs() < 1e-9);
        assert!((v - fit.shock_variance().unwrap()).abs() < 1e-9 * v.max(1.0));
    }

    #[test]
    fn series_validation() {
        let x = vec![vec![1.0]; 10];
        let y = vec![0.0; 11];
        assert!(TimeSeries::new("a", y.clone(), x.clone(), 3, true).is_err()); // T* < p+3
        assert!(TimeSeries::new("a", y.clone(), x.clone(), 10, true).is_err()); // T* = T
        assert!(TimeSeries::new("a", y.clone(), x.clone(), 10, false).is_err()); // missing forecast row
        let mut x11 = x.clone();
        x11.push(vec![1.0]);
        assert!(TimeSeries::new("a", y, x11, 10, false).is_ok());
    }

    #[test]
    fn pool_validation() {
        let d = noiseless(20, 10, 1.0);
        let t = d.renamed("target");
        assert!(DonorPool::new(vec![], t.clone()).is_err());
        assert!(DonorPool::new(vec![d.clone(), d.clone()], t.clone()).is_err());
        assert!(DonorPool::new(vec![d.clone()], d.clone()).is_err());
        let pool = DonorPool::new(vec![d.clone(), d.renamed("d2")], t).unwrap();
        let loo = pool.leave_out(1).unwrap();
        assert_eq!(loo.target().id(), "d2");
        assert_eq!(loo.n(), 1);
        assert!(loo.leave_out(0).is_err());
    }
}
