//! Post-shock forecasting with donor pools.
//!
//! A series of interest is about to experience a shock at `T*+1`. Donor
//! series that already went through a similar shock are fitted with a
//! one-period shock indicator, their estimated shock effects are aggregated,
//! and the aggregate is added to the target's own forecast. A residual
//! bootstrap estimates whether the adjustment lowers forecast risk, and
//! leave-one-out cross-validation over the donors scores that decision rule.

pub mod bootstrap;
pub mod error;
pub mod estimators;
pub mod io;
pub mod loocv;
pub mod panel;
pub mod rng;
pub mod sim;
pub mod simplex;

pub use bootstrap::{
    assess_all, bootstrap, delta_hat, risk_reduction, Assessment, BootstrapConfig,
    BootstrapDistribution, PoolEstimates, Procedure, RiskAssessment, WeightOptions,
};
pub use error::{Error, Result};
pub use estimators::{
    alpha_adj, alpha_ivw, alpha_wadj, compose_additive, solve_weights, DonorShock, Method,
    ShockEstimate, WeightVector,
};
pub use loocv::{loocv, LoocvConfig, LoocvMode, LoocvReport};
pub use panel::{
    build_design, fit_donor, fit_ols, fit_target, forecast_one, DonorPool, FitResult, TimeSeries,
};
pub use sim::{run_monte_carlo, SimConfig, SimRow};
