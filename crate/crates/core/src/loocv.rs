//! Leave-one-out cross-validation of the adjust / don't-adjust decision.
//!
//! Each held-out donor plays the series of interest: the remaining donors
//! estimate its shock, the bootstrap decides whether to adjust, and the
//! decision is scored against the donor's observed post-shock response.

use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{assess_all, BootstrapConfig};
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::panel::DonorPool;
use crate::rng::{derive_seed, stream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoocvMode {
    /// Hold out every donor once.
    Full,
    /// Hold out `k` donors drawn without replacement.
    KDraws(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvConfig {
    pub mode: LoocvMode,
    pub seed: u64,
    /// Bootstrap settings for each iteration. Its seed is replaced by one
    /// derived from `seed` and the held-out index.
    pub bootstrap: BootstrapConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub decision: bool,
    /// Squared error of the adjusted forecast.
    pub e2: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvIteration {
    pub held_out: String,
    pub index: usize,
    /// Squared error of the unadjusted forecast.
    pub e1: f64,
    pub scores: BTreeMap<Method, MethodScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvReport {
    /// Fraction of iterations in which the decision was correct.
    pub c_bar: BTreeMap<Method, f64>,
    pub iterations: Vec<LoocvIteration>,
}

/// A decision to adjust is correct when adjusting strictly helped; a decision
/// not to adjust is correct when adjusting did not help. Ties favour not
/// adjusting.
pub fn correctness(decision: bool, e1: f64, e2: f64) -> bool {
    if decision {
        e2 < e1
    } else {
        e2 >= e1
    }
}

/// Donor indices held out under `mode`, in ascending order.
pub fn held_out_indices(n: usize, mode: LoocvMode, seed: u64) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::invalid("leave-one-out needs at least two donors"));
    }
    match mode {
        LoocvMode::Full => Ok((0..n).collect()),
        LoocvMode::KDraws(k) => {
            if k == 0 || k > n {
                return Err(Error::invalid(format!(
                    "k = {k} draws from a pool of {n} donors"
                )));
            }
            let mut rng = stream(seed, &[tag::LOOCV_SELECT]);
            let mut idx = index::sample(&mut rng, n, k).into_vec();
            idx.sort_unstable();
            Ok(idx)
        }
    }
}

pub fn loocv(pool: &DonorPool, cfg: &LoocvConfig) -> Result<LoocvReport> {
    cfg.bootstrap.validate()?;
    let held = held_out_indices(pool.n(), cfg.mode, cfg.seed)?;
    let mut iterations = Vec::with_capacity(held.len());
    for m in held {
        let sub = pool.leave_out(m)?;
        let boot = BootstrapConfig {
            seed: derive_seed(cfg.seed, &[tag::LOOCV_ITER, m as u64]),
            ..cfg.bootstrap.clone()
        };
        let a = assess_all(&sub, &boot)?;
        let actual = a.actual.expect("donors always carry a post-shock response");
        let e1 = (actual - a.forecast1).powi(2);
        let scores = a
            .risk
            .iter()
            .map(|r| {
                let e2 = (actual - a.forecast2[&r.estimator]).powi(2);
                let score = MethodScore {
                    decision: r.decision,
                    e2,
                    correct: correctness(r.decision, e1, e2),
                };
                (r.estimator, score)
            })
            .collect();
        iterations.push(LoocvIteration {
            held_out: a.target_id,
            index: m,
            e1,
            scores,
        });
    }
    let mut c_bar = BTreeMap::new();
    for &method in &cfg.bootstrap.estimators {
        let hits = iterations
            .iter()
            .filter(|it| it.scores[&method].correct)
            .count();
        c_bar.insert(method, hits as f64 / iterations.len() as f64);
    }
    Ok(LoocvReport { c_bar, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correctness_table() {
        assert!(correctness(true, 1.0, 0.5));
        assert!(!correctness(true, 1.0, 1.0));
        assert!(!correctness(true, 1.0, 2.0));
        assert!(correctness(false, 1.0, 1.0));
        assert!(correctness(false, 1.0, 2.0));
        assert!(!correctness(false, 1.0, 0.5));
    }

    #[test]
    fn draws_are_sorted_distinct_and_reproducible() {
        let a = held_out_indices(20, LoocvMode::KDraws(5), 7).unwrap();
        assert_eq!(a.len(), 5);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, held_out_indices(20, LoocvMode::KDraws(5), 7).unwrap());
        assert_eq!(
            held_out_indices(3, LoocvMode::Full, 0).unwrap(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn draw_count_validated() {
        assert!(held_out_indices(4, LoocvMode::KDraws(5), 0).is_err());
        assert!(held_out_indices(4, LoocvMode::KDraws(0), 0).is_err());
        assert!(held_out_indices(1, LoocvMode::Full, 0).is_err());
    }
}
