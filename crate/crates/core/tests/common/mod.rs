#![allow(dead_code)]

use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use postshock::io::write_panel;
use postshock::sim::{simulate_pool, LengthLaw, Model, SimConfig};
use postshock::DonorPool;

/// Small, fast configuration: short series, few covariates.
pub fn small_config(model: Model, n: usize, p: usize) -> SimConfig {
    SimConfig {
        model,
        n,
        p,
        sigma: 1.0,
        sigma_alpha: 1.0,
        mu_alpha: 5.0,
        phi_range: [0.1, 0.8],
        t_law: LengthLaw {
            shape: 15.0,
            rate: 10.0,
            multiplier: 30.0,
            min: 40,
        },
        ..SimConfig::default()
    }
}

pub fn pool(cfg: &SimConfig, rep: usize) -> DonorPool {
    simulate_pool(cfg, rep).expect("simulated pool").pool
}

/// Writes `pool` as data.csv and meta.csv under `dir`.
pub fn write_fixture(dir: &Path, pool: &DonorPool) -> (PathBuf, PathBuf) {
    let data = dir.join("data.csv");
    let meta = dir.join("meta.csv");
    write_panel(
        pool,
        File::create(&data).unwrap(),
        File::create(&meta).unwrap(),
    )
    .unwrap();
    (data, meta)
}

/// Normal-equations oracle: solves (X'X) b = X'y by Gaussian elimination.
pub fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
    let k = x.ncols();
    let mut a: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut row: Vec<f64> = (0..k).map(|j| x.column(i).dot(&x.column(j))).collect();
            row.push(x.column(i).dot(y));
            row
        })
        .collect();
    for c in 0..k {
        let piv = (c..k)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, piv);
        let pivot = a[c].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != c {
                let f = row[c] / pivot[c];
                for (x, p) in row.iter_mut().zip(&pivot).skip(c) {
                    *x -= f * p;
                }
            }
        }
    }
    (0..k).map(|i| a[i][k] / a[i][i]).collect()
}
