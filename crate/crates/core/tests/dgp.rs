use postshock::rng::stream;
use postshock::sim::{
    draw_params, generate_series, simulate_pool, LengthLaw, Loading, Model, SimConfig,
};

#[test]
fn near_degenerate_random_loadings_match_fixed_loading_mean() {
    let cfg = SimConfig {
        model: Model::M22,
        p: 3,
        delta_var: 1e-8,
        sigma_alpha: 1.0,
        mu_delta: Loading::Vector(vec![1.0, -0.5, 2.0]),
        t_law: LengthLaw {
            min: 40,
            multiplier: 20.0,
            ..Default::default()
        },
        ..SimConfig::default()
    };
    let mut rng = stream(42, &[]);
    let mut diffs = Vec::new();
    for i in 0..1000 {
        let sp = draw_params(&cfg, &format!("s{i}"), &mut rng).unwrap();
        diffs.push(sp.alpha - cfg.expected_alpha(sp.shock_covariates()).unwrap());
    }
    let mean = diffs.iter().sum::<f64>() / 1000.0;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
    assert!(
        mean.abs() < 3.0 * sd / 1000f64.sqrt(),
        "mean {mean}, sd {sd}"
    );
    assert!((sd - 1.0).abs() < 0.1);
}

#[test]
fn default_lengths_never_fall_below_minimum() {
    let cfg = SimConfig::default();
    let mut rng = stream(0, &[]);
    let mut lengths = Vec::new();
    for i in 0..300 {
        let sp = draw_params(&cfg, &format!("s{i}"), &mut rng).unwrap();
        assert!(sp.len_t() >= 90);
        assert!(sp.t_star >= cfg.p + 4 && sp.t_star < sp.len_t());
        lengths.push(sp.len_t() as f64);
    }
    let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
    assert!((mean - 150.0).abs() < 10.0, "{mean}");
}

#[test]
fn fixed_parameters_regenerate_only_noise() {
    let cfg = SimConfig {
        p: 2,
        t_law: LengthLaw {
            min: 30,
            multiplier: 1.0,
            ..Default::default()
        },
        ..SimConfig::default()
    };
    let sp = draw_params(&cfg, "a", &mut stream(1, &[])).unwrap();
    let a = generate_series(&sp, 1.0, &mut stream(2, &[])).unwrap();
    let b = generate_series(&sp, 1.0, &mut stream(3, &[])).unwrap();
    assert_eq!(a.x_rows(), b.x_rows());
    assert_eq!(a.t_star(), b.t_star());
    assert_ne!(a.y(), b.y());
    let quiet = generate_series(&sp, 0.0, &mut stream(4, &[])).unwrap();
    assert_eq!(quiet.y()[0], 0.0);
}

#[test]
fn pool_targets_are_shocked_and_donors_distinct() {
    let cfg = SimConfig {
        n: 5,
        p: 2,
        t_law: LengthLaw {
            min: 30,
            ..Default::default()
        },
        ..SimConfig::default()
    };
    let sim = simulate_pool(&cfg, 0).unwrap();
    assert_eq!(sim.pool.n(), 5);
    assert_eq!(sim.alphas.len(), 6);
    assert!(sim.pool.target().post_shock_response().is_some());
    let e = cfg
        .expected_alpha(sim.pool.target().shock_covariates())
        .unwrap();
    assert_eq!(e, sim.expected_target_alpha);
}
