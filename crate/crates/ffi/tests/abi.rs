use std::ffi::{CStr, CString};
use std::fs::File;
use std::path::Path;
use std::process::Command;
use std::ptr;

use postshock::io::write_panel;
use postshock::sim::{simulate_pool, LengthLaw, SimConfig};
use postshock_ffi::*;

fn fixture(dir: &Path) -> (CString, CString) {
    let cfg = SimConfig {
        n: 5,
        p: 2,
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
    };
    let pool = simulate_pool(&cfg, 0).unwrap().pool;
    let (data, meta) = (dir.join("data.csv"), dir.join("meta.csv"));
    write_panel(
        &pool,
        File::create(&data).unwrap(),
        File::create(&meta).unwrap(),
    )
    .unwrap();
    let c = |p: &Path| CString::new(p.to_str().unwrap()).unwrap();
    (c(&data), c(&meta))
}

fn last_error() -> String {
    let p = ps_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(dir: &Path) -> *mut PsPool {
    let (data, meta) = fixture(dir);
    let mut pool = ptr::null_mut();
    assert_eq!(
        unsafe { ps_pool_load(data.as_ptr(), meta.as_ptr(), &mut pool) },
        PsStatus::Ok
    );
    pool
}

fn options() -> PsBootstrapOptions {
    PsBootstrapOptions {
        replicates: 50,
        seed: 11,
        ..ps_bootstrap_options_default()
    }
}

#[test]
fn assess_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pool = load(dir.path());
    let mut n = 0usize;
    assert_eq!(unsafe { ps_pool_donor_count(pool, &mut n) }, PsStatus::Ok);
    assert_eq!(n, 5);

    let mut a = ptr::null_mut();
    assert_eq!(unsafe { ps_assess(pool, &options(), &mut a) }, PsStatus::Ok);

    let (mut f1, mut f2, mut est, mut var, mut delta) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut decision = -1;
    unsafe {
        assert_eq!(ps_assessment_forecast1(a, &mut f1), PsStatus::Ok);
        assert_eq!(
            ps_assessment_forecast2(a, PsMethod::Adj, &mut f2),
            PsStatus::Ok
        );
        assert_eq!(
            ps_assessment_estimate(a, PsMethod::Adj, &mut est),
            PsStatus::Ok
        );
        assert_eq!(
            ps_assessment_bootstrap_var(a, PsMethod::Adj, &mut var),
            PsStatus::Ok
        );
        assert_eq!(
            ps_assessment_delta_hat(a, PsMethod::Adj, &mut delta),
            PsStatus::Ok
        );
        assert_eq!(
            ps_assessment_decision(a, PsMethod::Adj, &mut decision),
            PsStatus::Ok
        );
    }
    assert!((f2 - f1 - est).abs() < 1e-9);
    assert!(var > 0.0);
    assert_eq!(decision, (delta > 0.0) as i32);

    let mut wadj = 0.0;
    unsafe { ps_assessment_estimate(a, PsMethod::Wadj, &mut wadj) };
    let mut recomputed = 0.0;
    assert_eq!(
        unsafe { ps_risk_reduction(PsMethod::Adj, est, wadj, var, &mut recomputed) },
        PsStatus::Ok
    );
    assert_eq!(recomputed, delta);

    let mut len = 0usize;
    let mut small = [0.0; 2];
    assert_eq!(
        unsafe { ps_assessment_weights(a, small.as_mut_ptr(), small.len(), &mut len) },
        PsStatus::BufferTooSmall
    );
    assert_eq!(len, 5);
    let mut w = [0.0; 5];
    assert_eq!(
        unsafe { ps_assessment_weights(a, w.as_mut_ptr(), w.len(), &mut len) },
        PsStatus::Ok
    );
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9 && w.iter().all(|&x| x >= 0.0));

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ps_assessment_to_json(a, &mut json) }, PsStatus::Ok);
    let parsed: serde_json::Value =
        serde_json::from_str(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    assert_eq!(parsed["target_id"], "target");
    unsafe {
        ps_string_free(json);
        ps_assessment_free(a);
        ps_pool_free(pool);
    }
}

#[test]
fn assessment_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let pool = load(dir.path());
    let run = || {
        let mut a = ptr::null_mut();
        let mut v = 0.0;
        unsafe {
            ps_assess(pool, &options(), &mut a);
            ps_assessment_bootstrap_var(a, PsMethod::Ivw, &mut v);
            ps_assessment_free(a);
        }
        v
    };
    assert_eq!(run(), run());
    unsafe { ps_pool_free(pool) };
}

#[test]
fn loocv_handle() {
    let dir = tempfile::tempdir().unwrap();
    let pool = load(dir.path());
    let mut report = ptr::null_mut();
    let opts = PsBootstrapOptions {
        replicates: 20,
        ..options()
    };
    assert_eq!(
        unsafe { ps_loocv(pool, &opts, 3, &mut report) },
        PsStatus::Ok
    );
    let mut c = -1.0;
    assert_eq!(
        unsafe { ps_loocv_c_bar(report, PsMethod::Wadj, &mut c) },
        PsStatus::Ok
    );
    assert!((0.0..=1.0).contains(&c));
    assert!((c * 3.0 - (c * 3.0).round()).abs() < 1e-12);
    unsafe { ps_loocv_free(report) };

    assert_eq!(
        unsafe { ps_loocv(pool, &opts, 6, &mut report) },
        PsStatus::InvalidInput
    );
    assert!(!last_error().is_empty());
    unsafe { ps_pool_free(pool) };
}

#[test]
fn errors_map_to_status_codes() {
    let mut pool = ptr::null_mut();
    let missing = CString::new("/nonexistent/data.csv").unwrap();
    assert_eq!(
        unsafe { ps_pool_load(missing.as_ptr(), missing.as_ptr(), &mut pool) },
        PsStatus::Io
    );
    assert!(pool.is_null());
    assert!(last_error().contains("nonexistent"));

    assert_eq!(
        unsafe { ps_pool_load(ptr::null(), missing.as_ptr(), &mut pool) },
        PsStatus::NullPointer
    );

    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let meta = dir.path().join("meta.csv");
    std::fs::write(&data, "series_id,t,y\na,0,1\na,x,2\n").unwrap();
    std::fs::write(&meta, "series_id,t_star,role\na,1,target\n").unwrap();
    let (d, m) = (
        CString::new(data.to_str().unwrap()).unwrap(),
        CString::new(meta.to_str().unwrap()).unwrap(),
    );
    assert_eq!(
        unsafe { ps_pool_load(d.as_ptr(), m.as_ptr(), &mut pool) },
        PsStatus::Parse
    );

    let mut v = 0.0;
    assert_eq!(
        unsafe { ps_assessment_forecast1(ptr::null(), &mut v) },
        PsStatus::NullPointer
    );
    assert_eq!(
        unsafe { ps_alpha_adj(ptr::null(), 3, &mut v) },
        PsStatus::NullPointer
    );
    assert_eq!(
        unsafe { ps_alpha_adj([1.0].as_ptr(), 0, &mut v) },
        PsStatus::InvalidInput
    );
    assert_eq!(
        unsafe { ps_alpha_ivw([1.0, 2.0].as_ptr(), [1.0, 0.0].as_ptr(), 2, &mut v) },
        PsStatus::Numerical
    );

    unsafe {
        ps_pool_free(ptr::null_mut());
        ps_assessment_free(ptr::null_mut());
        ps_loocv_free(ptr::null_mut());
        ps_string_free(ptr::null_mut());
    }
}

#[test]
fn stateless_helpers() {
    let alphas = [-0.922, -7.063, -5.777, -6.395, -4.207];
    let mut v = 0.0;
    assert_eq!(
        unsafe { ps_alpha_adj(alphas.as_ptr(), 5, &mut v) },
        PsStatus::Ok
    );
    assert!((v + 4.872).abs() < 1e-3);
    assert_eq!(
        unsafe { ps_alpha_ivw([1.0, 4.0].as_ptr(), [1.0, 3.0].as_ptr(), 2, &mut v) },
        PsStatus::Ok
    );
    assert!((v - 1.75).abs() < 1e-12);

    let donors = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
    let target = [0.25, 0.5];
    let mut w = [0.0; 3];
    let mut obj = f64::NAN;
    let status = unsafe {
        ps_solve_weights(
            target.as_ptr(),
            donors.as_ptr(),
            3,
            2,
            2.0,
            false,
            w.as_mut_ptr(),
            &mut obj,
        )
    };
    assert_eq!(status, PsStatus::Ok);
    assert!(obj < 1e-8);
    for (a, b) in w.iter().zip([0.25, 0.25, 0.5]) {
        assert!((a - b).abs() < 1e-6, "{w:?}");
    }
    let status = unsafe {
        ps_solve_weights(
            target.as_ptr(),
            donors.as_ptr(),
            3,
            2,
            2.0,
            false,
            w.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(status, PsStatus::Ok);

    assert_eq!(
        unsafe { ps_risk_reduction(PsMethod::Wadj, 3.0, 3.0, 1.0, &mut v) },
        PsStatus::Ok
    );
    assert_eq!(v, 8.0);
}

#[test]
fn header_is_valid_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(include.join("postshock.h")).unwrap();
    for symbol in [
        "ps_pool_load",
        "ps_assess",
        "ps_loocv",
        "PS_STATUS_BUFFER_TOO_SMALL",
        "typedef struct PsPool PsPool",
    ] {
        assert!(header.contains(symbol), "{symbol} missing from header");
    }
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping syntax check");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"postshock.h\"\nint main(void) {\n  PsBootstrapOptions o = ps_bootstrap_options_default();\n  PsPool *pool = 0;\n  return o.procedure == PS_PROCEDURE_BF ? (int)ps_pool_load(\"d\", \"m\", &pool) : 1;\n}\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
