mod common;

use postshock::io::{load_panel, read_panel, write_panel};
use postshock::sim::Model;
use postshock::{DonorPool, Error, TimeSeries};

fn roundtrip(pool: &DonorPool) -> DonorPool {
    let (mut d, mut m) = (Vec::new(), Vec::new());
    write_panel(pool, &mut d, &mut m).unwrap();
    read_panel(d.as_slice(), "data", m.as_slice(), "meta").unwrap()
}

#[test]
fn write_then_read_is_identity() {
    for rep in 0..5 {
        let pool = common::pool(&common::small_config(Model::M22, 4, 3), rep);
        assert_eq!(roundtrip(&pool), pool);
    }
}

#[test]
fn unshocked_target_roundtrips() {
    let pool = common::pool(&common::small_config(Model::M1, 2, 2), 0);
    let t = pool.target();
    let y = t.y()[..=t.t_star()].to_vec();
    let x = t.x_rows()[..=t.t_star()].to_vec();
    let target = TimeSeries::new("future", y, x, t.t_star(), false).unwrap();
    let pool = DonorPool::new(pool.donors().to_vec(), target).unwrap();
    assert_eq!(roundtrip(&pool), pool);
}

#[test]
fn five_donor_fixture_loads_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let pool = common::pool(&common::small_config(Model::M21, 5, 5), 0);
    let (data, meta) = common::write_fixture(dir.path(), &pool);
    let loaded = load_panel(&data, &meta).unwrap();
    assert_eq!(loaded.n(), 5);
    assert_eq!(loaded.p(), 5);
    for d in loaded.donors() {
        postshock::fit_donor(d).unwrap();
    }
}

fn err_of(data: &str, meta: &str) -> Error {
    read_panel(data.as_bytes(), "data.csv", meta.as_bytes(), "meta.csv").unwrap_err()
}

fn toy_rows(id: &str, start: usize, len: usize) -> String {
    (start..start + len)
        .map(|t| {
            let x = if t == 0 {
                String::new()
            } else {
                format!("{}", (t * 3 % 7) as f64)
            };
            format!("{id},{t},{},{x}\n", (t as f64).sqrt())
        })
        .collect()
}

const HEADER: &str = "series_id,t,y,x1\n";

#[test]
fn series_starting_at_one_is_named() {
    let data = format!("{HEADER}{}{}", toy_rows("a", 0, 10), toy_rows("b", 1, 10));
    let meta = "series_id,t_star,role\na,5,donor\nb,5,target\n";
    match err_of(&data, meta) {
        Error::Parse {
            file,
            line,
            message,
        } => {
            assert_eq!(file, "data.csv");
            assert_eq!(line, 12);
            assert!(message.contains("series b"), "{message}");
        }
        e => panic!("{e}"),
    }
}

#[test]
fn malformed_inputs_are_rejected_with_locations() {
    let good = format!("{HEADER}{}{}", toy_rows("a", 0, 10), toy_rows("b", 0, 10));
    let meta = "series_id,t_star,role\na,5,donor\nb,5,target\n";
    read_panel(good.as_bytes(), "d", meta.as_bytes(), "m").unwrap();

    let gap = good.replace("a,4,", "a,40,");
    assert!(matches!(err_of(&gap, meta), Error::Parse { line: 6, .. }));

    let two_targets = "series_id,t_star,role\na,5,target\nb,5,target\n";
    assert!(matches!(
        err_of(&good, two_targets),
        Error::Parse { line: 3, .. }
    ));

    let unknown = format!("{meta}c,5,donor\n");
    match err_of(&good, &unknown) {
        Error::Parse { file, message, .. } => {
            assert_eq!(file, "meta.csv");
            assert!(message.contains("series c"));
        }
        e => panic!("{e}"),
    }

    let missing_meta = "series_id,t_star,role\nb,5,target\n";
    assert!(matches!(err_of(&good, missing_meta), Error::Parse { .. }));

    let bad_number = good.replace("a,3,", "a,3,abc");
    assert!(matches!(
        err_of(&bad_number, meta),
        Error::Parse { line: 5, .. }
    ));

    let bad_header = good.replace("x1", "z");
    assert!(matches!(
        err_of(&bad_header, meta),
        Error::Parse { line: 1, .. }
    ));

    let no_target = "series_id,t_star,role\na,5,donor\nb,5,donor\n";
    assert!(err_of(&good, no_target).to_string().contains("target"));
}

#[test]
fn short_series_reports_shock_window() {
    let data = format!("{HEADER}{}{}", toy_rows("a", 0, 6), toy_rows("b", 0, 10));
    let meta = "series_id,t_star,role\na,5,donor\nb,5,target\n";
    let e = err_of(&data, meta);
    assert!(e.to_string().contains("series a"), "{e}");
}

#[test]
fn missing_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let e = load_panel(&dir.path().join("nope.csv"), &dir.path().join("meta.csv")).unwrap_err();
    assert!(matches!(e, Error::File { .. }));
    assert!(e.to_string().contains("nope.csv"), "{e}");
}
