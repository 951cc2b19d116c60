use super::*;

const QUICK: ChainSizes = ChainSizes { initial_burn_in: 5, burn_in: 1, n_samples: 2, thinning: 1 };

fn quick_spec(variants: Vec<Variant>, seeds: Vec<u64>, budget: usize, dir: &Path) -> ExperimentSpec {
    ExperimentSpec {
        chain: QUICK,
        direct: DirectConfig { budget: 60, ..DirectConfig::default() },
        timing: false,
        ..ExperimentSpec::new("fsre2", variants, seeds, budget, dir)
    }
}

fn fake_run(dir: &Path, variant: Variant, seed: u64, values: &[f64], wall: f64) {
    let rows: Vec<ResultRow> = values
        .iter()
        .enumerate()
        .map(|(i, v)| ResultRow {
            task: "fsre2".into(),
            variant,
            seed,
            call: i + 1,
            incumbent: vec![0.0],
            fbar_oracle: *v,
            wall_ms: Some(wall),
        })
        .collect();
    let stem = run_stem("fsre2", variant, seed);
    write_rows(&dir.join(format!("{stem}.csv")), &rows).unwrap();
    fs::write(dir.join(format!("{stem}.json")), "{}").unwrap();
}

#[test]
fn single_run_writes_one_row_per_call() {
    let dir = tempfile::tempdir().unwrap();
    let spec = quick_spec(vec![Variant::Aloq], vec![0], 10, dir.path());
    let paths = run_experiment(&spec).unwrap();
    assert_eq!(paths.len(), 1);
    let rows = read_rows(&paths[0]).unwrap();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.wall_ms.is_none() && r.incumbent.len() == 1));
    let header: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(paths[0].with_extension("json")).unwrap()).unwrap();
    assert_eq!(header["task"], "fsre2");
    assert!(header["task_constants"]["segments"].is_array());
    assert_eq!(header["config"]["budget"], 10);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = run_experiment(&quick_spec(vec![Variant::Aloq], vec![3], 10, a.path())).unwrap();
    let pb = run_experiment(&quick_spec(vec![Variant::Aloq], vec![3], 10, b.path())).unwrap();
    assert_eq!(fs::read(&pa[0]).unwrap(), fs::read(&pb[0]).unwrap());
    // rerunning into the same directory rewrites identical bytes
    let again = run_experiment(&quick_spec(vec![Variant::Aloq], vec![3], 10, a.path())).unwrap();
    assert_eq!(fs::read(&again[0]).unwrap(), fs::read(&pb[0]).unwrap());
}

#[test]
fn grid_produces_one_file_per_run_in_parallel_too() {
    let serial = tempfile::tempdir().unwrap();
    let parallel = tempfile::tempdir().unwrap();
    let spec = quick_spec(vec![Variant::Aloq, Variant::Naive], vec![1, 2, 3], 8, serial.path());
    let a = run_experiment(&spec).unwrap();
    let b = run_experiment(&ExperimentSpec { jobs: 2, out_dir: parallel.path().into(), ..spec }).unwrap();
    assert_eq!(a.len(), 6);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    let summary = aggregate(serial.path()).unwrap();
    assert!(summary.missing.is_empty());
    assert_eq!(summary.final_for("fsre2", Variant::Naive).unwrap().n, 3);
}

#[test]
fn timed_runs_record_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec { timing: true, ..quick_spec(vec![Variant::OneStep], vec![0], 10, dir.path()) };
    let rows = read_rows(&run_experiment(&spec).unwrap()[0]).unwrap();
    assert!(rows.iter().all(|r| r.wall_ms.is_some_and(|w| w >= 0.0)));
}

#[test]
fn spec_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad_task = ExperimentSpec { task: "branin".into(), ..quick_spec(vec![Variant::Aloq], vec![0], 8, dir.path()) };
    assert!(matches!(run_experiment(&bad_task), Err(AloqError::Unknown { .. })));
    assert!(run_experiment(&quick_spec(vec![], vec![0], 8, dir.path())).is_err());
    assert!(run_experiment(&quick_spec(vec![Variant::Aloq], vec![], 8, dir.path())).is_err());
    let file = dir.path().join("occupied");
    fs::write(&file, "x").unwrap();
    assert!(matches!(
        run_experiment(&quick_spec(vec![Variant::Aloq], vec![0], 8, &file.join("sub"))),
        Err(AloqError::Io(_))
    ));
}

#[test]
fn aggregation_statistics() {
    let dir = tempfile::tempdir().unwrap();
    fake_run(dir.path(), Variant::Aloq, 0, &[0.5, 1.0], 1.0);
    let s = aggregate(dir.path()).unwrap();
    assert_eq!(s.final_for("fsre2", Variant::Aloq).unwrap().median, 1.0);

    fake_run(dir.path(), Variant::Aloq, 1, &[0.5, 2.0], 1.0);
    fake_run(dir.path(), Variant::Aloq, 2, &[0.5, 3.0], 1.0);
    let s = aggregate(dir.path()).unwrap();
    let f = s.final_for("fsre2", Variant::Aloq).unwrap();
    assert_eq!((f.q1, f.median, f.q3, f.n), (1.5, 2.0, 2.5, 3));
    assert_eq!(s.curves.len(), 2);
    assert!(s.quartile_table().contains("fsre2 & aloq & 1.500 & 2.000 & 2.500"));
}

#[test]
fn missing_runs_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    fake_run(dir.path(), Variant::Aloq, 0, &[1.0], 1.0);
    update_manifest(dir.path(), &[run_stem("fsre2", Variant::Aloq, 0), run_stem("fsre2", Variant::Aloq, 7)]).unwrap();
    let s = aggregate(dir.path()).unwrap();
    assert_eq!(s.missing, vec!["fsre2_aloq_7".to_string()]);
    assert_eq!(s.warnings.len(), 1);
    assert_eq!(s.final_for("fsre2", Variant::Aloq).unwrap().n, 1);
}

#[test]
fn runtime_report_covers_every_call() {
    let dir = tempfile::tempdir().unwrap();
    fake_run(dir.path(), Variant::Naive, 0, &[1.0; 12], 4.0);
    fake_run(dir.path(), Variant::Naive, 1, &[1.0; 12], 4.0);
    let report = runtime_report(dir.path()).unwrap();
    assert_eq!(report.len(), 1);
    assert_eq!(report[0].points.len(), 12);
    assert!(report[0].points.iter().all(|p| p.1 == 4.0));
    assert_eq!(report[0].trend(), 0.0);
}

#[test]
fn quantile_oracles() {
    assert_eq!(quantile(&[5.0], 0.25), 5.0);
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
    assert_eq!(Quartiles::of(&[3.0, 1.0, 2.0]).median, 2.0);
}

#[test]
fn rank_correlation_oracles() {
    let x: Vec<f64> = (0..10).map(f64::from).collect();
    let up: Vec<f64> = x.iter().map(|v| v * v).collect();
    let down: Vec<f64> = x.iter().map(|v| -v.powi(3)).collect();
    assert!((rank_correlation(&x, &up) - 1.0).abs() < 1e-12);
    assert!((rank_correlation(&x, &down) + 1.0).abs() < 1e-12);
    // against the textbook formula 1 - 6 sum d^2 / (n (n^2 - 1)) without ties
    let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0, 8.0, 7.0, 10.0, 9.0];
    let d2 = 10.0 * 1.0;
    let expected = 1.0 - 6.0 * d2 / (10.0 * 99.0);
    assert!((rank_correlation(&x, &y) - expected).abs() < 1e-12);
    assert_eq!(ranks(&[1.0, 1.0, 3.0]), vec![1.5, 1.5, 3.0]);
}
