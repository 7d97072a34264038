use perfscen::config::ExperimentConfig;
use perfscen::export::export_csv;
use perfscen::fixed_point::Trace;

fn small_config(snapshots: bool) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/default_svm.toml"
    ))
    .unwrap();
    cfg.evaluation.n_eval = 2000;
    cfg.evaluation.record_snapshots = snapshots;
    cfg.stopping.max_steps = 3;
    cfg
}

fn data_rows(path: &std::path::Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn three_step_trace_gives_three_rows() {
    let cfg = small_config(true);
    let trace = cfg.run().unwrap();
    assert_eq!(trace.steps(), 3);
    let dir = tempfile::tempdir().unwrap();
    let files = export_csv(&trace, dir.path()).unwrap();

    let header = std::fs::read_to_string(&files.residuals).unwrap();
    assert!(header.starts_with("t,residual,solver_status\n"));
    assert_eq!(data_rows(&files.residuals).len(), 3);

    let n_t: Vec<usize> = data_rows(&files.schedule)
        .iter()
        .map(|r| r[1].parse().unwrap())
        .collect();
    let expected: Vec<usize> = (0..3).map(|t| cfg.schedule.sample_size(t)).collect();
    assert_eq!(n_t, expected);

    assert_eq!(data_rows(&files.iterates).len(), 4);

    assert_eq!(files.snapshots.len(), 3);
    let snap = std::fs::read_to_string(&files.snapshots[0]).unwrap();
    assert_eq!(snap.lines().next().unwrap(), "x0,x1,label");
    assert_eq!(snap.lines().count(), cfg.schedule.sample_size(0) + 1);
}

#[test]
fn no_snapshots_means_no_directory() {
    let trace = small_config(false).run().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = export_csv(&trace, dir.path()).unwrap();
    assert!(files.snapshots.is_empty());
    assert!(!dir.path().join("snapshots").exists());
}

#[test]
fn exported_values_round_trip_exactly() {
    let trace = small_config(false).run().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("trace.jsonl");
    trace
        .write_jsonl(std::fs::File::create(&trace_path).unwrap())
        .unwrap();
    let reread = Trace::read_jsonl(std::io::BufReader::new(
        std::fs::File::open(&trace_path).unwrap(),
    ))
    .unwrap();
    let files = export_csv(&reread, dir.path().join("csv")).unwrap();

    for (row, state) in data_rows(&files.iterates).iter().zip(&trace.states) {
        let w: Vec<f64> = row[1..=2].iter().map(|v| v.parse().unwrap()).collect();
        assert_eq!(w, state.iterate);
        assert_eq!(row[3].parse::<f64>().unwrap(), state.violation_estimate);
        assert_eq!(row[4].parse::<f64>().unwrap(), state.objective);
    }
    for (row, state) in data_rows(&files.residuals).iter().zip(&trace.states) {
        assert_eq!(row[1].parse::<f64>().unwrap(), state.residual.unwrap());
    }
}
