use mddest::montecarlo::{
    emit_table, parse_csv_table, run_experiment, run_replication, EstimatorKind, ExperimentConfig, McSummary,
    TableFormat,
};
use mddest::OptimizerConfig;

fn config(dgp: u8, n: Vec<usize>, replications: usize, estimators: Vec<EstimatorKind>) -> ExperimentConfig {
    ExperimentConfig {
        dgp,
        n,
        replications,
        estimators,
        seed: 2024,
        burn_in: 200,
        optimizer: OptimizerConfig::default(),
    }
}

#[test]
fn two_replications_give_the_two_point_sd() {
    let cfg = config(1, vec![60], 2, vec![EstimatorKind::Mdd]);
    let cells = run_experiment(&cfg).unwrap();
    let cell = &cells[0];
    let (a, b) = (cell.outcomes[0].theta[0], cell.outcomes[1].theta[0]);
    let p = &cell.summary.params[0];
    assert_eq!(cell.summary.converged, 2);
    assert!((p.esd - (a - b).abs() / 2f64.sqrt()).abs() < 1e-15);
    assert!((p.bias - ((a + b) / 2.0 - 1.0)).abs() < 1e-15);
    let se = (cell.outcomes[0].std_errors[0] + cell.outcomes[1].std_errors[0]) / 2.0;
    assert!((p.asd - se).abs() < 1e-15);
}

#[test]
fn outcomes_match_single_replication_runs() {
    let cfg = config(3, vec![50], 3, vec![EstimatorKind::Mdd, EstimatorKind::Dl]);
    let cells = run_experiment(&cfg).unwrap();
    for r in 0..3 {
        let direct = run_replication(&cfg, 50, r);
        assert_eq!(cells[0].outcomes[r], direct[0]);
        assert_eq!(cells[1].outcomes[r], direct[1]);
    }
}

#[test]
fn cells_follow_sample_size_then_estimator() {
    let cfg = config(1, vec![50, 100, 200], 2, vec![EstimatorKind::Mdd, EstimatorKind::Dl]);
    let cells = run_experiment(&cfg).unwrap();
    let keys: Vec<(usize, &str)> = cells.iter().map(|c| (c.summary.n, c.summary.estimator.tag())).collect();
    assert_eq!(
        keys,
        [(50, "mdd"), (50, "dl"), (100, "mdd"), (100, "dl"), (200, "mdd"), (200, "dl")]
    );
    let summaries: Vec<McSummary> = cells.iter().map(|c| c.summary.clone()).collect();
    let csv = emit_table(&summaries, TableFormat::Csv).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn intercept_design_emits_one_row_per_parameter() {
    let cfg = config(11, vec![60], 2, vec![EstimatorKind::Mdd]);
    let summaries: Vec<McSummary> = run_experiment(&cfg).unwrap().into_iter().map(|c| c.summary).collect();
    let csv = emit_table(&summaries, TableFormat::Csv).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("mdd,theta10,60,"));
    assert!(rows[1].starts_with("mdd,theta20,60,"));
}

#[test]
fn tables_round_trip() {
    let cfg = config(13, vec![40, 60], 3, vec![EstimatorKind::Mdd, EstimatorKind::Dl]);
    let summaries: Vec<McSummary> = run_experiment(&cfg).unwrap().into_iter().map(|c| c.summary).collect();
    let csv = emit_table(&summaries, TableFormat::Csv).unwrap();
    assert_eq!(parse_csv_table(&csv).unwrap(), summaries);
    let json = emit_table(&summaries, TableFormat::Json).unwrap();
    let back: Vec<McSummary> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, summaries);
    let grid = emit_table(&summaries, TableFormat::TextGrid).unwrap();
    assert!(grid.contains("n=40") && grid.contains("n=60") && grid.contains("theta22"));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = config(2, vec![50], 8, vec![EstimatorKind::Mdd, EstimatorKind::Dl]);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_experiment(&cfg).unwrap())
            .into_iter()
            .map(|c| (c.summary, c.outcomes))
            .collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn config_schema_rejects_unknown_and_missing_fields() {
    let ok: ExperimentConfig =
        serde_json::from_str(r#"{"dgp": 1, "n": [50], "replications": 10, "estimators": ["mdd", "dl"]}"#).unwrap();
    assert_eq!(ok.burn_in, 200);
    ok.validate().unwrap();
    let missing = serde_json::from_str::<ExperimentConfig>(r#"{"n": [50], "replications": 10, "estimators": ["mdd"]}"#)
        .unwrap_err();
    assert!(missing.to_string().contains("dgp"), "{missing}");
    assert!(serde_json::from_str::<ExperimentConfig>(
        r#"{"dgp": 1, "n": [50], "replications": 10, "estimators": ["mdd"], "reps": 3}"#
    )
    .is_err());
    let mut bad = ok.clone();
    bad.replications = 1;
    assert!(bad.validate().is_err());
    bad = ok;
    bad.n = vec![5];
    assert!(bad.validate().is_err());
}
