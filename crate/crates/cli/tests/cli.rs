use std::process::Command;

use adn_cli::config::Task;
use adn_cli::{emit_to_string, parse_config, run, ConfigError, Format, ResultRow, CSV_HEADER};

const CHANNEL: &str = r#"{"scenario": {"preset": "channel", "params": {"L": 2, "n": 2}}, "task": "simulate", "trials": 4000, "seed": 5}"#;

fn strip_walltime(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string()).collect()
}

#[test]
fn minimal_config_parses() {
    let cfg = parse_config(r#"{"scenario": {"preset": "channel"}}"#).unwrap();
    assert_eq!(cfg.task, Task::Bound);
    assert_eq!(cfg.seed, 0);
    assert!(cfg.scenario.unwrap().bundle().is_ok());
}

#[test]
fn bad_kernel_row_is_named() {
    let text = r#"{"scenario": {"inline": {"nodes": [
        {"y": 2, "channel": [[0.5, 0.5]], "x": 2, "output": [[1, 0], [0.6, 0.3]]}
    ], "error_set": {"type": "empty"}}}}"#;
    match parse_config(text) {
        Err(ConfigError::Schema { path, message }) => {
            assert_eq!(path, "scenario.inline.nodes[0].output[1]");
            assert!(message.contains("0.9"), "{message}");
        }
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn unknown_fields_and_syntax_errors_are_located() {
    match parse_config(r#"{"scenario": {"preset": "channel", "params": {"K": 3}}}"#) {
        Err(ConfigError::Schema { path, .. }) => assert!(path.starts_with("scenario.params"), "{path}"),
        other => panic!("{other:?}"),
    }
    match parse_config("{\n  \"task\": \"bound\",\n  \"seed\": ,\n}") {
        Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_config(r#"{"scenario": {"preset": "nope"}}"#), Err(ConfigError::Schema { .. })));
}

#[test]
fn sweep_keeps_the_listed_order() {
    let cfg = parse_config(r#"{"scenario": {"preset": "channel", "params": {"n": 2}}, "sweep": {"param": "L", "values": [16, 2, 8, 4]}}"#).unwrap();
    let plan = cfg.plan().unwrap();
    let ls: Vec<_> = plan.iter().map(|p| p.scenario.as_ref().unwrap().params.l.unwrap()).collect();
    assert_eq!(ls, [16, 2, 8, 4]);
    let out = run(&cfg).unwrap();
    let params: Vec<_> = out.rows.iter().map(|r| r.params.as_str()).collect();
    assert_eq!(params, ["L=16;n=2", "L=2;n=2", "L=8;n=2", "L=4;n=2"]);
}

#[test]
fn bound_task_leaves_empirical_fields_empty() {
    let out = run(&parse_config(r#"{"scenario": {"preset": "gelfand-pinsker"}, "task": "bound"}"#).unwrap()).unwrap();
    assert_eq!(out.rows.len(), 1);
    let r = &out.rows[0];
    assert!(r.empirical_error.is_none() && r.ci_low.is_none() && r.trials.is_none() && r.margin.is_none());
    assert!(r.bound.unwrap() > 0.0);
    assert_eq!(out.exit_code(), 0);
}

#[test]
fn zero_trials_is_a_usage_error() {
    let cfg = parse_config(r#"{"scenario": {"preset": "channel"}, "task": "simulate", "trials": 0}"#).unwrap();
    assert!(matches!(run(&cfg), Err(ConfigError::Usage(_))));
}

#[test]
fn uniform_rank_check_flags_nothing() {
    let cfg = parse_config(r#"{"task": "verify-pml", "trials": 100000, "seed": 1, "verify": {"p": [0.25, 0.25, 0.25, 0.25], "q": [0.25, 0.25, 0.25, 0.25]}}"#).unwrap();
    let out = run(&cfg).unwrap();
    assert_eq!(out.rows.len(), 4);
    assert!(out.violations.is_empty());
    // with P = Q the selected element is always first under Q
    assert!(out.rows.iter().all(|r| r.empirical_error == Some(1.0) && r.bound == Some(2.0)));
}

#[test]
fn simulate_rows_are_consistent() {
    let out = run(&parse_config(CHANNEL).unwrap()).unwrap();
    let r = &out.rows[0];
    assert_eq!(r.trials, Some(4000));
    let (e, b, m) = (r.empirical_error.unwrap(), r.bound.unwrap(), r.margin.unwrap());
    assert!((b - e - m).abs() < 1e-11);
    assert!(r.ci_low.unwrap() <= e && e <= r.ci_high.unwrap());
    assert_eq!(out.exit_code(), 0);
}

#[test]
fn csv_header_and_round_trip() {
    let rows = run(&parse_config(CHANNEL).unwrap()).unwrap().rows;
    let text = emit_to_string(&rows, Format::Csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    let back: Vec<ResultRow> = csv::Reader::from_reader(text.as_bytes()).deserialize().collect::<Result<_, _>>().unwrap();
    assert_eq!(back, rows);
    let json = emit_to_string(&rows, Format::Json).unwrap();
    let back: Vec<ResultRow> = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rows);
}

#[test]
fn identical_configs_give_identical_csv() {
    let cfg = parse_config(CHANNEL).unwrap();
    let a = emit_to_string(&run(&cfg).unwrap().rows, Format::Csv).unwrap();
    let b = emit_to_string(&run(&cfg).unwrap().rows, Format::Csv).unwrap();
    assert_eq!(strip_walltime(&a), strip_walltime(&b));
}

#[test]
fn inline_network_matches_the_preset() {
    // one uniform bit sent over BSC(0.11) with a two-message codebook
    let text = r#"{"scenario": {"inline": {"name": "bit", "nodes": [
        {"y": 2, "channel": [[0.5, 0.5]], "u": 4, "aux": [[0.5, 0, 0.5, 0], [0, 0.5, 0, 0.5]],
         "x": 2, "output": [[1, 0], [1, 0], [0, 1], [0, 1], [1, 0], [1, 0], [0, 1], [0, 1]]},
        {"y": 2, "inputs": ["x1"], "channel": [[0.89, 0.11], [0.11, 0.89]], "decode": [1],
         "x": 2, "output": [[1, 0], [0, 1], [1, 0], [0, 1], [1, 0], [0, 1], [1, 0], [0, 1]]}
    ], "error_set": {"type": "message-mismatch", "pairs": [[{"node": 1, "var": "y"}, {"node": 2, "var": "x"}]]}}}}"#;
    let cfg = parse_config(text).unwrap();
    let b = cfg.scenario.as_ref().unwrap().bundle().unwrap();
    assert_eq!(b.spec.nodes(), 2);
    assert_eq!(b.aux.nodes[1].decode, [0]);
    let inline = run(&cfg).unwrap().rows[0].bound.unwrap();
    let preset = run(&parse_config(r#"{"scenario": {"preset": "channel"}}"#).unwrap()).unwrap().rows[0].bound.unwrap();
    assert!((inline - preset).abs() < 1e-10, "{inline} vs {preset}");
}

#[test]
fn binary_reports_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, CHANNEL).unwrap();
    let out_path = dir.path().join("rows.csv");
    let bin = env!("CARGO_BIN_EXE_adn");
    let status = Command::new(bin).args(["simulate", "--config"]).arg(&good).arg("--out").arg(&out_path).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(std::fs::read_to_string(&out_path).unwrap().starts_with(CSV_HEADER));

    let status = Command::new(bin).args(["simulate", "--trials", "0", "--config"]).arg(&good).output().unwrap();
    assert_eq!(status.status.code(), Some(1));
    assert!(status.stdout.is_empty());

    let capped = Command::new(bin).args(["bound", "--config"]).arg(&good).env("ADN_ATOM_CAP", "4").output().unwrap();
    assert_eq!(capped.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&capped.stderr).contains("cap"));
}
