use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pareto_filter::filterdesign::{performance_bounds, robust_gain, tradeoff_curve};
use pareto_filter::presets::example1;
use pareto_filter_cli::config::{parse_config, preset, Experiment};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pareto-filter"));
    cmd.env_remove("PARETO_FILTER_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Provenance line and parsed records.
fn parse_csv(text: &str) -> (String, Vec<String>, Vec<Vec<String>>) {
    let (first, rest) = text.split_once('\n').unwrap();
    let mut reader = csv::Reader::from_reader(rest.as_bytes());
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (first.to_string(), header, rows)
}

fn bits(cell: &str) -> u64 {
    cell.parse::<f64>().unwrap().to_bits()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const EXAMPLE1_SYSTEM: &str = r#""system": {
    "A": [[0.9, 0.0], [0.02, 0.8]],
    "C": [[0.5, -0.8], [0.0, 0.7]],
    "Q": [[0.5, 0.0], [0.0, 0.7]],
    "R": [[0.5, 0.1], [0.1, 0.8]]
}"#;

#[test]
fn tradeoff_csv_round_trips_bit_for_bit() {
    let out = stdout(&run(&["tradeoff", "--preset", "example1"]));
    let (prov, header, rows) = parse_csv(&out);
    assert!(prov.starts_with("# provenance: config_sha256="));
    assert_eq!(
        header[..5],
        ["delta", "lambda", "performance", "sensitivity", "at_cap"]
    );
    assert_eq!(rows.len(), 25);

    let sys = example1();
    let b = performance_bounds(&sys).unwrap();
    let grid: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(grid[0], b.kalman_performance);
    assert_eq!(grid[24], b.zero_gain_performance.unwrap());
    let curve = tradeoff_curve(&sys, &grid).unwrap();
    for (row, p) in rows.iter().zip(&curve) {
        assert_eq!(bits(&row[1]), p.lambda.to_bits());
        assert_eq!(bits(&row[2]), p.performance.to_bits());
        assert_eq!(bits(&row[3]), p.sensitivity.to_bits());
        assert_eq!(row[4], p.at_cap.to_string());
        let k = p.gain.matrix();
        let cells: Vec<u64> = row[5..].iter().map(|c| bits(c)).collect();
        let expected: Vec<u64> = (0..2)
            .flat_map(|i| (0..2).map(move |j| k[(i, j)].to_bits()))
            .collect();
        assert_eq!(cells, expected);
    }
}

#[test]
fn design_gamma_matches_robust_gain() {
    let out = stdout(&run(&["design", "--preset", "example1", "--gamma", "3"]));
    let (_, header, rows) = parse_csv(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "robust");
    let k = robust_gain(&example1(), 3.0).unwrap();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        assert_eq!(
            bits(&rows[0][col(&format!("k_{i}_{j}"))]),
            k.matrix()[(i, j)].to_bits()
        );
    }
}

#[test]
fn presets_carry_published_parameters() {
    let e1 = preset("example1", Experiment::Tradeoff).unwrap();
    assert_eq!(e1.system.a, vec![vec![0.9, 0.0], vec![0.02, 0.8]]);
    assert_eq!(e1.system.r, vec![vec![0.5, 0.1], vec![0.1, 0.8]]);
    let v = preset("vehicle", Experiment::ClosedloopTradeoff).unwrap();
    assert_eq!(v.parameters.lambda_robust, Some(0.307));
    assert_eq!(
        v.parameters.r_adverse,
        Some(vec![vec![2.5, 0.0], vec![0.0, 2.5]])
    );
    assert_eq!(v.system.ts, Some(1.0));
    assert!(preset("nope", Experiment::Tradeoff).is_err());
}

#[test]
fn printed_preset_parses_back_and_runs_identically() {
    let dir = tempfile::tempdir().unwrap();
    for (name, experiment) in [("example1", "tradeoff"), ("vehicle", "closedloop-tradeoff")] {
        let text = stdout(&run(&["preset", name, "--experiment", experiment]));
        let parsed = parse_config(&text).unwrap();
        let expected = preset(name, parsed.experiment).unwrap();
        assert_eq!(parsed, expected);
        std::fs::write(dir.path().join(format!("{name}.json")), text).unwrap();
    }
    let path = dir.path().join("example1.json");
    let from_file = stdout(&run(&["run", "--config", path.to_str().unwrap()]));
    let from_preset = stdout(&run(&["tradeoff", "--preset", "example1"]));
    assert_eq!(from_file, from_preset);
}

#[test]
fn malformed_configs_give_documented_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let sys = EXAMPLE1_SYSTEM;
    let cases: Vec<(&str, String, i32, &str)> = vec![
        ("syntax", "{".into(), 2, ""),
        ("empty", "".into(), 2, ""),
        ("trailing comma", format!(r#"{{"experiment": "tradeoff", {sys},}}"#), 2, ""),
        ("unknown top-level key", format!(r#"{{"experiment": "tradeoff", {sys}, "colour": 1}}"#), 3, "colour"),
        (
            "unknown system key",
            r#"{"experiment": "tradeoff", "system": {"A": [[0.5]], "C": [[1]], "Q": [[1]], "R": [[1]], "D": [[0]]}}"#.into(),
            3,
            "system",
        ),
        ("unknown parameter", format!(r#"{{"experiment": "tradeoff", {sys}, "parameters": {{"deltas": 3}}}}"#), 3, "parameters"),
        ("missing experiment", format!("{{{sys}}}"), 3, "experiment"),
        ("unknown experiment", format!(r#"{{"experiment": "optimize", {sys}}}"#), 3, "experiment"),
        (
            "missing A",
            r#"{"experiment": "tradeoff", "system": {"C": [[1]], "Q": [[1]], "R": [[1]]}}"#.into(),
            3,
            "A",
        ),
        (
            "ragged row",
            r#"{"experiment": "tradeoff", "system": {"A": [[0.5, 0], [0, 0.5, 1]], "C": [[1, 0]], "Q": [[1, 0], [0, 1]], "R": [[1]]}}"#.into(),
            3,
            "system.A[1]",
        ),
        (
            "non-square A",
            r#"{"experiment": "tradeoff", "system": {"A": [[0.5, 0]], "C": [[1, 0]], "Q": [[1, 0], [0, 1]], "R": [[1]]}}"#.into(),
            3,
            "system.A",
        ),
        (
            "C columns",
            r#"{"experiment": "tradeoff", "system": {"A": [[0.5]], "C": [[1, 0]], "Q": [[1]], "R": [[1]]}}"#.into(),
            3,
            "system.C",
        ),
        (
            "R shape",
            r#"{"experiment": "tradeoff", "system": {"A": [[0.5]], "C": [[1]], "Q": [[1]], "R": [[1, 0], [0, 1]]}}"#.into(),
            3,
            "system.R",
        ),
        (
            "string entry",
            r#"{"experiment": "tradeoff", "system": {"A": [["x"]], "C": [[1]], "Q": [[1]], "R": [[1]]}}"#.into(),
            3,
            "system.A",
        ),
        (
            "empty matrix",
            r#"{"experiment": "tradeoff", "system": {"A": [], "C": [[1]], "Q": [[1]], "R": [[1]]}}"#.into(),
            3,
            "system.A",
        ),
        (
            "indefinite Q",
            r#"{"experiment": "tradeoff", "system": {"A": [[0.5]], "C": [[1]], "Q": [[-1]], "R": [[1]]}}"#.into(),
            3,
            "",
        ),
        (
            "asymmetric R",
            r#"{"experiment": "tradeoff", "system": {"A": [[0.5, 0], [0, 0.5]], "C": [[1, 0], [0, 1]], "Q": [[1, 0], [0, 1]], "R": [[1, 0.5], [0, 1]]}}"#.into(),
            3,
            "",
        ),
        ("negative steps", format!(r#"{{"experiment": "tradeoff", {sys}, "parameters": {{"delta_steps": -1}}}}"#), 3, "delta_steps"),
        ("zero steps", format!(r#"{{"experiment": "tradeoff", {sys}, "parameters": {{"delta_steps": 0}}}}"#), 3, "delta_steps"),
        (
            "mixture weights",
            format!(
                r#"{{"experiment": "sweep", {sys}, "parameters": {{"noise": {{"nominal": {{"kind": "mixture", "components": [
                    {{"weight": 0.5, "mean": [0, 0], "cov": [[1, 0], [0, 1]]}},
                    {{"weight": 0.4, "mean": [0, 0], "cov": [[1, 0], [0, 1]]}}]}}}}}}}}"#
            ),
            3,
            "weights",
        ),
        (
            "unknown noise kind",
            format!(r#"{{"experiment": "sweep", {sys}, "parameters": {{"noise": {{"nominal": {{"kind": "laplace"}}}}}}}}"#),
            3,
            "kind",
        ),
        ("zero horizon", format!(r#"{{"experiment": "simulate", {sys}, "parameters": {{"horizon": 0}}}}"#), 3, "horizon"),
        (
            "lambda and gamma",
            format!(r#"{{"experiment": "design", {sys}, "parameters": {{"lambda": 1, "gamma": 1}}}}"#),
            3,
            "lambda",
        ),
        (
            "missing B",
            format!(r#"{{"experiment": "closedloop-tradeoff", {sys}}}"#),
            3,
            "system.B",
        ),
        ("top-level array", "[1, 2]".into(), 3, ""),
        (
            "infeasible target",
            format!(r#"{{"experiment": "tradeoff", {sys}, "parameters": {{"delta_min": 0.1, "delta_max": 2}}}}"#),
            4,
            "feasible",
        ),
    ];
    assert!(cases.len() >= 20);
    for (i, (name, body, code, needle)) in cases.iter().enumerate() {
        let path = write_config(dir.path(), &format!("case{i}.json"), body);
        let out = run(&["run", "--config", path.to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(*code),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(out.stdout.is_empty(), "{name}: wrote output");
        let record: serde_json::Value =
            serde_json::from_slice(&out.stderr).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(record["error"]["exit_code"], *code, "{name}");
        let message = record["error"]["message"].as_str().unwrap();
        assert!(message.contains(needle), "{name}: {message}");
    }
}

#[test]
fn command_line_errors() {
    assert_eq!(run(&["tradeoff"]).status.code(), Some(2));
    assert_eq!(
        run(&["tradeoff", "--preset", "example1", "--seed", "x"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        run(&["tradeoff", "--preset", "nope"]).status.code(),
        Some(3)
    );
    assert_eq!(
        run(&["tradeoff", "--preset", "example1", "--config", "x.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "closedloop-tradeoff",
            "--preset",
            "vehicle",
            "--mode",
            "best"
        ])
        .status
        .code(),
        Some(3)
    );
    assert_eq!(
        run(&["run", "--config", "/nonexistent/config.json"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "c.json",
        &format!(r#"{{"experiment": "design", {EXAMPLE1_SYSTEM}}}"#),
    );
    let out = run(&["tradeoff", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn seed_changes_monte_carlo_but_not_analytic_outputs() {
    let body = |seed: &str| {
        let sim = stdout(&run(&[
            "simulate",
            "--preset",
            "example1",
            "--trials",
            "2",
            "--horizon",
            "3000",
            "--seed",
            seed,
        ]));
        let design = stdout(&run(&[
            "design", "--preset", "example1", "--lambda", "2", "--seed", seed,
        ]));
        let (prov_s, _, sim_rows) = parse_csv(&sim);
        let (prov_d, _, design_rows) = parse_csv(&design);
        assert!(
            prov_s.contains(&format!("seed={seed} ")) && prov_d.contains(&format!("seed={seed} "))
        );
        (sim_rows, design_rows)
    };
    let (sim1, design1) = body("1");
    let (sim1b, _) = body("1");
    let (sim2, design2) = body("2");
    assert_eq!(sim1, sim1b);
    assert_ne!(sim1[0][5], sim2[0][5]);
    assert_eq!(sim1[0][6], sim2[0][6]);
    assert_eq!(design1, design2);
}

#[test]
fn output_is_written_atomically() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("curve.csv");
    let out = run(&[
        "tradeoff",
        "--preset",
        "example1",
        "--delta-steps",
        "5",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success() && out.stdout.is_empty());
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(parse_csv(&text).2.len(), 5);
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1, "temporary files left behind");

    let missing = dir.path().join("no/such/dir/out.csv");
    let out = run(&[
        "tradeoff",
        "--preset",
        "example1",
        "--out",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(5));
    assert!(!missing.exists());

    // config-relative output path
    let cfg = write_config(
        dir.path(),
        "c.json",
        &format!(r#"{{"experiment": "design", {EXAMPLE1_SYSTEM}, "output_path": "gain.csv"}}"#),
    );
    assert!(run(&["run", "--config", cfg.to_str().unwrap()])
        .status
        .success());
    assert!(dir.path().join("gain.csv").exists());
}

#[test]
fn overrides_change_the_provenance_hash() {
    let a = stdout(&run(&[
        "tradeoff",
        "--preset",
        "example1",
        "--delta-steps",
        "3",
    ]));
    let b = stdout(&run(&[
        "tradeoff",
        "--preset",
        "example1",
        "--delta-steps",
        "4",
    ]));
    let hash = |s: &str| {
        s.lines()
            .next()
            .unwrap()
            .split_whitespace()
            .nth(2)
            .unwrap()
            .to_string()
    };
    assert_ne!(hash(&a), hash(&b));
    assert_eq!(
        hash(&a),
        hash(&stdout(&run(&[
            "tradeoff",
            "--preset",
            "example1",
            "--delta-steps",
            "3"
        ])))
    );
}

#[test]
fn empirical_noise_table_loads_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("noise.csv"),
        "# perception errors\n0.5,-0.2\n-0.5,0.2\n0.1,0.9\n-0.1,-0.9\n",
    )
    .unwrap();
    let cfg = write_config(
        dir.path(),
        "sim.json",
        &format!(
            r#"{{"experiment": "simulate", {EXAMPLE1_SYSTEM},
                "parameters": {{"trials": 1, "horizon": 2000, "noise": {{"nominal": {{"kind": "empirical", "path": "noise.csv"}}}}}}}}"#
        ),
    );
    let out = stdout(&run(&["run", "--config", cfg.to_str().unwrap()]));
    let (_, _, rows) = parse_csv(&out);
    assert_eq!(rows[0][4], "empirical");

    std::fs::write(dir.path().join("noise.csv"), "0.5,-0.2,1\n").unwrap();
    assert_eq!(
        run(&["run", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn thread_cap_is_validated() {
    let ok = bin()
        .env("PARETO_FILTER_THREADS", "1")
        .args([
            "simulate",
            "--preset",
            "example1",
            "--trials",
            "1",
            "--horizon",
            "2000",
        ])
        .output()
        .unwrap();
    assert!(ok.status.success());
    let bad = bin()
        .env("PARETO_FILTER_THREADS", "zero")
        .args(["design", "--preset", "example1"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn closed_loop_tradeoff_rows() {
    let out = stdout(&run(&[
        "closedloop-tradeoff",
        "--preset",
        "vehicle",
        "--mode",
        "fix-L-lqr",
        "--delta-steps",
        "2",
    ]));
    let (_, header, rows) = parse_csv(&out);
    assert_eq!(header.len(), 6 + 8 + 8);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[0] == "fix-L-lqr" && r[5] == "true"));
    let s: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(s[1] < s[0]);
}
