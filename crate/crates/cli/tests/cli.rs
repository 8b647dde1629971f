use std::path::{Path, PathBuf};
use std::process::Command;

use optrack_cli::config::{DesiredConfig, Method, Weight};
use optrack_cli::output::sweep_csv;
use optrack_cli::{
    emit_outputs, epsilon_sweep, open_loop, parse_config, parse_config_str, run_experiment, sampled_feedback,
    trajectory_csv, CliError,
};
use optrack_core::{DesiredTrajectory, Error};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn fig1_text() -> String {
    std::fs::read_to_string(fixture("pendulum_fig1.json")).unwrap()
}

fn edited(f: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(&fig1_text()).unwrap();
    f(&mut v);
    v.to_string()
}

fn optrack(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_optrack")).args(args).output().unwrap()
}

#[test]
fn fixtures_parse() {
    for name in ["pendulum_fig1.json", "fhn.json", "generic2d.json", "pendulum_realizable.json"] {
        parse_config(&fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    let cfg = parse_config(&fixture("pendulum_fig1.json")).unwrap();
    assert_eq!(cfg.method, Method::Composite);
    assert_eq!(cfg.cost.weight, Weight::Diagonal(vec![1.0, 1.0]));
    assert!(matches!(cfg.desired, DesiredConfig::Preset(_)));
    assert_eq!(cfg.grid().len(), 1001);
}

#[test]
fn parse_errors_report_position() {
    match parse_config_str("{\n  \"schema\": 1,\n  oops\n}") {
        Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let unknown = edited(|v| v["colour"] = "blue".into());
    assert!(matches!(parse_config_str(&unknown), Err(CliError::Parse { .. })));
}

#[test]
fn invalid_fields_are_config_errors() {
    let cases = [
        edited(|v| v["schema"] = 2.into()),
        edited(|v| v["time"]["t1"] = (-1.0).into()),
        edited(|v| v["time"]["dt"] = 0.0.into()),
        edited(|v| v["cost"]["epsilon"] = (-1.0).into()),
        edited(|v| v["cost"]["epsilon"] = 0.0.into()),
        edited(|v| v["model"]["name"] = "unicycle".into()),
        edited(|v| v["boundary"] = serde_json::json!({ "x0": [0.0, 0.0] })),
        edited(|v| v["cost"]["weight"] = serde_json::json!([[1.0, 2.0], [2.0, 1.0]])),
    ];
    for text in cases {
        let err = parse_config_str(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
    }
    let eps0 = edited(|v| v["cost"]["epsilon"] = 0.0.into());
    let err = parse_config_str(&eps0).unwrap_err();
    assert!(err.to_string().contains("exact0"), "{err}");
    let ok = edited(|v| {
        v["cost"]["epsilon"] = 0.0.into();
        v["method"] = "exact0".into();
    });
    parse_config_str(&ok).unwrap();
}

#[test]
fn dimension_mismatch_names_the_field() {
    let text = edited(|v| v["boundary"]["x1"] = serde_json::json!([1.0, 2.0, 3.0]));
    match parse_config_str(&text) {
        Err(CliError::DimensionMismatch { field, expected, got }) => {
            assert_eq!((field.as_str(), expected, got), ("boundary.x1", 2, 3));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn boundary_from_desired() {
    let text = edited(|v| v["boundary"] = serde_json::json!({ "x0": [0.5, 0.0], "from_desired": true }));
    let cfg = parse_config_str(&text).unwrap();
    let (p, _) = cfg.build_problem().unwrap();
    assert_eq!(p.x0.as_slice(), &[0.5, 0.0]);
    assert_eq!(p.x1, p.desired.value(1.0));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let fig1 = fixture("pendulum_fig1.json");
    let ok = optrack(&["solve", "--config", fig1.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{").unwrap();
    assert_eq!(optrack(&["solve", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(optrack(&["check", "--config", "/nonexistent/x.json"]).status.code(), Some(3));

    let err = CliError::Solver(Error::NotLinearizable("Q R not affine".into()));
    assert_eq!(err.exit_code(), 4);
    assert_eq!(err.code(), "not_linearizable");
}

#[test]
fn outputs_have_expected_layout() {
    let cfg = parse_config(&fixture("pendulum_fig1.json")).unwrap();
    let out = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_outputs(&out, dir.path()).unwrap();
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
    assert_eq!(names, ["trajectory.csv", "metrics.json", "report.json"]);

    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x1,x2,lam1,lam2,u1");
    assert_eq!(csv.lines().count(), 1002);
    assert!(!csv.contains('\r'));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(first[..3], [0.0, -1.0, -1.0]);

    // Values round-trip exactly.
    let traj = out.artifact("trajectory").unwrap();
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(last[1], traj.x[traj.len() - 1][0]);
    assert_eq!(last[5], traj.u[traj.len() - 1][0]);

    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["left_decay_rate"], 1.25);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["omega_constant"], true);
}

#[test]
fn exact_limit_writes_kicks() {
    let mut cfg = parse_config(&fixture("pendulum_fig1.json")).unwrap();
    cfg.method = Method::Exact0;
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.metrics["kicks"], 2.0);
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(&out, dir.path()).unwrap();
    let kicks: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("kicks.json")).unwrap()).unwrap();
    assert_eq!(kicks.as_array().unwrap().len(), 2);
    assert_eq!(kicks[0]["time"], 0.0);
}

#[test]
fn outer_method_has_no_layers() {
    let mut cfg = parse_config(&fixture("pendulum_fig1.json")).unwrap();
    cfg.method = Method::Outer;
    let out = run_experiment(&cfg).unwrap();
    let traj = out.artifact("trajectory").unwrap();
    // The outer velocity starts away from the prescribed boundary value.
    assert!((traj.x[0][1] + 1.0).abs() > 0.1);
    let csv = trajectory_csv(traj);
    assert!(csv.starts_with("t,x1,x2,lam1,lam2,u1\n"));
}

#[test]
fn solve_is_deterministic() {
    let cfg = parse_config(&fixture("generic2d.json")).unwrap();
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(trajectory_csv(a.artifact("trajectory").unwrap()), trajectory_csv(b.artifact("trajectory").unwrap()));
    assert_eq!(a.metrics, b.metrics);
}

#[test]
fn sweep_rows_follow_the_layer_scalings() {
    let cfg = parse_config(&fixture("pendulum_fig1.json")).unwrap();
    let eps = [1e-2, 1e-3, 1e-4];
    let rows = epsilon_sweep(&cfg, &eps).unwrap();
    assert_eq!(rows.iter().map(|r| r.epsilon).collect::<Vec<_>>(), eps);
    for w in rows.windows(2) {
        let width_ratio = w[0].layer_width.unwrap() / w[1].layer_width.unwrap();
        assert!((width_ratio / 10.0 - 1.0).abs() <= 0.2, "width ratio {width_ratio}");
        let peak_ratio = w[1].u_peak / w[0].u_peak;
        assert!((5.0..=20.0).contains(&peak_ratio), "peak ratio {peak_ratio}");
        assert!(w[1].cost < w[0].cost);
    }
    let csv = sweep_csv(&rows);
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("epsilon,layer_width,u_peak,interior_deviation,cost\n"));

    assert!(matches!(epsilon_sweep(&cfg, &[1e-3]), Err(CliError::Field { .. })));
    assert!(matches!(epsilon_sweep(&cfg, &[1e-3, 0.0]), Err(CliError::Field { .. })));
}

#[test]
fn feedback_without_disturbance_tracks_the_plan() {
    let cfg = parse_config(&fixture("pendulum_fig1.json")).unwrap();
    let plan = run_experiment(&cfg).unwrap();
    let planned = plan.artifact("trajectory").unwrap();
    let open = open_loop(&cfg, None).unwrap();
    assert_eq!(open.len(), planned.len());
    // The composite is accurate to O(eps), so replaying its control in the plant
    // departs from the planned state by about that much inside the first layer.
    let eps = cfg.cost.epsilon;
    let k = open.len() / 2;
    assert!((&open.x[k] - &planned.x[k]).amax() < 5.0 * eps, "{}", (&open.x[k] - &planned.x[k]).amax());

    let fb = sampled_feedback(&cfg, 0.1, None).unwrap();
    assert_eq!(fb.sample_times.len(), 10);
    assert!((&fb.trajectory.x[k] - &planned.x[k]).amax() < 5.0 * eps);
}

#[test]
fn feedback_rejects_a_constant_disturbance() {
    let cfg = parse_config(&fixture("pendulum_fig1.json")).unwrap();
    let d = DesiredTrajectory::constant(&[0.0, 2.0]);
    let open = open_loop(&cfg, Some(&d)).unwrap();
    let closed = sampled_feedback(&cfg, 0.05, Some(&d)).unwrap().trajectory;
    let plan = run_experiment(&cfg).unwrap();
    let planned = plan.artifact("trajectory").unwrap();
    let drift = |traj: &optrack_core::TrajectorySolution| {
        (0..traj.len()).filter(|&k| traj.grid[k] <= 0.95).map(|k| (&traj.x[k] - &planned.x[k]).amax()).fold(0.0, f64::max)
    };
    assert!(drift(&closed) < drift(&open), "closed {} open {}", drift(&closed), drift(&open));
}

#[test]
fn feedback_argument_checks() {
    let cfg = parse_config(&fixture("pendulum_fig1.json")).unwrap();
    assert!(matches!(sampled_feedback(&cfg, 1e-4, None), Err(CliError::Field { .. })));
    let d = DesiredTrajectory::constant(&[1.0]);
    assert!(matches!(sampled_feedback(&cfg, 0.1, Some(&d)), Err(CliError::DimensionMismatch { .. })));

    let short = edited(|v| {
        v["cost"]["epsilon"] = 0.2.into();
        v["time"]["dt"] = 0.01.into();
    });
    let cfg = parse_config_str(&short).unwrap();
    let err = sampled_feedback(&cfg, 0.1, None).unwrap_err();
    assert!(matches!(err, CliError::Solver(Error::HorizonTooShort { .. })), "{err:?}");
    assert_eq!(err.exit_code(), 3);
}
