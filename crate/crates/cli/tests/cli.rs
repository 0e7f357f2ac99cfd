use std::process::{Command, Output};

use nsnewton_cli::RunRecord;
use serde_json::Value;
use tempfile::TempDir;

fn nsnewton(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsnewton"))
        .args(args)
        .env_remove("NSNEWTON_LOG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn record(out: &Output) -> RunRecord {
    serde_json::from_slice(&out.stdout).expect("run record")
}

#[test]
fn solve_abs_converges_in_one_step() {
    let out = nsnewton(&[
        "solve",
        "--problem",
        "abs1d",
        "--method",
        "graphical",
        "--x0",
        "0.5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = record(&out);
    assert!(r.converged());
    assert_eq!(r.trace.iterations, 1);
    assert_eq!(r.trace.final_iterate, vec![0.0]);
    assert_eq!(r.schema_version, nsnewton_cli::SCHEMA_VERSION);
}

#[test]
fn bsub_and_graphical_agree_on_abs() {
    let g = record(&nsnewton(&[
        "solve",
        "--problem",
        "abs1d",
        "--method",
        "graphical",
        "--x0",
        "0.5",
        "--tol",
        "1e-10",
    ]));
    let b = record(&nsnewton(&[
        "solve",
        "--problem",
        "abs1d",
        "--method",
        "bsub",
        "--x0",
        "0.5",
        "--tol",
        "1e-10",
    ]));
    assert_eq!(g.trace.iterates, b.trace.iterates);
}

#[test]
fn staircase_from_0_6_leaves_the_domain() {
    let out = nsnewton(&[
        "solve",
        "--problem",
        "staircase",
        "--method",
        "graphical",
        "--x0",
        "0.6",
        "--root",
        "0",
    ]);
    assert_eq!(code(&out), 2);
    let v = json(&out);
    let msg = v["trace"]["termination"]["Diverged"]
        .as_str()
        .expect("diverged");
    assert!(msg.contains("domain"), "{msg}");
    assert!(v["rate"].is_null());
}

#[test]
fn staircase_from_0_1_is_superlinear() {
    let out = nsnewton(&[
        "solve",
        "--problem",
        "staircase",
        "--x0",
        "0.1",
        "--root",
        "0",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["rate"]["superlinear"], Value::Bool(true));
}

#[test]
fn usage_errors_exit_1() {
    for args in [
        &["solve", "--problem", "nope"][..],
        &["solve", "--problem", "abs1d", "--method", "newton"],
        &["solve", "--problem", "abs1d", "--x0", "0.5,x"],
        &["solve", "--problem", "ncp_min_2d", "--x0", "0.5"],
        &["solve", "--x0", "0.5"],
        &["solve", "--problem", "xsin1x"],
        &["solve", "--problem", "abs1d", "--max-iter", "0"],
        &["check", "--problem", "abs1d"],
        &["frobnicate"],
    ] {
        let out = nsnewton(args);
        assert_eq!(code(&out), 1, "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(code(&nsnewton(&["--help"])), 0);
}

#[test]
fn csv_trace_has_one_row_per_iterate() {
    let out = nsnewton(&["solve", "--problem", "smooth2d", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "k,x1,x2,residual_norm,step_norm,element_id,membership_residual,error"
    );
    let r = record(&nsnewton(&["solve", "--problem", "smooth2d"]));
    assert_eq!(lines.len(), r.trace.iterates.len() + 1);
    // 17 significant digits reproduce the iterates bit for bit
    for (line, x) in lines[1..].iter().zip(&r.trace.iterates) {
        let cols: Vec<f64> = line
            .split(',')
            .skip(1)
            .take(2)
            .map(|c| c.parse().unwrap())
            .collect();
        assert_eq!(&cols, x);
    }
}

#[test]
fn output_is_deterministic_and_out_writes_a_file() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("run.json");
    let args = ["solve", "--problem", "affabs_10", "--method", "clarke"];
    let first = nsnewton(&args);
    let second = nsnewton(&args);
    assert_eq!(first.stdout, second.stdout);
    let mut with_out = args.to_vec();
    with_out.extend(["--out", path.to_str().unwrap()]);
    let out = nsnewton(&with_out);
    assert!(out.stdout.is_empty());
    assert_eq!(std::fs::read(&path).unwrap(), first.stdout);
}

#[test]
fn timestamps_only_on_request() {
    let plain = json(&nsnewton(&["solve", "--problem", "abs1d"]));
    assert!(plain["timestamps"].is_null());
    let stamped = json(&nsnewton(&["solve", "--problem", "abs1d", "--timestamps"]));
    assert!(stamped["timestamps"]["started_unix_ms"].as_u64().unwrap() > 0);
}

#[test]
fn config_file_fills_missing_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# defaults\nproblem = absaff1d\nx0 = 2\nmethod = bsub\nmax-iter = 1\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let r = record(&nsnewton(&["--config", c, "solve"]));
    assert_eq!(
        (r.problem.as_str(), r.method.name(), r.x0.clone()),
        ("absaff1d", "bsub", vec![2.0])
    );
    assert_eq!(r.config.max_iter, 1);
    let r = record(&nsnewton(&[
        "solve", "--config", c, "--method", "clarke", "--x0", "-1",
    ]));
    assert_eq!((r.method.name(), r.x0.clone()), ("clarke", vec![-1.0]));
}

#[test]
fn analyze_abs_at_the_kink() {
    let out = nsnewton(&["analyze", "--problem", "abs1d", "--point", "0"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["bsub"], serde_json::json!([[[-1.0]], [[1.0]]]));
    let up = &v["directions"][0];
    assert_eq!(up["direction"], serde_json::json!([1.0]));
    assert_eq!(up["clarke"]["kind"], "segment");
    assert_eq!(up["clarke"]["points"], serde_json::json!([[-1.0], [1.0]]));
    assert_eq!(up["dirderiv"]["kind"], "singleton");
    assert_eq!(up["dirderiv"]["points"], serde_json::json!([[1.0]]));
    assert_eq!(v["regularity_summary"], "necessary-holds-sufficient-fails");
}

#[test]
fn analyze_xsin1x_at_zero() {
    let v = json(&nsnewton(&[
        "analyze",
        "--problem",
        "xsin1x",
        "--point",
        "0",
    ]));
    assert_eq!(v["directionally_bounded"], Value::Bool(true));
    assert_eq!(v["directionally_differentiable"], Value::Bool(false));
    assert!(v["bsub"].is_null());
}

#[test]
fn analyze_staircase_at_a_quarter() {
    let v = json(&nsnewton(&[
        "analyze",
        "--problem",
        "staircase",
        "--point",
        "0.25",
        "--direction",
        "1",
    ]));
    let dd = &v["directions"][0]["dirderiv"];
    assert_eq!(dd["kind"], "segment");
    assert_eq!(dd["points"], serde_json::json!([[0.75], [1.0]]));
}

#[test]
fn checks() {
    let k = nsnewton(&[
        "check",
        "--kantorovich",
        "--problem",
        "linear2x",
        "--x0",
        "1",
        "--r",
        "1",
    ]);
    assert_eq!(code(&k), 0);
    assert_eq!(json(&k)["passes"], Value::Bool(true));
    let bad = nsnewton(&[
        "check",
        "--kantorovich",
        "--problem",
        "abs1d",
        "--x0",
        "0.5",
        "--r",
        "1",
    ]);
    assert_eq!(code(&bad), 2);

    let inc = nsnewton(&[
        "check",
        "--inclusions",
        "--problem",
        "abs1d",
        "--samples",
        "50",
    ]);
    assert_eq!(code(&inc), 0);
    assert_eq!(json(&inc)["holds"], Value::Bool(true));
    assert_eq!(
        code(&nsnewton(&["check", "--inclusions", "--problem", "xsin1x"])),
        1
    );

    let h2 = json(&nsnewton(&["check", "--h2", "--problem", "nonlip2d"]));
    assert!(h2["curve"]["slope"].as_f64().unwrap() > 1.0);
}

#[test]
fn bench_runs_every_triple_in_order() {
    let out = nsnewton(&[
        "bench",
        "--problem",
        "abs1d",
        "--problem",
        "ncp_min_2d",
        "--method",
        "graphical",
        "--method",
        "clarke",
    ]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 2 * 4 + 2 * 4);
    let keys: Vec<(String, String, u64)> = rows
        .iter()
        .map(|r| {
            (
                r["problem"].as_str().unwrap().into(),
                r["method"].as_str().unwrap().into(),
                r["start"].as_u64().unwrap(),
            )
        })
        .collect();
    assert_eq!(keys[0], ("abs1d".into(), "graphical".into(), 0));
    assert_eq!(keys[4], ("abs1d".into(), "clarke".into(), 0));
    assert_eq!(keys[8], ("ncp_min_2d".into(), "graphical".into(), 0));
    assert!(rows
        .iter()
        .all(|r| r["record"]["trace"]["termination"] == "Converged"));
}
