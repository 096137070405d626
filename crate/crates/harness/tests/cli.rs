use std::path::Path;
use std::process::{Command, Output};

fn acbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acbench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_run(out: &Path, method: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--env",
        "finite",
        "--method",
        method,
        "--out",
        out.to_str().unwrap(),
        "--set",
        "iterations=40",
    ];
    args.extend_from_slice(extra);
    acbench(&args)
}

#[test]
fn run_writes_one_file_per_seed_plus_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), "td0", &["--seeds", "1..10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 11);
    for seed in 1..=10 {
        assert!(names.contains(&format!("finite_td0_seed{seed}.csv")));
    }
    assert!(names.contains(&"finite_td0_aggregate.csv".to_string()));
}

#[test]
fn trace_header_and_aggregate_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), "gtd", &["--seeds", "1,2", "--set", "eval_every=10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("finite_gtd_seed1.csv")).unwrap();
    assert_eq!(
        trace.lines().next().unwrap(),
        "k,grad_proxy,eval_reward,theta_norm,xi_norm,critic_steps,seed"
    );
    assert_eq!(trace.lines().count(), 1 + 40);

    let agg = std::fs::read_to_string(dir.path().join("finite_gtd_aggregate.csv")).unwrap();
    let mut lines = agg.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,k,n,grad_proxy_mean,grad_proxy_stderr,eval_reward_mean,eval_reward_stderr"
    );
    let rows: Vec<&str> = lines.collect();
    // evaluations at k = 10, 20, 30, 40
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.starts_with("gtd,") && r.split(',').nth(2) == Some("2")));
}

#[test]
fn aggregate_subcommand_reproduces_run_output() {
    let dir = tempfile::tempdir().unwrap();
    assert!(small_run(dir.path(), "agtd", &["--seeds", "3..4"]).status.success());
    let again = dir.path().join("again.csv");
    let out = acbench(&[
        "aggregate",
        dir.path().join("finite_agtd_seed3.csv").to_str().unwrap(),
        dir.path().join("finite_agtd_seed4.csv").to_str().unwrap(),
        "--method",
        "agtd",
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(&again).unwrap(),
        std::fs::read(dir.path().join("finite_agtd_aggregate.csv")).unwrap()
    );
}

#[test]
fn plot_has_one_legend_entry_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let mut aggregates = Vec::new();
    for method in ["td0", "gtd"] {
        assert!(small_run(dir.path(), method, &["--seeds", "1"]).status.success());
        aggregates.push(dir.path().join(format!("finite_{method}_aggregate.csv")));
    }
    let plots = dir.path().join("plots");
    let mut args = vec!["plot".to_string()];
    args.extend(aggregates.iter().map(|p| p.display().to_string()));
    args.extend(["--out".to_string(), plots.display().to_string()]);
    let out = acbench(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["grad_proxy.svg", "eval_reward.svg"] {
        let svg = std::fs::read_to_string(plots.join(name)).unwrap();
        assert!(svg.contains("TD(0)") && svg.contains("GTD"));
        assert!(!svg.contains("A-GTD"));
    }
}

#[test]
fn plot_without_inputs_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = acbench(&["plot", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = small_run(dir.path(), "td0", &["--set", "no_such_key=1"]);
    assert_eq!(bad_key.status.code(), Some(1));

    let bad_value = small_run(dir.path(), "td0", &["--set", "critic_radius=-3"]);
    assert_eq!(bad_value.status.code(), Some(1));

    let missing = acbench(&["aggregate", "/nonexistent/trace.csv", "--out", dir.path().join("a.csv").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(3));

    let diverge = small_run(
        dir.path(),
        "td0",
        &["--seeds", "1", "--set", "critic_schedule=constant:1e300", "--set", "critic_radius=inf"],
    );
    assert_eq!(diverge.status.code(), Some(2), "{}", String::from_utf8_lossy(&diverge.stderr));
}
