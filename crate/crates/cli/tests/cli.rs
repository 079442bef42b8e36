use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_qreduce");

const SMALL_RUN: &str = "\
# short reference run
omega = 0.5
nu = 0.5
g = 4
lambda = 0.2
alpha_re = 4
t_max = 0.5
dt = 1e-4
sample_interval = 0.05
n_paths = 3
seed = 5
";

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("QREDUCE_OUT_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.conf"), config).unwrap();
    dir
}

#[test]
fn trajectory_writes_all_columns() {
    let dir = setup(SMALL_RUN);
    let out = run(dir.path(), &["trajectory", "run.conf", "out_dir=res"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("res/trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,re_a,im_a,var_a,re_da2,im_da2,sx,cov_sx_field,norm_drift,trunc_top5"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0][0], 0.0);
    assert_eq!(rows[0][1], 4.0);
    assert!((rows[10][0] - 0.5).abs() < 1e-12);
    assert!(rows.iter().all(|r| r.len() == 10));
    assert!(!text.contains('\r'));
}

#[test]
fn ensemble_outputs_and_summary() {
    let dir = setup(SMALL_RUN);
    let out = run(
        dir.path(),
        &["ensemble", "run.conf", "out_dir=res", "n_paths=100", "t_max=0.3"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let paths = fs::read_to_string(dir.path().join("res/paths.csv")).unwrap();
    let lines: Vec<&str> = paths.lines().collect();
    assert_eq!(lines[0], "path_index,stopping_time,outcome");
    assert_eq!(lines.len(), 101);
    for (i, line) in lines[1..].iter().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], i.to_string());
        assert!(cols[2].is_empty() || cols[2] == "1" || cols[2] == "-1");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("res/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_paths"], 100);
    let counted = summary["n_plus"].as_u64().unwrap()
        + summary["n_minus"].as_u64().unwrap()
        + summary["n_unreduced"].as_u64().unwrap();
    assert_eq!(counted, 100);
    let kde = fs::read_to_string(dir.path().join("res/kde.csv")).unwrap();
    assert!(kde.starts_with("x,density\n"));
}

#[test]
fn zero_paths_is_rejected_before_any_output() {
    let dir = setup(SMALL_RUN);
    let out = run(dir.path(), &["ensemble", "run.conf", "n_paths=0", "out_dir=res"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("res").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = setup(SMALL_RUN);
    assert_eq!(
        run(dir.path(), &["trajectory", "run.conf", "gamma=1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(dir.path(), &["trajectory", "run.conf", "dt=abc"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(dir.path(), &["trajectory", "run.conf", "threshold=1.5"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(dir.path(), &["sweep", "run.conf"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["bogus", "run.conf"]).status.code(), Some(2));
}

#[test]
fn io_errors_exit_4() {
    let dir = setup(SMALL_RUN);
    assert_eq!(
        run(dir.path(), &["trajectory", "missing.conf"]).status.code(),
        Some(4)
    );
    fs::write(dir.path().join("blocker"), "").unwrap();
    let out = run(dir.path(), &["trajectory", "run.conf", "out_dir=blocker/sub"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn truncation_exits_3_after_writing_the_trajectory() {
    let dir = setup(SMALL_RUN);
    let out = run(
        dir.path(),
        &[
            "trajectory",
            "run.conf",
            "alpha_re=2",
            "n_max=25",
            "t_max=2",
            "out_dir=res",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("res/trajectory.csv").exists());
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = setup(SMALL_RUN);
    let out = Command::new(BIN)
        .args(["trajectory", "run.conf", "t_max=0.1"])
        .current_dir(dir.path())
        .env("QREDUCE_OUT_DIR", dir.path().join("from_env"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from_env/trajectory.csv").exists());
}

#[test]
fn sweep_writes_table_and_fit() {
    let dir = setup(SMALL_RUN);
    let out = run(
        dir.path(),
        &[
            "sweep",
            "run.conf",
            "omega=0",
            "nu=0",
            "g_list=4,6,8",
            "n_paths=2",
            "halt_after=0.05",
            "out_dir=res",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("res/sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "g,n_paths,n_reduced,mean_tau,std_tau,stderr_tau");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("4,2,"));
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("res/fit.json")).unwrap()).unwrap();
    assert_eq!(fit["points"].as_array().unwrap().len(), 3);
    assert!(fit["k_fixed_exponent"].as_f64().unwrap() > 0.0);
}

#[test]
fn oracle_check_passes_and_reports() {
    let dir = setup("");
    let out = run(dir.path(), &["oracle-check", "run.conf", "out_dir=res"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("res/report.json")).unwrap()).unwrap();
    assert_eq!(report["all_pass"], true);
    assert_eq!(report["checks"].as_array().unwrap().len(), 6);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = setup(SMALL_RUN);
    for (name, workers) in [("a", "1"), ("b", "3")] {
        let out = run(
            dir.path(),
            &[
                "ensemble",
                "run.conf",
                &format!("out_dir={name}"),
                &format!("workers={workers}"),
            ],
        );
        assert!(out.status.success());
    }
    for f in ["paths.csv", "summary.json", "kde.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}
