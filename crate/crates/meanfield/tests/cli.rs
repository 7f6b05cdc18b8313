use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn meanfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meanfield")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, format!("schema_version = 1\n{body}")).unwrap();
    path.to_string_lossy().into_owned()
}

fn run(command: &str, body: &str, extra: &[&str]) -> (Output, TempDir) {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), body);
    let out = dir.path().join("out");
    let mut args = vec![command, "--config", &config, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (meanfield(&args), dir)
}

fn summary(dir: &TempDir) -> Value {
    let text = std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

const SMALL_DOUBLE_WELL: &str = r#"
model = "double_well"
a = 0.5
lambda = 0.01
n_list = [8, 16, 32, 128]
t_end = 1.0
output_dt = 0.25
h = 0.01
replications = 4
seed = 5
nu = "gaussian(0.0, 0.5)"
mu = "gaussian(0.0, 0.5)"
"#;

#[test]
fn rates_quadratic_closed_form() {
    let (out, dir) = run("rates", "model = \"quadratic\"\nrho = 1.0\nn_list = [2]\nt_end = 1.0\nh = 0.01\n", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&dir);
    let k = &s["constants"];
    assert!(k["R0"].as_f64().unwrap().abs() < 1e-6);
    assert!((k["R1"].as_f64().unwrap() - 2.828427).abs() < 1e-6);
    assert!((k["c"].as_f64().unwrap() - 0.25).abs() < 1e-6);
    assert!(dir.path().join("out/rate_profile.json").exists());
}

#[test]
fn rates_double_well_r0() {
    let (out, dir) = run("rates", "model = \"double_well\"\na = 1.0\nn_list = [2]\nt_end = 1.0\nh = 0.01\n", &[]);
    assert!(out.status.success());
    let r0 = summary(&dir)["constants"]["R0"].as_f64().unwrap();
    assert!((r0 - std::f64::consts::SQRT_2).abs() < 1e-6, "{r0}");
}

#[test]
fn strong_interaction_is_rejected_with_exit_2() {
    let body = "model = \"double_well\"\na = 0.5\nlambda = 0.3\nn_list = [2]\nt_end = 1.0\nh = 0.01\n";
    let (out, dir) = run("rates", body, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("η < c"));
    // the constants are still written for inspection
    assert_eq!(summary(&dir)["constants"]["eta_below_c"], Value::Bool(false));

    let (out, _dir) = run("moments", body, &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_passes_for_double_well() {
    let (out, dir) = run("validate", SMALL_DOUBLE_WELL, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(summary(&dir)["passed"], Value::Bool(true));
}

#[test]
fn config_errors_exit_1() {
    let (out, _d) = run("rates", "model = \"quadratic\"\nn_list = [2]\nt_end = 1.0\nh = 0.01\ncolour = 3\n", &[]);
    assert_eq!(out.status.code(), Some(1));
    let (out, _d) = run("rates", "model = \"quadratic\"\nn_list = [2]\nt_end = 1.0\nh = 0.03\n", &[]);
    assert_eq!(out.status.code(), Some(1), "output_dt must be a multiple of h");
    let (out, _d) = run("poc-scaling", SMALL_DOUBLE_WELL.replace("128", "64").as_str(), &[]);
    assert_eq!(out.status.code(), Some(1), "N range below 16x");
    let body = "model = \"quadratic\"\nn_list = [2]\nt_end = 1.0\nh = 0.01\nreplications = 2\n";
    let (out, _d) = run("contraction", body, &[]);
    assert_eq!(out.status.code(), Some(1), "nu = mu");
    let (out, _d) = run("rates", body, &["--threads", "0"]);
    assert!(!out.status.success());
}

#[test]
fn divergence_exits_3() {
    let body = "model = \"double_well\"\na = 0.5\nn_list = [2]\nt_end = 20.0\nh = 1.0\noutput_dt = 1.0\n\
                replications = 2\nnu = \"point(10.0)\"\nmu = \"point(10.0)\"\ndelta = 0.5\n";
    let (out, _d) = run("moments", body, &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn results_csv_has_the_schema_and_the_matrix() {
    let (out, dir) = run("poc-scaling", SMALL_DOUBLE_WELL, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(dir.path().join("out/results.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        [
            "run_id",
            "seed",
            "N",
            "M",
            "replication",
            "t",
            "mean_f_distance",
            "mean_euclid_distance",
            "w1_converted",
            "bound_theorem",
            "second_moment_particles",
            "second_moment_nonlinear",
            "upsilon_estimate"
        ]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4 * 4 * 5);
    let ns: Vec<&str> = rows.iter().map(|r| &r[2]).collect();
    assert_eq!(ns[0], "8");
    assert_eq!(ns[rows.len() - 1], "128");
    let ts: Vec<f64> = rows[..5].iter().map(|r| r[5].parse().unwrap()).collect();
    assert_eq!(ts, [0.0, 0.25, 0.5, 0.75, 1.0]);
    let s = summary(&dir);
    assert_eq!(s["per_n"].as_array().unwrap().len(), 4);
    assert!(s["slope"]["slope"].as_f64().unwrap().is_finite());
}

#[test]
fn seed_flag_changes_output_and_thread_count_does_not() {
    let read = |dir: &TempDir| std::fs::read(dir.path().join("out/results.csv")).unwrap();
    let (a, da) = run("moments", SMALL_DOUBLE_WELL, &["--threads", "1"]);
    let (b, db) = run("moments", SMALL_DOUBLE_WELL, &["--threads", "3"]);
    let (c, dc) = run("moments", SMALL_DOUBLE_WELL, &["--threads", "2", "--seed", "6"]);
    assert!(a.status.success() && b.status.success() && c.status.success());
    assert_eq!(read(&da), read(&db));
    assert_ne!(read(&da), read(&dc));
}

#[test]
fn no_interaction_gives_zero_plateau() {
    let body = "model = \"quadratic\"\nrho = 1.0\nlambda = 0.0\nn_list = [2, 4, 8, 32]\nt_end = 1.0\n\
                output_dt = 0.25\nh = 0.01\nreplications = 4\nnu = \"gaussian(0.0, 1.0)\"\nmu = \"gaussian(0.0, 1.0)\"\n";
    let (out, dir) = run("poc-scaling", body, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&dir);
    for row in s["per_n"].as_array().unwrap() {
        let p = &row["plateau"];
        assert!(p["mean"].as_f64().unwrap() <= 3.0 * p["std_error"].as_f64().unwrap());
    }
}
