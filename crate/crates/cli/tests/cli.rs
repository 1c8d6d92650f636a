use std::path::Path;
use std::process::{Command, Output};

fn legmhe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_legmhe")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = legmhe(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = legmhe(dir, args);
    assert!(!out.status.success(), "{args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    err
}

fn read(dir: &Path, f: &str) -> String {
    std::fs::read_to_string(dir.join(f)).unwrap()
}

fn tagged<'a>(log: &'a str, tag: &str) -> impl Iterator<Item = &'a str> + 'a {
    let prefix = format!("{tag} ");
    log.lines().filter(move |l| l.starts_with(&prefix))
}

fn simulate(dir: &Path, config: &str, seed: &str) -> String {
    std::fs::write(dir.join("sim.toml"), config).unwrap();
    ok(dir, &["simulate", "--config", "sim.toml", "--out", "run.log", "--seed", seed]);
    read(dir, "run.log")
}

#[test]
fn static_second_has_expected_record_counts() {
    let d = tempfile::tempdir().unwrap();
    let log = simulate(d.path(), "scenario = \"static\"\nduration = 1.0\nimu_rate = 200.0\nvo_rate = 30.0\n", "1");
    assert_eq!(tagged(&log, "IMU").count(), 200);
    assert_eq!(tagged(&log, "VO_ABS").count(), 30);
    assert_eq!(tagged(&log, "GT").count(), 200);
}

#[test]
fn same_seed_same_file() {
    let d = tempfile::tempdir().unwrap();
    let a = simulate(d.path(), "scenario = \"trot\"\nduration = 0.5\n", "9");
    let b = simulate(d.path(), "scenario = \"trot\"\nduration = 0.5\n", "9");
    let c = simulate(d.path(), "scenario = \"trot\"\nduration = 0.5\n", "10");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn zero_duration_is_header_only() {
    let d = tempfile::tempdir().unwrap();
    let log = simulate(d.path(), "duration = 0.0\n", "1");
    assert!(log.lines().count() > 0);
    assert!(log.lines().all(|l| l.starts_with('#')));
}

#[test]
fn trace_follows_imu_timestamps() {
    let d = tempfile::tempdir().unwrap();
    let log = simulate(d.path(), "scenario = \"hopper\"\nduration = 0.5\n", "3");
    let report = ok(d.path(), &["estimate", "--log", "run.log", "--out", "trace.csv"]);
    assert!(report.contains("rmse_velocity_body="));
    let trace = read(d.path(), "trace.csv");
    let mut rows = trace.lines();
    assert!(rows.next().unwrap().starts_with("t,px,py,pz,vx,vy,vz,qx,qy,qz,qw,"));
    let imu_t: Vec<f64> = tagged(&log, "IMU").map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap()).collect();
    let trace_t: Vec<f64> = rows.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(imu_t, trace_t);
}

#[test]
fn lo_form_and_no_vo_change_the_estimate() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "scenario = \"hopper\"\nduration = 0.5\n", "4");
    let p = d.path();
    ok(p, &["estimate", "--log", "run.log", "--out", "both.csv"]);
    ok(p, &["estimate", "--log", "run.log", "--out", "pos.csv", "--lo-form", "position"]);
    ok(p, &["estimate", "--log", "run.log", "--out", "vel.csv", "--lo-form", "velocity"]);
    ok(p, &["estimate", "--log", "run.log", "--out", "novo.csv", "--no-vo"]);
    let traces: Vec<String> = ["both.csv", "pos.csv", "vel.csv", "novo.csv"].iter().map(|f| read(p, f)).collect();
    for i in 0..traces.len() {
        for j in i + 1..traces.len() {
            assert_ne!(traces[i], traces[j]);
        }
    }
    let err = fails(p, &["estimate", "--log", "run.log", "--out", "x.csv", "--lo-form", "sideways"]);
    assert!(err.contains("sideways"));
}

#[test]
fn sweep_and_timing_files() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "scenario = \"hopper\"\nduration = 0.5\n", "5");
    let table = ok(d.path(), &["sweep-window", "--log", "run.log", "--sizes", "1,3", "--timing", "t.csv"]);
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().nth(1).unwrap().starts_with("1,"));
    assert!(table.lines().nth(2).unwrap().starts_with("3,"));
    assert_eq!(read(d.path(), "t.csv").lines().count(), 3);
    let err = fails(d.path(), &["sweep-window", "--log", "run.log", "--sizes", "0"]);
    assert!(err.starts_with("error kind=InvalidArgument"), "{err}");
}

fn fif_deviation(text: &str) -> f64 {
    text.lines().find_map(|l| l.strip_prefix("max_relative_deviation=")).unwrap().parse().unwrap()
}

#[test]
fn compare_fif_exact_and_sensitive() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), "scenario = \"hopper\"\nduration = 0.3\n", "6");
    let p = d.path();
    let base = fif_deviation(&ok(p, &["compare-fif", "--log", "run.log", "--window", "10"]));
    assert!(base <= 1e-8, "{base}");
    let whole = fif_deviation(&ok(p, &["compare-fif", "--log", "run.log", "--window", "100"]));
    assert!(whole <= 1e-10, "{whole}");
    let broken = fif_deviation(&ok(p, &["compare-fif", "--log", "run.log", "--window", "10", "--corrupt-arrival", "10"]));
    assert!(broken > 1e-4, "{broken}");
}

#[test]
fn out_of_order_record_names_its_line() {
    let d = tempfile::tempdir().unwrap();
    let log = simulate(d.path(), "scenario = \"static\"\nduration = 0.1\n", "1");
    let mut lines: Vec<&str> = log.lines().collect();
    let imu: Vec<usize> = (0..lines.len()).filter(|&i| lines[i].starts_with("IMU ")).collect();
    lines.swap(imu[3], imu[4]);
    std::fs::write(d.path().join("bad.log"), lines.join("\n") + "\n").unwrap();
    let err = fails(d.path(), &["estimate", "--log", "bad.log", "--out", "x.csv"]);
    assert!(err.starts_with("error kind=LogParse "), "{err}");
    let first_bad = (0..lines.len())
        .filter(|&i| !lines[i].starts_with('#'))
        .find(|&i| {
            let t = |s: &str| s.split_whitespace().nth(1).unwrap().parse::<f64>().unwrap();
            i > 0 && !lines[i - 1].starts_with('#') && t(lines[i]) < t(lines[i - 1])
        })
        .unwrap();
    assert!(first_bad <= imu[4]);
    assert!(err.contains(&format!(" line={} ", first_bad + 1)), "{err}");
    assert!(!d.path().join("x.csv").exists());
}

#[test]
fn error_kinds() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("bad.toml"), "windw = 3\n").unwrap();
    let err = fails(p, &["simulate", "--config", "bad.toml", "--out", "x.log"]);
    assert!(err.starts_with("error kind=ConfigParse "), "{err}");
    std::fs::write(p.join("bad.toml"), "q_vo = [1.0, 2.0]\n").unwrap();
    let err = fails(p, &["simulate", "--config", "bad.toml", "--out", "x.log"]);
    assert!(err.starts_with("error kind=ConfigParse "), "{err}");

    let err = fails(p, &["estimate", "--log", "missing.log", "--out", "x.csv"]);
    assert!(err.starts_with("error kind=IoFailure "), "{err}");
    let err = fails(p, &["simulate", "--out", "no/such/dir/x.log"]);
    assert!(err.starts_with("error kind=IoFailure "), "{err}");

    std::fs::write(p.join("junk.log"), "# format=legmhe-log\n# version=99\n").unwrap();
    let err = fails(p, &["estimate", "--log", "junk.log", "--out", "x.csv"]);
    assert!(err.starts_with("error kind=LogParse line=2 "), "{err}");

    simulate(p, "scenario = \"static\"\nduration = 5.5\n", "1");
    let err = fails(p, &["compare-fif", "--log", "run.log"]);
    assert!(err.starts_with("error kind=LogTooLong "), "{err}");
}
