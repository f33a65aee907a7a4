use std::path::PathBuf;
use std::process::{Command, Output};

use perpetual_lab::record::RunRecord;

fn potential(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../potentials").join(name)
}

fn perpetual(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perpetual")).args(args).env_remove("PERPETUAL_THREADS").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&perpetual(&["no-such-command"])), 1);
    assert_eq!(code(&perpetual(&["msd", "--times", "1"])), 1);
    let sin = potential("sin.toml");
    let sin = sin.to_str().unwrap();
    assert_eq!(code(&perpetual(&["msd", "--potential", sin, "--times", "1", "--dt", "-1"])), 1);
    assert_eq!(code(&perpetual(&["--format", "xml", "diffusivity", "--potential", sin])), 1);
    assert_eq!(code(&perpetual(&["--help"])), 0);
}

#[test]
fn resource_errors_exit_two() {
    assert_eq!(code(&perpetual(&["diffusivity", "--potential", "/nonexistent/file.toml"])), 2);
    let sin = potential("sin.toml");
    let o = perpetual(&["--out", "/nonexistent/dir/out.jsonl", "diffusivity", "--potential", sin.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn diffusivity_record() {
    let o = perpetual(&["diffusivity", "--potential", potential("sin.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let recs = RunRecord::parse_lines(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].subcommand, "diffusivity");
    assert_eq!(recs[0].seed, 0);
    assert!(recs[0].wall_time.is_none());
}

#[test]
fn csv_output_has_a_header_and_rows() {
    let sin = potential("sin.toml");
    let o = perpetual(&[
        "--format",
        "csv",
        "msd",
        "--potential",
        sin.to_str().unwrap(),
        "--times",
        "1,2,4",
        "--paths",
        "200",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut reader = csv::Reader::from_reader(o.stdout.as_slice());
    assert!(reader.headers().unwrap().iter().any(|h| h == "mean"));
    let rows: Vec<_> = reader.records().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), 3);
}

#[test]
fn output_does_not_depend_on_threads() {
    let sin = potential("sin_rho8_2.toml");
    let run = |threads: &str| {
        let o = perpetual(&[
            "--threads",
            threads,
            "--seed",
            "17",
            "exit-time",
            "--potential",
            sin.to_str().unwrap(),
            "--radii",
            "2,4",
            "--paths",
            "300",
        ]);
        assert!(code(&o) == 0 || code(&o) == 3);
        o.stdout
    };
    let one = run("1");
    assert!(!one.is_empty());
    assert_eq!(one, run("2"));
    assert_eq!(one, run("8"));
}

#[test]
fn strict_statistical_failure_exits_three() {
    // ten paths cannot put enough mass past h = 40 at t = 1
    let sin = potential("sin.toml");
    let args = ["tail", "--potential", sin.to_str().unwrap(), "--t", "1", "--h", "40", "--paths", "10"];
    let lenient = perpetual(&args);
    assert_eq!(code(&lenient), 0);
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("warning"));
    let mut strict = vec!["--strict"];
    strict.extend_from_slice(&args);
    assert_eq!(code(&perpetual(&strict)), 3);
}

#[test]
fn analyze_reads_appended_records_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs.jsonl");
    let svg = dir.path().join("fit.svg");
    let zero = potential("zero.toml");
    let out_s = out.to_str().unwrap();
    for seed in ["1", "2"] {
        let o = perpetual(&[
            "--seed",
            seed,
            "--out",
            out_s,
            "--append",
            "msd",
            "--potential",
            zero.to_str().unwrap(),
            "--times",
            "2,4,8",
            "--paths",
            "2000",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = perpetual(&["--plot", svg.to_str().unwrap(), "analyze", "--input", out_s]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rec = &RunRecord::parse_lines(&String::from_utf8(o.stdout).unwrap()).unwrap()[0];
    let fits = rec.payload["fits"].as_array().unwrap();
    assert_eq!(fits.len(), 2);
    for f in fits {
        assert!((f["slope"].as_f64().unwrap() - 1.0).abs() < 0.1, "{f}");
    }
    let text = std::fs::read_to_string(&svg).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let slopes: Vec<f64> =
        doc.descendants().filter_map(|n| n.attribute("data-slope")).map(|s| s.parse().unwrap()).collect();
    assert_eq!(slopes.len(), 2);
}

#[test]
fn green_and_martingale_checks_pass() {
    let o = perpetual(&["--strict", "green-check", "--cases", "200", "--pairs", "100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = perpetual(&["--strict", "martingale-check", "--f1", "2", "--f2", "1", "--t0", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rec = &RunRecord::parse_lines(&String::from_utf8(o.stdout).unwrap()).unwrap()[0];
    assert_eq!(rec.subcommand, "martingale-check");
}

#[test]
fn threads_env_var_is_read() {
    let sin = potential("sin.toml");
    let o = Command::new(env!("CARGO_BIN_EXE_perpetual"))
        .args(["diffusivity", "--potential", sin.to_str().unwrap()])
        .env("PERPETUAL_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}
