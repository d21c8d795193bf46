use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn polyloc(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_polyloc"));
    cmd.args(args).env_remove("POLYLOC_THREADS");
    if let Some(t) = threads {
        cmd.env("POLYLOC_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

fn run_dir(out: &Output) -> PathBuf {
    PathBuf::from(stdout_json(out)["run_dir"].as_str().unwrap())
}

fn error_kind(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).expect("error is JSON");
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn empty_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    for text in ["", "{}"] {
        let cfg = write(dir.path(), "c.json", text);
        let out = polyloc(&["--config", &cfg], None);
        assert_eq!(out.status.code(), Some(2));
        assert_eq!(error_kind(&out), "config");
    }
    let out = polyloc(&[], None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "usage");
}

#[test]
fn bad_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let typo = write(dir.path(), "typo.json", r#"{"command": "transfer", "lamda": 0.5}"#);
    let out = polyloc(&["--config", &typo, "--out", out_dir], None);
    assert_eq!(out.status.code(), Some(2));
    let unknown = write(dir.path(), "unknown.json", r#"{"command": "nope"}"#);
    assert_eq!(polyloc(&["--config", &unknown], None).status.code(), Some(2));
    let both = polyloc(&["--config", &typo, "walk"], None);
    assert_eq!(both.status.code(), Some(2));
    assert_eq!(error_kind(&both), "usage");
    let odd = polyloc(&["transfer", "--size", "3", "--out", out_dir], None);
    assert_eq!(odd.status.code(), Some(2));
    let flag = polyloc(&["walk", "--no-such-flag"], None);
    assert_eq!(flag.status.code(), Some(2));
    assert!(polyloc(&["--help"], None).status.success());
}

#[test]
fn test_loc_reproduces_the_table_p_values() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    for (u, n, s, lam, p) in [
        ("7.179", "225000", "600000", "0.3", 1.5e-6),
        ("9.011", "330000", "1000000", "0.6", 9.5e-3),
        ("7.643", "970000", "320000", "1", 1.6e-5),
    ] {
        let args = ["test-loc", "--u-hat", u, "--samples", n, "--size", s, "--lam", lam, "--out", out_dir];
        let out = polyloc(&args, None);
        let report: Value = serde_json::from_str(&fs::read_to_string(run_dir(&out).join("report.json")).unwrap()).unwrap();
        let got = report["p_value"].as_f64().unwrap();
        assert!((got - p).abs() / p <= 0.1, "{got} vs {p}");
    }
}

#[test]
fn periodic_curve_from_config_has_cubic_slope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "curve.json", r#"{"command": "periodic", "action": "curve", "omega": [1, -1], "lams": [0.01, 0.03, 0.1]}"#);
    let out = polyloc(&["--config", &cfg, "--out", dir.path().to_str().unwrap()], None);
    let rows = csv_rows(&run_dir(&out).join("curve.csv"));
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r[0].parse::<f64>().unwrap().ln(), r[1].parse::<f64>().unwrap().ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((2.85..=3.15).contains(&slope), "slope {slope}");
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = |out: &Path| {
        vec![
            "transfer".to_string(),
            "--samples".into(),
            "9".into(),
            "--size".into(),
            "3000".into(),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            out.to_str().unwrap().to_string(),
        ]
    };
    let run = |out: &Path, threads: &str| {
        let v = args(out);
        polyloc(&v.iter().map(String::as_str).collect::<Vec<_>>(), Some(threads))
    };
    let da = run_dir(&run(&a, "1"));
    let db = run_dir(&run(&b, "3"));
    assert_eq!(da.file_name(), db.file_name());
    assert_eq!(fs::read(da.join("log_z.csv")).unwrap(), fs::read(db.join("log_z.csv")).unwrap());
    let manifest: Value = serde_json::from_str(&fs::read_to_string(db.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["threads"], 3);
    assert_eq!(manifest["tables"][0]["header"], serde_json::json!(["sample", "log_z_pinned", "log_z_free"]));
}

#[test]
fn manifest_config_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let out =
        polyloc(&["profile-distance", "--sizes", "2000", "--samples", "4", "--seed", "3", "--out", first.to_str().unwrap()], Some("2"));
    let d1 = run_dir(&out);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(d1.join("manifest.json")).unwrap()).unwrap();
    let mut config = manifest["config"].clone();
    let second = dir.path().join("second");
    config["output_dir"] = Value::String(second.to_str().unwrap().to_string());
    let cfg = write(dir.path(), "rerun.json", &config.to_string());
    let d2 = run_dir(&polyloc(&["--config", &cfg], None));
    assert_eq!(d1.file_name(), d2.file_name());
    assert_eq!(fs::read(d1.join("meander.csv")).unwrap(), fs::read(d2.join("meander.csv")).unwrap());
}

#[test]
fn every_subcommand_writes_its_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cases: &[(&[&str], &str, &str)] = &[
        (&["walk", "--n-max", "50"], "return_law.csv", "n,probability"),
        (&["transfer", "--samples", "2"], "log_z.csv", "sample,log_z_pinned,log_z_free"),
        (&["test-loc", "--size", "1000", "--samples", "8"], "log_z.csv", "sample,log_z_pinned"),
        (&["profile-distance", "--sizes", "1000", "--samples", "2"], "meander.csv", "size,sample,distance"),
        (
            &["critical-curve", "--size", "2000", "--samples", "2"],
            "hat_h.csv",
            "lam,sample,h_hat,residual,iterations,saturated,m_hat,h_upper",
        ),
        (
            &["lower-bound", "--h", "0.3", "--a", "12", "--eps", "0.05", "--q", "-0.7", "--samples", "2"],
            "certificate.csv",
            "sample,found,A,ell,T,R,log_z0_at_t,z_method,log_bound,holds",
        ),
        (&["periodic", "constants", "--omega", "1,-1"], "constants.csv", "eta,constant"),
        (
            &["periodic", "kernels", "--beta0", "-0.5", "--period", "2", "--x-cut", "2000"],
            "kernels.csv",
            "kind,eta,row,truncated_mass,estimated_mass,exact_mass",
        ),
        (&["cocycle"], "free_energy.csv", "beta,free_energy"),
        (&["llt-check", "--sizes", "64,256"], "llt.csv", "n,sup_error"),
    ];
    for (args, file, header) in cases {
        let mut v = args.to_vec();
        v.extend(["--out", out]);
        let o = polyloc(&v, Some("2"));
        let text = fs::read_to_string(run_dir(&o).join(file)).unwrap();
        assert_eq!(text.lines().next(), Some(*header), "{args:?}");
        assert!(text.lines().count() > 1, "{args:?}");
    }
    let delta = stdout_json(&polyloc(&["periodic", "delta", "--beta0", "0.3", "--out", out], None));
    assert!((delta["summary"]["delta"].as_f64().unwrap() - 0.3f64.exp()).abs() < 1e-12);
}
