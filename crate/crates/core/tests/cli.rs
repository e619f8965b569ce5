use std::path::Path;
use std::process::{Command, Output};

fn fdwls(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdwls"))
        .args(args)
        .current_dir(dir)
        .env("FDWLS_THREADS", "1")
        .output()
        .unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

const SMALL: &[&str] = &["--n", "30", "--points", "40", "--components", "5"];

#[test]
fn simulate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for tag in ["a", "b"] {
        let mut args = vec!["simulate", "--model", "i", "--seed", "7"];
        args.extend(SMALL);
        let data = format!("{tag}.csv");
        let truth = format!("{tag}_mu.csv");
        let beta = format!("{tag}_beta.csv");
        args.extend(["--out", &data, "--truth", &truth, "--beta", &beta]);
        let v = json(&fdwls(&args, dir.path()));
        assert_eq!(v["command"], "simulate");
    }
    for f in ["", "_mu", "_beta"] {
        let a = std::fs::read(dir.path().join(format!("a{f}.csv"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("b{f}.csv"))).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn fit_then_predict_reproduces_fitted_values() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "simulate", "--seed", "3", "--out", "d.csv", "--truth", "mu.csv",
    ];
    args.extend(SMALL);
    json(&fdwls(&args, dir.path()));
    let fit = json(&fdwls(
        &[
            "fit",
            "--data",
            "d.csv",
            "--cv",
            "--rmax",
            "3",
            "--kmax",
            "3",
            "--variant",
            "check",
            "--out",
            "m.json",
        ],
        dir.path(),
    ));
    assert_eq!(fit["cross_validated"], true);
    json(&fdwls(
        &[
            "predict", "--model", "m.json", "--curves", "d.csv", "--out", "p.csv",
        ],
        dir.path(),
    ));

    let model = fdwls::io::load_model(dir.path().join("m.json")).unwrap();
    let sample = fdwls::io::load_dataset(dir.path().join("d.csv"), None).unwrap();
    let text = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,prediction,prediction_unweighted"));
    for (line, x) in lines.zip(sample.curves()) {
        let cols: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(cols[1], model.predict(x).unwrap());
        assert_eq!(cols[2], model.predict_unweighted(x).unwrap());
    }
}

#[test]
fn split_eval_cv_table_and_amse_check() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "split-eval",
        "--B",
        "2",
        "--target",
        "mu",
        "--variants",
        "tilde",
        "--rmax",
        "3",
        "--kmax",
        "3",
        "--csv",
        "r.csv",
        "--report",
        "r.json",
    ];
    args.extend(SMALL);
    let v = json(&fdwls(&args, dir.path()));
    assert_eq!(v["replicates"], 2);
    assert_eq!(v["summaries"][0]["variant"], "tilde");
    assert!(dir.path().join("r.csv").exists());

    let mut args = vec!["simulate", "--out", "d.csv", "--truth", "mu.csv"];
    args.extend(SMALL);
    json(&fdwls(&args, dir.path()));
    let v = json(&fdwls(
        &[
            "cv-table", "--data", "d.csv", "--rmax", "2", "--kmax", "2", "--out", "w.csv",
        ],
        dir.path(),
    ));
    assert_eq!(v["r_max"], 2);
    let table = std::fs::read_to_string(dir.path().join("w.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 9);

    let v = json(&fdwls(
        &[
            "amse-check",
            "--n",
            "80",
            "--replications",
            "20",
            "--seed",
            "2",
        ],
        dir.path(),
    ));
    assert!(v["theoretical_ratio"].as_f64().unwrap() <= 1.0);
}

#[test]
fn usage_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cases: &[&[&str]] = &[
        &["fit", "--data", "d.csv", "--out", "m.json"],
        &[
            "fit", "--data", "d.csv", "--out", "m.json", "--cv", "--r", "2",
        ],
        &["fit", "--data", "d.csv", "--out", "m.json", "--r", "2"],
        &["simulate", "--bogus"],
        &["split-eval", "--target", "z"],
        &["nonsense"],
    ];
    for args in cases {
        let out = fdwls(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    let out = fdwls(
        &[
            "fit",
            "--data",
            "missing.csv",
            "--out",
            "m.json",
            "--r",
            "1",
            "--k",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
