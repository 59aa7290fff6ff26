use std::fs;
use std::process::{Command, Output};

use chromspin::fitting::{fit_with_guesses, FitData, FitModel, ModelId};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chromspin"));
    c.env_remove("CHROMSPIN_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = run(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error: kind=usage"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(run(&["simulate", "--bogus"]).status.code(), Some(2));
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"protocol": {"id": "optical_lifetime"}}"#).unwrap();
    let o = bin().env("CHROMSPIN_CONFIG", &cfg).arg("simulate").output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.starts_with("sweep_value,mean_counts"));
    assert!(stderr(&o).contains("config_hash="));
}

#[test]
fn bad_config_reports_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"temperature_k": -3}"#).unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.starts_with("error: kind=validation") && e.contains("temperature_k"), "{e}");
}

#[test]
fn rabi_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"protocol": {"id": "rabi"}}"#).unwrap();
    let mut outs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "11", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        outs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 11);
    assert_eq!(meta["protocol"], "rabi");
    assert_eq!(meta["config"]["detection"]["rng_seed"], 11);
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    // LF endings and a header row
    let text = String::from_utf8(outs[0].clone()).unwrap();
    assert!(!text.contains('\r'));
    assert!(text.lines().next().unwrap().starts_with("sweep_value"));
}

#[test]
fn json_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, "{}").unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--protocol", "ramsey", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["protocol"], "ramsey");
    assert_eq!(v["values"].as_array().unwrap().len(), 151);
}

#[test]
fn ple_scan_widths_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"protocol": {"id": "ple_scan"}, "detection": {"shot_noise": false}}"#).unwrap();
    let out = dir.path().join("ple.csv");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let (mut x, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.unwrap();
        x.push(rec[0].parse::<f64>().unwrap());
        y.push(rec[1].parse::<f64>().unwrap());
        s.push(rec[3].parse::<f64>().unwrap());
    }
    let d = FitData::new(x, y, s).unwrap();
    let top = d.y.iter().cloned().fold(0.0, f64::max);
    let f = fit_with_guesses(
        &FitModel::new(ModelId::GaussianTwoPeak),
        &d,
        &[0.25 * top, 0.0, 6.0, top, 3.0, 1.063, 0.0],
    )
    .unwrap();
    assert!((f.values[2].abs() / 6.87 - 1.0).abs() < 0.03, "{:?}", f.values);
    assert!((f.values[4].abs() / 3.34 - 1.0).abs() < 0.03, "{:?}", f.values);
}

#[test]
fn hahn_fit_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"protocol": {"id": "hahn_echo"}, "detection": {"repetitions": 10000}}"#).unwrap();
    let sim = dir.path().join("h.csv");
    assert!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", sim.to_str().unwrap()]).status.success());
    let mut rdr = csv::Reader::from_path(&sim).unwrap();
    let mut data = String::from("x,y,sigma\n");
    for rec in rdr.records() {
        let rec = rec.unwrap();
        data.push_str(&format!("{},{},{}\n", &rec[0], &rec[2], &rec[3]));
    }
    let input = dir.path().join("d.csv");
    fs::write(&input, data).unwrap();
    let report = dir.path().join("fit.json");
    let o = run(&["fit", input.to_str().unwrap(), "--model", "eseem_model", "--out", report.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let names: Vec<&str> = v["param_names"].as_array().unwrap().iter().map(|n| n.as_str().unwrap()).collect();
    for want in ["t2", "n", "k1", "omega1", "k2", "omega2"] {
        let i = names.iter().position(|n| *n == want).unwrap();
        assert!(v["errors"][i].as_f64().unwrap() > 0.0);
    }
    let t2 = v["values"][names.iter().position(|n| *n == "t2").unwrap()].as_f64().unwrap();
    assert!((t2 - 81.0).abs() < 5.0, "{t2}");
}

#[test]
fn fit_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("e.csv");
    fs::write(&empty, "x,y,sigma\n").unwrap();
    let o = run(&["fit", empty.to_str().unwrap(), "--model", "linear"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no data rows"));

    let bad = dir.path().join("b.csv");
    fs::write(&bad, "x,y\n1,2\n2,x\n").unwrap();
    let o = run(&["fit", bad.to_str().unwrap(), "--model", "linear"]);
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));

    let domain = dir.path().join("d.csv");
    fs::write(&domain, "x,y\n20,1\n25,2\n-1,3\n").unwrap();
    let o = run(&["fit", domain.to_str().unwrap(), "--model", "orbach"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));

    let nosigma = dir.path().join("n.csv");
    fs::write(&nosigma, "x,y\n0,1\n1,3\n2,5\n3,7\n").unwrap();
    let o = run(&["fit", nosigma.to_str().unwrap(), "--model", "linear"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning: no sigma column"));

    assert_eq!(run(&["fit", nosigma.to_str().unwrap(), "--model", "nope"]).status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let o = run(&["selftest"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).lines().all(|l| l.starts_with("PASS")));
}
