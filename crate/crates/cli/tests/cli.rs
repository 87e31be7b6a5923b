use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use didweak::csv_io::{load_csv, read_csv, save_csv, SchemaHints};
use didweak::{Command as Sub, SpecFile};
use didweak_core::data::Categorical;
use didweak_core::{Column, Dataset};
use rand::Rng;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

fn didweak(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_didweak")).current_dir(cwd).args(args).output().unwrap()
}

fn spec(name: &str) -> String {
    data_dir().join(name).display().to_string()
}

fn check_golden(name: &str, actual: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("DIDWEAK_BLESS").is_some() {
        fs::create_dir_all(golden_dir()).unwrap();
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(actual, expected, "{name} differs from the golden file");
}

#[test]
fn golden_reports() {
    for (cmd, file) in [("fit", "fit.toml"), ("iv", "iv.toml"), ("cic", "cic.toml"), ("horserace", "horserace.toml")] {
        let tmp = tempfile::tempdir().unwrap();
        let out = didweak(tmp.path(), &[cmd, "--spec", &spec(file), "--out-dir", "out"]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        check_golden(&format!("{cmd}.txt"), &String::from_utf8(out.stdout).unwrap());
        for entry in fs::read_dir(tmp.path().join("out")).unwrap() {
            let p = entry.unwrap().path();
            let name = format!("{cmd}_{}", p.file_name().unwrap().to_str().unwrap());
            check_golden(&name, &fs::read_to_string(&p).unwrap());
        }
    }
}

#[test]
fn simulation_report_has_table_shape() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("s.toml"), "[simulate]\nn_groups = 20\nn_per_group = 30\nn_sims = 5\nseed = 1\n").unwrap();
    let out = didweak(tmp.path(), &["simulate", "--spec", "s.toml", "--out-dir", "out"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in ["rho = 0", "rho = 0.95", "Average supergroup size", "Decreasing", "Flat", "Increasing", "Wald DID on groups", "Wald DID on supergroups", "Wald CIC on supergroups", "Simulations completed"] {
        assert!(text.contains(needle), "missing `{needle}`:\n{text}");
    }
    let csv = fs::read_to_string(tmp.path().join("out/simulation_summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 6);
}

#[test]
fn validation_errors_exit_1_before_computing() {
    let tmp = tempfile::tempdir().unwrap();
    fs::copy(data_dir().join("panel.csv"), tmp.path().join("panel.csv")).unwrap();
    fs::write(tmp.path().join("bad.toml"), "[data]\npath = \"panel.csv\"\n[model]\noutcome = \"lwage\"\nendog = [\"school\"]\n").unwrap();
    let out = didweak(tmp.path(), &["iv", "--spec", "bad.toml", "--out-dir", "out"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("model.instruments"), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn numerical_failures_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    fs::copy(data_dir().join("cells.csv"), tmp.path().join("cells.csv")).unwrap();
    let text = fs::read_to_string(data_dir().join("cic.toml")).unwrap().replace("support = \"clip\"", "support = \"error\"");
    fs::write(tmp.path().join("c.toml"), text).unwrap();
    let out = didweak(tmp.path(), &["cic", "--spec", "c.toml", "--out-dir", "out"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stderr).unwrap().contains("support"));
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(didweak(tmp.path(), &["bogus"]).status.code(), Some(1));
    assert_eq!(didweak(tmp.path(), &["fit"]).status.code(), Some(1));
    assert_eq!(didweak(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn blank_cell_in_referenced_column_names_the_row() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("d.csv"), "y,x,g,unused\n1,2,a,\n2,,b,1\n3,1,a,\n4,5,b,2\n").unwrap();
    fs::write(tmp.path().join("s.toml"), "[data]\npath = \"d.csv\"\n[model]\noutcome = \"y\"\nexog = [\"x\"]\ncluster = \"g\"\n").unwrap();
    let out = didweak(tmp.path(), &["fit", "--spec", "s.toml", "--out-dir", "out"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3") && err.contains("`x`") && err.contains("data row 2"), "{err}");
}

#[test]
fn loads_three_row_file() {
    let d = read_csv("y,g\n1,a\n2,b\n3,a\n".as_bytes(), "t", &SchemaHints::default()).unwrap();
    assert_eq!(d.n_rows(), 3);
    assert!(matches!(d.column("g").unwrap(), Column::Categorical(_)));
}

#[test]
fn csv_round_trip_is_lossless() {
    let mut g = didweak_core::rng::stream(9, 0);
    let n = 500;
    let mut d = Dataset::new(n);
    for k in 0..4 {
        let scale = 10f64.powi(4 * k - 8);
        let v: Vec<f64> = (0..n).map(|_| scale * g.random_range(-1.0..1.0)).collect();
        d.push(format!("x{k}"), Column::Numeric(v)).unwrap();
    }
    let labels: Vec<String> = (0..n).map(|_| format!("{}", g.random_range(0..30))).collect();
    d.push("g", Column::Categorical(Categorical::from_labels(&labels))).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("d.csv");
    save_csv(&d, &path).unwrap();
    let back = load_csv(&path, &SchemaHints { categorical: vec!["g".into()], ..Default::default() }).unwrap();
    for k in 0..4 {
        let name = format!("x{k}");
        for (a, b) in d.numeric(&name).unwrap().iter().zip(back.numeric(&name).unwrap()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{a} vs {b}");
        }
    }
    assert_eq!(d.codes("g").unwrap(), back.codes("g").unwrap());
}

const BASE: &str = "[data]\npath = \"d.csv\"\n[model]\noutcome = \"y\"\nexog = [\"x\"]\ncluster = \"g\"\n";

/// Each malformed entry is rejected with a message naming its field.
#[test]
fn malformed_fields_are_named() {
    let cases: &[(&str, &str, Sub)] = &[
        ("[bootstrap]\nreplications = 0\nseed = 1\n", "bootstrap.replications", Sub::ArCurve),
        ("[bootstrap]\nreplications = \"many\"\nseed = 1\n", "replications", Sub::ArCurve),
        ("[bootstrap]\nreplications = 9\n", "bootstrap.seed", Sub::ArCurve),
        ("[bootstrap]\nseed = 1\ngrid = [1.0, 0.0]\n", "bootstrap.grid", Sub::ArCurve),
        ("[bootstrap]\nseed = 1\ngrid_points = 1\n", "bootstrap.grid_points", Sub::ArCurve),
        ("[bootstrap]\nseed = 1\ngrid_width = -1.0\n", "bootstrap.grid_width", Sub::ArCurve),
        ("[bootstrap]\nseed = 1\nlevels = [1.5]\n", "bootstrap.levels", Sub::ArCurve),
        ("[bootstrap]\nseed = 1\nmode = \"sometimes\"\n", "mode", Sub::ArCurve),
        ("[design]\nkind = \"young_old\"\nage = \"a\"\nintensity = \"d\"\ngroup = \"g\"\nyoung = [6, 2]\n", "design.young", Sub::Fit),
        ("[design]\nkind = \"young_old\"\nage = \"a\"\nintensity = \"d\"\ngroup = \"g\"\nold = [4, 8]\n", "design.old", Sub::Fit),
        ("[design]\nkind = \"cubic\"\nage = \"a\"\nintensity = \"d\"\ngroup = \"g\"\n", "kind", Sub::Fit),
        ("[design]\nage = \"a\"\nintensity = \"d\"\ngroup = \"g\"\n", "design.kind", Sub::Fit),
        ("[design]\nkind = \"spline\"\nage = \"a\"\ngroup = \"g\"\n", "intensity", Sub::Fit),
        ("[design]\nkind = \"spline\"\nage = \"a\"\nintensity = \"d\"\ngroup = \"g\"\nhorizon = 0\n", "design.horizon", Sub::Fit),
        ("[cic]\noutcome = \"y\"\ngroup = \"t\"\nperiod = \"p\"\nseed = 1\nreplications = 0\n", "cic.replications", Sub::Cic),
        ("[cic]\noutcome = \"y\"\ngroup = \"t\"\nperiod = \"p\"\nseed = 1\nlevel = 0.0\n", "cic.level", Sub::Cic),
        ("[cic]\noutcome = \"y\"\ngroup = \"t\"\nperiod = \"p\"\nseed = 1\npercentiles = [0.5, 1.2]\n", "cic.percentiles", Sub::Cic),
        ("[cic]\noutcome = \"y\"\ngroup = \"t\"\nperiod = \"p\"\n", "cic.seed", Sub::Cic),
        ("[cic]\noutcome = \"y\"\ngroup = \"t\"\nperiod = \"p\"\nseed = 1\nsupport = \"stretch\"\n", "support", Sub::Cic),
        ("[simulate]\nseed = 1\nn_sims = 0\n", "simulate.n_sims", Sub::Simulate),
        ("[simulate]\nseed = 1\nn_groups = 0\n", "simulate.n_groups", Sub::Simulate),
        ("[simulate]\nseed = 1\nn_per_group = 0\n", "simulate.n_per_group", Sub::Simulate),
        ("[simulate]\nseed = 1\nrho = 2.0\n", "simulate.rho", Sub::Simulate),
        ("[simulate]\nseed = 1\np_threshold = 1.0\n", "simulate.p_threshold", Sub::Simulate),
        ("[simulate]\nseed = 1\nbeta = nan\n", "simulate.beta", Sub::Simulate),
        ("[simulate]\nseed = 1\ntest = \"t\"\n", "test", Sub::Simulate),
        ("[diagnostics]\nweight_endogeneity = 3\n", "weight_endogeneity", Sub::Fit),
        ("[model2]\n", "model2", Sub::Fit),
    ];
    for (extra, field, cmd) in cases {
        let text = if matches!(cmd, Sub::ArCurve) { format!("{BASE}endog = [\"s\"]\ninstruments = [\"z\"]\n{extra}") } else { format!("{BASE}{extra}") };
        let err = SpecFile::parse(&text, "spec.toml").and_then(|s| s.validate(*cmd)).map(|_| ()).unwrap_err().to_string();
        assert!(err.contains(field), "`{field}` not named in: {err}");
    }
    for (text, field, cmd) in [
        ("[data]\npath = \"d.csv\"\n[model]\noutcome = \"\"\n", "model.outcome", Sub::Fit),
        ("[data]\npath = \"d.csv\"\n[model]\noutcome = \"y\"\nexog = [\"x\", \"x\"]\n", "model.exog", Sub::Fit),
        ("[data]\npath = \"d.csv\"\n[model]\noutcome = \"y\"\nendog = [\"s\"]\ninstruments = [\"z\"]\n", "model.endog", Sub::Fit),
        ("[data]\npath = \"d.csv\"\n[model]\noutcome = \"y\"\nendog = [\"s\", \"t\"]\ninstruments = [\"z\"]\n", "model.instruments", Sub::Iv),
        ("[data]\npath = \"d.csv\"\n[model]\noutcome = \"y\"\nwald = \"z\"\n", "wald", Sub::Fit),
        ("[data]\npath = \"\"\n[model]\noutcome = \"y\"\n", "data.path", Sub::Fit),
        ("[model]\noutcome = \"y\"\n", "data", Sub::Fit),
        ("[data]\npath = \"d.csv\"\n", "model", Sub::Iv),
    ] {
        let err = SpecFile::parse(text, "spec.toml").and_then(|s| s.validate(cmd)).map(|_| ()).unwrap_err().to_string();
        assert!(err.contains(field), "`{field}` not named in: {err}");
    }
}

#[test]
fn missing_column_is_named_with_its_field() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("d.csv"), "y,x,g\n1,2,a\n2,1,b\n").unwrap();
    fs::write(tmp.path().join("s.toml"), "[data]\npath = \"d.csv\"\n[model]\noutcome = \"y\"\nexog = [\"x\"]\ncluster = \"region\"\n").unwrap();
    let out = didweak(tmp.path(), &["fit", "--spec", "s.toml", "--out-dir", "out"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("model.cluster") && err.contains("region"), "{err}");
}

#[test]
fn seed_flag_overrides_spec() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |seed: &str, out: &str| {
        let o = didweak(tmp.path(), &["cic", "--spec", &spec("cic.toml"), "--seed", seed, "--out-dir", out]);
        assert!(o.status.success());
        fs::read_to_string(tmp.path().join(out).join("quantile_effects.csv")).unwrap()
    };
    let a = run("7", "a");
    let b = run("8", "b");
    let golden = fs::read_to_string(golden_dir().join("cic_quantile_effects.csv")).unwrap();
    assert_eq!(a, golden);
    assert_ne!(a, b);
}
