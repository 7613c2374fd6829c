use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mvfdr::procedures::{nested_region_test, Matrix, PValueMatrix};
use mvfdr::regions::{EllipsoidSpec, RegionFamily};
use serde_json::Value;
use tempfile::TempDir;

fn mvfdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvfdr")).args(args).output().expect("spawn mvfdr")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = mvfdr(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn code(args: &[&str]) -> (i32, String) {
    let o = mvfdr(args);
    (o.status.code().unwrap(), stderr(&o))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn doc(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn rejected(v: &Value) -> Vec<usize> {
    v["results"]["rejected"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap() as usize).collect()
}

fn field(out: &str, key: &str) -> f64 {
    let line = out.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no `{key}` in {out}"));
    line.rsplit('=').next().unwrap().split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn single_zero_row_is_rejected() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "p.csv", "0,0\n");
    let out = dir.path().join("r.json");
    ok(&["test", "--input", &input, "--method", "product", "--alpha", "0.05", "--output", out.to_str().unwrap()]);
    assert_eq!(rejected(&doc(&out)), vec![0]);
}

#[test]
fn min_method_matches_bh_by_hand() {
    // sorted .01 .04 .1 .5 against .05 i / 4: only .01 <= .0125
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "p.csv", "p\n0.01\n0.04\n0.1\n0.5\n");
    let out = dir.path().join("r.json");
    ok(&["test", "--input", &input, "--method", "min", "--output", out.to_str().unwrap()]);
    let d = doc(&out);
    assert_eq!(rejected(&d), vec![0]);
    assert_eq!(d["results"]["rejected_flags"], serde_json::json!([true, false, false, false]));
}

#[test]
fn malformed_csv_exits_2_naming_the_cell() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "p.csv", "0.1,0.2\n0.3,1.2\n");
    let (c, msg) = code(&["test", "--input", &input, "--method", "min"]);
    assert_eq!(c, 2);
    assert!(msg.contains("line 2, column 2") && msg.contains("1.2"), "{msg}");
    let input = write(dir.path(), "q.csv", "0.1,0.2\n0.3\n");
    assert_eq!(code(&["test", "--input", &input, "--method", "min"]).0, 2);
}

#[test]
fn incompatible_method_params_exit_3() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "p.csv", "0.1,0.2\n0.3,0.4\n");
    assert_eq!(code(&["test", "--input", &input, "--method", "rectangle", "--c", "1,2"]).0, 3);
    assert_eq!(code(&["test", "--input", &input, "--method", "ellipsoid", "--nu", "1,1,1", "--eps", "1"]).0, 3);
    assert_eq!(code(&["test", "--input", &input, "--method", "ellipsoid", "--nu", "1,1"]).0, 3);
}

#[test]
fn cli_rejections_match_the_library() {
    let (n, k) = (400, 2);
    // low-discrepancy values with a block of small ones so that some rows are rejected
    let data: Vec<f64> = (0..n * k)
        .map(|i| {
            let x = (i as f64 * 0.618_033_988_749_895 + 0.1).fract();
            if i < 60 {
                x * 1e-3
            } else {
                x
            }
        })
        .collect();
    let mut text = String::new();
    for row in data.chunks(k) {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "p.csv", &text);
    let pv = PValueMatrix::new(Matrix::new(data, n, k).unwrap()).unwrap();
    let cases: Vec<(Vec<&str>, RegionFamily)> = vec![
        (vec!["--method", "min"], RegionFamily::min(k).unwrap()),
        (vec!["--method", "product"], RegionFamily::product(k).unwrap()),
        (vec!["--method", "stouffer", "--weights", "1,3"], RegionFamily::stouffer(vec![1.0, 3.0]).unwrap()),
        (vec!["--method", "rectangle", "--c", "0.5,2"], RegionFamily::rectangle(vec![0.5, 2.0]).unwrap()),
        (
            vec!["--method", "ellipsoid", "--nu", "1,2", "--eps", "0.25"],
            RegionFamily::ellipsoid(EllipsoidSpec::new(vec![1.0, 2.0], 0.25).unwrap(), None).unwrap(),
        ),
    ];
    for (args, region) in cases {
        let out = dir.path().join("r.json");
        let mut full = vec!["test", "--input", &input, "--alpha", "0.1", "--output", out.to_str().unwrap()];
        full.extend(args.iter().copied());
        ok(&full);
        let expected = nested_region_test(&pv, &region, 0.1).unwrap();
        let d = doc(&out);
        assert_eq!(rejected(&d), expected.rejected, "{args:?}");
        assert!(!expected.rejected.is_empty(), "{args:?}");
        let scores: Vec<f64> = d["results"]["scores"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert_eq!(scores, expected.scores, "{args:?}");
    }
}

#[test]
fn params_reports_tail_parameters() {
    let out = ok(&["params", "--family", "t", "--df", "8", "--delta", "1.8"]);
    assert!((field(&out, "gamma") - 5.82).abs() < 0.005, "{out}");
    assert_eq!(field(&out, "eps"), 0.25);
    let out = ok(&["params", "--family", "t", "--df", "8", "--delta", "1.5", "--a", "0.05"]);
    assert!((field(&out, "min pFDR") - 0.289).abs() < 0.0005, "{out}");
    let out = ok(&["params", "--family", "f", "--df", "3", "--df2", "7", "--delta", "0"]);
    assert_eq!(field(&out, "gamma"), 0.0);
    assert_eq!(field(&out, "g(0) = r"), 1.0);
    assert_eq!(code(&["params", "--family", "t", "--df=0", "--delta", "1"]).0, 3);
    assert_eq!(code(&["params", "--family", "f", "--df", "3", "--delta", "1"]).0, 3);
}

#[test]
fn volume_queries() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("v.json");
    let o = out.to_str().unwrap();
    ok(&["volume", "--eps", "1", "--nu", "1,2", "--u", "1", "--mode", "exact2d", "--output", o]);
    assert!((doc(&out)["results"]["volume"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    ok(&["volume", "--eps", "1", "--nu", "1,1,1", "--u", "1.5", "--mode", "irwinhall", "--output", o]);
    assert!((doc(&out)["results"]["volume"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    ok(&["volume", "--eps", "0.25", "--k", "2", "--output", o]);
    assert!((doc(&out)["results"]["v_eps"].as_f64().unwrap() - 1.0 / 70.0).abs() < 1e-12);
    ok(&[
        "volume",
        "--eps",
        "1",
        "--nu",
        "1,1",
        "--u",
        "1",
        "--mode",
        "montecarlo",
        "--samples",
        "200000",
        "--output",
        o,
    ]);
    let d = doc(&out);
    let (v, se) = (d["results"]["volume"].as_f64().unwrap(), d["results"]["se"].as_f64().unwrap());
    assert!(se > 0.0 && (v - 0.5).abs() < 4.0 * se, "{v} {se}");
    assert_eq!(code(&["volume", "--eps", "1", "--nu", "1,1,1", "--u", "1", "--mode", "exact2d"]).0, 3);
}

#[test]
fn group1_preset_controls_fdr() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s.json");
    let text = ok(&["simulate", "--preset", "group1", "--output", out.to_str().unwrap()]);
    assert!(text.contains("0.1425"), "{text}");
    let fdr = &doc(&out)["results"]["stats"]["fdr"];
    let (m, se) = (fdr["mean"].as_f64().unwrap(), fdr["se"].as_f64().unwrap());
    assert!((m - 0.1425).abs() < 3.0 * se, "FDR {m} se {se}");
}

#[test]
fn group7_compare_finds_every_false_null() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("c.json");
    let text = ok(&["compare", "--preset", "group7", "--output", out.to_str().unwrap()]);
    assert!(text.contains("power 1.0000"), "{text}");
    let d = doc(&out);
    assert_eq!(d["results"]["comparison"]["reference"]["power"]["mean"].as_f64(), Some(1.0));
    assert_eq!(d["results"]["comparison"]["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn config_errors_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = write(dir.path(), "m.cfg", "a = 0.05\nalpha = 0.15\ndf = 4\nmu = 1, 1\n");
    let (c, msg) = code(&["simulate", "--config", &missing]);
    assert_eq!(c, 2);
    assert!(msg.contains("`method`"), "{msg}");
    let syntax = write(dir.path(), "s.cfg", "a 0.05\n");
    assert_eq!(code(&["simulate", "--config", &syntax]).0, 2);
    let base = "a = 0.05\nalpha = 0.15\ndf = 4\nmu = 1, 1\nn_runs = 2\nn_nulls = 100\n";
    let bad_c = write(dir.path(), "c.cfg", &format!("{base}method = rectangle\nc = 1, 2\n"));
    assert_eq!(code(&["simulate", "--config", &bad_c]).0, 4);
    let bad_k = write(dir.path(), "k.cfg", &format!("{base}method = min\nK = 3\n"));
    assert_eq!(code(&["compare", "--config", &bad_k]).0, 4);
    assert_eq!(code(&["simulate", "--preset", "nope"]).0, 2);
    assert_eq!(code(&["simulate", "--preset", "group1", "--set", "colour=red"]).0, 2);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let runs = [
        vec!["simulate", "--preset", "bivariate_group1", "--set", "n_runs=6", "--set", "n_nulls=500"],
        vec!["compare", "--preset", "group2", "--set", "n_runs=6", "--set", "r=0.2"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let paths = [dir.path().join(format!("{i}a.json")), dir.path().join(format!("{i}b.json"))];
        for p in &paths {
            let mut full = args.clone();
            full.extend(["--output", p.to_str().unwrap()]);
            ok(&full);
        }
        assert_eq!(fs::read(&paths[0]).unwrap(), fs::read(&paths[1]).unwrap(), "{args:?}");
    }
    let input = write(dir.path(), "p.csv", "0.001,0.002\n0.3,0.4\n0.02,0.5\n");
    let outs = [dir.path().join("t1.json"), dir.path().join("t2.json")];
    for o in &outs {
        ok(&[
            "test",
            "--input",
            &input,
            "--method",
            "oracle",
            "--df",
            "4",
            "--delta",
            "1,2",
            "--samples",
            "20000",
            "--output",
            o.to_str().unwrap(),
        ]);
    }
    assert_eq!(fs::read(&outs[0]).unwrap(), fs::read(&outs[1]).unwrap());
}

#[test]
fn scan_writes_plot_columns() {
    let dir = TempDir::new().unwrap();
    let plots = dir.path().join("plots");
    ok(&[
        "simulate",
        "--preset",
        "bivariate_group2",
        "--set",
        "n_runs=4",
        "--set",
        "n_nulls=500",
        "--plot-dir",
        plots.to_str().unwrap(),
    ]);
    for m in ["power", "fdr", "pfdr"] {
        for t in ["e", "r"] {
            let text = fs::read_to_string(plots.join(format!("{m}_{t}.csv"))).unwrap();
            let mut lines = text.lines();
            assert_eq!(lines.next(), Some(format!("log2_s,{m}").as_str()));
            assert_eq!(lines.count(), 7);
        }
    }
}

#[test]
fn presets_are_listed_and_parse() {
    let out = ok(&["presets"]);
    for name in ["group1", "group7", "bivariate_group3"] {
        assert!(out.contains(name), "{out}");
    }
    assert_eq!(out.lines().count(), 10);
}
