use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ale")).args(args).output().expect("ale runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ale(args);
    assert!(out.status.success(), "ale {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Header and rows of a CSV file.
fn csv(path: impl AsRef<Path>) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().map(|l| l.split(',').map(str::to_owned).collect::<Vec<_>>());
    (lines.next().unwrap(), lines.collect())
}

fn out_dir(tmp: &TempDir, name: &str) -> PathBuf {
    tmp.path().join(name)
}

fn effect(dir: &Path, extra: &[&str]) -> Output {
    let mut args =
        vec!["effect", "--data", "gen:example1", "--model", "expr:x1 + x2^2", "--out", dir.to_str().unwrap()];
    args.extend(extra);
    ok(&args)
}

#[test]
fn first_order_effect_writes_one_row_per_corner() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "e");
    effect(&dir, &["--features", "x1", "--K", "40"]);
    let (header, rows) = csv(dir.join("values.csv"));
    assert_eq!(header, ["k_x1", "x1", "uncentered", "centered", "count"]);
    assert_eq!(rows.len(), 41);
    assert_eq!(rows[0][4], "0");
    assert_eq!(rows.iter().map(|r| r[4].parse::<usize>().unwrap()).sum::<usize>(), 200);

    let report = json(dir.join("report.json"));
    assert_eq!(report["ledger"]["ale"], 400);
    assert_eq!(report["k_per_axis"], serde_json::json!([40]));
    assert_eq!(report["seed"], 1);
    assert!(report["rng"].as_str().unwrap().contains("chacha20"));
    assert_eq!(json(dir.join("values.json"))["corners"].as_array().unwrap().len(), 41);
}

#[test]
fn partial_dependence_ledger_is_k_times_n() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "pd");
    effect(&dir, &["--features", "x1", "--K", "50", "--method", "pd"]);
    assert_eq!(json(dir.join("report.json"))["ledger"]["pd"], 10_000);
    let (_, rows) = csv(dir.join("values.csv"));
    // one row per grid point z_1..z_K
    assert_eq!(rows.len(), 50);
}

#[test]
fn mplot_of_two_features_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "m");
    let out = ale(&[
        "effect",
        "--data",
        "gen:example1",
        "--model",
        "expr:x1",
        "--features",
        "x1,x2",
        "--method",
        "mplot",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("mplot"), "{}", stderr(&out));
    assert!(!dir.exists());
}

#[test]
fn bad_arguments_fail_with_a_diagnostic() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "x");
    let d = dir.to_str().unwrap();

    let out = ale(&["effect", "--data", "gen:example1", "--model", "expr:x1", "--features", "x9", "--out", d]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown feature \"x9\""), "{}", stderr(&out));

    let out = ale(&[
        "compare",
        "--data",
        "gen:example1",
        "--model",
        "expr:x1",
        "--features",
        "x1",
        "--truth",
        "x1",
        "--no-truth",
        "--out",
        d,
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = ale(&["effect", "--data", "gen:example1", "--model", "expr:x1", "--features", "x1,x1", "--out", d]);
    assert_eq!(out.status.code(), Some(2));

    let out = ale(&["effect", "--data", "gen:nosuch", "--model", "expr:x1", "--features", "x1", "--out", d]);
    assert!(stderr(&out).contains("unknown generator"), "{}", stderr(&out));

    let out = ale(&["effect", "--data", "gen:example1", "--model", "expr:x1 +", "--features", "x1", "--out", d]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("offset"), "{}", stderr(&out));

    let out = ale(&[
        "effect",
        "--data",
        "gen:example1",
        "--model",
        "tree",
        "--features",
        "x1",
        "--response",
        "y",
        "--out",
        d,
    ]);
    assert!(stderr(&out).contains("--response"), "{}", stderr(&out));

    // a regular file where the output directory should go
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = ale(&[
        "effect",
        "--data",
        "gen:example1",
        "--model",
        "expr:x1",
        "--features",
        "x1",
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot create output directory"), "{}", stderr(&out));
}

#[test]
fn csv_and_json_carry_the_same_numbers() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "rt");
    effect(&dir, &["--features", "x1,x2", "--K", "8"]);
    let (header, rows) = csv(dir.join("values.csv"));
    assert_eq!(header, ["k_x1", "k_x2", "x1", "x2", "uncentered", "centered", "count"]);
    let corners = json(dir.join("values.json"))["corners"].as_array().unwrap().clone();
    assert_eq!(rows.len(), corners.len());
    assert_eq!(rows.len(), 81);
    for (r, c) in rows.iter().zip(&corners) {
        let idx: Vec<u64> = c["index"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
        assert_eq!(idx, [r[0].parse::<u64>().unwrap(), r[1].parse().unwrap()]);
        let coords = c["coordinates"].as_array().unwrap();
        for (cell, v) in r[2..4].iter().zip(coords) {
            assert_eq!(cell.parse::<f64>().unwrap().to_bits(), v.as_f64().unwrap().to_bits());
        }
        for (cell, key) in [(&r[4], "uncentered"), (&r[5], "centered")] {
            assert_eq!(cell.parse::<f64>().unwrap().to_bits(), c[key].as_f64().unwrap().to_bits(), "{key}");
        }
        assert_eq!(r[6].parse::<u64>().unwrap(), c["count"].as_u64().unwrap());
    }
}

#[test]
fn reruns_reproduce_value_files_byte_for_byte() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (out_dir(&tmp, "a"), out_dir(&tmp, "b"));
    for dir in [&a, &b] {
        ok(&[
            "effect",
            "--data",
            "gen:example2,n=300",
            "--model",
            "tree:max_leaves=40",
            "--features",
            "x1,x2",
            "--seed",
            "5",
            "--svg",
            "--out",
            dir.to_str().unwrap(),
        ]);
    }
    for f in ["values.csv", "effect.svg"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (ja, jb) = (json(a.join("values.json")), json(b.join("values.json")));
    assert_eq!(ja["corners"], jb["corners"]);
    // the echoed command line reproduces the run
    let report = json(a.join("report.json"));
    let argv: Vec<String> =
        report["command"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_owned()).collect();
    let c = out_dir(&tmp, "c");
    let mut again: Vec<String> = argv[1..].to_vec();
    let pos = again.iter().position(|s| s == "--out").unwrap();
    again[pos + 1] = c.to_str().unwrap().to_owned();
    ok(&again.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(std::fs::read(a.join("values.csv")).unwrap(), std::fs::read(c.join("values.csv")).unwrap());
}

#[test]
fn heatmap_marks_every_empty_cell() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "svg");
    effect(&dir, &["--features", "x1,x2", "--K", "10", "--svg"]);
    let imputed = json(dir.join("values.json"))["metadata"]["imputed_cells"].as_u64().unwrap();
    assert!(imputed > 0);
    let svg = std::fs::read_to_string(dir.join("effect.svg")).unwrap();
    assert_eq!(svg.matches("fill=\"#000000\"").count() as u64, imputed);
    assert_eq!(json(dir.join("report.json"))["warnings"].as_array().unwrap().len(), 1);

    let line = out_dir(&tmp, "line");
    effect(&line, &["--features", "x2", "--svg"]);
    assert_eq!(std::fs::read_to_string(line.join("effect.svg")).unwrap().matches("<polyline").count(), 1);
}

#[test]
fn compare_with_and_without_truth() {
    let tmp = TempDir::new().unwrap();
    let (with, without) = (out_dir(&tmp, "t"), out_dir(&tmp, "n"));
    let base = ["compare", "--data", "gen:example1", "--model", "tree", "--features", "x1", "--K", "40"];
    ok(&[&base[..], &["--out", with.to_str().unwrap()]].concat());
    ok(&[&base[..], &["--no-truth", "--out", without.to_str().unwrap()]].concat());

    let (h, rows) = csv(with.join("compare.csv"));
    assert_eq!(h, ["k", "x1", "ale", "pd", "mplot", "truth", "central", "count"]);
    assert_eq!(rows.len(), 41);
    // no M or PD value at the lower boundary corner
    assert_eq!((rows[0][3].as_str(), rows[0][4].as_str()), ("", ""));
    let report = json(with.join("report.json"));
    let rmse = &report["rmse"];
    assert!(rmse["ale"].as_f64().unwrap() < rmse["pd"].as_f64().unwrap(), "{rmse}");
    assert_eq!(report["ledger"]["ale"], 400);
    assert_eq!(report["ledger"]["pd"], 8000);
    assert_eq!(report["ledger"]["mplot"], 200);

    let (h, _) = csv(without.join("compare.csv"));
    assert_eq!(h, ["k", "x1", "ale", "pd", "mplot", "central", "count"]);
    assert!(json(without.join("report.json")).get("rmse").is_none());
    assert_eq!(std::fs::read_to_string(without.join("compare.svg")).unwrap().matches("<polyline").count(), 3);
}

#[test]
fn every_method_finds_an_independent_additive_truth() {
    let tmp = TempDir::new().unwrap();
    let dir = out_dir(&tmp, "add");
    ok(&[
        "compare",
        "--data",
        "gen:product-cube,d=2,n=100000",
        "--model",
        "expr:x1 + x2^2",
        "--features",
        "x1",
        "--K",
        "20",
        "--out",
        dir.to_str().unwrap(),
    ]);
    let (h, rows) = csv(dir.join("compare.csv"));
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let truth = col("truth");
    for method in ["ale", "pd", "mplot"] {
        let m = col(method);
        for r in rows.iter().filter(|r| r[col("central")] == "1") {
            let gap = (r[m].parse::<f64>().unwrap() - r[truth].parse::<f64>().unwrap()).abs();
            assert!(gap <= 0.05, "{method} off by {gap} at k = {}", r[0]);
        }
    }
}

#[test]
fn bridged_cli_model_matches_the_in_process_model() {
    let tmp = TempDir::new().unwrap();
    let (local, bridged) = (out_dir(&tmp, "local"), out_dir(&tmp, "bridge"));
    let serve = format!("bridge:batch=53,cmd={} serve --model expr:x1*x2+x1", env!("CARGO_BIN_EXE_ale"));
    for (dir, model) in [(&local, "expr:x1*x2+x1"), (&bridged, serve.as_str())] {
        ok(&[
            "effect",
            "--data",
            "gen:gaussian-pair,rho=0.5,n=400",
            "--model",
            model,
            "--features",
            "x1,x2",
            "--K",
            "12",
            "--out",
            dir.to_str().unwrap(),
        ]);
    }
    assert_eq!(std::fs::read(local.join("values.csv")).unwrap(), std::fs::read(bridged.join("values.csv")).unwrap());
    assert_eq!(json(bridged.join("report.json"))["ledger"]["ale"], 1600);
}

#[test]
fn generated_csv_feeds_a_tree() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("ex2.csv");
    ok(&["generate", "--data", "gen:example2,n=150", "--seed", "3", "--out", file.to_str().unwrap()]);
    let (h, rows) = csv(&file);
    assert_eq!(h, ["x1", "x2", "y"]);
    assert_eq!(rows.len(), 150);

    let dir = out_dir(&tmp, "tree");
    ok(&[
        "effect",
        "--data",
        file.to_str().unwrap(),
        "--response",
        "y",
        "--model",
        "tree:max_leaves=20,min_leaf=2",
        "--features",
        "x2",
        "--K",
        "15",
        "--out",
        dir.to_str().unwrap(),
    ]);
    let report = json(dir.join("report.json"));
    assert_eq!(report["n"], 150);
    assert!(report["model"].as_str().unwrap().starts_with("tree"));

    // without a response there is nothing to fit
    let out = ale(&[
        "effect",
        "--data",
        file.to_str().unwrap(),
        "--model",
        "tree",
        "--features",
        "x1",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(!out.status.success());

    let out = ale(&["generate", "--data", file.to_str().unwrap(), "--out", tmp.path().join("o.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_the_flags() {
    let text = String::from_utf8(ok(&["effect", "--help"]).stdout).unwrap();
    for flag in ["--data", "--model", "--features", "--K", "--method", "--seed", "--out", "--svg"] {
        assert!(text.contains(flag), "{flag}");
    }
}
