use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn strich(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strich")).args(args).output().expect("binary runs")
}

fn fit_toy(out: &Path, model: &str, extra: &[&str]) -> Output {
    fit_toy_iters(out, model, "400", "200", extra)
}

fn fit_toy_iters(out: &Path, model: &str, iter: &str, warmup: &str, extra: &[&str]) -> Output {
    let panel = data("toy/panel.csv");
    let graph = data("toy/ring6.csv");
    let mut args = vec![
        "fit",
        "--data",
        panel.to_str().unwrap(),
        "--graph",
        graph.to_str().unwrap(),
        "--model",
        model,
        "--iter",
        iter,
        "--warmup",
        warmup,
        "--seed",
        "11",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    strich(&args)
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn toy_m0_fit_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = fit_toy(dir.path(), "m0", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["draws.csv", "summary.json", "metrics.json", "sampler_log.jsonl", "config.json", "predictive.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    assert!(!dir.path().join("FAILED").exists());
    let draws = std::fs::read_to_string(dir.path().join("draws.csv")).unwrap();
    let header = draws.lines().next().unwrap();
    assert!(header.starts_with(r#"chain,draw,lp,divergent,b,r,h,p,s,rho,tau,"phi[1,1]""#), "{header}");
    assert!(!header.contains("alpha"));
    assert_eq!(draws.lines().count(), 401);
    let log = std::fs::read_to_string(dir.path().join("sampler_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 800);
    let summary = read_json(&dir.path().join("summary.json"));
    assert_eq!(summary["n_chains"], 2);
    assert_eq!(summary["n_draws"], 200);
    assert_eq!(summary["phi_mean"].as_array().unwrap().len(), 6);
}

#[test]
fn metrics_record_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = fit_toy(dir.path(), "m1", &["--holdout", "0.15"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_json(&dir.path().join("metrics.json"));
    let keys: Vec<&str> = m.as_object().unwrap().keys().map(String::as_str).collect();
    for k in [
        "label",
        "model",
        "trend",
        "formula",
        "n_regions",
        "n_times",
        "n_chains",
        "n_draws",
        "divergences",
        "out_of_sample",
        "in_sample",
        "waic",
        "p_waic",
        "loo",
        "p_loo",
        "max_pareto_k",
    ] {
        assert!(keys.contains(&k), "missing {k}");
    }
    for block in ["out_of_sample", "in_sample"] {
        for k in ["coverage", "piw", "rmse", "n_cells"] {
            assert!(m[block][k].is_number(), "{block}.{k}");
        }
    }
    assert_eq!(m["out_of_sample"]["n_cells"], 18);
    let c = m["out_of_sample"]["coverage"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&c));
    let before = std::fs::read(dir.path().join("metrics.json")).unwrap();
    let ev = strich(&["evaluate", dir.path().to_str().unwrap()]);
    assert!(ev.status.success(), "{}", String::from_utf8_lossy(&ev.stderr));
    assert_eq!(before, std::fs::read(dir.path().join("metrics.json")).unwrap());
}

#[test]
fn missing_graph_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let panel = data("toy/panel.csv");
    let out = strich(&[
        "fit",
        "--data",
        panel.to_str().unwrap(),
        "--graph",
        "/no/such/graph.csv",
        "--model",
        "m2",
        "--iter",
        "20",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/no/such/graph.csv"), "{err}");
    assert!(std::fs::read_to_string(dir.path().join("FAILED")).unwrap().contains("/no/such/graph.csv"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(fit_toy(a.path(), "m1", &["--holdout", "0.15"]).status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_strich"))
        .env("STRICH_WORKERS", "1")
        .args([
            "fit",
            "--data",
            data("toy/panel.csv").to_str().unwrap(),
            "--graph",
            data("toy/ring6.csv").to_str().unwrap(),
            "--model",
            "m1",
            "--iter",
            "400",
            "--warmup",
            "200",
            "--seed",
            "11",
            "--holdout",
            "0.15",
            "--out",
            b.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in ["draws.csv", "draws_unconstrained.csv", "summary.json", "sampler_log.jsonl", "predictive.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn evaluate_needs_a_holdout() {
    let dir = tempfile::tempdir().unwrap();
    assert!(fit_toy_iters(dir.path(), "m0", "60", "30", &[]).status.success());
    let out = strich(&["evaluate", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("hold-out"));
    let none = strich(&["evaluate", "/no/such/fit"]);
    assert!(String::from_utf8_lossy(&none.stderr).contains("missing fit artifact"));
}

fn attr<'a>(svg: &'a str, tag: &str, name: &str) -> &'a str {
    let i = svg.find(tag).unwrap();
    let rest = &svg[i..];
    let key = format!("{name}=\"");
    let j = rest.find(&key).unwrap() + key.len();
    let k = rest[j..].find('"').unwrap();
    &rest[j..j + k]
}

#[test]
fn plots_match_summary() {
    let dir = tempfile::tempdir().unwrap();
    assert!(fit_toy(dir.path(), "m1", &["--holdout", "0.15"]).status.success());
    let out = strich(&["plot", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = read_json(&dir.path().join("summary.json"));
    let curve = std::fs::read_to_string(dir.path().join("curve.svg")).unwrap();
    for (field, key) in [("data-lower", "lower"), ("data-upper", "upper")] {
        let shown: Vec<f64> = attr(&curve, "class=\"band\"", field).split(' ').map(|v| v.parse().unwrap()).collect();
        let stored: Vec<f64> =
            summary["curves"][0][key].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(shown, stored);
        assert_eq!(shown.len(), 20);
    }
    // Independent route: natural-scale draws, type-7 quantiles of the
    // linearized trend.
    let mut reader = csv::Reader::from_path(dir.path().join("draws.csv")).unwrap();
    let mut curves = Vec::new();
    for rec in reader.records() {
        let rec = rec.unwrap();
        let v: Vec<f64> = (4..9).map(|i| rec[i].parse().unwrap()).collect();
        curves.push(strich::Curve::new(v[0], v[1], v[2], v[3], v[4]).unwrap());
    }
    for t in [1usize, 8, 20] {
        let lam: Vec<f64> = curves.iter().map(|c| c.deriv_approx(t as f64)).collect();
        for (q, key) in [(0.025, "lower"), (0.975, "upper")] {
            let want = strich::inference::quantile(&lam, q);
            let got = summary["curves"][0][key][t - 1].as_f64().unwrap();
            assert!((want - got).abs() <= 1e-12 * want.abs().max(1.0), "week {t} {key}: {want} vs {got}");
        }
    }
    let heat = std::fs::read_to_string(dir.path().join("phi_heatmap.svg")).unwrap();
    assert_eq!(heat.matches("class=\"cell\"").count(), 6 * 20);
    assert_eq!(attr(&heat, "class=\"heatmap\"", "data-rows"), "6");
    assert_eq!(attr(&heat, "class=\"heatmap\"", "data-cols"), "20");
    let fit = std::fs::read_to_string(dir.path().join("region_fit.svg")).unwrap();
    assert_eq!(fit.matches("class=\"region\"").count(), 6);
    let missing = tempfile::tempdir().unwrap();
    assert!(!strich(&["plot", missing.path().to_str().unwrap()]).status.success());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out_dir = dir.path().join("run");
    std::fs::write(
        &cfg,
        serde_json::json!({
            "data": data("toy/panel.csv"),
            "graph": data("toy/ring6.csv"),
            "model": "m1",
            "iter": 80,
            "warmup": 40,
            "chains": 3,
            "seed": 5,
            "out": out_dir,
        })
        .to_string(),
    )
    .unwrap();
    let out = strich(&["fit", "--config", cfg.to_str().unwrap(), "--chains", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resolved = read_json(&out_dir.join("config.json"));
    assert_eq!(resolved["nuts"]["n_chains"], 1);
    assert_eq!(resolved["nuts"]["seed"], 5);
    assert_eq!(read_json(&out_dir.join("summary.json"))["n_chains"], 1);
}

#[test]
fn simulate_then_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let out = strich(&[
        "simulate",
        "--data",
        data("toy/template.csv").to_str().unwrap(),
        "--graph",
        data("toy/ring6.csv").to_str().unwrap(),
        "--model",
        "m1",
        "--seed",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(dir.path().join("panel.csv")).unwrap(),
        std::fs::read(data("toy/panel.csv")).unwrap(),
        "bundled toy panel is the seed-1 simulation"
    );
    let truth = read_json(&dir.path().join("truth.json"));
    assert_eq!(truth["car"]["phi"].as_array().unwrap().len(), 20);
    let fit_dir = tempfile::tempdir().unwrap();
    assert!(fit_toy_iters(fit_dir.path(), "m1", "60", "30", &[]).status.success());
    let s = strich(&["summarize", fit_dir.path().to_str().unwrap()]);
    let text = String::from_utf8_lossy(&s.stdout);
    assert!(text.contains("alpha") && text.contains("rho") && !text.contains("phi["), "{text}");
}
