//! Exit codes, config precedence and report shape of the command line.

use steinclt::cli::{run, EXIT_CONDITION, EXIT_OK, EXIT_USAGE};

fn call(args: &[&str], env_seed: Option<&str>) -> i32 {
    let mut full = vec!["steinclt"];
    full.extend_from_slice(args);
    run(full, env_seed)
}

fn json(path: &std::path::Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn diagnose_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p.display().to_string()
    };
    let id = write("id.csv", "1,0,0\n0,1,0\n0,0,1\n");
    let eq = write("eq.csv", "1,0.5,0.5\n0.5,1,0.5\n0.5,0.5,1\n");
    let rank2 = write("r2.csv", "1,0.6,0.8\n0.6,1,0\n0.8,0,1\n");
    let out = dir.path().join("d.json");
    let o = out.display().to_string();

    assert_eq!(call(&["diagnose", &id, "--out", &o], None), EXIT_OK);
    let v = json(&out);
    assert_eq!(v["alpha_sq"], 1.0);
    assert_eq!(v["beta_sq"], 1.0);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));

    assert_eq!(call(&["diagnose", &eq, "--out", &o], None), EXIT_OK);
    assert!((json(&out)["beta_sq"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);

    assert_eq!(call(&["diagnose", &rank2, "--out", &o], None), EXIT_CONDITION);
    assert_eq!(call(&["diagnose", "/definitely/not/here.csv"], None), EXIT_USAGE);
    let bad = write("bad.csv", "1,x\n0,1\n");
    assert_eq!(call(&["diagnose", &bad], None), EXIT_USAGE);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(call(&["rate-study", "--model", "equicorr"], None), EXIT_USAGE);
    assert_eq!(call(&["rate-study", "--innovation", "cauchy"], None), EXIT_USAGE);
    assert_eq!(call(&["bootstrap-study", "--n-boot", "0"], None), EXIT_USAGE);
    assert_eq!(call(&["bootstrap-study", "--gamma", "1.5"], None), EXIT_USAGE);
    assert_eq!(call(&["verify-lemmas", "--dim", "2"], None), EXIT_USAGE);
    assert_eq!(call(&["bounds", "eval", "--preset", "nope"], None), EXIT_USAGE);
    assert_eq!(call(&["no-such-command"], None), EXIT_USAGE);
    assert_eq!(call(&["diagnose", "--seed", "-3"], None), EXIT_USAGE);
    assert_eq!(call(&["--help"], None), EXIT_OK);
}

#[test]
fn bounds_one_line_record_and_batch_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.json");
    let o = out.display().to_string();
    let args = ["bounds", "eval", "--preset", "main", "--n", "10000", "--d", "10", "--B", "1", "--alpha2", "1", "--beta2", "1", "--covgap", "0", "--c", "1", "--out", &o];
    assert_eq!(call(&args, None), EXIT_OK);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["result"]["vacuous"], true);
    assert!((v["result"]["bound"].as_f64().unwrap() - 1294.574189).abs() < 1e-5);

    let out = dir.path().join("b.csv");
    let o = out.display().to_string();
    assert_eq!(call(&["bounds", "eval", "--n-grid", "100,1000", "--format", "csv", "--out", &o], None), EXIT_OK);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,bound,vacuous,cov_term,rate_term");
    assert_eq!(lines.len(), 3);
}

#[test]
fn seed_and_config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 11\nsamples = 3000\n[compare-gaussians]\ndim = 3\nmix = 0.2\n").unwrap();
    let cfg = cfg.display().to_string();
    let out = dir.path().join("c.json");
    let o = out.display().to_string();

    assert_eq!(call(&["compare-gaussians", "--config", &cfg, "--out", &o], None), EXIT_OK);
    let v = json(&out);
    assert_eq!(v["config"]["seed"], 11);
    assert_eq!(v["config"]["samples"], 3000);
    assert_eq!(v["config"]["dim"], 3);
    assert_eq!(v["config"]["mix"], 0.2);

    assert_eq!(call(&["compare-gaussians", "--config", &cfg, "--out", &o], Some("5")), EXIT_OK);
    assert_eq!(json(&out)["config"]["seed"], 5);
    assert_eq!(call(&["compare-gaussians", "--config", &cfg, "--seed", "2", "--mix", "0.3", "--out", &o], Some("5")), EXIT_OK);
    let v = json(&out);
    assert_eq!(v["config"]["seed"], 2);
    assert_eq!(v["config"]["mix"], 0.3);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[compare-gaussians]\nmixx = 0.2\n").unwrap();
    assert_eq!(call(&["compare-gaussians", "--config", &bad.display().to_string()], None), EXIT_USAGE);
}

#[test]
fn verify_lemmas_report_and_budget_policy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.json");
    let o = out.display().to_string();
    assert_eq!(call(&["verify-lemmas", "--suite-size", "2", "--samples", "1000", "--seed", "4", "--out", &o], None), EXIT_OK);
    let v = json(&out);
    let checks = v["result"]["checks"].as_array().unwrap();
    let divergence: Vec<_> = checks.iter().filter(|c| c["check_id"].as_str().unwrap().starts_with("divergence")).collect();
    assert_eq!(divergence.len(), 6);
    assert!(divergence.iter().all(|c| c["verdict"] != "fail"));
    assert!(v["result"]["constants"]["derivative_bound"].as_array().unwrap().len() == 3);
    assert_eq!(v["result"]["hard_failures"], 0);
}

#[test]
fn rate_study_writes_table_and_flags_gaussian_noise() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let table = dir.path().join("r.csv");
    let args = [
        "rate-study", "--model", "equicorr:0.5", "--dim", "3", "--innovation", "gaussian", "--reps", "300",
        "--n-grid", "16,32,64,128", "--out", &out.display().to_string(), "--table", &table.display().to_string(),
    ];
    assert_eq!(call(&args, None), EXIT_OK);
    let v = json(&out);
    assert_eq!(v["result"]["noise_dominated"], true);
    assert_eq!(v["config"]["innovation"], "gaussian");
    let csv = std::fs::read_to_string(&table).unwrap();
    assert!(csv.starts_with("n,rho_hat,stderr,main_bound,quarter_rate"));
    assert_eq!(csv.lines().count(), 5);
}
