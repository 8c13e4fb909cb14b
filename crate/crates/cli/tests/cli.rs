use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mixsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixsel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mixsel(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, name: &str, n: usize) -> PathBuf {
    let out = dir.join(name);
    ok(&[
        "simulate",
        "--scenario",
        "polynomial_5_1",
        "--n",
        &n.to_string(),
        "--seed",
        "4",
        "--out",
        p(&out),
    ]);
    out
}

const QUICK: [&str; 14] = [
    "--iters",
    "60",
    "--burnin",
    "20",
    "--thin",
    "2",
    "--chains",
    "2",
    "--eb-max-steps",
    "2",
    "--eb-block-iters",
    "20",
    "--lb-iters",
    "20",
];

fn fit(dir: &Path, data: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let data = data.join("data.csv");
    let mut args = vec![
        "fit",
        "--data",
        p(&data),
        "--outcome",
        "y",
        "--covariates",
        "C1,C2,C3,C4,C5,C6,C7,C8,C9,C10",
        "--out",
        p(&out),
    ];
    args.extend(QUICK);
    args.extend(extra);
    ok(&args);
    out
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn prior_prob_single_exposure() {
    let out = ok(&[
        "prior-prob",
        "--p",
        "1",
        "--k",
        "1",
        "--M",
        "1",
        "--gamma",
        "1",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("j,probability"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    assert!((row[1].parse::<f64>().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(lines.next(), None);
}

#[test]
fn prior_prob_reads_config_and_flags_win() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("prior.toml");
    fs::write(&cfg, "p = 3\nk = 1\nm_shape = 1.0\ngamma = 7.0\n").unwrap();
    let a = ok(&["prior-prob", "--config", p(&cfg)]).stdout;
    let b = ok(&["prior-prob", "--config", p(&cfg), "--gamma", "1"]).stdout;
    let c = ok(&[
        "prior-prob",
        "--p",
        "3",
        "--k",
        "1",
        "--M",
        "1",
        "--gamma",
        "1",
    ])
    .stdout;
    assert_ne!(a, b);
    assert_eq!(b, c);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 4);
}

#[test]
fn simulate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let a = simulate(tmp.path(), "a", 80);
    let b = simulate(tmp.path(), "b", 80);
    for f in ["data.csv", "truth.csv", "config.toml"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let c = tmp.path().join("c");
    let from_manifest = a.join("manifest.json");
    ok(&["simulate", "--config", p(&from_manifest), "--out", p(&c)]);
    assert_eq!(read(&a.join("data.csv")), read(&c.join("data.csv")));
    let data = read(&a.join("data.csv"));
    assert_eq!(data.lines().count(), 81);
    assert!(data.starts_with("y,X1,X2,X3,X4,X5,X6,X7,X8,X9,X10,C1,"));
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&a.join("manifest.json"))).unwrap();
    assert_eq!(
        manifest["results"]["true_sets"],
        serde_json::json!([[2, 3], [4, 5]])
    );
}

#[test]
fn existing_output_needs_force() {
    let tmp = TempDir::new().unwrap();
    let a = simulate(tmp.path(), "a", 40);
    let args = [
        "simulate",
        "--scenario",
        "null",
        "--n",
        "40",
        "--out",
        p(&a),
    ];
    let out = mixsel(&args);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    ok(&forced);
    let manifest = read(&a.join("manifest.json"));
    assert!(manifest.contains("\"null\""));
}

#[test]
fn fit_writes_artifacts_and_reruns_identically() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "sim", 120);
    let first = fit(tmp.path(), &sim, "fit1", &[]);
    for f in [
        "model.json",
        "manifest.json",
        "config.toml",
        "chains/chain_0.ckpt",
        "chains/chain_1.ckpt",
        "pip_main.csv",
        "pip_pair.csv",
        "models.csv",
        "waic.csv",
        "psr.csv",
        "fitted.csv",
        "eb_trace.csv",
        "lower_bound_curve.csv",
    ] {
        assert!(first.join(f).is_file(), "missing {f}");
    }
    let pip = read(&first.join("pip_main.csv"));
    assert_eq!(pip.lines().count(), 11);
    for line in pip.lines().skip(1) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
    assert_eq!(read(&first.join("pip_pair.csv")).lines().count(), 46);
    assert_eq!(read(&first.join("fitted.csv")).lines().count(), 121);
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&first.join("manifest.json"))).unwrap();
    assert_eq!(manifest["results"]["violations"], 0);
    assert_eq!(manifest["results"]["draws"], 40);
    assert!(manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .any(|o| o == "chains/chain_1.ckpt"));

    let settings = &manifest["settings"];
    assert_eq!(settings["k"], 10);
    assert_eq!(settings["m_shape"], 3.0);
    assert_eq!(settings["seed"], 1);

    let second = tmp.path().join("fit2");
    let cfg = first.join("config.toml");
    ok(&["fit", "--config", p(&cfg), "--out", p(&second)]);
    let third = tmp.path().join("fit3");
    let from_manifest = first.join("manifest.json");
    ok(&["fit", "--config", p(&from_manifest), "--out", p(&third)]);
    assert_eq!(
        fs::read(first.join("chains/chain_1.ckpt")).unwrap(),
        fs::read(third.join("chains/chain_1.ckpt")).unwrap()
    );
    for f in [
        "model.json",
        "pip_main.csv",
        "models.csv",
        "waic.csv",
        "psr.csv",
        "fitted.csv",
        "chains/chain_0.ckpt",
    ] {
        assert_eq!(
            fs::read(first.join(f)).unwrap(),
            fs::read(second.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "sim", 60);
    let a = fit(tmp.path(), &sim, "a", &["--slab", "2.5", "--threads", "1"]);
    let b = fit(tmp.path(), &sim, "b", &["--slab", "2.5", "--threads", "3"]);
    assert!(!a.join("eb_trace.csv").exists());
    for f in ["model.json", "chains/chain_0.ckpt", "chains/chain_1.ckpt"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn bad_inputs_fail_cleanly() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("never");

    let r = mixsel(&["fit", "--no-such-flag", "--out", p(&out)]);
    assert!(!r.status.success());

    let missing = tmp.path().join("missing.csv");
    let r = mixsel(&[
        "fit",
        "--data",
        p(&missing),
        "--outcome",
        "y",
        "--out",
        p(&out),
    ]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing.csv"));

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "y,X1,X2\n1,2,3\n4,oops,6\n").unwrap();
    let r = mixsel(&["fit", "--data", p(&bad), "--outcome", "y", "--out", p(&out)]);
    assert!(!r.status.success());
    let err = String::from_utf8_lossy(&r.stderr).to_string();
    assert!(err.contains("line 3") && err.contains("X1"), "{err}");

    let r = mixsel(&["fit", "--data", p(&bad), "--outcome", "z", "--out", p(&out)]);
    assert!(!r.status.success());

    let cfg = tmp.path().join("typo.toml");
    fs::write(&cfg, "iterz = 5\n").unwrap();
    let r = mixsel(&["fit", "--config", p(&cfg), "--out", p(&out)]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("iterz"));

    let r = mixsel(&["simulate", "--scenario", "nope", "--out", p(&out)]);
    assert!(!r.status.success());

    let entries: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(entries.len(), 2, "leftover output: {entries:?}");
    assert!(!out.exists());
}

#[test]
fn summarize_and_resume_a_fit() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "sim", 100);
    let fit_dir = fit(tmp.path(), &sim, "fit", &["--slab", "3"]);

    let rows = tmp.path().join("rows.csv");
    fs::write(&rows, "X10,X9,X8,X7,X6,X5,X4,X3,X2,X1\n0,0,0,0,0,0,0,0,0,0\n0,0,0,0,0,0.1,-0.1,0.1,0.2,0\n0,0,0,0,0,100,0,0,0,0\n").unwrap();
    ok(&[
        "summarize",
        "--fit",
        p(&fit_dir),
        "--cross-section",
        "X2,X3",
        "--surface",
        "X4,X5",
        "--grid-size",
        "7",
        "--set",
        "X2,X3",
        "--set",
        "X1",
        "--predict",
        p(&rows),
    ]);
    let summary = fit_dir.join("summary");
    assert_eq!(
        read(&summary.join("cross_section_X2_X3.csv"))
            .lines()
            .count(),
        1 + 3 * 7
    );
    assert_eq!(
        read(&summary.join("surface_X4_X5.csv")).lines().count(),
        1 + 49
    );
    let sets = read(&summary.join("set_pip.csv"));
    assert!(sets.lines().nth(1).unwrap().starts_with("\"X2,X3\","));
    let pred = read(&summary.join("predictions.csv"));
    let flags: Vec<&str> = pred
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert_eq!(flags, ["false", "false", "true"]);

    let r = mixsel(&[
        "summarize",
        "--fit",
        p(&fit_dir),
        "--cross-section",
        "X2,X9",
    ]);
    assert!(!r.status.success());

    // Resuming 60 -> 100 equals a fresh 100-iteration run.
    let resumed = tmp.path().join("resumed");
    ok(&[
        "resume",
        "--fit",
        p(&fit_dir),
        "--iters",
        "100",
        "--out",
        p(&resumed),
    ]);
    let fresh = fit(
        tmp.path(),
        &sim,
        "fresh",
        &["--slab", "3", "--iters", "100"],
    );
    for f in [
        "chains/chain_0.ckpt",
        "chains/chain_1.ckpt",
        "pip_main.csv",
        "waic.csv",
        "fitted.csv",
    ] {
        assert_eq!(
            fs::read(resumed.join(f)).unwrap(),
            fs::read(fresh.join(f)).unwrap(),
            "{f}"
        );
    }
    let r = mixsel(&[
        "resume",
        "--fit",
        p(&fit_dir),
        "--iters",
        "10",
        "--out",
        p(&tmp.path().join("x")),
    ]);
    assert!(!r.status.success());
}

#[test]
fn select_df_and_lower_bound() {
    let tmp = TempDir::new().unwrap();
    let sim = simulate(tmp.path(), "sim", 80);
    let data = sim.join("data.csv");
    let out = tmp.path().join("sel");
    let mut args = vec![
        "select-df",
        "--data",
        p(&data),
        "--outcome",
        "y",
        "--covariates",
        "C1,C2,C3,C4,C5,C6,C7,C8,C9,C10",
        "--grid",
        "1,2",
        "--slab",
        "2",
        "--out",
        p(&out),
    ];
    args.extend(QUICK);
    let stdout = String::from_utf8(ok(&args).stdout).unwrap();
    let table = read(&out.join("df_table.csv"));
    assert_eq!(table.lines().count(), 3);
    assert_eq!(table.lines().filter(|l| l.contains(",true,")).count(), 1);
    assert!(out.join("d1/model.json").is_file() && out.join("d2/model.json").is_file());
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    let chosen = manifest["results"]["chosen_df"].as_u64().unwrap();
    assert!(stdout.contains(&format!("chosen df: {chosen}")));

    let lb = tmp.path().join("lb");
    let mut args = vec![
        "lower-bound",
        "--data",
        p(&data),
        "--outcome",
        "y",
        "--lb-grid",
        "8,4,2,1",
        "--lb-full-curve",
        "--out",
        p(&lb),
    ];
    args.extend(QUICK);
    ok(&args);
    assert_eq!(read(&lb.join("lower_bound_curve.csv")).lines().count(), 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&lb.join("manifest.json"))).unwrap();
    let bound = manifest["results"]["bound"].as_f64().unwrap();
    assert!([8.0, 4.0, 2.0, 1.0].contains(&bound));
}
