use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use phaselab_cli::RunManifest;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn phaselab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phaselab")).args(args).env_remove("PHASELAB_OUT").output().expect("spawn phaselab")
}

fn run_in(out: &Path, cmd: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    phaselab(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files_under(dir: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out
}

/// Every file in the run directory is the manifest or one of its artifacts.
fn assert_manifest_complete(dir: &Path) -> RunManifest {
    let m = RunManifest::read(dir).unwrap();
    let listed: BTreeSet<String> = m.artifacts.iter().map(|a| a.path.clone()).collect();
    let mut on_disk = files_under(dir);
    assert!(on_disk.remove("manifest.json"));
    assert_eq!(listed, on_disk);
    for a in &m.artifacts {
        let bytes = std::fs::read(dir.join(&a.path)).unwrap();
        assert_eq!(phaselab_cli::output::sha256_hex(&bytes), a.sha256, "{}", a.path);
    }
    m
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL_TS: &str = r#"
model = "ts"
seed = 4

[ts]
n = 40
d = 6
N = 12
sigma2 = 0.5
sigma_a2 = 0.1
sigma_w2 = 0.5
eps = -0.3

[langevin]
step_size = 0.005
n_steps = 600
burn_in = 100
thin = 10
init_seeds = 2
data_seeds = 2
n_test = 50
checkpoint_every = 200
"#;

#[test]
fn ts_theory_base_grid_gives_five_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run_in(&out, "ts-theory", &configs().join("ts_theory.toml"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with("sigma2,u,b,c,h1,h3,phase"));
    let m = assert_manifest_complete(&out);
    assert_eq!(m.status, "clean");
    assert_eq!(m.command, "ts-theory");
    assert!(m.artifact("action/decreasing_004.csv").is_some());
}

#[test]
fn rerun_reproduces_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("mod_theory.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run_in(&a, "mod-theory", &cfg, &[]).status.code(), Some(0));
    assert_eq!(run_in(&b, "mod-theory", &cfg, &[]).status.code(), Some(0));
    let (ma, mb) = (assert_manifest_complete(&a), assert_manifest_complete(&b));
    assert_eq!(ma.config_hash, mb.config_hash);
    assert_eq!(ma.artifacts, mb.artifacts);
}

#[test]
fn malformed_config_names_field_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let typo = write_config(
        tmp.path(),
        "typo.toml",
        &std::fs::read_to_string(configs().join("ts_theory.toml")).unwrap().replace("sigma_w2", "sigma_w"),
    );
    let o = run_in(&out, "ts-theory", &typo, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sigma_w"), "{}", stderr(&o));
    assert!(!out.exists());

    let bad = run_in(&out, "ts-theory", &configs().join("ts_theory.toml"), &["--set", "ts.d=0"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("ts.d"), "{}", stderr(&bad));
    assert!(!out.exists());
}

#[test]
fn empty_grid_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run_in(&out, "mod-theory", &configs().join("mod_theory.toml"), &["--set", "scan.points=0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("scan."), "{}", stderr(&o));
    assert!(!out.exists());
    let text = std::fs::read_to_string(configs().join("mod_theory.toml")).unwrap();
    let text = text.replace("lo = 0.1\nhi = 0.3\npoints = 81\n", "values = []\n");
    let cfg = write_config(tmp.path(), "empty.toml", &text);
    let o = run_in(&out, "mod-theory", &cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("scan.values"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn both_directions_populate_hysteresis_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(run_in(&out, "mod-theory", &configs().join("mod_theory.toml"), &[]).status.code(), Some(0));
    let csv = std::fs::read_to_string(out.join("hysteresis.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("sigma2,a_mag_decreasing,a_mag_increasing,difference,hysteretic"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 81);
    for r in &rows {
        assert!(r[1].parse::<f64>().unwrap() > 0.0 && r[2].parse::<f64>().unwrap() > 0.0);
    }
    let single = tmp.path().join("single");
    let o = run_in(
        &single,
        "mod-theory",
        &configs().join("mod_theory.toml"),
        &["--set", "scan.directions=[\"decreasing\"]"],
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(!single.join("hysteresis.csv").exists());
}

#[test]
fn mod_theory_reports_both_boundaries() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(run_in(&out, "mod-theory", &configs().join("mod_theory.toml"), &[]).status.code(), Some(0));
    let b: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("boundaries.json")).unwrap()).unwrap();
    let down: Vec<f64> = b
        .as_array()
        .unwrap()
        .iter()
        .filter(|x| x["direction"] == "decreasing")
        .map(|x| x["sigma2"].as_f64().unwrap())
        .collect();
    assert_eq!(down.len(), 2);
    assert!((down[0] - 0.227).abs() < 0.01 && (down[1] - 0.175).abs() < 0.01, "{down:?}");
}

#[test]
fn prior_only_sample_reports_moments() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = write_config(tmp.path(), "prior.toml", &SMALL_TS.replace("n = 40", "n = 0"));
    let o = run_in(&out, "sample", &cfg, &["--set", "langevin.n_steps=4000", "--set", "langevin.burn_in=500"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let moments = s["moments"].as_array().unwrap();
    assert_eq!(moments.len(), 2);
    assert_eq!(moments[0]["layer"], "input");
    assert!((moments[0]["expected"].as_f64().unwrap() - 0.5 / 6.0).abs() < 1e-15);
    assert_manifest_complete(&out);
}

#[test]
fn resume_continues_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL_TS);
    let full = tmp.path().join("full");
    let part = tmp.path().join("part");
    assert_eq!(run_in(&full, "sample", &cfg, &[]).status.code(), Some(0));
    let o = run_in(&part, "sample", &cfg, &["--set", "langevin.stop_at=250"]);
    assert_eq!(o.status.code(), Some(0));
    let m = RunManifest::read(&part).unwrap();
    assert!(m.notes.iter().any(|n| n.contains("stopped at step 250 of 600")), "{:?}", m.notes);
    let o = phaselab(&["resume", part.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["checkpoint.json", "summary.json", "histogram.csv", "projections.csv", "losses.csv"] {
        assert_eq!(std::fs::read(full.join(f)).unwrap(), std::fs::read(part.join(f)).unwrap(), "{f}");
    }
    assert_manifest_complete(&part);
}

#[test]
fn sweep_refuses_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SMALL_TS}\n[scan]\nvariable = \"width\"\nvalues = [12, 6]\n");
    let cfg = write_config(tmp.path(), "sweep.toml", &text);
    let out = tmp.path().join("sweep");
    let o = run_in(&out, "scan", &cfg, &["--set", "langevin.n_steps=200"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("point_001/summary.json").exists());
    let o = phaselab(&["resume", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sweep"));
}

#[test]
fn seed_flag_changes_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL_TS);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let short = ["--set", "langevin.n_steps=200"];
    assert_eq!(run_in(&a, "sample", &cfg, &short).status.code(), Some(0));
    assert_eq!(run_in(&b, "sample", &cfg, &[&short[..], &["--seed", "99"]].concat()).status.code(), Some(0));
    assert_ne!(std::fs::read(a.join("losses.csv")).unwrap(), std::fs::read(b.join("losses.csv")).unwrap());
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_phaselab"))
        .args(["mod-theory", configs().join("mod_theory.toml").to_str().unwrap()])
        .env("PHASELAB_OUT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(tmp.path().join("mod-theory/manifest.json").exists());
}

#[test]
fn diverging_ensemble_is_partial() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL_TS);
    let out = tmp.path().join("run");
    let o = run_in(&out, "sample", &cfg, &["--set", "langevin.step_size=50.0", "--set", "langevin.n_steps=200"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let m = assert_manifest_complete(&out);
    assert_eq!(m.status, "partial");
    assert!(m.notes.iter().any(|n| n.contains("diverged")));
}

#[test]
fn cost_guard_blocks_full_scale_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run_in(&out, "scan", &configs().join("width_sweep.toml"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("langevin.flop_cap"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn width_sweep_writes_three_ensembles() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let short = [
        "--set",
        "langevin.n_steps=12",
        "--set",
        "langevin.burn_in=4",
        "--set",
        "langevin.thin=4",
        "--set",
        "langevin.init_seeds=2",
        "--set",
        "langevin.data_seeds=1",
        "--set",
        "langevin.n_test=200",
    ];
    let o = run_in(&out, "scan", &configs().join("width_sweep.toml"), &short);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let widths: Vec<f64> = sweep.lines().skip(1).map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(widths, vec![2800.0, 1400.0, 700.0]);
    for i in 0..3 {
        let hist = std::fs::read_to_string(out.join(format!("point_{i:03}/histogram.csv"))).unwrap();
        assert_eq!(hist.lines().count(), 61);
    }
    assert_manifest_complete(&out);
}

#[test]
fn verify_passes_on_small_primes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let quick = [
        "--set",
        "verify.p_values=[5, 7]",
        "--set",
        "verify.mc_samples=1000000",
        "--set",
        "verify.integral_tol=0.03",
        "--set",
        "verify.gradient_points=5",
        "--set",
        "verify.prior_check=false",
    ];
    let o = run_in(&out, "verify", &configs().join("verify.toml"), &quick);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(r["passed"], true);
    let checks = r["checks"].as_array().unwrap();
    assert_eq!(checks.iter().filter(|c| c["group"] == "symmetry").count(), 12);
    assert_eq!(checks.iter().filter(|c| c["group"] == "integrals").count(), 20);
}

#[test]
fn corrupted_kernel_fails_named_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let bad = [
        "--set",
        "verify.p_values=[5]",
        "--set",
        "verify.perturb_kernel=1e-6",
        "--set",
        "verify.integral_points=0",
        "--set",
        "verify.gradient_points=0",
        "--set",
        "verify.prior_check=false",
    ];
    let o = run_in(&out, "verify", &configs().join("verify.toml"), &bad);
    assert_eq!(o.status.code(), Some(3));
    let r: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(r["passed"], false);
    let failed: Vec<&str> = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failed.contains(&"P=5: commutes_T1"), "{failed:?}");
    assert_eq!(RunManifest::read(&out).unwrap().status, "verification_failed");
}
