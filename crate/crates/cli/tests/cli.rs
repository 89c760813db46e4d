use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
# small scenario for fast end-to-end runs
n_users=1000
n_products=60
fraud_fraction=0.05
n_stocking_groups=2
n_cashback_groups=2
n_mixed_groups=1
group_size_min=4
group_size_max=6
transr_epochs=20
max_epochs=300
seed=3
";

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abusegraph"))
        .args(args)
        .arg("--run")
        .arg(dir)
        .env_remove("ABUSEGRAPH_SEED")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn seeded(root: &Path, name: &str) -> std::path::PathBuf {
    let dir = root.join(name);
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("config.txt"), SMALL).unwrap();
    dir
}

#[test]
fn staged_run_matches_run_all() {
    let root = tempfile::tempdir().unwrap();
    let staged = seeded(root.path(), "staged");
    for stage in ["generate", "build-graph", "train", "detect", "evaluate", "analyze-tcs"] {
        ok(&bin(&[stage], &staged));
    }
    for axis in ["seed_quantile", "propagation_threshold"] {
        ok(&bin(&["sweep", "--axis", axis], &staged));
    }
    let all = seeded(root.path(), "all");
    let out = bin(&["run-all"], &all);
    ok(&out);
    let report = String::from_utf8(out.stdout).unwrap();
    for key in ["precision=", "recall=", "f1=", "accuracy="] {
        assert!(report.lines().any(|l| l.starts_with(key)), "{report}");
    }
    let (a, b) = (files(&staged), files(&all));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(bytes == &b[name], "{name} differs");
    }
    let hash = String::from_utf8(a["config.txt"].clone()).unwrap();
    let hash = hash.lines().next().unwrap();
    for (name, bytes) in &a {
        let text = String::from_utf8(bytes.clone()).unwrap();
        if name == "model.ckpt" {
            assert_eq!(text.lines().nth(1), Some(hash), "{name}");
        } else if name == "metrics.json" {
            assert!(text.contains(hash.trim_start_matches("# config_hash=")), "{name}");
        } else {
            assert_eq!(text.lines().next(), Some(hash), "{name}");
        }
    }
}

#[test]
fn lineage_mismatch_is_refused_unless_forced() {
    let root = tempfile::tempdir().unwrap();
    let dir = seeded(root.path(), "run");
    ok(&bin(&["generate"], &dir));
    let out = bin(&["build-graph", "--set", "kappa=2.5"], &dir);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("config hash") && err.contains("--force"), "{err}");
    ok(&bin(&["build-graph", "--set", "kappa=2.5", "--force"], &dir));
}

#[test]
fn bad_inputs_fail_with_one_line() {
    let root = tempfile::tempdir().unwrap();
    let dir = seeded(root.path(), "run");
    let out = bin(&["config", "--set", "no_such_key=1"], &dir);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("no_such_key"));

    ok(&bin(&["generate"], &dir));
    let path = dir.join("transactions.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut fields: Vec<String> = lines[4].split(',').map(str::to_string).collect();
    fields[4] = "lots".into();
    lines[4] = fields.join(",");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let out = bin(&["build-graph"], &dir);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("line 5") && err.contains("quantity"), "{err}");
}

#[test]
fn config_precedence_through_the_binary() {
    let root = tempfile::tempdir().unwrap();
    let dir = seeded(root.path(), "run");
    let show = |extra: &[&str], env: &[(&str, &str)]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_abusegraph"));
        cmd.arg("config").args(extra).arg("--run").arg(&dir);
        for (k, v) in env {
            cmd.env(k, v);
        }
        let out = cmd.output().unwrap();
        ok(&out);
        String::from_utf8(out.stdout).unwrap()
    };
    // the file sets seed=3; the environment only fills keys the file leaves alone
    let text = show(&[], &[("ABUSEGRAPH_SEED", "8"), ("ABUSEGRAPH_KAPPA", "4")]);
    assert!(text.lines().any(|l| l == "seed=3"));
    assert!(text.lines().any(|l| l == "kappa=4"));
    let text = show(&["--set", "seed=5"], &[]);
    assert!(text.lines().any(|l| l == "seed=5"));
    assert!(text.starts_with("# config_hash="));
}

#[test]
fn external_logs_without_ground_truth() {
    let root = tempfile::tempdir().unwrap();
    let dir = seeded(root.path(), "run");
    ok(&bin(&["generate"], &dir));
    // strip the stamps and ground truth: an operator's own export
    for name in ["transactions.csv", "labels.csv"] {
        let path = dir.join(name);
        let text = std::fs::read_to_string(&path).unwrap();
        let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        std::fs::write(&path, body).unwrap();
    }
    std::fs::remove_file(dir.join("groups.csv")).unwrap();
    std::fs::remove_file(dir.join("cashback.csv")).unwrap();
    for stage in ["build-graph", "train", "detect", "evaluate"] {
        ok(&bin(&[stage], &dir));
    }
    let metrics = std::fs::read_to_string(dir.join("metrics.txt")).unwrap();
    assert!(metrics.contains("policy=exclude"));
    let rules = std::fs::read_to_string(dir.join("rules.csv")).unwrap();
    assert!(rules.lines().skip(2).all(|l| l.contains(",na,")), "{rules}");
    let out = bin(&["evaluate", "--set", "unknown_policy=oracle", "--force"], &dir);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("groups.csv"));
}

#[test]
fn sweep_with_custom_grid() {
    let root = tempfile::tempdir().unwrap();
    let dir = seeded(root.path(), "run");
    for stage in ["generate", "build-graph", "train"] {
        ok(&bin(&[stage], &dir));
    }
    ok(&bin(&["sweep", "--axis", "propagation_threshold", "--grid", "0.5,0.7,0.9"], &dir));
    let text = std::fs::read_to_string(dir.join("sweep_propagation_threshold.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("0.5,"));
    let out = bin(&["sweep", "--axis", "sideways"], &dir);
    assert!(!out.status.success());
}

#[test]
fn missing_upstream_artifact_is_named() {
    let root = tempfile::tempdir().unwrap();
    let dir = seeded(root.path(), "run");
    ok(&bin(&["generate"], &dir));
    ok(&bin(&["build-graph"], &dir));
    let out = bin(&["detect"], &dir);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("model.ckpt"), "{err}");
    let out = Command::new(env!("CARGO_BIN_EXE_abusegraph")).arg("generate").output().unwrap();
    assert!(!out.status.success());
}
