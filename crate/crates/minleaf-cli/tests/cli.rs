//! End-to-end tests of the installed binary: exit codes, printed output,
//! emitted artifacts, config-file merging.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_minleaf"))
}

fn xor_csv() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/xor.csv")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn exact_training_on_xor_prints_perfect_leaf_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["train", "--method", "exact", "--depth", "2", "--nmin", "1"])
        .arg("--data")
        .arg(xor_csv())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("leaf accuracy 1"), "{}", stdout(&out));
    for file in ["tree.json", "tree.dot", "metrics.json"] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
}

#[test]
fn cart_training_emits_parseable_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["train", "--method", "cart", "--depth", "2", "--nmin", "1"])
        .arg("--data")
        .arg(xor_csv())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["method"], "cart");
    assert_eq!(metrics["depth"], 2);
    assert!(metrics["leaf_accuracy"].as_f64().unwrap() >= 0.0);
}

#[test]
fn a_missing_data_path_exits_with_code_two() {
    let out = bin()
        .args(["train", "--data", "/nonexistent/nope.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));
}

#[test]
fn unknown_flags_fail_fast_with_usage_errors() {
    let out = bin()
        .args(["train", "--bogus-flag", "1"])
        .arg("--data")
        .arg(xor_csv())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_lp_requires_an_explicit_depth() {
    let out = bin()
        .arg("export-lp")
        .arg("--data")
        .arg(xor_csv())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--depth"), "{}", stderr(&out));
}

#[test]
fn exported_warmstart_passes_the_checker() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["export-lp", "--depth", "1", "--nmin", "1"])
        .arg("--data")
        .arg(xor_csv())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(dir.path().join("model.lp").exists());
    let solution = dir.path().join("warmstart.sol");
    assert!(solution.exists());

    let check = bin()
        .args(["check", "--depth", "1", "--nmin", "1"])
        .arg("--data")
        .arg(xor_csv())
        .arg("--solution")
        .arg(&solution)
        .output()
        .unwrap();
    assert!(check.status.success(), "stderr: {}", stderr(&check));
    let text = stdout(&check);
    assert!(text.contains("feasible"), "{text}");
    assert!(text.contains("extracted tree:"), "{text}");
}

#[test]
fn a_zeroed_solution_is_reported_infeasible_with_violations() {
    let dir = tempfile::tempdir().unwrap();
    bin()
        .args(["export-lp", "--depth", "1", "--nmin", "1"])
        .arg("--data")
        .arg(xor_csv())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    let warmstart = std::fs::read_to_string(dir.path().join("warmstart.sol")).unwrap();
    let zeroed: String = warmstart
        .lines()
        .map(|line| {
            if line.starts_with('#') || line.trim().is_empty() {
                line.to_string()
            } else {
                format!("{} 0", line.split_whitespace().next().unwrap())
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let zeroed_path = dir.path().join("zeroed.sol");
    std::fs::write(&zeroed_path, zeroed).unwrap();

    let check = bin()
        .args(["check", "--depth", "1", "--nmin", "1"])
        .arg("--data")
        .arg(xor_csv())
        .arg("--solution")
        .arg(&zeroed_path)
        .output()
        .unwrap();
    assert!(check.status.success(), "stderr: {}", stderr(&check));
    let text = stdout(&check);
    assert!(text.contains("infeasible"), "{text}");
    assert!(text.contains("assign_0"), "{text}");
}

#[test]
fn a_truncated_solution_reports_its_line_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.sol");
    std::fs::write(&broken, "Q 0.5\nz_0_0\n").unwrap();
    let check = bin()
        .args(["check", "--depth", "1", "--nmin", "1"])
        .arg("--data")
        .arg(xor_csv())
        .arg("--solution")
        .arg(&broken)
        .output()
        .unwrap();
    assert_eq!(check.status.code(), Some(1));
    assert!(stderr(&check).contains("line 2"), "{}", stderr(&check));
}

#[test]
fn extension_writes_a_hybrid_and_prints_the_agreement_rate() {
    let dir = tempfile::tempdir().unwrap();
    bin()
        .args(["train", "--method", "cart", "--depth", "2", "--nmin", "1"])
        .arg("--data")
        .arg(xor_csv())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    let out = bin()
        .args(["extend", "--iterations", "3", "--folds", "2", "--seed", "0"])
        .arg("--data")
        .arg(xor_csv())
        .arg("--tree")
        .arg(dir.path().join("tree.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("agreement rate"), "{}", stdout(&out));
    assert!(dir.path().join("hybrid.json").exists());
}

#[test]
fn dot_export_renders_a_digraph() {
    let dir = tempfile::tempdir().unwrap();
    bin()
        .args(["train", "--method", "exact", "--depth", "2", "--nmin", "1"])
        .arg("--data")
        .arg(xor_csv())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    let out = bin()
        .arg("export-dot")
        .arg("--data")
        .arg(xor_csv())
        .arg("--tree")
        .arg(dir.path().join("tree.json"))
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(stdout(&out).starts_with("digraph"), "{}", stdout(&out));
}

#[test]
fn evaluation_writes_reports_and_reruns_byte_identically() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [dir_a.path(), dir_b.path()] {
        let out = bin()
            .args([
                "eval",
                "--methods",
                "cart,exact",
                "--seeds",
                "0,1",
                "--depth",
                "2",
                "--nmin",
                "1",
                "--budget",
                "30",
                "--jobs",
                "1",
            ])
            .arg("--data")
            .arg(xor_csv())
            .arg("--out")
            .arg(dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        for file in ["raw.csv", "aggregate.csv", "summary.json"] {
            assert!(dir.join(file).exists(), "{file} missing");
        }
    }
    for file in ["raw.csv", "aggregate.csv"] {
        let a = std::fs::read(dir_a.path().join(file)).unwrap();
        let b = std::fs::read(dir_b.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs across reruns");
    }
}

#[test]
fn config_files_supply_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "depth = 1\nn_min = 1\n").unwrap();

    let from_file = dir.path().join("from_file");
    let out = bin()
        .args(["train", "--method", "cart"])
        .arg("--config")
        .arg(&config)
        .arg("--data")
        .arg(xor_csv())
        .arg("--out")
        .arg(&from_file)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(from_file.join("metrics.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(metrics["depth"], 1);

    let overridden = dir.path().join("overridden");
    bin()
        .args(["train", "--method", "cart", "--depth", "2"])
        .arg("--config")
        .arg(&config)
        .arg("--data")
        .arg(xor_csv())
        .arg("--out")
        .arg(&overridden)
        .output()
        .unwrap();
    let metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(overridden.join("metrics.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(metrics["depth"], 2);
}
