//! End-to-end checks of the command-line interface: exit codes, emitted
//! files, and determinism of artifacts.

use std::path::Path;
use std::process::{Command, Output};

fn econspan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_econspan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

// Small, fast configuration: one material, short grid, tiny episodes.
fn tiny_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    let contents = format!(
        "\
materials = steel
max_span = 100
max_steps = 50
cell_pixels = 2
episodes = 2
warmup = 16
batch_size = 8
replay_capacity = 512
out_dir = {}
{extra}",
        dir.join("out").display()
    );
    std::fs::write(&path, contents).unwrap();
    path
}

#[test]
fn analyze_defaults_reports_paper_winner() {
    let out = econspan(&["analyze"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("winner: concrete, 39.6 m, 11501 yuan/m2"), "{text}");
    assert!(text.contains("grid winner: 40 m, state 3"), "{text}");
}

#[test]
fn analyze_steel_only_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("steel.cfg");
    std::fs::write(&cfg, "materials = steel\n").unwrap();
    let out = econspan(&["analyze", "--config", cfg.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("winner: steel, 27.3 m"), "{text}");
    assert!(text.contains("grid winner: 30 m, state 2"), "{text}");
}

#[test]
fn oracle_defaults() {
    let out = econspan(&["oracle"]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("optimal state: 3"), "{text}");
    assert!(text.contains("V(optimal) = -23.0035"), "{text}");
    assert!(text.contains("240/240"), "{text}");
}

#[test]
fn invalid_config_exits_1_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(
        &cfg,
        format!("bogus_key = 1\nout_dir = {}\n", dir.path().join("out").display()),
    )
    .unwrap();
    let out = econspan(&["train", "--config", cfg.to_str().unwrap(), "--name", "x"]);
    assert_eq!(exit_code(&out), 1);
    assert!(!dir.path().join("out").exists(), "no partial outputs");
}

#[test]
fn unknown_subcommand_exits_1_and_help_exits_0() {
    let out = econspan(&["frobnicate"]);
    assert_eq!(exit_code(&out), 1);
    let out = econspan(&["--help"]);
    assert_eq!(exit_code(&out), 0);
}

#[test]
fn train_writes_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");

    let out = econspan(&["train", "--config", cfg.to_str().unwrap(), "--name", "a"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("endpoint coverage:"));
    let run_a = dir.path().join("out").join("a");
    assert!(run_a.join("checkpoint.bsqn").is_file());
    assert!(run_a.join("metrics.csv").is_file());

    let out = econspan(&["train", "--config", cfg.to_str().unwrap(), "--name", "b"]);
    assert_eq!(exit_code(&out), 0);
    let run_b = dir.path().join("out").join("b");

    let csv_a = std::fs::read(run_a.join("metrics.csv")).unwrap();
    let csv_b = std::fs::read(run_b.join("metrics.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "same seed must give identical metrics bytes");
    let ck_a = std::fs::read(run_a.join("checkpoint.bsqn")).unwrap();
    let ck_b = std::fs::read(run_b.join("checkpoint.bsqn")).unwrap();
    assert_eq!(ck_a, ck_b, "same seed must give identical checkpoints");

    let head = String::from_utf8_lossy(&csv_a)
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(head, "episode,total_steps,epsilon,mean_loss,episode_return");
}

#[test]
fn eval_roundtrip_and_corrupt_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "");
    let out = econspan(&["train", "--config", cfg.to_str().unwrap(), "--name", "t"]);
    assert_eq!(exit_code(&out), 0);
    let ckpt = dir.path().join("out").join("t").join("checkpoint.bsqn");

    // Single-start evaluation writes one trajectory image.
    let out = econspan(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--start",
        "2",
        "--name",
        "e",
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let img = dir.path().join("out").join("e").join("trajectory_002.ppm");
    let bytes = std::fs::read(&img).unwrap();
    // 10 columns x 1 row at 2 px/cell.
    assert!(bytes.starts_with(b"P6\n20 2\n255\n"));
    assert_eq!(bytes.len(), "P6\n20 2\n255\n".len() + 20 * 2 * 3);

    // Out-of-range start is a usage error.
    let out = econspan(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--start",
        "999",
        "--name",
        "e2",
    ]);
    assert_eq!(exit_code(&out), 1);

    // Corrupted checkpoint is a format error (exit 2).
    let mut broken = std::fs::read(&ckpt).unwrap();
    broken.truncate(broken.len() - 3);
    let broken_path = dir.path().join("broken.bsqn");
    std::fs::write(&broken_path, broken).unwrap();
    let out = econspan(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        broken_path.to_str().unwrap(),
        "--name",
        "e3",
    ]);
    assert_eq!(exit_code(&out), 2);
}
