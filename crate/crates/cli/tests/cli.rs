//! End-to-end tests of the command-line surface.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn evodrop(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evodrop"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn verify_passes_and_writes_reports() {
    let dir = TempDir::new().unwrap();
    let out = evodrop(
        &["verify", "--trials", "20000", "--out", "rep"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("PASS masked-sqnorm-closed-vs-enum-d2k1"));
    assert!(!text.contains("FAIL"));
    assert!(dir.path().join("rep/report.txt").exists());
    let json = std::fs::read_to_string(dir.path().join("rep/report.json")).unwrap();
    assert!(json.contains("\"pass\": true"));
}

#[test]
fn verify_fault_injection_fails_with_named_check() {
    let dir = TempDir::new().unwrap();
    let out = evodrop(
        &[
            "verify",
            "--trials",
            "5000",
            "--inject-fault",
            "masked-sqnorm-sign",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("masked-sqnorm-closed-vs-enum"),
        "stderr: {err}"
    );
}

#[test]
fn gen_data_then_train_shallow_round_trip() {
    let dir = TempDir::new().unwrap();
    let gen = evodrop(
        &[
            "gen-data", "--dim", "8", "--count", "300", "--moments", "loguniform:0.01:100",
            "--seed", "5", "--out", "train.txt", "--test-count", "60", "--test-out", "test.txt",
        ],
        dir.path(),
    );
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));

    let train = evodrop(
        &[
            "train-shallow", "--data", "train.txt", "--test-data", "test.txt",
            "--mode", "d-dropout", "--steps", "400", "--eval-every", "100",
            "--lr", "0.05", "--seed", "3", "--out", "run1",
        ],
        dir.path(),
    );
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run1/trace.csv")).unwrap();
    assert!(csv.starts_with("step,train_err,train_loss,test_err,test_loss,elapsed_ms\n"));
    assert_eq!(csv.lines().count(), 1 + 5); // header + steps 0,100,200,300,400
    let summary = std::fs::read_to_string(dir.path().join("run1/summary.json")).unwrap();
    assert!(summary.contains("\"mode\": \"d-dropout\""));

    // Identical invocation -> byte-identical trace.
    let rerun = evodrop(
        &[
            "train-shallow", "--data", "train.txt", "--test-data", "test.txt",
            "--mode", "d-dropout", "--steps", "400", "--eval-every", "100",
            "--lr", "0.05", "--seed", "3", "--out", "run2",
        ],
        dir.path(),
    );
    assert!(rerun.status.success());
    let csv2 = std::fs::read(dir.path().join("run2/trace.csv")).unwrap();
    assert_eq!(std::fs::read(dir.path().join("run1/trace.csv")).unwrap(), csv2);
}

#[test]
fn train_shallow_requires_seed_and_data() {
    let dir = TempDir::new().unwrap();
    let out = evodrop(&["train-shallow", "--synthetic", "4,50"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));

    let out = evodrop(&["train-shallow", "--seed", "1"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no dataset"));
}

#[test]
fn zero_steps_run_is_valid() {
    let dir = TempDir::new().unwrap();
    let out = evodrop(
        &[
            "train-shallow", "--synthetic", "4,40", "--steps", "0", "--seed", "2", "--out", ".",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2); // header + step 0
}

#[test]
fn compare_emits_both_traces_and_ratio() {
    let dir = TempDir::new().unwrap();
    let out = evodrop(
        &[
            "compare", "--synthetic", "16,400", "--moments", "loguniform:0.01:100",
            "--steps", "600", "--eval-every", "50", "--lr", "0.05",
            "--seed", "11", "--out", "cmp",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("cmp/trace-s-dropout.csv").exists());
    assert!(dir.path().join("cmp/trace-d-dropout.csv").exists());
    let cmp = std::fs::read_to_string(dir.path().join("cmp/compare.json")).unwrap();
    assert!(cmp.contains("\"baseline\": \"s-dropout\""));
    assert!(cmp.contains("steps_ratio"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = TempDir::new().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        r#"
[run]
seed = 4
out = "from-config"

[data.synthetic]
d = 6
n = 80

[shallow]
mode = "u-dropout"
steps = 50
eval_every = 25
lr = 0.05
"#,
    )
    .unwrap();
    let out = evodrop(&["train-shallow", "--config", "run.toml"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary =
        std::fs::read_to_string(dir.path().join("from-config/summary.json")).unwrap();
    assert!(summary.contains("\"mode\": \"u-dropout\""));
    assert!(summary.contains("\"steps\": \"50\""));

    // Flags override the file.
    let out = evodrop(
        &[
            "train-shallow", "--config", "run.toml", "--mode", "s-dropout",
            "--out", "flags-win",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let summary = std::fs::read_to_string(dir.path().join("flags-win/summary.json")).unwrap();
    assert!(summary.contains("\"mode\": \"s-dropout\""));
}

#[test]
fn train_deep_on_tiny_idx_data() {
    let dir = TempDir::new().unwrap();
    // Build a tiny IDX pair: 2x2 images, three classes by brightness.
    let images: Vec<Vec<u8>> = (0..30)
        .map(|i| {
            let level = (i % 3) as u8 * 100;
            vec![level, level.saturating_add(30), level, level]
        })
        .collect();
    let labels: Vec<u8> = (0..30).map(|i| (i % 3) as u8).collect();
    evodrop::data::write_idx_images(&dir.path().join("img.idx"), &images, 2, 2).unwrap();
    evodrop::data::write_idx_labels(&dir.path().join("lab.idx"), &labels).unwrap();

    let out = evodrop(
        &[
            "train-deep",
            "--train-images", "img.idx", "--train-labels", "lab.idx",
            "--test-images", "img.idx", "--test-labels", "lab.idx",
            "--arch", "4,6,3", "--mode", "e-dropout", "--k", "3",
            "--epochs", "4", "--batch-size", "10", "--lr", "0.5",
            "--seed", "8", "--out", "deep",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("deep/trace.csv").exists());
    let net = evodrop::deep::read_checkpoint(&dir.path().join("deep/checkpoint.bin")).unwrap();
    assert_eq!(net.input_dim(), Some(4));
    assert_eq!(net.output_dim(), Some(3));
    let summary = std::fs::read_to_string(dir.path().join("deep/summary.json")).unwrap();
    assert!(summary.contains("\"mode\": \"e-dropout\""));
}
