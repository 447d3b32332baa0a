//! End-to-end runs of the binary: gen-data, train, evaluate, selfcheck,
//! exit codes and output files.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rawspoof"))
}

fn work_dir(tag: &str) -> PathBuf {
    let p = std::env::temp_dir().join(format!("rawspoof_cli_{tag}_{}", std::process::id()));
    std::fs::create_dir_all(&p).unwrap();
    p
}

const TINY_CFG: &str = "\
loss_mode = aam+mse
attention = simam
segment_len = 1600
sinc_filters = 12
sinc_kernel_len = 33
num_blocks = 2
filters = 2,4
pool_freq = 2
pool_time = 4
gru_hidden = 16
embed_dim = 16
relation_hidden = 16
lr = 1e-3
epochs = 2
steps_per_epoch = 2
synth_per_class = 6
synth_dev_per_class = 2
";

#[test]
fn train_evaluate_gen_data_round_trip() {
    let dir = work_dir("roundtrip");
    let cfg_path = dir.join("tiny.cfg");
    let ckpt = dir.join("model.ckpt");
    std::fs::write(
        &cfg_path,
        format!("{TINY_CFG}checkpoint_out = {}\n", ckpt.display()),
    )
    .unwrap();

    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("epoch,loss_aam,loss_mse,loss_total,dev_eer,lr"));
    assert!(ckpt.exists());

    let scores = dir.join("scores.txt");
    let csv = dir.join("breakdown.csv");
    let out = bin()
        .args(["evaluate", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&cfg_path)
        .arg("--scores")
        .arg(&scores)
        .arg("--csv")
        .arg(&csv)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("min t-DCF") && table.contains("pooled EER"));
    // eval partition: 2 unseen attacks x 6 + 6 bona fide = 18 trials
    let lines: Vec<String> = std::fs::read_to_string(&scores)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    assert_eq!(lines.len(), 18);
    assert!(std::fs::read_to_string(&csv).unwrap().contains("pooled,"));

    // scoring is deterministic: a second evaluate produces identical bytes
    let scores2 = dir.join("scores2.txt");
    let out = bin()
        .args(["evaluate", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&cfg_path)
        .arg("--scores")
        .arg(&scores2)
        .arg("--csv")
        .arg(dir.join("b2.csv"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(&scores).unwrap(),
        std::fs::read(&scores2).unwrap()
    );

    // gen-data exports protocols + WAVs that parse back
    let export = dir.join("export");
    let out = bin()
        .args(["gen-data", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&export)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["train.txt", "dev.txt", "eval.txt"] {
        assert!(export.join(f).exists());
    }
    let n_wavs = std::fs::read_dir(export.join("wav")).unwrap().count();
    // 7 classes x 6 (train) + 7 x 2 (dev) + 3 x 6 (eval)
    assert_eq!(n_wavs, 42 + 14 + 18);

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn selfcheck_reports_every_check_and_exits_zero() {
    let out = bin().arg("selfcheck").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    let checks: Vec<&&str> = lines.iter().filter(|l| l.starts_with("[PASS]")).collect();
    assert_eq!(checks.len(), 12, "{text}");
    for c in checks {
        assert!(c.contains("measured") && c.contains("tolerance"), "{c}");
    }
    assert!(text.contains("12 of 12 checks passed"));
}

#[test]
fn seed_sweep_keeps_the_best_checkpoint() {
    let dir = work_dir("sweep");
    let cfg_path = dir.join("tiny.cfg");
    let ckpt = dir.join("model.ckpt");
    std::fs::write(
        &cfg_path,
        format!(
            "{}epochs = 1\nsteps_per_epoch = 1\ncheckpoint_out = {}\n",
            TINY_CFG
                .replace("epochs = 2\n", "")
                .replace("steps_per_epoch = 2\n", ""),
            ckpt.display()
        ),
    )
    .unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg_path)
        .args(["--seeds", "7,8"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("== seed 7 ==") && text.contains("== seed 8 =="));
    assert!(text.contains("best seed"), "{text}");
    assert!(ckpt.exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn bad_config_fails_with_nonzero_exit() {
    let dir = work_dir("badcfg");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_checkpoint_fails_with_nonzero_exit() {
    let dir = work_dir("nockpt");
    let cfg = dir.join("tiny.cfg");
    std::fs::write(&cfg, TINY_CFG).unwrap();
    let out = bin()
        .args(["evaluate", "--checkpoint"])
        .arg(dir.join("nope.ckpt"))
        .arg("--data")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    std::fs::remove_dir_all(&dir).ok();
}
