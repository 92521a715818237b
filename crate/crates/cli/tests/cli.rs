use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const EXPERIMENT_TOML: &str = r#"
seeds = [3]
burst_samples = 1200
window_len = 128
stride = 128
policies = ["no-aug", "decoupled-cdl-tdl"]

[plan]
copies_per_example = 1

[net]
window_len = 128
filters = 4
kernel = 7
hidden = 8
epochs = 2
"#;

const NET_TOML: &str = r#"
window_len = 128
filters = 4
kernel = 7
hidden = 8
epochs = 2
"#;

fn rfaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfaug")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = rfaug(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn stage_by_stage_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let exp_cfg = d.join("exp.toml");
    let net_cfg = d.join("net.toml");
    fs::write(&exp_cfg, EXPERIMENT_TOML).unwrap();
    fs::write(&net_cfg, NET_TOML).unwrap();

    let data = d.join("data");
    let s = ok(&["synth", "--config", p(&exp_cfg), "--out", p(&data)]);
    assert!(s.contains("60 day1 and 60 day2"), "{s}");
    let day1 = data.join("day1/manifest.csv");
    let day2 = data.join("day2/manifest.csv");

    let aug = d.join("aug");
    let s = ok(&[
        "augment",
        "--manifest",
        p(&day1),
        "--policy",
        "5g-only-cdl",
        "--seed",
        "4",
        "--out",
        p(&aug),
    ]);
    assert!(s.contains("60 -> 140"), "{s}");
    let aug_manifest = aug.join("manifest.csv");
    let text = fs::read_to_string(&aug_manifest).unwrap();
    assert_eq!(text.matches(",augmented,5g-only-cdl,").count(), 80);

    let model_dir = d.join("model");
    ok(&[
        "train",
        "--config",
        p(&net_cfg),
        "--manifest",
        p(&aug_manifest),
        "--seed",
        "1",
        "--out",
        p(&model_dir),
    ]);
    let log = fs::read_to_string(model_dir.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,loss,accuracy\n"));
    assert_eq!(log.lines().count(), 3);
    let model = model_dir.join("model.bin");
    assert_eq!(&fs::read(&model).unwrap()[..8], b"RFAUGNET");

    let eval_dir = d.join("eval");
    let s = ok(&["eval", "--model", p(&model), "--manifest", p(&day2), "--out", p(&eval_dir)]);
    assert!(s.starts_with("accuracy "), "{s}");
    assert_eq!(fs::read_to_string(eval_dir.join("eval.txt")).unwrap(), s);

    let feat_dir = d.join("feat");
    ok(&["features", "--model", p(&model), "--manifest", p(&day2), "--out", p(&feat_dir)]);
    let feats = fs::read_to_string(feat_dir.join("features.csv")).unwrap();
    let header = feats.lines().next().unwrap();
    assert_eq!(header, "label,waveform,day,f0,f1,f2,f3,f4,f5,f6,f7");
    assert!(feats.lines().skip(1).all(|l| l.split(',').nth(2) == Some("day2")));
}

#[test]
fn experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, EXPERIMENT_TOML).unwrap();
    let runs: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let s = ok(&["experiment", "--config", p(&cfg), "--out", p(&out)]);
            assert!(s.contains("no-aug") && s.contains("decoupled-cdl-tdl"), "{s}");
            for f in ["results.txt", "results_per_seed.csv", "features_no-aug.csv"] {
                assert!(out.join(f).is_file(), "{f}");
            }
            fs::read(out.join("results.csv")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    let text = String::from_utf8(runs[0].clone()).unwrap();
    assert!(text.starts_with("policy,day1_acc,day2_acc\nno-aug,"));
}

#[test]
fn failures_are_stage_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let out = rfaug(&[
        "eval",
        "--model",
        p(&dir.path().join("missing.bin")),
        "--manifest",
        "x.csv",
        "--out",
        p(dir.path()),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error [eval]:"), "{err}");

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "num_tx = 4\nunknown_field = 1\n").unwrap();
    let out = rfaug(&["synth", "--config", p(&bad), "--out", p(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error [synth]:"));

    let out = rfaug(&["augment", "--manifest", "m.csv", "--policy", "bogus", "--out", p(dir.path())]);
    assert!(!out.status.success());
}
