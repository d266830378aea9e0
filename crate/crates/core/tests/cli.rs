use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};

fn run(cache: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_metalgan"))
        .env("METALGAN_CACHE", cache)
        .args(args)
        .output()
        .unwrap();
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(out.status.success(), "{args:?} failed:\n{stderr}");
    String::from_utf8_lossy(&out.stdout).into_owned() + &stderr
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cache = root.join("cache");
    let toy = root.join("toy");
    let index = root.join("index.json");
    let clusters = root.join("clusters.json");
    let config = root.join("config.json");

    run(&cache, &["--seed", "3", "toy", "--out", s(&toy), "--count", "48", "--size", "16"]);
    run(&cache, &["--seed", "3", "ingest", "--data", s(&toy.join("images")), "--out", s(&index)]);
    let idx = read_json(&index);
    assert_eq!(idx["entries"].as_array().unwrap().len(), 48);

    run(
        &cache,
        &["--seed", "3", "cluster", "--data", s(&index), "--out", s(&clusters), "--k", "3", "--pca-dim", "6", "--resolution", "16"],
    );
    let c = read_json(&clusters);
    assert_eq!((c["k"].as_u64(), c["seed"].as_u64(), c["pca_dim"].as_u64()), (Some(3), Some(3), Some(6)));
    assert_eq!(c["centroids"].as_array().unwrap().len(), 3);
    assert!(c["assignments"].as_object().unwrap().len() > 30);
    assert!(std::fs::read_dir(&cache).unwrap().count() > 0);

    std::fs::write(
        &config,
        json!({
            "n_epochs": 2, "n_meta_iter": 2, "lr_g": 1e-3, "lr_d": 1e-3, "stepsize_ml": 0.3, "k": 3,
            "query_fraction": 0.25, "batch_size": 2, "resolution": 16, "d_pass_cap": 2, "adapt_steps": 2,
            "generator": {"depth": 2, "base_width": 4},
            "discriminator": {"n_blocks": 2, "base_width": 4, "patch": false}
        })
        .to_string(),
    )
    .unwrap();

    let train = |out: &Path, extra: &[&str]| {
        let mut args = vec!["--seed", "3", "train", "--config", s(&config), "--data", s(&index), "--out", s(out)];
        args.extend_from_slice(extra);
        run(&cache, &args);
    };
    let full = root.join("full");
    train(&full, &["--clusters", s(&clusters)]);
    let ckpt = full.join("checkpoints/epoch_0002");
    let manifest = read_json(&ckpt.join("manifest.json"));
    assert_eq!(manifest["epoch"], 2);
    assert_eq!(manifest["mode"], "metalgan");
    assert_eq!(manifest["seed"], 3);
    let params = std::fs::read(ckpt.join("params.bin")).unwrap();
    assert!(manifest["param_count"].as_u64().unwrap() as usize * 8 <= params.len());
    assert_eq!(read_json(&full.join("config.json"))["n_epochs"], 2);

    let trace = std::fs::read_to_string(full.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("epoch,query_index,step,loss_g_adv,loss_g_l1,loss_d"));
    let gen_rows = lines.clone().filter(|l| l.ends_with(',')).count();
    assert!(gen_rows > 0 && gen_rows % 2 == 0);
    assert!(lines.any(|l| l.starts_with("1,")));

    // stop after one epoch, then continue to two
    let half = root.join("half");
    let one_epoch = root.join("one.json");
    let mut cfg = read_json(&config);
    cfg["n_epochs"] = json!(1);
    std::fs::write(&one_epoch, cfg.to_string()).unwrap();
    run(
        &cache,
        &["--seed", "3", "train", "--config", s(&one_epoch), "--data", s(&index), "--out", s(&half), "--clusters", s(&clusters)],
    );
    let resumed = root.join("resumed");
    train(&resumed, &["--clusters", s(&clusters), "--resume", s(&half.join("checkpoints/epoch_0001"))]);
    assert_eq!(std::fs::read(resumed.join("checkpoints/epoch_0002/params.bin")).unwrap(), params);

    let cgan = root.join("cgan");
    train(&cgan, &["--mode", "cgan"]);
    assert_eq!(read_json(&cgan.join("checkpoints/epoch_0002/manifest.json"))["mode"], "cgan");

    let report = root.join("report.json");
    let grid = root.join("grid.png");
    run(
        &cache,
        &[
            "evaluate", "--checkpoint", s(&ckpt), "--data", s(&index), "--classifier", s(&toy.join("classifier.json")),
            "--splits", "2", "--out", s(&report), "--clusters", s(&clusters), "--grid", s(&grid),
        ],
    );
    let r = read_json(&report);
    for key in ["mean", "std", "n_images", "n_splits", "classifier_id", "l1_error"] {
        assert!(r.get(key).is_some(), "{key} missing from {r}");
    }
    assert!(r["mean"].as_f64().unwrap() >= 1.0);
    assert_eq!(r["n_splits"], 2);
    assert!(grid.exists());

    let input = std::fs::read_dir(toy.join("images")).unwrap().next().unwrap().unwrap().path();
    let colored = root.join("colored.png");
    run(&cache, &["colorize", "--checkpoint", s(&ckpt), "--input", s(&input), "--out", s(&colored)]);
    assert!(colored.exists());
}

#[test]
fn bad_config_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.json");
    std::fs::write(&config, r#"{"batch_size": 0}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_metalgan"))
        .env("METALGAN_CACHE", tmp.path())
        .args(["train", "--mode", "cgan", "--config", s(&config), "--data", s(tmp.path()), "--out", s(&tmp.path().join("o"))])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
