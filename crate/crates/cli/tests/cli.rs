mod common;

use std::net::TcpListener;
use std::path::Path;

use common::{msynth, s, stderr_json, tree_bytes};
use msynth_core::dataio::{read_slice_file, write_slice_file, SliceStack};
use serde_json::{json, Value};

#[test]
fn help_lists_every_subcommand() {
    let out = msynth(["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["phantom", "train", "synth", "eval", "study"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn subcommand_help_documents_interface_flags() {
    let cases: &[(&[&str], &[&str])] = &[
        (&["train", "--help"], &["--config", "--data", "--out", "--seed"]),
        (&["synth", "--help"], &["--ckpt", "--inputs", "--target", "--out", "--diff"]),
        (&["eval", "--help"], &["--ckpt", "--data", "--target", "--out"]),
        (&["study", "serve", "--help"], &["--bind", "--plan", "--images"]),
        (&["study", "--help"], &["plan", "serve", "report"]),
    ];
    for (args, flags) in cases {
        let out = msynth(*args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        let text = String::from_utf8(out.stdout).unwrap();
        for f in *flags {
            assert!(text.contains(f), "{f} missing from {args:?} help");
        }
    }
}

#[test]
fn usage_errors_exit_with_status_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing_config = msynth(["train", "--data", "d.json", "--out", &s(dir.path())]);
    assert_eq!(missing_config.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing_config.stderr).contains("--config"));
    assert_eq!(msynth(["frobnicate"]).status.code(), Some(2));
    assert_eq!(msynth(["phantom", "--out", "x", "--colour", "red"]).status.code(), Some(2));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn module_errors_are_structured_json_with_status_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"epochs": 1, "learning_rte": 0.1}"#).unwrap();
    let out = msynth(["train", "--config", &s(&cfg), "--data", "nope.json", "--out", &s(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "json");
    assert!(err["error"]["message"].as_str().unwrap().contains("learning_rte"));

    let out = msynth(["phantom", "--out", &s(&dir.path().join("p")), "--subjects", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "argument");
}

#[test]
fn phantom_is_byte_identical_for_equal_seeds_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let args = ["phantom", "--seed", seed, "--size", "16", "--subjects", "3", "--slices", "2", "--out", &s(&out_dir)];
        let out = msynth(args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let a = tree_bytes(&run("a", "7"));
    let b = tree_bytes(&run("b", "7"));
    let c = tree_bytes(&run("c", "8"));
    assert_eq!(a.len(), 3 * 2 * 4 + 3);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let echo: Value = serde_json::from_slice(&a[Path::new("run.json")]).unwrap();
    assert_eq!(echo["seed"], 7);
    assert_eq!(echo["size"], 16);
    assert_eq!(echo["n_subjects"], 3);
}

#[test]
fn phantom_config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("phantom.json");
    std::fs::write(&cfg, r#"{"n_subjects": 2, "n_slices": 1, "size": 8, "seed": 3, "misalign": true}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = msynth(["phantom", "--config", &s(&cfg), "--size", "12", "--out", &s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo: Value = serde_json::from_slice(&std::fs::read(out_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(echo["size"], 12);
    assert_eq!(echo["seed"], 3);
    assert_eq!(echo["misalign"], true);
    let t1 = read_slice_file(&out_dir.join("slices/sub-000/z000_t1.msl")).unwrap();
    assert_eq!((t1.height(), t1.width()), (12, 12));
}

fn tiny_train_config(path: &Path) {
    let cfg = json!({
        "epochs": 1,
        "batch_size": 2,
        "canonical_size": 16,
        "gen_width": 4,
        "n_res_blocks": 1,
        "disc_width": 4,
        "disc_layers": 2,
        "seed": 3
    });
    std::fs::write(path, serde_json::to_vec(&cfg).unwrap()).unwrap();
}

#[test]
fn phantom_train_synth_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = msynth(["phantom", "--size", "16", "--subjects", "3", "--slices", "2", "--test-fraction", "0.34", "--out", &s(&data)]);
    assert!(out.status.success());

    let cfg = dir.path().join("train.json");
    tiny_train_config(&cfg);
    let run = dir.path().join("run");
    let out = msynth(["train", "--config", &s(&cfg), "--data", &s(&data.join("train.json")), "--out", &s(&run), "--seed", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo: Value = serde_json::from_slice(&std::fs::read(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 9);
    assert_eq!(echo["learning_rate"], 0.0002);
    let ckpt = run.join("checkpoints/epoch_001.safetensors");
    assert!(ckpt.is_file());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), s(&ckpt));
    let lines = std::fs::read_to_string(run.join("losses.jsonl")).unwrap();
    // 4 training slices in batches of 2, 7 conditions each
    assert_eq!(lines.lines().count(), 2 * 7);

    let slices = data.join("slices/sub-002");
    let synth_dir = dir.path().join("synth");
    let inputs = format!("t1={},flair={}", s(&slices.join("z000_t1.msl")), s(&slices.join("z000_flair.msl")));
    let out = msynth([
        "synth", "--ckpt", &s(&ckpt), "--inputs", &inputs, "--target", "dir", "--out", &s(&synth_dir),
        "--diff", &s(&slices.join("z000_dir.msl")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fake = read_slice_file(&synth_dir.join("dir.msl")).unwrap();
    assert_eq!((fake.channels(), fake.height(), fake.width()), (1, 16, 16));
    assert!(fake.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    assert!(std::fs::read(synth_dir.join("dir.png")).unwrap().starts_with(b"\x89PNG"));
    assert!(std::fs::read(synth_dir.join("dir_diff.png")).unwrap().starts_with(b"\x89PNG"));
    let diff = read_slice_file(&synth_dir.join("dir_diff.msl")).unwrap();
    assert!(diff.data().iter().all(|v| (0.0..=2.0).contains(v)));
    let echo: Value = serde_json::from_slice(&std::fs::read(synth_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(echo["target"], "dir");
    assert_eq!(echo["inputs"].as_array().unwrap().len(), 2);

    let report = dir.path().join("eval/report.json");
    let out = msynth(["eval", "--ckpt", &s(&ckpt), "--data", &s(&data.join("test.json")), "--target", "dir", "--out", &s(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    for row in rows {
        assert!(row["condition"].is_string());
        assert!(row["psnr"].as_f64().unwrap().is_finite());
        let mae = row["mae"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&mae));
    }
    assert_eq!(report["run"]["test_slices"], 2);
    assert_eq!(std::fs::read_dir(dir.path().join("eval")).unwrap().count(), 1);
}

#[test]
fn synth_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = msynth(["synth", "--ckpt", "x", "--inputs", "t1", "--target", "dir", "--out", &s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "argument");
    let out = msynth(["synth", "--ckpt", "x", "--inputs", ",", "--target", "dir", "--out", &s(dir.path())]);
    assert_eq!(stderr_json(&out)["error"]["kind"], "condition");
}

fn write_pools(root: &Path) -> std::path::PathBuf {
    let mut pools = json!({ "synthetic": {}, "real": [] });
    let mut k = 0u32;
    let mut image = |name: String| {
        k += 1;
        let data = (0..16).map(|p| ((p * k) % 7) as f32).collect();
        write_slice_file(&root.join(&name), &SliceStack::unnamed(1, 4, 4, data).unwrap()).unwrap();
        name
    };
    for cond in ["t1", "t1+t2+flair"] {
        let pairs: Vec<Value> = (0..3)
            .map(|i| json!({ "left": image(format!("{cond}_src{i}.msl")), "right": image(format!("{cond}_fake{i}.msl")) }))
            .collect();
        pools["synthetic"][cond] = Value::Array(pairs);
    }
    pools["real"] = Value::Array(
        (0..3)
            .map(|i| json!({ "left": image(format!("real_src{i}.msl")), "right": image(format!("real{i}.msl")) }))
            .collect(),
    );
    let path = root.join("pools.json");
    std::fs::write(&path, serde_json::to_vec(&pools).unwrap()).unwrap();
    path
}

#[test]
fn study_plan_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let pools = write_pools(dir.path());
    let plan_dir = dir.path().join("plan");
    let out = msynth([
        "study", "plan", "--pools", &s(&pools), "--raters", "ann,bo,cy", "--out", &s(&plan_dir), "--seed", "4",
        "--per-condition", "2", "--real", "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let plan: Value = serde_json::from_slice(&std::fs::read(plan_dir.join("plan.json")).unwrap()).unwrap();
    assert!(plan_dir.join("run.json").is_file());

    // every rater gives real images 5 stars and synthetic ones 2
    let mut log = String::new();
    for (rater, trials) in plan["raters"].as_object().unwrap() {
        let trials = trials.as_array().unwrap();
        assert_eq!(trials.len(), 6);
        for t in trials {
            let stars = if t["right_is_real"].as_bool().unwrap() { 5 } else { 2 };
            log += &json!({ "trial_id": t["trial_id"], "rater_id": rater, "stars": stars, "timestamp_ms": 0 }).to_string();
            log.push('\n');
        }
    }
    let ratings = dir.path().join("ratings.jsonl");
    std::fs::write(&ratings, log).unwrap();
    let report_dir = dir.path().join("report");
    let out = msynth(["study", "report", "--plan", &s(&plan_dir.join("plan.json")), "--ratings", &s(&ratings), "--out", &s(&report_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&std::fs::read(report_dir.join("report.json")).unwrap()).unwrap();
    let conds = report["conditions"].as_array().unwrap();
    assert_eq!(conds.len(), 3);
    for c in conds {
        let expected = if c["condition"] == "real" { 5.0 } else { 2.0 };
        assert_eq!(c["mean_stars"].as_f64().unwrap(), expected);
    }

    let out = msynth([
        "study", "plan", "--pools", &s(&pools), "--raters", "ann", "--out", &s(&dir.path().join("big")), "--per-condition", "4",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "capacity");
    assert!(!dir.path().join("big").exists());
}

#[test]
fn study_serve_reports_a_busy_port() {
    let dir = tempfile::tempdir().unwrap();
    let pools = write_pools(dir.path());
    let plan_dir = dir.path().join("plan");
    let out = msynth(["study", "plan", "--pools", &s(&pools), "--raters", "ann", "--out", &s(&plan_dir), "--per-condition", "1", "--real", "1"]);
    assert!(out.status.success());
    let holder = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = holder.local_addr().unwrap().to_string();
    let out = msynth([
        "study", "serve", "--plan", &s(&plan_dir.join("plan.json")), "--images", &s(dir.path()), "--out",
        &s(&dir.path().join("state")), "--bind", &addr,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"]["kind"], "bind");
}
