use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nutrifuse_core::eval::EvalReport;
use nutrifuse_core::inference::read_audit_log;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nutrifuse"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const CONFIG: &str = r#"seed = 3

[encoder]
dim = 16
cache = "cache/embeddings.bin"

[synth]
data = { n_images = 20, n_videos = 3, frames_per_video = 3, image_size = 32 }

[train]
train_manifest = "data/train.jsonl"
val_manifest = "data/val.jsonl"
fusion = { backbone = "resnet50", scale = "tiny", input_resolution = 32 }
config = { epochs = 1, batch_size = 8, max_steps = 2 }

[eval]
checkpoint = "model/best.safetensors"
manifest = "data/test.jsonl"

[vote_infer]
checkpoint = "model/best.safetensors"
manifest = "data/test.jsonl"
client = { kind = "oracle" }
vote = { tau = 2 }
augmentation = { transforms = [{ kind = "identity" }, { kind = "horizontal_flip" }, { kind = "grayscale" }] }

[dialogue_template]
calories = 520.0
fat = 21.5
carbohydrates = 60.0
protein = 24.0
"#;

/// Synthesises data and trains a two-step model under `root`.
fn prepared(root: &Path) -> String {
    let cfg = root.join("run.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let cfg = cfg.display().to_string();
    let out = |d: &str| root.join(d).display().to_string();
    ok(&["synth", "--config", &cfg, "--out", &out("data")]);
    ok(&["train", "--config", &cfg, "--out", &out("model")]);
    cfg
}

#[test]
fn train_eval_and_vote_infer_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = prepared(root);
    assert!(root.join("model/best.safetensors").exists());
    assert!(root.join("model/history.json").exists());
    assert!(root.join("cache/embeddings.bin").exists());

    let eval_dir = root.join("eval").display().to_string();
    let table = ok(&["eval", "--config", &cfg, "--out", &eval_dir]);
    assert!(table.contains("Caloric"), "{table}");
    let report = EvalReport::from_json(&fs::read_to_string(root.join("eval/report.json")).unwrap()).unwrap();
    assert!(report.n_samples > 0);
    assert!(root.join("eval/report.txt").exists());
    let echoed = fs::read_to_string(root.join("eval/resolved_config.toml")).unwrap();
    assert!(echoed.contains("seed = 3"));

    let p1 = root.join("p1").display().to_string();
    ok(&["eval", "--config", &cfg, "--out", &p1, "--set", "eval.protocol=\"protocol1\""]);
    let r1 = EvalReport::from_json(&fs::read_to_string(root.join("p1/report.json")).unwrap()).unwrap();
    assert!(r1.selection_objective.is_some());

    let vote_dir = root.join("vote").display().to_string();
    ok(&["vote-infer", "--config", &cfg, "--out", &vote_dir]);
    let audit = read_audit_log(root.join("vote/audit.jsonl")).unwrap();
    let test = nutrifuse_core::data::load_manifest(root.join("data/test.jsonl")).unwrap();
    assert_eq!(audit.len(), test.len());
    for (rec, s) in audit.iter().zip(&test.samples) {
        // the oracle client repeats the true list in every view
        assert_eq!(rec.sample_id, s.sample_id);
        assert_eq!(rec.replies.len(), 3);
        let mut truth = s.ingredients.clone();
        truth.sort();
        assert_eq!(rec.voted, truth);
        assert!(!rec.fallback);
    }
    let lines = fs::read_to_string(root.join("vote/predictions.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), test.len());
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seed = 1\n[encoder]\ndim = 8\nflavour = \"x\"\n").unwrap();
    let out = run(&["dialogue-template", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flavour"));

    let out = run(&["eval", "--set", "eval.nonsense=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonsense"));
}

#[test]
fn missing_section_and_bad_arguments_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().display().to_string();
    let out = run(&["train", "--out", &out_dir]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[train]"));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[normalize]\ninput = \"absent.txt\"\n").unwrap();
    let out = run(&["normalize", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn normalize_writes_mapping_table() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("terms.txt"), "Lettuce (200g)\nmeat\nfork\nzzzz\n").unwrap();
    fs::write(root.join("run.toml"), "[normalize]\ninput = \"terms.txt\"\n").unwrap();
    let cfg = root.join("run.toml").display().to_string();
    let out = root.join("out").display().to_string();
    ok(&["normalize", "--config", &cfg, "--out", &out]);
    let tsv = fs::read_to_string(root.join("out/normalized.tsv")).unwrap();
    assert_eq!(
        tsv,
        "raw\tcanonical\nLettuce (200g)\tlettuce\nmeat\tbeef patty\nfork\tREJECT\nzzzz\tUNMAPPED\n"
    );
    let strict = run(&["normalize", "--config", &cfg, "--out", &out, "--set", "normalize.strict=true"]);
    assert_eq!(strict.status.code(), Some(2));
}

#[test]
fn dialogue_template_fills_placeholders() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("run.toml"), CONFIG).unwrap();
    let cfg = root.join("run.toml").display().to_string();
    let out = root.join("d").display().to_string();
    let text = ok(&["dialogue-template", "--config", &cfg, "--out", &out]);
    assert!(text.contains("520") && text.contains("21.5") && text.contains('3'));
    assert!(!text.contains("{cal}"));
    assert_eq!(fs::read_to_string(root.join("d/dialogue_prompt.txt")).unwrap(), text);

    let bad = run(&["dialogue-template", "--config", &cfg, "--out", &out, "--set", "dialogue_template.turns=9"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn ingest_normalizes_and_splits() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut records = String::new();
    for i in 0..12 {
        records.push_str(&format!(
            r#"{{"sample_id":"s{i}","image":"img/{i}.png","category":"burger","ingredients":["Buns","lettuce (50g)","fork"],"calories":500,"fat":20,"carbohydrates":50,"protein":25,"source":"official"}}"#
        ));
        records.push('\n');
    }
    fs::write(root.join("records.jsonl"), records).unwrap();
    fs::write(
        root.join("videos.jsonl"),
        r#"{"video_id":"v1","frame_count":10,"calories":300,"fat":10,"carbohydrates":30,"protein":15,"ingredients":["meat"],"category":"burger"}"#,
    )
    .unwrap();
    fs::write(
        root.join("run.toml"),
        "[ingest]\nrecords = \"records.jsonl\"\nvideos = \"videos.jsonl\"\nstride = 5\n",
    )
    .unwrap();
    let cfg = root.join("run.toml").display().to_string();
    let out = root.join("m").display().to_string();
    ok(&["ingest", "--config", &cfg, "--out", &out]);
    let mut total = 0;
    let mut video_splits = 0;
    for name in ["train", "val", "test"] {
        let m = nutrifuse_core::data::load_manifest(root.join(format!("m/{name}.jsonl"))).unwrap();
        total += m.len();
        for s in &m.samples {
            if s.video_id.is_some() {
                assert_eq!(s.ingredients, ["beef patty"]);
            } else {
                assert_eq!(s.ingredients, ["bun", "lettuce"]);
                assert!(Path::new(&s.image_ref).is_absolute());
            }
        }
        video_splits += m.samples.iter().any(|s| s.video_id.is_some()) as usize;
    }
    assert_eq!(total, 14);
    assert_eq!(video_splits, 1);
}
