use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tfa_core::activation_store::{load_activations, save_activations};
use tfa_core::codes_io::load_codes;
use tfa_core::linalg::Mat;
use tfa_core::ActivationSet;

fn tfa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfa")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = tfa(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(args: &[&str]) -> i32 {
    tfa(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Small labeled event set at `<dir>/ev/activations.tfa1`.
fn events(dir: &Path) -> PathBuf {
    let out = dir.join("ev");
    ok(&["synth", "--kind", "events", "--n", "6", "--len", "40", "--seed", "2", "--out", s(&out)]);
    out.join("activations.tfa1")
}

#[test]
fn synth_circle_is_one_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    ok(&["synth", "--kind", "circle", "--n", "512", "--out", s(&out)]);
    let set = load_activations(out.join("activations.tfa1")).unwrap();
    assert_eq!(set.len(), 1);
    assert_eq!(set.sequence(0).nrows(), 512);
}

#[test]
fn synth_events_sidecar_has_spans() {
    let dir = tempfile::tempdir().unwrap();
    let path = events(dir.path());
    let side = json(&path.with_extension("tfa1.meta.json"));
    let seqs = side["sequences"].as_array().unwrap();
    assert_eq!(seqs.len(), 6);
    assert!(seqs.iter().all(|m| !m["events"].as_array().unwrap().is_empty()));
}

#[test]
fn resolved_synth_config_reproduces_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["synth", "--kind", "planted", "--k", "2", "--seed", "9", "--out", s(&a)]);
    ok(&["synth", "--config", s(&a.join("synth.toml")), "--out", s(&b)]);
    assert_eq!(fs::read(a.join("activations.tfa1")).unwrap(), fs::read(b.join("activations.tfa1")).unwrap());
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "kind = \"circle\"\nradius = 2.0\n").unwrap();
    assert_eq!(code(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]), 2);
}

#[test]
fn profile_of_increasing_k_is_increasing_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("planted.toml");
    fs::write(
        &cfg,
        "kind = \"planted\"\ndim = 16\natoms = 32\nlen = 64\nsequences = 256\nseed = 1\n[schedule.staircase]\nbase = 1\nevery = 8\n",
    )
    .unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--config", s(&cfg), "--out", s(&data)]);
    let input = data.join("activations.tfa1");
    let (p1, p2) = (dir.path().join("p1"), dir.path().join("p2"));
    ok(&["profile", "--input", s(&input), "--seed", "4", "--out", s(&p1)]);
    ok(&["profile", "--input", s(&input), "--seed", "4", "--out", s(&p2)]);
    let summary = json(&p1.join("profile.json"));
    assert!(summary["ustat_spearman"].as_f64().unwrap() > 0.8);
    let slope = summary["ustat_slope"].as_f64().unwrap();
    assert!(summary["permutation_slope"].as_f64().unwrap().abs() < 0.1 * slope.abs());
    for f in ["ustat.csv", "autocorr.csv", "context_ev.csv", "similarity.csv", "similarity_diagonal_surrogate.csv"] {
        assert_eq!(fs::read(p1.join(f)).unwrap(), fs::read(p2.join(f)).unwrap(), "{f}");
    }
    assert!(!p1.join("similarity.ppm").exists());
}

#[test]
fn malformed_input_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tfa1");
    fs::write(&bad, b"TFA1\x01\x00").unwrap();
    assert_eq!(code(&["profile", "--input", s(&bad), "--out", s(&dir.path().join("o"))]), 3);
    let input = events(dir.path());
    assert_eq!(code(&["profile", "--input", s(&input), "--layer", "7", "--out", s(&dir.path().join("o"))]), 0);
}

#[test]
fn layer_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let seqs = (0..2).map(|s| Mat::from_fn(5, 3, |i, j| ((i + j + s) as f64).sin())).collect();
    let mut set = ActivationSet::new(seqs, 3).unwrap();
    set.layer = Some(4);
    let path = dir.path().join("l.tfa1");
    save_activations(&set, &path).unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&["profile", "--input", s(&path), "--layer", "5", "--out", s(&out)]), 3);
    assert_eq!(code(&["profile", "--input", s(&path), "--layer", "4", "--out", s(&out)]), 0);
}

#[test]
fn train_dispatches_every_kind() {
    let dir = tempfile::tempdir().unwrap();
    let input = events(dir.path());
    for kind in ["relu", "topk", "batchtopk", "temporal", "temporal-pred-only"] {
        let out = dir.path().join(kind);
        ok(&[
            "train", "--input", s(&input), "--kind", kind, "--width", "24", "--k", "3", "--d-attn", "6", "--steps", "12",
            "--batch-tokens", "80", "--out", s(&out),
        ]);
        let summary = json(&out.join("summary.json"));
        assert_eq!(summary["kind"], kind);
        assert_eq!(summary["steps"], 12);
        let log = fs::read_to_string(out.join("log.csv")).unwrap();
        assert_eq!(log.lines().count(), 13);
    }
    assert_eq!(code(&["train", "--input", s(&input), "--kind", "lstm", "--out", s(&dir.path().join("x"))]), 2);
    assert_eq!(code(&["train", "--input", s(&input), "--novel-kind", "dense", "--out", s(&dir.path().join("x"))]), 2);
}

#[test]
fn diverging_training_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = events(dir.path());
    let cfg = dir.path().join("huge.toml");
    fs::write(&cfg, "[train]\nsteps = 20\nwarmup_steps = 0\nlr_peak = 1e300\nlr_min = 1e300\n[train.model]\nkind = \"topk\"\nwidth = 16\nk = 2\n").unwrap();
    assert_eq!(code(&["train", "--config", s(&cfg), "--input", s(&input), "--out", s(&dir.path().join("o"))]), 4);
}

fn train_args<'a>(input: &'a str, cfg: &'a str, out: &'a str) -> Vec<&'a str> {
    vec!["train", "--config", cfg, "--input", input, "--out", out]
}

#[test]
fn training_is_bitwise_reproducible_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let input = events(dir.path());
    let cfg = dir.path().join("t.toml");
    fs::write(
        &cfg,
        "[train]\nsteps = 30\nwarmup_steps = 5\nbatch_tokens = 80\nseed = 3\ncheckpoint_every = 10\n\
         [train.model]\nkind = \"temporal\"\nwidth = 20\nk = 3\nd_attn = 5\nvalue_mode = \"learned\"\n",
    )
    .unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&train_args(s(&input), s(&cfg), s(&a)));
    ok(&train_args(s(&input), s(&cfg), s(&b)));
    let model_a = fs::read(a.join("model.tfam")).unwrap();
    assert_eq!(model_a, fs::read(b.join("model.tfam")).unwrap());
    assert_eq!(fs::read(a.join("log.csv")).unwrap(), fs::read(b.join("log.csv")).unwrap());

    let mid = a.join("checkpoints").join("step-0000010.tfam");
    let mut args = train_args(s(&input), s(&cfg), s(&c));
    args.extend(["--resume", s(&mid)]);
    ok(&args);
    assert_eq!(model_a, fs::read(c.join("model.tfam")).unwrap());
    assert_eq!(json(&c.join("summary.json"))["resumed_from"], 10);
}

#[test]
fn encode_round_trips_and_records_kind() {
    let dir = tempfile::tempdir().unwrap();
    let input = events(dir.path());
    let model = dir.path().join("m");
    ok(&[
        "train", "--input", s(&input), "--kind", "temporal", "--width", "16", "--k", "2", "--d-attn", "4", "--steps", "5",
        "--out", s(&model),
    ]);
    let out = dir.path().join("codes");
    ok(&["encode", "--input", s(&input), "--model", s(&model.join("model.tfam")), "--out", s(&out)]);
    let codes = load_codes(out.join("codes.tfac")).unwrap();
    assert_eq!(codes.kind, "temporal");
    assert_eq!(codes.len(), 6);
    assert_eq!(codes.width, 16);
    let dense = codes.dense.as_ref().unwrap();
    assert!(dense.iter().all(|m| m.nrows() == 40));
    assert!(codes.sparse.iter().flatten().all(|c| c.l0() <= 16));

    let empty = dir.path().join("empty.tfa1");
    save_activations(&ActivationSet::new(vec![], 16).unwrap(), &empty).unwrap();
    let out = dir.path().join("empty_codes");
    ok(&["encode", "--input", s(&empty), "--model", s(&model.join("model.tfam")), "--out", s(&out)]);
    assert!(load_codes(out.join("codes.tfac")).unwrap().is_empty());
}

#[test]
fn analyze_pipelines_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let input = events(dir.path());
    let model = dir.path().join("m");
    ok(&[
        "train", "--input", s(&input), "--kind", "temporal", "--width", "16", "--k", "2", "--d-attn", "4", "--steps", "5",
        "--out", s(&model),
    ]);
    let ckpt = model.join("model.tfam");
    let run = |which: &str, extra: &[&str]| -> PathBuf {
        let out = dir.path().join(which);
        let mut args = vec!["analyze", which, "--input", s(&input), "--model", s(&ckpt), "--out", s(&out)];
        args.extend(extra);
        ok(&args);
        out
    };
    let ev = run("event", &["--sigmas", "0,0.2", "--emit-heatmaps"]);
    let report = json(&ev.join("event.json"));
    let kinds: Vec<&str> = report.as_array().unwrap().iter().map(|r| r["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["activations", "predictive", "novel"]);
    assert!(ev.join("maps").join("predictive_seq0.ppm").exists());
    let noise = json(&ev.join("noise.json"));
    assert_eq!(noise.as_array().unwrap().len(), 4);
    assert_eq!(noise[0]["explained_variance"], 1.0);

    let fourier = json(&run("fourier", &[]).join("fourier.json"));
    let table = fourier["table"].as_array().unwrap();
    assert_eq!(table.len(), 3);
    assert!(table.iter().all(|r| r.get("cka_slow").is_some() && r.get("cka_fast").is_some()));

    let geo = json(&run("geometry", &["--threshold", "0.3"]).join("geometry.json"));
    assert_eq!(geo.as_array().unwrap().len(), 3);
    let split = json(&run("split", &[]).join("split.json"));
    assert!(split["split"]["split_index"].as_u64().unwrap() >= 1);
    assert!(run("cka", &[]).join("cka.csv").exists());
    assert!(run("tortuosity", &[]).join("tortuosity.json").exists());

    let out = dir.path().join("x");
    assert_eq!(code(&["analyze", "clustering", "--input", s(&input), "--out", s(&out)]), 2);
    // events carry no phrase spans
    assert_eq!(code(&["analyze", "gardenpath", "--input", s(&input), "--control", s(&input), "--out", s(&out)]), 3);
    assert_eq!(code(&["analyze", "split", "--input", s(&input), "--out", s(&out)]), 2);
}

#[test]
fn analyze_gardenpath_on_annotated_pairs() {
    use tfa_core::{EventSpan, SequenceMeta};
    let dir = tempfile::tempdir().unwrap();
    let meta = SequenceMeta {
        events: Some(vec![EventSpan::new(0, 2, "SP"), EventSpan::new(2, 3, "V"), EventSpan::new(3, 5, "OP")]),
        ..Default::default()
    };
    let base = Mat::from_fn(5, 4, |i, j| ((i * 4 + j) as f64 * 0.7).sin());
    let mut shifted = base.clone();
    shifted[(0, 0)] += 1.0;
    let amb = ActivationSet::with_meta(vec![base.clone()], 4, vec![meta.clone()]).unwrap();
    let ctl = ActivationSet::with_meta(vec![shifted], 4, vec![meta]).unwrap();
    let (a, c) = (dir.path().join("a.tfa1"), dir.path().join("c.tfa1"));
    save_activations(&amb, &a).unwrap();
    save_activations(&ctl, &c).unwrap();
    let out = dir.path().join("gp");
    ok(&["analyze", "gardenpath", "--input", s(&a), "--control", s(&c), "--out", s(&out)]);
    let report = json(&out.join("gardenpath.json"));
    let r = &report[0];
    assert_eq!(r["kind"], "activations");
    assert!(r["mean_sensitivity_sp"].as_f64().unwrap() > 0.0);
    assert_eq!(r["mean_sensitivity_op"].as_f64().unwrap(), 0.0);
}
