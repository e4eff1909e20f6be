use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mft::caption::read_paragraphs;
use mft::config::RunConfig;
use mft::corpus::{load_dataset, Split};
use mft::localize::FrameScorer;
use mft::numcore::save_params;
use mft::pipeline::Localizer;
use tempfile::TempDir;

fn mft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mft"))
        .args(args)
        .env("MFT_LOG_LEVEL", "error")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = mft(args);
    assert_eq!(code(&out), 0, "mft {args:?} failed: {}", stderr(&out));
    out
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

const SMALL: [&str; 3] = ["--desk", "synth_videos=24", "synth_val_videos=8"];
const QUICK: [&str; 4] = ["xe_epochs=2", "scst_epochs=1", "selector_epochs=1", "scorer_epochs=50"];

fn small_corpus(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let mut args = vec!["synth", "--out", s(&data)];
    args.extend(SMALL);
    ok(&args);
    data
}

fn train(phase: &str, data: &Path, ck: &Path) -> Output {
    let mut args = vec!["train", "--phase", phase, "--data", s(data), "--out", s(ck)];
    args.extend(SMALL);
    args.extend(QUICK);
    mft(&args)
}

#[test]
fn synth_default_config_is_200_videos_and_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["synth", "--out", s(&a)]);
    ok(&["synth", "--out", s(&b)]);
    let ds = load_dataset(&a).unwrap();
    assert_eq!(ds.videos.len(), 200);
    let fa = files_under(&a);
    let fb = files_under(&b);
    assert_eq!(fa.len(), 200 + 3);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(&a).unwrap(), y.strip_prefix(&b).unwrap());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{x:?} differs");
    }
}

#[test]
fn usage_and_data_errors_have_distinct_exit_codes() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&mft(&["frobnicate"])), 1);
    assert_eq!(code(&mft(&["--help"])), 0);
    let out = mft(&["synth", "--out", s(&tmp.path().join("x")), "no_such_key=3"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"not a directory").unwrap();
    let out = mft(&["synth", "--out", s(&blocker.join("sub"))]);
    assert_eq!(code(&out), 2);
    assert!(!stderr(&out).is_empty());
}

#[test]
fn upstream_checkpoints_are_required() {
    let tmp = TempDir::new().unwrap();
    let data = small_corpus(tmp.path());
    let ck = tmp.path().join("ck");
    let out = train("scst", &data, &ck);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--phase xe"), "{}", stderr(&out));
    let out = train("selector", &data, &ck);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--phase scorer"), "{}", stderr(&out));
}

#[test]
fn train_generate_eval_round_trip() {
    let tmp = TempDir::new().unwrap();
    let data = small_corpus(tmp.path());
    let ck = tmp.path().join("ck");
    for phase in ["scorer", "xe", "scst"] {
        let out = train(phase, &data, &ck);
        assert_eq!(code(&out), 0, "{phase}: {}", stderr(&out));
    }
    let captioner = ck.join("caption_scst.mftw");
    let before = fs::read(&captioner).unwrap();
    let out = train("selector", &data, &ck);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read(&captioner).unwrap(), before, "selector training touched the captioner");
    let log = fs::read_to_string(ck.join("xe_log.csv")).unwrap();
    assert!(log.starts_with("iter,phase,loss,reward_mean,val_cider\n"));

    let ds = load_dataset(&data).unwrap();
    let eval = ds.split(Split::Eval);
    let generate = |mode: &str, out: &Path| {
        let mut args = vec!["generate", "--checkpoints", s(&ck), "--data", s(&data), "--mode", mode, "--out", s(out)];
        args.extend(SMALL);
        ok(&args);
    };
    let (g1, g2, gt) = (tmp.path().join("g1.jsonl"), tmp.path().join("g2.jsonl"), tmp.path().join("gt.jsonl"));
    generate("mft", &g1);
    generate("mft", &g2);
    generate("gt-event", &gt);
    assert_eq!(fs::read(&g1).unwrap(), fs::read(&g2).unwrap());
    let gt_records = read_paragraphs(&gt).unwrap();
    assert_eq!(gt_records.len(), eval.len());
    for (r, v) in gt_records.iter().zip(&eval) {
        assert_eq!(r.video_id, v.id);
        assert_eq!(r.sentences.len(), v.gt_events.len());
        let spans: Vec<[usize; 2]> = v.gt_events.iter().map(|e| [e.span.start, e.span.end]).collect();
        assert_eq!(r.spans, spans);
    }

    // Scoring against the dataset, then the identity check.
    let report = tmp.path().join("report.json");
    ok(&["eval", "--generated", s(&g1), "--references", s(&data), "--out", s(&report)]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    for col in mft::metrics::REPORT_COLUMNS {
        assert!(json.get(col).is_some(), "missing column {col}");
    }
    let refs = tmp.path().join("refs.jsonl");
    fs::copy(&g1, &refs).unwrap();
    let out = ok(&["eval", "--generated", s(&g1), "--references", s(&refs), "--out", s(&report)]);
    let text = stdout(&out);
    assert!(text.lines().next().unwrap().contains("CIDEr"), "{text}");
    let row: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let nonempty = read_paragraphs(&g1).unwrap().iter().any(|r| r.sentences.iter().any(|s| !s.is_empty()));
    if nonempty {
        for col in ["BLEU@1", "BLEU@2", "BLEU@3", "BLEU@4"] {
            assert_eq!(row[col].as_f64().unwrap(), 100.0, "{col}");
        }
    }
}

#[test]
fn eval_reports_missing_ids() {
    let tmp = TempDir::new().unwrap();
    let gen = tmp.path().join("gen.jsonl");
    let refs = tmp.path().join("refs.jsonl");
    fs::write(
        &gen,
        "{\"video_id\":\"v1\",\"sentences\":[\"a man runs\"],\"spans\":[[0,3]]}\n\
         {\"video_id\":\"v9\",\"sentences\":[\"a dog sits\"],\"spans\":[[0,3]]}\n",
    )
    .unwrap();
    fs::write(&refs, "{\"video_id\":\"v1\",\"sentences\":[\"a man runs\"],\"spans\":[[0,3]]}\n").unwrap();
    let out = mft(&["eval", "--generated", s(&gen), "--references", s(&refs)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("v9"), "{}", stderr(&out));
    let other = tmp.path().join("other.jsonl");
    fs::write(&other, "{\"video_id\":\"zz\",\"sentences\":[\"x\"],\"spans\":[[0,1]]}\n").unwrap();
    let out = mft(&["eval", "--generated", s(&gen), "--references", s(&other)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_identity_hits_one_hundred_bleu() {
    let tmp = TempDir::new().unwrap();
    let gen = tmp.path().join("gen.jsonl");
    fs::write(
        &gen,
        "{\"video_id\":\"a\",\"sentences\":[\"a man is riding a bike\",\"then he falls off the bike\"],\"spans\":[[0,3],[3,9]]}\n\
         {\"video_id\":\"b\",\"sentences\":[\"two dogs play in the snow\"],\"spans\":[[1,4]]}\n\
         {\"video_id\":\"c\",\"sentences\":[\"a chef cuts the onions\",\"she adds the onions to the pan\"],\"spans\":[[0,2],[2,8]]}\n",
    )
    .unwrap();
    let report = tmp.path().join("r.json");
    ok(&["eval", "--generated", s(&gen), "--references", s(&gen), "--out", s(&report)]);
    let row: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let keys: Vec<&str> = row.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys.len(), 8);
    for col in ["BLEU@1", "BLEU@2", "BLEU@3", "BLEU@4", "Rouge-L"] {
        assert_eq!(row[col].as_f64().unwrap(), 100.0, "{col}");
    }
}

#[test]
fn vocabulary_mismatch_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let data = small_corpus(tmp.path());
    let ck = tmp.path().join("ck");
    assert_eq!(code(&train("xe", &data, &ck)), 0);
    let fewer = tmp.path().join("fewer");
    let mut args = vec!["synth", "--out", s(&fewer), "synth_topics=3"];
    args.extend(SMALL);
    ok(&args);
    let out = mft(&[
        "generate", "--checkpoints", s(&ck), "--data", s(&fewer), "--mode", "gt-event",
        "--out", s(&tmp.path().join("g.jsonl")), "--desk",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("vocabulary mismatch"), "{}", stderr(&out));
}

#[test]
fn untrained_zero_networks_select_every_candidate() {
    let tmp = TempDir::new().unwrap();
    let data = small_corpus(tmp.path());
    let ck = tmp.path().join("ck");
    assert_eq!(code(&train("scorer", &data, &ck)), 0);
    let cfg = RunConfig::desk();
    let ds = load_dataset(&data).unwrap();
    let dim = ds.feature_dim().unwrap();
    let mut cap = cfg.new_captioner(ds.vocab.len(), dim).unwrap();
    cap.zero_params();
    save_params(&cap.store, &ck.join("caption_xe.mftw")).unwrap();
    let mut sel = cfg.new_selector(dim);
    sel.zero_params();
    save_params(&sel.store, &ck.join("selector.mftw")).unwrap();

    let out = tmp.path().join("g.jsonl");
    ok(&["generate", "--checkpoints", s(&ck), "--data", s(&data), "--out", s(&out), "--desk"]);
    let scorer: FrameScorer = serde_json::from_str(&fs::read_to_string(ck.join("scorer.json")).unwrap()).unwrap();
    let loc = Localizer {
        scorer,
        watershed: cfg.watershed(),
    };
    let records = read_paragraphs(&out).unwrap();
    for (r, v) in records.iter().zip(ds.split(Split::Eval)) {
        let n = loc.candidates(&v).unwrap().len();
        assert_eq!(r.spans.len(), n, "{}", r.video_id);
        assert_eq!(r.sentences.len(), n);
    }
}

#[test]
fn xe_phase_overfits_a_single_video() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("one");
    ok(&["synth", "--out", s(&data), "--desk", "synth_videos=3", "synth_val_videos=2"]);
    assert_eq!(load_dataset(&data).unwrap().split_counts(), [1, 1, 1]);
    let out = ok(&[
        "train", "--phase", "xe", "--data", s(&data), "--out", s(&tmp.path().join("ck")), "--desk",
        "xe_epochs=300", "xe_lr=0.01", "xe_batch_videos=1",
    ]);
    let text = stdout(&out);
    let loss: f64 = text
        .split("final loss ")
        .nth(1)
        .and_then(|t| t.split(',').next())
        .and_then(|t| t.trim().parse().ok())
        .unwrap_or_else(|| panic!("no loss in {text:?}"));
    assert!(loss < 0.01, "final loss {loss}");
}

#[test]
fn gradcheck_passes_and_reports_each_parameter() {
    let out = ok(&["gradcheck"]);
    let text = stdout(&out);
    assert!(text.contains("PASS"));
    for name in ["caption.embed", "caption.att.w", "select.w_p", "select.lstm.w_hidden"] {
        assert!(text.contains(name), "{name} missing from report");
    }
}

#[test]
fn gradcheck_failure_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let setup = tmp.path().join("setup.json");
    // No real backward pass is this exact; the check has to report failure.
    fs::write(&setup, "{\"tolerance\": 1e-30}").unwrap();
    let out = mft(&["gradcheck", "--config", s(&setup)]);
    assert_eq!(code(&out), 3, "{}", stdout(&out));
    assert!(stdout(&out).contains("FAIL"));
}
