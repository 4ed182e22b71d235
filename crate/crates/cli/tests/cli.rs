use std::path::Path;
use std::process::{Command, Output};

use tec_cli::meta::RUN_META;
use tec_core::synth::read_mixture_manifest;
use tec_model::{flops_estimate, ModelConfig};

fn tec(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tec")).args(args).current_dir(cwd).output().expect("spawn tec")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let o = tec(args, cwd);
    assert!(o.status.success(), "tec {args:?} failed: {}", stderr(&o));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn version_and_help_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok(&["--version"], dir.path());
    assert!(v.starts_with("tec "), "{v}");
    let h = ok(&["help", "train"], dir.path());
    assert!(h.contains("--ckpt-out"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["mix", "--playback", "p", "--out", "o"][..], &["transmogrify"], &["flops", "--tx", "many"], &["--seed", "9223372036854775808", "flops"]] {
        let o = tec(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn domain_errors_exit_one_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = tec(&["mix", "--clean", "absent.jsonl", "--playback", "absent.jsonl", "--out", "m"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: absent.jsonl"), "{err}");

    let o = tec(&["nlms", "--mixture", "a.wav", "--playback", "b.wav", "--out", "c.wav", "--mu", "3"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn flops_prints_the_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["--out-dir", "meta", "flops", "--tx", "120", "--ty", "15", "--tz", "90"], dir.path());
    let doc: toml::Table = toml::from_str(&out).unwrap();
    let expected = flops_estimate(&ModelConfig::default(), 120, 15, 90).unwrap();
    assert_eq!(doc["mode"].as_str(), Some("tec"));
    assert_eq!(doc["total"].as_integer(), Some(expected.total as i64));
    assert_eq!(doc["flops_atten"].as_integer(), Some(expected.flops_atten as i64));

    let meta: toml::Table = toml::from_str(&std::fs::read_to_string(dir.path().join("meta").join(RUN_META)).unwrap()).unwrap();
    assert_eq!(meta["command"].as_str(), Some("flops"));
    assert_eq!(meta["args"]["tx"].as_integer(), Some(120));

    let vanilla = ok(&["flops", "--preset", "toy", "--mode", "vanilla"], dir.path());
    assert!(vanilla.contains("m_text = 0"), "{vanilla}");
}

#[test]
fn corpus_to_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&["corpus", "--out", "corpus"], dir);
    ok(&["--seed", "3", "mix", "--clean", "corpus/train/clean.jsonl", "--playback", "corpus/train/playback.jsonl", "--out", "mix"], dir);
    let ids: Vec<String> = read_mixture_manifest(&dir.join("mix/mixtures.jsonl")).unwrap().into_iter().map(|r| r.id).collect();
    assert!(!ids.is_empty());

    let train = ["--seed", "3", "--log-level", "quiet", "train", "--manifest", "mix/mixtures.jsonl", "--steps", "3"];
    let a = ok(&[&train[..], &["--ckpt-out", "ck/a.ckpt", "--loss-log", "ck/loss.csv"]].concat(), dir);
    assert!(a.contains("final loss"));
    ok(&[&train[..], &["--ckpt-out", "ck/b.ckpt"]].concat(), dir);
    let bytes = |p: &str| std::fs::read(dir.join(p)).unwrap();
    assert_eq!(bytes("ck/a.ckpt"), bytes("ck/b.ckpt"));
    assert_eq!(std::fs::read_to_string(dir.join("ck/loss.csv")).unwrap().lines().count(), 4);

    let o = tec(&["enhance", "--ckpt", "ck/a.ckpt", "--mixture", &format!("mix/mixture/{}.wav", ids[0]), "--out-mel", "e.mel"], dir);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--text"));

    for (i, id) in ids.iter().enumerate() {
        let mixture = format!("mix/mixture/{id}.wav");
        let mel = format!("enh/{id}.mel");
        let mut args = vec!["enhance", "--ckpt", "ck/a.ckpt", "--mixture", &mixture, "--text", "what about tomorrow"];
        args.extend(["--out-mel", &mel, "--max-steps", "12"]);
        let wav = format!("wav/{id}.wav");
        if i == 0 {
            args.extend(["--out-wav", &wav, "--griffin-lim-iters", "2"]);
        }
        ok(&args, dir);
    }
    assert!(dir.join("wav").join(format!("{}.wav", ids[0])).exists());

    std::fs::write(dir.join("hyp.trn"), format!("what about tomorrow ({})\n", ids[0])).unwrap();
    let args = ["eval", "--manifest", "mix/mixtures.jsonl", "--enhanced-dir", "enh", "--hyp", "hyp.trn"];
    ok(&[&args[..], &["--report", "rep/eval.toml"]].concat(), dir);
    let report: toml::Table = toml::from_str(&std::fs::read_to_string(dir.join("rep/eval.toml")).unwrap()).unwrap();
    let records = report["record"].as_array().unwrap();
    assert_eq!(records.len(), ids.len());
    assert_eq!(report["summary"]["records"].as_integer(), Some(ids.len() as i64));
    assert!(report["summary"]["wer_records"].as_integer() == Some(1));
    for r in records {
        assert!(r["mcd_db"].as_float().unwrap() > 0.0);
        assert!(r["side_input_bytes"].as_integer().unwrap() > 0);
    }

    for d in ["corpus", "mix", "ck", "enh", "rep"] {
        assert!(dir.join(d).join(RUN_META).exists(), "{d}");
    }
    let meta: toml::Table = toml::from_str(&std::fs::read_to_string(dir.join("ck").join(RUN_META)).unwrap()).unwrap();
    assert_eq!(meta["global"]["seed"].as_integer(), Some(3));
    assert_eq!(meta["args"]["steps"].as_integer(), Some(3));
    let init: u64 = meta["resolved"]["init_seed"].as_str().unwrap().parse().unwrap();
    assert_eq!(init, tec_core::synth::derive_seed(3, "model_init"));
}

#[test]
fn nlms_writes_a_cancelled_signal() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&["corpus", "--out", "corpus"], dir);
    ok(&["mix", "--clean", "corpus/train/clean.jsonl", "--playback", "corpus/train/playback.jsonl", "--out", "mix"], dir);
    let first = read_mixture_manifest(&dir.join("mix/mixtures.jsonl")).unwrap().remove(0);
    let (mixture, playback) = (format!("mix/{}", first.mixture_path), format!("mix/{}", first.playback_path));
    ok(&["--threads", "1", "nlms", "--mixture", &mixture, "--playback", &playback, "--out", "out/e.wav", "--taps", "64"], dir);
    let w = tec_core::wav::read_wav(dir.join("out/e.wav")).unwrap();
    let m = tec_core::wav::read_wav(dir.join(&mixture)).unwrap();
    assert_eq!(w.len(), m.len().max(tec_core::wav::read_wav(dir.join(&playback)).unwrap().len()));
    assert!(dir.join("out").join(RUN_META).exists());
}
