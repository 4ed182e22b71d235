use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use tec_core::corpus::{load_utterances, write_bundled_corpus};
use tec_core::griffin_lim::{griffin_lim, GriffinLimConfig};
use tec_core::metrics::{side_input_size, wer};
use tec_core::nlms::{nlms_cancel, NlmsConfig};
use tec_core::room::RoomDistribution;
use tec_core::signal::mel_spectrogram;
use tec_core::synth::{build_dataset, derive_seed, write_dataset, MANIFEST_NAME};
use tec_core::{wav, Method, PhonemeSequence, Waveform};
use tec_model::{flops_estimate, Mode, ModelConfig, SideInput};

use crate::args::*;
use crate::demo::{run_demo, DemoOptions};
use crate::error::{Error, Result};
use crate::meta::{write_run_meta, Logger};
use crate::pipeline::{self, CheckpointMeta, FeatureNorm, TrainSettings};

fn parent_dir(p: &Path) -> PathBuf {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn ensure_parent(p: &Path) -> Result<()> {
    fs::create_dir_all(parent_dir(p))?;
    Ok(())
}

fn meta_dir(global: &GlobalArgs, default: PathBuf) -> PathBuf {
    global.out_dir.clone().unwrap_or(default)
}

/// Fails with the path in the message when an input file is missing.
fn existing(path: &Path) -> Result<&Path> {
    match fs::metadata(path) {
        Ok(_) => Ok(path),
        Err(source) => Err(Error::File { path: path.display().to_string(), source }),
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::File { path: path.display().to_string(), source })?;
    Ok(toml::from_str(&text)?)
}

pub fn mix(a: &MixArgs, g: &GlobalArgs, log: &Logger) -> Result<()> {
    let rooms: RoomDistribution = match &a.rooms {
        Some(p) => read_toml(p)?,
        None => RoomDistribution::default(),
    };
    let clean = load_utterances(existing(&a.clean)?)?;
    let playback = load_utterances(existing(&a.playback)?)?;
    log.info(format!("mixing {} clean utterances with {} playbacks", clean.len(), playback.len()));
    let build = build_dataset(&clean, &playback, &rooms, g.seed, a.snr_db)?;
    for f in &build.failures {
        log.info(format!("skipped {}: {}", f.clean_id, f.reason));
    }
    let records = write_dataset(&a.out, &build)?;
    write_run_meta(&meta_dir(g, a.out.clone()), "mix", g, a, Some(&rooms))?;
    println!("wrote {} mixtures to {}", records.len(), a.out.join(MANIFEST_NAME).display());
    Ok(())
}

fn pad(w: &Waveform, len: usize) -> Waveform {
    let mut s = w.samples().to_vec();
    s.resize(len, 0.0);
    Waveform::new(s, w.sample_rate()).expect("finite samples")
}

pub fn nlms(a: &NlmsArgs, g: &GlobalArgs, log: &Logger) -> Result<()> {
    let cfg = NlmsConfig { filter_taps: a.taps, step_size_mu: a.mu, regularizer_eps: a.eps };
    cfg.validate()?;
    let mixture = pipeline::read_wav_at(existing(&a.mixture)?)?;
    let playback = pipeline::read_wav_at(existing(&a.playback)?)?;
    let len = mixture.len().max(playback.len());
    log.debug(format!("{len} samples, {} taps", a.taps));
    let out = nlms_cancel(&pad(&mixture, len), &pad(&playback, len), &cfg)?;
    ensure_parent(&a.out)?;
    wav::write_wav(&a.out, &out)?;
    write_run_meta(&meta_dir(g, parent_dir(&a.out)), "nlms", g, a, Some(&cfg))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ResolvedTrain<'a> {
    settings: TrainSettings,
    #[serde(serialize_with = "pipeline::seed_text::serialize")]
    init_seed: u64,
    model: &'a ModelConfig,
}

pub fn train(a: &TrainArgs, g: &GlobalArgs, log: &Logger) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => ModelConfig::load(existing(p)?)?.with_mode(a.mode),
        None => pipeline::default_model_config(a.mode),
    };
    cfg.validate()?;
    let spec = pipeline::spectral_config(cfg.decoder.mel_dim);
    let data = pipeline::load_manifest(existing(&a.manifest)?, &spec)?;
    let norm = FeatureNorm::fit(data.iter().flat_map(|(_, p)| [p.mixture.values(), p.clean.values()]))?;
    let examples: Vec<_> = data.iter().map(|(_, p)| p.example(a.mode, &norm)).collect();
    let init_seed = derive_seed(g.seed, "model_init");
    let settings =
        TrainSettings { steps: a.steps, seed: init_seed, lr: a.lr, final_lr: a.final_lr, batch_size: a.batch_size };
    log.info(format!("training {} on {} examples for {} steps", a.mode, examples.len(), a.steps));
    let every = (a.steps / 20).max(1);
    let (trainer, losses) = pipeline::train(&cfg, &examples, &settings, |s, l| {
        if s % every == 0 || s + 1 == a.steps {
            log.info(format!("step {s:>6}  loss {:.4}", l.total));
        }
    })?;
    let meta = CheckpointMeta { mode: a.mode, steps: trainer.steps(), seed: g.seed, norm, spectral: spec, model: cfg.clone() };
    pipeline::save_checkpoint(&a.ckpt_out, &trainer.store, &meta)?;
    if let Some(p) = &a.loss_log {
        ensure_parent(p)?;
        let mut csv = String::from("step,total,l2_pre,l2_post,l1_pre,l1_post,stop_ce\n");
        for (i, l) in losses.iter().enumerate() {
            let _ = writeln!(csv, "{i},{},{},{},{},{},{}", l.total, l.l2_pre, l.l2_post, l.l1_pre, l.l1_post, l.stop_ce);
        }
        fs::write(p, csv)?;
    }
    let resolved = ResolvedTrain { settings, init_seed, model: &cfg };
    write_run_meta(&meta_dir(g, parent_dir(&a.ckpt_out)), "train", g, a, Some(&resolved))?;
    match losses.last() {
        Some(l) => println!("final loss {:.6}; checkpoint {}", l.total, a.ckpt_out.display()),
        None => println!("no steps run; checkpoint {}", a.ckpt_out.display()),
    }
    Ok(())
}

pub fn enhance(a: &EnhanceArgs, g: &GlobalArgs, log: &Logger) -> Result<()> {
    let (model, store, meta) = pipeline::load_checkpoint(existing(&a.ckpt)?)?;
    let mixture = mel_spectrogram(&pipeline::read_wav_at(existing(&a.mixture)?)?, &meta.spectral)?;
    let side = match meta.mode {
        Mode::Tec => {
            let text = a.text.as_deref().ok_or_else(|| Error::invalid("a tec checkpoint needs --text"))?;
            let p = PhonemeSequence::parse(text);
            if p.is_empty() {
                return Err(Error::invalid("--text has no pronounceable tokens"));
            }
            SideInput::Text(pipeline::phoneme_ids(&p))
        }
        Mode::Vanilla => SideInput::None,
        Mode::AecSeq2seq => {
            let p = a.playback.as_ref().ok_or_else(|| Error::invalid("an aec_seq2seq checkpoint needs --playback"))?;
            let mel = mel_spectrogram(&pipeline::read_wav_at(existing(p)?)?, &meta.spectral)?;
            SideInput::Playback(meta.norm.apply(mel.values()))
        }
    };
    let (mel, out) = pipeline::enhance(&model, &store, &mixture, &side, &meta.norm, a.max_steps)?;
    if out.truncated {
        log.info(format!("no stop decision within {} steps; output truncated", out.stop_probs.len()));
    }
    ensure_parent(&a.out_mel)?;
    pipeline::write_mel(&a.out_mel, &mel)?;
    if let Some(p) = &a.out_wav {
        let cfg = GriffinLimConfig { iterations: a.griffin_lim_iters, seed: derive_seed(g.seed, "griffin_lim") };
        ensure_parent(p)?;
        wav::write_wav(p, &griffin_lim(&mel, &cfg)?)?;
    }
    write_run_meta(&meta_dir(g, parent_dir(&a.out_mel)), "enhance", g, a, Some(&meta))?;
    println!("wrote {} frames to {}", mel.frames(), a.out_mel.display());
    Ok(())
}

fn parse_method(s: &str) -> Result<Method> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "mixture" => Ok(Method::Mixture),
        "nlms" => Ok(Method::Nlms),
        "vanilla" => Ok(Method::Vanilla),
        "aec" | "aec_seq2seq" => Ok(Method::AecSeq2seq),
        "tec" => Ok(Method::Tec),
        other => Err(Error::invalid(format!("unknown method {other:?}"))),
    }
}

/// Parses `word word ... (id)` lines.
pub fn parse_trn(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let open = line.rfind('(').filter(|_| line.ends_with(')'));
        let open = open.ok_or_else(|| Error::invalid(format!("hyp line {}: expected `words (id)`", n + 1)))?;
        let id = line[open + 1..line.len() - 1].trim().to_string();
        out.insert(id, line[..open].trim().to_string());
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct RecordRow {
    id: String,
    mcd_db: f64,
    mcd_total_db: f64,
    aligned_frames: usize,
    mixture_mcd_db: f64,
    side_input_bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    wer: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    method: String,
    records: usize,
    mean_mcd_db: f64,
    mean_mixture_mcd_db: f64,
    mean_side_input_bytes: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    wer: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wer_records: Option<usize>,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    summary: Summary,
    record: Vec<RecordRow>,
}

pub fn eval(a: &EvalArgs, g: &GlobalArgs, log: &Logger) -> Result<()> {
    let method = parse_method(&a.method)?;
    let spec = pipeline::spectral_config(a.n_mels);
    let base = parent_dir(&a.manifest);
    let data = pipeline::load_manifest(existing(&a.manifest)?, &spec)?;
    let hyps = match &a.hyp {
        Some(p) => Some(parse_trn(&fs::read_to_string(p).map_err(|source| Error::File { path: p.display().to_string(), source })?)?),
        None => None,
    };
    let rows = data
        .par_iter()
        .map(|(r, p)| {
            let mel_path = a.enhanced_dir.join(format!("{}.mel", r.id));
            let wav_path = a.enhanced_dir.join(format!("{}.wav", r.id));
            let enhanced = if mel_path.exists() {
                pipeline::read_mel(&mel_path, &spec)?
            } else if wav_path.exists() {
                mel_spectrogram(&wav::read_wav(&wav_path)?, &spec)?
            } else {
                return Err(Error::invalid(format!("no enhanced output for {} in {}", r.id, a.enhanced_dir.display())));
            };
            let m = pipeline::mcd(&enhanced, &p.clean)?;
            let wer = match hyps.as_ref().and_then(|h| h.get(&r.id)) {
                Some(h) => {
                    let reference: Vec<&str> = r.clean_text.split_whitespace().collect();
                    let hyp: Vec<&str> = h.split_whitespace().collect();
                    Some(wer(&reference, &hyp)?)
                }
                None => None,
            };
            Ok(RecordRow {
                id: r.id.clone(),
                mcd_db: m.per_frame_db,
                mcd_total_db: m.total_db,
                aligned_frames: m.aligned_frames,
                mixture_mcd_db: pipeline::mcd(&p.mixture, &p.clean)?.per_frame_db,
                side_input_bytes: side_input_size(r, method, &base)?,
                wer,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len() as f64;
    let wers: Vec<f64> = rows.iter().filter_map(|r| r.wer).collect();
    let summary = Summary {
        method: method.label().to_string(),
        records: rows.len(),
        mean_mcd_db: rows.iter().map(|r| r.mcd_db).sum::<f64>() / n,
        mean_mixture_mcd_db: rows.iter().map(|r| r.mixture_mcd_db).sum::<f64>() / n,
        mean_side_input_bytes: rows.iter().map(|r| r.side_input_bytes as f64).sum::<f64>() / n,
        wer: (!wers.is_empty()).then(|| wers.iter().sum::<f64>() / wers.len() as f64),
        wer_records: (!wers.is_empty()).then_some(wers.len()),
    };
    log.info(format!("mean MCD {:.4} dB (mixture {:.4} dB)", summary.mean_mcd_db, summary.mean_mixture_mcd_db));
    let report = EvalReport { summary, record: rows };
    ensure_parent(&a.report)?;
    fs::write(&a.report, toml::to_string(&report)?)?;
    write_run_meta(&meta_dir(g, parent_dir(&a.report)), "eval", g, a, None::<&()>)?;
    println!("wrote {}", a.report.display());
    Ok(())
}

pub fn flops(a: &FlopsArgs, g: &GlobalArgs, _log: &Logger) -> Result<()> {
    let mut cfg = match (&a.config, a.preset) {
        (Some(p), _) => ModelConfig::load(existing(p)?)?,
        (None, Preset::Full) => ModelConfig::default(),
        (None, Preset::Toy) => ModelConfig::toy(),
        (None, Preset::Micro) => ModelConfig::micro(),
    };
    if let Some(m) = a.mode {
        cfg = cfg.with_mode(m);
    }
    let report = flops_estimate(&cfg, a.tx, a.ty, a.tz)?;
    let mut out = format!("mode = \"{}\"\n", cfg.mode);
    out.push_str(&toml::to_string(&report)?);
    print!("{out}");
    write_run_meta(&meta_dir(g, PathBuf::from(".")), "flops", g, a, Some(&cfg))?;
    Ok(())
}

pub fn demo(a: &DemoArgs, g: &GlobalArgs, log: &Logger) -> Result<()> {
    let opts = demo_options(a, g);
    let every = (a.steps / 10).max(1);
    let report = run_demo(&opts, |mode, s, l| {
        if s % every == 0 || s + 1 == a.steps {
            log.info(format!("{mode} step {s:>5}  loss {l:.4}"));
        }
    })?;
    let text = report.render();
    print!("{text}");
    if let Some(p) = &a.report {
        ensure_parent(p)?;
        fs::write(p, &text)?;
    }
    let default_dir = a.report.as_deref().map(parent_dir).unwrap_or_else(|| PathBuf::from("."));
    write_run_meta(&meta_dir(g, default_dir), "demo", g, a, Some(&opts.train))?;
    Ok(())
}

pub fn demo_options(a: &DemoArgs, g: &GlobalArgs) -> DemoOptions {
    let d = DemoOptions::default();
    DemoOptions {
        seed: g.seed,
        train: TrainSettings { steps: a.steps, seed: derive_seed(g.seed, "model_init"), ..d.train },
        max_records: a.records,
        data_dir: std::env::var_os("TEC_DATA_DIR").map(PathBuf::from),
        ..d
    }
}

pub fn corpus(a: &CorpusArgs, g: &GlobalArgs, _log: &Logger) -> Result<()> {
    write_bundled_corpus(&a.out)?;
    write_run_meta(&meta_dir(g, a.out.clone()), "corpus", g, a, None::<&()>)?;
    println!("wrote bundled corpus to {}", a.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trn_lines_parse() {
        let m = parse_trn("what about tomorrow (mix_a)\n\n turn the lights (mix_b) \n").unwrap();
        assert_eq!(m["mix_a"], "what about tomorrow");
        assert_eq!(m["mix_b"], "turn the lights");
        assert!(parse_trn("no id here").is_err());
    }

    #[test]
    fn method_names() {
        assert_eq!(parse_method("AEC").unwrap(), Method::AecSeq2seq);
        assert_eq!(parse_method("tec").unwrap(), Method::Tec);
        assert!(parse_method("wavenet").is_err());
    }
}
