//! The interrupted-query scenario at toy scale: a user speaks over the
//! assistant's own playback, and each method tries to recover the user.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use tec_core::corpus::{bundled_corpus, load_utterances, manifest_path, Role, Split, Utterance};
use tec_core::nlms::{nlms_cancel, NlmsConfig};
use tec_core::room::RoomDistribution;
use tec_core::signal::mel_spectrogram;
use tec_core::synth::{build_dataset, SynthesizedRecord};
use tec_core::{Method, Waveform};
use tec_model::{Mode, ModelConfig};

use crate::error::{Error, Result};
use crate::pipeline::{self, FeatureNorm, Prepared, TrainSettings};

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOptions {
    pub seed: u64,
    pub train: TrainSettings,
    /// Use at most this many training utterances.
    pub max_records: Option<usize>,
    /// Corpus directory written by `tec corpus`; `None` renders the bundled one.
    pub data_dir: Option<PathBuf>,
    pub nlms: NlmsConfig,
    pub snr_db: f64,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            train: TrainSettings { steps: 400, ..TrainSettings::default() },
            max_records: None,
            data_dir: None,
            nlms: NlmsConfig::default(),
            snr_db: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoRow {
    pub method: Method,
    /// Per-frame MCD against the clean target, in record order.
    pub mcd: Vec<f64>,
}

impl DemoRow {
    pub fn mean(&self) -> f64 {
        self.mcd.iter().sum::<f64>() / self.mcd.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub seed: u64,
    pub steps: usize,
    pub records: Vec<String>,
    pub rows: Vec<DemoRow>,
    /// Training loss at the first and last step, per trained mode.
    pub losses: Vec<(Mode, f64, f64)>,
}

impl DemoReport {
    pub fn row(&self, method: Method) -> Option<&DemoRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# interrupted-query demo");
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "train_steps: {}", self.steps);
        let _ = writeln!(s, "records: {}", self.records.len());
        for (mode, first, last) in &self.losses {
            let _ = writeln!(s, "loss_{mode}: {first:.6} -> {last:.6}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "# MCD to clean target, dB per aligned frame");
        let _ = write!(s, "{:<24}", "record");
        for r in &self.rows {
            let _ = write!(s, "{:>12}", r.method.label());
        }
        let _ = writeln!(s);
        for (i, id) in self.records.iter().enumerate() {
            let _ = write!(s, "{id:<24}");
            for r in &self.rows {
                let _ = write!(s, "{:>12.4}", r.mcd[i]);
            }
            let _ = writeln!(s);
        }
        let _ = write!(s, "{:<24}", "mean");
        for r in &self.rows {
            let _ = write!(s, "{:>12.4}", r.mean());
        }
        let _ = writeln!(s);
        s
    }
}

fn corpus(opts: &DemoOptions) -> Result<(Vec<Utterance>, Vec<Utterance>)> {
    match &opts.data_dir {
        Some(dir) => Ok((
            load_utterances(&manifest_path(dir, Split::Train, Role::Clean))?,
            load_utterances(&manifest_path(dir, Split::Train, Role::Playback))?,
        )),
        None => {
            let all = bundled_corpus();
            let pick = |role| {
                all.iter().filter(|(r, s, _)| *r == role && *s == Split::Train).map(|(_, _, u)| u.clone()).collect()
            };
            Ok((pick(Role::Clean), pick(Role::Playback)))
        }
    }
}

/// Mixes the training split, returning records and their features.
pub fn training_set(opts: &DemoOptions) -> Result<Vec<(SynthesizedRecord, Prepared)>> {
    let (mut clean, playback) = corpus(opts)?;
    if let Some(n) = opts.max_records {
        clean.truncate(n);
    }
    let build = build_dataset(&clean, &playback, &RoomDistribution::default(), opts.seed, opts.snr_db)?;
    if let Some(f) = build.failures.first() {
        return Err(Error::invalid(format!("mixing {} failed: {}", f.clean_id, f.reason)));
    }
    let spec = pipeline::spectral_config(pipeline::MEL_BANDS);
    build
        .records
        .into_par_iter()
        .map(|r| {
            let p = Prepared::new(&r.id, &r.mix.mixture, &r.mix.clean, &r.playback, r.phonemes.clone(), &spec)?;
            Ok((r, p))
        })
        .collect()
}

fn padded(w: &Waveform, len: usize) -> Waveform {
    let mut s = w.samples().to_vec();
    s.resize(len.max(s.len()), 0.0);
    Waveform::new(s, w.sample_rate()).expect("finite samples")
}

pub fn nlms_mcd(set: &[(SynthesizedRecord, Prepared)], cfg: &NlmsConfig) -> Result<Vec<f64>> {
    set.par_iter()
        .map(|(r, p)| {
            let mix = &r.mix.mixture;
            let out = nlms_cancel(mix, &padded(&r.playback, mix.len()), cfg)?;
            let mel = mel_spectrogram(&out, p.mixture.config())?;
            Ok(pipeline::mcd(&mel, &p.clean)?.per_frame_db)
        })
        .collect()
}

/// Trains `mode` on the set and returns per-record MCD of the inferred output.
pub fn model_mcd(
    set: &[(SynthesizedRecord, Prepared)],
    mode: Mode,
    cfg: &ModelConfig,
    norm: &FeatureNorm,
    settings: &TrainSettings,
    progress: &mut dyn FnMut(Mode, usize, f64),
) -> Result<(Vec<f64>, Vec<f64>)> {
    let examples: Vec<_> = set.iter().map(|(_, p)| p.example(mode, norm)).collect();
    let cfg = cfg.clone().with_mode(mode);
    let (trainer, losses) = pipeline::train(&cfg, &examples, settings, |s, l| progress(mode, s, l.total))?;
    let mcd = set
        .par_iter()
        .map(|(_, p)| {
            let side = p.side_input(mode, norm);
            let (mel, _) = pipeline::enhance(&trainer.model, &trainer.store, &p.mixture, &side, norm, None)?;
            Ok(pipeline::mcd(&mel, &p.clean)?.per_frame_db)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((mcd, losses.iter().map(|l| l.total).collect()))
}

pub fn run_demo(opts: &DemoOptions, mut progress: impl FnMut(Mode, usize, f64)) -> Result<DemoReport> {
    let set = training_set(opts)?;
    let norm = FeatureNorm::fit(set.iter().flat_map(|(_, p)| [p.mixture.values(), p.clean.values()]))?;
    let mixture = set
        .iter()
        .map(|(_, p)| Ok(pipeline::mcd(&p.mixture, &p.clean)?.per_frame_db))
        .collect::<Result<Vec<_>>>()?;
    let nlms = nlms_mcd(&set, &opts.nlms)?;
    let cfg = pipeline::default_model_config(Mode::Tec);
    let settings = opts.train;
    let mut rows = vec![DemoRow { method: Method::Mixture, mcd: mixture }, DemoRow { method: Method::Nlms, mcd: nlms }];
    let mut losses = Vec::new();
    for (mode, method) in [(Mode::Vanilla, Method::Vanilla), (Mode::Tec, Method::Tec)] {
        let (mcd, l) = model_mcd(&set, mode, &cfg, &norm, &settings, &mut progress)?;
        if let (Some(first), Some(last)) = (l.first(), l.last()) {
            losses.push((mode, *first, *last));
        }
        rows.push(DemoRow { method, mcd });
    }
    Ok(DemoReport {
        seed: opts.seed,
        steps: settings.steps,
        records: set.iter().map(|(r, _)| r.id.clone()).collect(),
        rows,
        losses,
    })
}
