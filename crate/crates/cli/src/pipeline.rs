//! Feature preparation, training and enhancement shared by the subcommands
//! and the demo.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tec_core::metrics::{mcd_mel, McdReport};
use tec_core::signal::mel_spectrogram;
use tec_core::synth::MixtureRecord;
use tec_core::{wav, Matrix, MelSpectrogram, PhonemeSequence, SpectralConfig, Waveform};
use tec_grad::checkpoint::{load_params, read_container, save_params, write_container, MEL_MAGIC};
use tec_grad::{LrSchedule, ParamStore, Tensor};
use tec_model::{infer, variant_factory, Example, Inference, LossBreakdown, Mode, Model, ModelConfig, SideInput, Trainer};

use crate::error::{Error, Result};

/// Mel bands used by the pipeline. MCD needs more bands than the 13
/// cepstral coefficients it compares.
pub const MEL_BANDS: usize = 20;

pub fn spectral_config(n_mels: usize) -> SpectralConfig {
    SpectralConfig::default().with_n_mels(n_mels)
}

/// Pre-net dropout used by the pipeline's default model.
pub const PRENET_DROPOUT: f64 = 0.5;

/// Toy model configuration at the pipeline's Mel resolution, with pre-net dropout.
pub fn default_model_config(mode: Mode) -> ModelConfig {
    let mut cfg = ModelConfig::toy().with_mode(mode).with_mel_dim(MEL_BANDS);
    cfg.decoder.prenet_dropout = PRENET_DROPOUT;
    cfg
}

/// Global mean and standard deviation of log-Mel values, fitted on the
/// training features. The model sees `(x - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: f64,
    pub std: f64,
}

impl Default for FeatureNorm {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

impl FeatureNorm {
    pub fn fit<'a>(mats: impl IntoIterator<Item = &'a Matrix>) -> Result<Self> {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for m in mats {
            n += m.data().len();
            sum += m.data().iter().sum::<f64>();
            sq += m.data().iter().map(|v| v * v).sum::<f64>();
        }
        if n == 0 {
            return Err(Error::invalid("cannot fit feature normalization on empty features"));
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        Ok(Self { mean, std: var.sqrt().max(1e-6) })
    }

    pub fn apply(&self, m: &Matrix) -> Tensor {
        let data = m.data().iter().map(|v| (v - self.mean) / self.std).collect();
        Tensor::matrix(m.rows(), m.cols(), data).expect("matrix shape")
    }

    pub fn invert(&self, t: &Tensor) -> Result<Matrix> {
        let (r, c) = t.dims2();
        Ok(Matrix::new(r, c, t.data().iter().map(|v| v * self.std + self.mean).collect())?)
    }
}

/// A mixture record with every feature the models need.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub id: String,
    pub mixture: MelSpectrogram,
    pub clean: MelSpectrogram,
    /// Spectrogram of the loudspeaker signal, the AEC-Seq2seq side input.
    pub playback: MelSpectrogram,
    pub phonemes: PhonemeSequence,
}

impl Prepared {
    pub fn new(
        id: &str,
        mixture: &Waveform,
        clean: &Waveform,
        playback: &Waveform,
        phonemes: PhonemeSequence,
        spec: &SpectralConfig,
    ) -> Result<Self> {
        if phonemes.is_empty() {
            return Err(Error::invalid(format!("{id}: empty phoneme sequence")));
        }
        Ok(Self {
            id: id.to_string(),
            mixture: mel_spectrogram(mixture, spec)?,
            clean: mel_spectrogram(clean, spec)?,
            playback: mel_spectrogram(playback, spec)?,
            phonemes,
        })
    }

    pub fn side_input(&self, mode: Mode, norm: &FeatureNorm) -> SideInput {
        match mode {
            Mode::Tec => SideInput::Text(phoneme_ids(&self.phonemes)),
            Mode::Vanilla => SideInput::None,
            Mode::AecSeq2seq => SideInput::Playback(norm.apply(self.playback.values())),
        }
    }

    pub fn example(&self, mode: Mode, norm: &FeatureNorm) -> Example {
        Example {
            mixture: norm.apply(self.mixture.values()),
            side: self.side_input(mode, norm),
            target: norm.apply(self.clean.values()),
        }
    }
}

pub fn phoneme_ids(p: &PhonemeSequence) -> Vec<usize> {
    p.ids().iter().map(|&i| i as usize).collect()
}

pub fn read_wav_at(path: &Path) -> Result<Waveform> {
    if !path.exists() {
        return Err(Error::invalid(format!("{}: no such file", path.display())));
    }
    Ok(wav::read_wav(path)?)
}

/// Loads and featurizes every record of a mixture manifest, in manifest order.
pub fn load_manifest(manifest: &Path, spec: &SpectralConfig) -> Result<Vec<(MixtureRecord, Prepared)>> {
    let base = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let records = tec_core::synth::read_mixture_manifest(manifest)
        .map_err(|e| Error::invalid(format!("{}: {e}", manifest.display())))?;
    if records.is_empty() {
        return Err(Error::invalid(format!("{}: manifest has no records", manifest.display())));
    }
    records
        .into_par_iter()
        .map(|r| {
            let mixture = read_wav_at(&base.join(&r.mixture_path))?;
            let clean = read_wav_at(&base.join(&r.clean_path))?;
            let playback = read_wav_at(&base.join(&r.playback_path))?;
            let p = Prepared::new(&r.id, &mixture, &clean, &playback, r.phoneme_sequence()?, spec)?;
            Ok((r, p))
        })
        .collect()
}

/// Derived seeds span all of u64, past what TOML integers hold.
pub mod seed_text {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub steps: usize,
    /// Parameter initialization and dropout seed.
    #[serde(with = "seed_text")]
    pub seed: u64,
    pub lr: f64,
    pub final_lr: f64,
    /// Examples per update; the whole set when it is smaller.
    pub batch_size: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self { steps: 200, seed: 0, lr: 3e-3, final_lr: 3e-4, batch_size: 8 }
    }
}

impl TrainSettings {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule { initial: self.lr, final_lr: self.final_lr, decay_steps: self.steps.max(1) as u64 }
    }
}

/// Deterministic batch for `step`: a window over the examples, cycling,
/// at least two long.
fn batch_for(examples: &[Example], step: usize, size: usize) -> Vec<Example> {
    let n = examples.len();
    let size = size.min(n).max(tec_model::train::MIN_BATCH);
    (0..size).map(|k| examples[(step * size + k) % n].clone()).collect()
}

/// Trains from scratch, calling `progress(step, loss)` after every update.
pub fn train(
    cfg: &ModelConfig,
    examples: &[Example],
    settings: &TrainSettings,
    mut progress: impl FnMut(usize, &LossBreakdown),
) -> Result<(Trainer, Vec<LossBreakdown>)> {
    if examples.is_empty() {
        return Err(Error::invalid("no training examples"));
    }
    if settings.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let model = variant_factory(cfg.mode, cfg)?;
    let mut trainer = Trainer::new(model, settings.seed, settings.schedule())?;
    let mut losses = Vec::with_capacity(settings.steps);
    for step in 0..settings.steps {
        let batch = batch_for(examples, step, settings.batch_size);
        let loss = trainer.train_step(&batch)?;
        progress(step, &loss);
        losses.push(loss);
    }
    Ok((trainer, losses))
}

/// Enhanced spectrogram in the original log-Mel scale.
pub fn enhance(
    model: &Model,
    store: &ParamStore,
    mixture: &MelSpectrogram,
    side: &SideInput,
    norm: &FeatureNorm,
    max_steps: Option<usize>,
) -> Result<(MelSpectrogram, Inference)> {
    let out = infer(model, store, &norm.apply(mixture.values()), side, max_steps)?;
    let mel = MelSpectrogram::from_matrix(norm.invert(&out.mel)?, mixture.config().clone())?;
    Ok((mel, out))
}

pub fn mcd(enhanced: &MelSpectrogram, target: &MelSpectrogram) -> Result<McdReport> {
    Ok(mcd_mel(enhanced, target)?)
}

/// Everything besides the tensors needed to rebuild a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub mode: Mode,
    pub steps: u64,
    pub seed: u64,
    pub norm: FeatureNorm,
    pub spectral: SpectralConfig,
    pub model: ModelConfig,
}

pub fn meta_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

/// Writes the parameter container and its `<ckpt>.toml` sidecar.
pub fn save_checkpoint(path: &Path, store: &ParamStore, meta: &CheckpointMeta) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_params(path, store)?;
    std::fs::write(meta_path(path), toml::to_string(meta)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, ParamStore, CheckpointMeta)> {
    let mp = meta_path(path);
    let text = std::fs::read_to_string(&mp).map_err(|source| Error::File { path: mp.display().to_string(), source })?;
    let meta: CheckpointMeta = toml::from_str(&text)?;
    let model = variant_factory(meta.mode, &meta.model)?;
    let mut store = model.init_params(0)?;
    load_params(path, &mut store)?;
    Ok((model, store, meta))
}

pub fn write_mel(path: &Path, mel: &MelSpectrogram) -> Result<()> {
    let m = mel.values();
    let t = Tensor::matrix(m.rows(), m.cols(), m.data().to_vec())?;
    write_container(path, MEL_MAGIC, &[("log_mel".to_string(), t)])?;
    Ok(())
}

pub fn read_mel(path: &Path, spec: &SpectralConfig) -> Result<MelSpectrogram> {
    let records = read_container(path, MEL_MAGIC)?;
    let (_, t) = records
        .into_iter()
        .find(|(n, _)| n == "log_mel")
        .ok_or_else(|| Error::invalid(format!("{}: no log_mel record", path.display())))?;
    let (r, c) = t.dims2();
    let spec = spec.clone().with_n_mels(c);
    Ok(MelSpectrogram::from_matrix(Matrix::new(r, c, t.into_data())?, spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_round_trips() {
        let m = Matrix::new(2, 3, vec![-20.0, -3.0, 1.0, 0.5, -7.0, -11.0]).unwrap();
        let n = FeatureNorm::fit([&m]).unwrap();
        let t = n.apply(&m);
        let mean: f64 = t.data().iter().sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-12);
        let back = n.invert(&t).unwrap();
        for (a, b) in back.data().iter().zip(m.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_features_do_not_divide_by_zero() {
        let m = Matrix::filled(3, 2, -4.0);
        let n = FeatureNorm::fit([&m]).unwrap();
        assert!(n.apply(&m).data().iter().all(|v| v.is_finite()));
        assert!(FeatureNorm::fit([]).is_err());
    }

    #[test]
    fn batches_cycle_and_hold_two() {
        let ex = |v: f64| Example {
            mixture: Tensor::filled(&[4, 2], v),
            side: SideInput::None,
            target: Tensor::filled(&[4, 2], v),
        };
        let one = vec![ex(1.0)];
        assert_eq!(batch_for(&one, 3, 8).len(), 2);
        let three = vec![ex(0.0), ex(1.0), ex(2.0)];
        let b = batch_for(&three, 1, 2);
        assert_eq!(b[0].mixture.data()[0], 2.0);
        assert_eq!(b[1].mixture.data()[0], 0.0);
    }

    #[test]
    fn mel_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = spectral_config(4);
        let mel = MelSpectrogram::from_matrix(Matrix::new(2, 4, (0..8).map(|v| v as f64).collect()).unwrap(), spec.clone())
            .unwrap();
        let p = dir.path().join("x.mel");
        write_mel(&p, &mel).unwrap();
        assert_eq!(read_mel(&p, &spec).unwrap(), mel);
    }
}
