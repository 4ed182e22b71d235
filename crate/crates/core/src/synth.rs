//! Echoic mixture synthesis: `mixture = clean + g * (playback * rir)`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::phonemes::PhonemeSequence;
use crate::room::{generate_rir, Rir, RoomDistribution};
use crate::signal::{convolve, Waveform};
use crate::wav;

/// Deterministic per-component seed derived from a run seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    // FNV-1a over the label, mixed with the run seed through splitmix64.
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in label.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn seeded_rng(seed: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}

/// Echo as it reaches the microphone: `y * h`, full length.
pub fn apply_echo_path(y: &Waveform, h: &Rir) -> Result<Waveform> {
    if y.sample_rate() != h.sample_rate_hz {
        return Err(Error::SampleRateMismatch { left: y.sample_rate(), right: h.sample_rate_hz });
    }
    Ok(y.with_samples(convolve(y.samples(), &h.taps)?))
}

/// Zero-pads the shorter signal at the tail.
pub fn pad_to_equal_length(a: &Waveform, b: &Waveform) -> Result<(Waveform, Waveform)> {
    if a.sample_rate() != b.sample_rate() {
        return Err(Error::SampleRateMismatch { left: a.sample_rate(), right: b.sample_rate() });
    }
    let n = a.len().max(b.len());
    let pad = |w: &Waveform| {
        let mut s = w.samples().to_vec();
        s.resize(n, 0.0);
        w.with_samples(s)
    };
    Ok((pad(a), pad(b)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mix {
    /// `clean + gain * echo`, peak-normalized when it would clip.
    pub mixture: Waveform,
    /// Padded clean signal, scaled by the same peak factor as the mixture.
    pub clean: Waveform,
    /// Padded, unscaled echo.
    pub echo: Waveform,
    /// Echo gain in the final mixture (includes `peak_scale`).
    pub gain: f64,
    /// Gain that sets the requested SNR before peak normalization.
    pub snr_gain: f64,
    pub peak_scale: f64,
}

/// Scales the echo so that `10 log10(E_clean / E_scaled_echo) = snr_db`, with
/// energies taken over the padded signals.
pub fn mix_at_snr(clean: &Waveform, echo: &Waveform, snr_db: f64) -> Result<Mix> {
    let (z, e) = pad_to_equal_length(clean, echo)?;
    let (ez, ee) = (z.energy(), e.energy());
    if !(ez > 0.0) {
        return Err(Error::ZeroEnergy("clean signal"));
    }
    if !(ee > 0.0) {
        return Err(Error::ZeroEnergy("echo signal"));
    }
    let snr_gain = (ez / (ee * 10f64.powf(snr_db / 10.0))).sqrt();
    let raw: Vec<f64> = z.samples().iter().zip(e.samples()).map(|(a, b)| a + snr_gain * b).collect();
    let (mixture, peak_scale) = z.with_samples(raw).peak_normalized();
    Ok(Mix {
        mixture,
        clean: z.scaled(peak_scale),
        echo: e,
        gain: snr_gain * peak_scale,
        snr_gain,
        peak_scale,
    })
}

/// Measured SNR of two addends in dB.
pub fn snr_db(clean: &Waveform, scaled_echo: &Waveform) -> f64 {
    10.0 * (clean.energy() / scaled_echo.energy()).log10()
}

/// Manifest line describing one synthesized mixture. Paths are relative to
/// the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureRecord {
    pub id: String,
    pub mixture_path: String,
    pub clean_path: String,
    pub playback_path: String,
    /// Source text of the TTS playback.
    pub text: String,
    pub phonemes: Vec<String>,
    pub snr_db: f64,
    pub rir_id: String,
    pub seed: u64,
    /// Transcript of the user's speech, the WER reference.
    #[serde(default)]
    pub clean_text: String,
    /// Echo gain applied in the written mixture.
    #[serde(default)]
    pub echo_gain: f64,
}

impl MixtureRecord {
    pub fn phoneme_sequence(&self) -> Result<PhonemeSequence> {
        if self.phonemes.is_empty() {
            return Err(Error::Malformed(format!("record {} has no phonemes", self.id)));
        }
        PhonemeSequence::from_symbols(&self.phonemes)
    }
}

/// A record held in memory before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedRecord {
    pub id: String,
    pub clean_id: String,
    pub playback_id: String,
    pub rir_id: String,
    pub text: String,
    pub clean_text: String,
    pub phonemes: PhonemeSequence,
    pub snr_db: f64,
    pub seed: u64,
    pub mix: Mix,
    pub playback: Waveform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordFailure {
    pub clean_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBuild {
    /// Sorted by id.
    pub records: Vec<SynthesizedRecord>,
    pub failures: Vec<RecordFailure>,
    pub rirs: Vec<(String, Rir)>,
}

/// Simulates the RIR pool for a dataset: `pool_size` rooms drawn from the
/// distribution, followed by any measured RIR files.
pub fn rir_pool(rooms: &RoomDistribution, seed: u64) -> Result<Vec<(String, Rir)>> {
    let mut rng = seeded_rng(seed, "rooms");
    let mut pool = Vec::with_capacity(rooms.pool_size + rooms.rir_files.len());
    for i in 0..rooms.pool_size {
        let cfg = rooms.sample(&mut rng)?;
        pool.push((format!("sim_{i:04}"), generate_rir(&cfg)?));
    }
    for (i, path) in rooms.rir_files.iter().enumerate() {
        pool.push((format!("file_{i:04}"), Rir::from_waveform(&wav::read_wav(path)?)?));
    }
    if pool.is_empty() {
        return Err(Error::InvalidConfig("room distribution yields an empty RIR pool".into()));
    }
    Ok(pool)
}

/// One mixture per clean utterance, each with a uniformly drawn interferer
/// and RIR. Records whose interferer lacks a transcript are reported as
/// failures without stopping the build.
pub fn build_dataset(
    clean: &[Utterance],
    playback: &[Utterance],
    rooms: &RoomDistribution,
    seed: u64,
    snr_db: f64,
) -> Result<DatasetBuild> {
    if clean.is_empty() {
        return Err(Error::EmptyInput("clean manifest"));
    }
    if playback.is_empty() {
        return Err(Error::EmptyInput("playback manifest"));
    }
    let rirs = rir_pool(rooms, seed)?;
    let mut rng = seeded_rng(seed, "assign");
    let assignments: Vec<(usize, usize)> =
        clean.iter().map(|_| (rng.gen_range(0..playback.len()), rng.gen_range(0..rirs.len()))).collect();

    let results: Vec<std::result::Result<SynthesizedRecord, RecordFailure>> = clean
        .par_iter()
        .zip(assignments.par_iter())
        .map(|(z, &(pi, ri))| {
            let y = &playback[pi];
            let (rir_id, rir) = &rirs[ri];
            let fail = |reason: String| RecordFailure { clean_id: z.id.clone(), reason };
            if y.text.trim().is_empty() {
                return Err(fail(format!("playback {} has no transcript", y.id)));
            }
            let echo = apply_echo_path(&y.waveform, rir).map_err(|e| fail(e.to_string()))?;
            let mix = mix_at_snr(&z.waveform, &echo, snr_db).map_err(|e| fail(e.to_string()))?;
            Ok(SynthesizedRecord {
                id: format!("mix_{}", z.id),
                clean_id: z.id.clone(),
                playback_id: y.id.clone(),
                rir_id: rir_id.clone(),
                text: y.text.clone(),
                clean_text: z.text.clone(),
                phonemes: PhonemeSequence::from_text(&y.text),
                snr_db,
                seed,
                mix,
                playback: y.waveform.clone(),
            })
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    failures.sort_by(|a, b| a.clean_id.cmp(&b.clean_id));
    Ok(DatasetBuild { records, failures, rirs })
}

pub const MANIFEST_NAME: &str = "mixtures.jsonl";

/// Writes WAVs under `out_dir` and returns the manifest records in id order.
pub fn write_dataset(out_dir: &Path, build: &DatasetBuild) -> Result<Vec<MixtureRecord>> {
    for sub in ["mixture", "clean", "playback"] {
        fs::create_dir_all(out_dir.join(sub))?;
    }
    let mut manifest = String::new();
    let mut out = Vec::with_capacity(build.records.len());
    for r in &build.records {
        let rec = MixtureRecord {
            id: r.id.clone(),
            mixture_path: format!("mixture/{}.wav", r.id),
            clean_path: format!("clean/{}.wav", r.id),
            playback_path: format!("playback/{}.wav", r.playback_id),
            text: r.text.clone(),
            phonemes: r.phonemes.symbols(),
            snr_db: r.snr_db,
            rir_id: r.rir_id.clone(),
            seed: r.seed,
            clean_text: r.clean_text.clone(),
            echo_gain: r.mix.gain,
        };
        wav::write_wav(out_dir.join(&rec.mixture_path), &r.mix.mixture)?;
        wav::write_wav(out_dir.join(&rec.clean_path), &r.mix.clean)?;
        let playback_file = out_dir.join(&rec.playback_path);
        if !playback_file.exists() {
            wav::write_wav(&playback_file, &r.playback)?;
        }
        manifest.push_str(&serde_json::to_string(&rec)?);
        manifest.push('\n');
        out.push(rec);
    }
    fs::write(out_dir.join(MANIFEST_NAME), manifest)?;
    Ok(out)
}

pub fn read_mixture_manifest(path: &Path) -> Result<Vec<MixtureRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(s: Vec<f64>) -> Waveform {
        Waveform::new(s, 16000).unwrap()
    }

    fn noise(len: usize, seed: u64, amp: f64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        wave((0..len).map(|_| rng.gen_range(-amp..amp)).collect())
    }

    #[test]
    fn unit_impulse_echo_is_identity() {
        let y = noise(100, 1, 0.5);
        let h = Rir { taps: vec![1.0], sample_rate_hz: 16000 };
        assert_eq!(apply_echo_path(&y, &h).unwrap(), y);
    }

    #[test]
    fn delayed_half_impulse_shifts_and_scales() {
        let y = noise(300, 2, 0.5);
        let mut taps = vec![0.0; 101];
        taps[100] = 0.5;
        let out = apply_echo_path(&y, &Rir { taps, sample_rate_hz: 16000 }).unwrap();
        assert_eq!(out.len(), 400);
        assert!(out.samples()[..100].iter().all(|&v| v == 0.0));
        for (a, b) in out.samples()[100..].iter().zip(y.samples()) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn echo_rate_mismatch_is_error() {
        let y = noise(10, 3, 0.5);
        let h = Rir { taps: vec![1.0], sample_rate_hz: 8000 };
        assert!(matches!(apply_echo_path(&y, &h), Err(Error::SampleRateMismatch { .. })));
    }

    #[test]
    fn padding() {
        let a = noise(100, 4, 0.5);
        let b = noise(150, 5, 0.5);
        let (pa, pb) = pad_to_equal_length(&a, &b).unwrap();
        assert_eq!((pa.len(), pb.len()), (150, 150));
        assert!(pa.samples()[100..].iter().all(|&v| v == 0.0));
        assert_eq!(pb, b);
        let (qa, qb) = pad_to_equal_length(&a, &a).unwrap();
        assert_eq!((qa, qb), (a.clone(), a));
    }

    #[test]
    fn gain_examples() {
        let z = wave(vec![0.1, -0.2, 0.3]);
        let m = mix_at_snr(&z, &z, 0.0).unwrap();
        assert!((m.gain - 1.0).abs() < 1e-12);
        let e = z.scaled(2.0);
        let m = mix_at_snr(&z, &e, 0.0).unwrap();
        assert!((m.gain - 0.5).abs() < 1e-12);
    }

    #[test]
    fn padded_mix_preserves_longer_prefix() {
        let z = noise(50, 6, 0.1);
        let mut e = noise(80, 7, 0.1).into_samples();
        e[..50].iter_mut().for_each(|v| *v = 0.0);
        let e = wave(e);
        let m = mix_at_snr(&z, &e, 0.0).unwrap();
        assert_eq!(&m.mixture.samples()[..50], z.samples());
    }

    #[test]
    fn zero_energy_rejected() {
        let z = noise(10, 8, 0.1);
        assert!(matches!(mix_at_snr(&z, &Waveform::silence(10, 16000), 0.0), Err(Error::ZeroEnergy(_))));
        assert!(matches!(mix_at_snr(&Waveform::silence(10, 16000), &z, 0.0), Err(Error::ZeroEnergy(_))));
    }

    #[test]
    fn peak_normalization_keeps_reconstruction() {
        let z = noise(200, 9, 0.9);
        let e = noise(250, 10, 0.9);
        let m = mix_at_snr(&z, &e, 0.0).unwrap();
        assert!(m.peak_scale < 1.0);
        assert!(m.mixture.peak() <= 1.0 + 1e-12);
        for ((x, c), y) in m.mixture.samples().iter().zip(m.clean.samples()).zip(m.echo.samples()) {
            assert!((x - m.gain * y - c).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_transcript_is_reported_not_fatal() {
        let u = |id: &str, text: &str, seed| Utterance {
            id: id.into(),
            text: text.into(),
            speaker: String::new(),
            waveform: noise(400, seed, 0.3),
        };
        let clean: Vec<_> = (0..6).map(|i| u(&format!("c{i}"), "hello", i)).collect();
        let playback = vec![u("p0", "", 90), u("p1", "today is sunny", 91)];
        let rooms = RoomDistribution { pool_size: 2, max_order: 1, ..Default::default() };
        let build = build_dataset(&clean, &playback, &rooms, 3, 0.0).unwrap();
        assert_eq!(build.records.len() + build.failures.len(), 6);
        assert!(!build.failures.is_empty());
        assert!(build.failures.iter().all(|f| f.reason.contains("no transcript")));
    }
}
