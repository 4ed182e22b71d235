//! Bundled miniature corpus.
//!
//! Utterances are rendered from their transcripts by a small formant
//! synthesizer, so the corpus ships as text plus a deterministic renderer.
//! Two roles mirror the data layout of the echo-cancellation experiments:
//! user queries (several speakers, disjoint between train and test) and TTS
//! playback (one fixed voice shared by both splits).

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phonemes::{self, PhonemeSequence};
use crate::signal::{Waveform, DEFAULT_SAMPLE_RATE};
use crate::wav;

/// Speaker parameters for the formant synthesizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Voice {
    pub name: String,
    pub f0_hz: f64,
    pub formant_scale: f64,
    /// Multiplier on nominal phone durations.
    pub tempo: f64,
    pub seed: u64,
}

impl Voice {
    pub fn tts() -> Self {
        Self { name: "tts".into(), f0_hz: 205.0, formant_scale: 1.12, tempo: 0.9, seed: 7 }
    }
}

#[derive(Clone, Copy)]
enum Class {
    Vowel([f64; 3]),
    Diphthong([f64; 3], [f64; 3]),
    Sonorant([f64; 3]),
    Fricative { center: f64, voiced: bool },
    Stop { center: f64, voiced: bool },
    Pause,
}

fn class_of(sym: &str) -> Class {
    use Class::*;
    match sym {
        "AA" => Vowel([730.0, 1090.0, 2440.0]),
        "AE" => Vowel([660.0, 1720.0, 2410.0]),
        "AH" => Vowel([640.0, 1190.0, 2390.0]),
        "AO" => Vowel([570.0, 840.0, 2410.0]),
        "EH" => Vowel([530.0, 1840.0, 2480.0]),
        "ER" => Vowel([490.0, 1350.0, 1690.0]),
        "IH" => Vowel([390.0, 1990.0, 2550.0]),
        "IY" => Vowel([270.0, 2290.0, 3010.0]),
        "UH" => Vowel([440.0, 1020.0, 2240.0]),
        "UW" => Vowel([300.0, 870.0, 2240.0]),
        "AW" => Diphthong([730.0, 1090.0, 2440.0], [440.0, 1020.0, 2240.0]),
        "AY" => Diphthong([730.0, 1090.0, 2440.0], [390.0, 1990.0, 2550.0]),
        "EY" => Diphthong([530.0, 1840.0, 2480.0], [270.0, 2290.0, 3010.0]),
        "OW" => Diphthong([570.0, 840.0, 2410.0], [440.0, 1020.0, 2240.0]),
        "OY" => Diphthong([570.0, 840.0, 2410.0], [270.0, 2290.0, 3010.0]),
        "M" => Sonorant([280.0, 1000.0, 2200.0]),
        "N" => Sonorant([280.0, 1600.0, 2500.0]),
        "NG" => Sonorant([280.0, 2000.0, 2600.0]),
        "L" => Sonorant([360.0, 1200.0, 2800.0]),
        "R" => Sonorant([420.0, 1300.0, 1600.0]),
        "W" => Sonorant([300.0, 700.0, 2200.0]),
        "Y" => Sonorant([280.0, 2200.0, 2900.0]),
        "S" => Fricative { center: 5500.0, voiced: false },
        "Z" => Fricative { center: 5000.0, voiced: true },
        "SH" => Fricative { center: 2800.0, voiced: false },
        "ZH" => Fricative { center: 2600.0, voiced: true },
        "F" => Fricative { center: 4500.0, voiced: false },
        "V" => Fricative { center: 4000.0, voiced: true },
        "TH" => Fricative { center: 4800.0, voiced: false },
        "DH" => Fricative { center: 4200.0, voiced: true },
        "HH" => Fricative { center: 1500.0, voiced: false },
        "P" => Stop { center: 900.0, voiced: false },
        "B" => Stop { center: 800.0, voiced: true },
        "T" => Stop { center: 4000.0, voiced: false },
        "D" => Stop { center: 3500.0, voiced: true },
        "K" => Stop { center: 2000.0, voiced: false },
        "G" => Stop { center: 1800.0, voiced: true },
        "CH" => Stop { center: 3000.0, voiced: false },
        "JH" => Stop { center: 2800.0, voiced: true },
        "_" => Pause,
        // Letter fallback tokens: a neutral vowel nudged by the letter.
        other => {
            let k = other.bytes().next().unwrap_or(b'a') as f64 - b'a' as f64;
            Vowel([450.0 + 12.0 * k, 1200.0 + 40.0 * k, 2500.0])
        }
    }
}

fn nominal_duration_s(c: Class) -> f64 {
    match c {
        Class::Vowel(_) => 0.11,
        Class::Diphthong(..) => 0.15,
        Class::Sonorant(_) => 0.07,
        Class::Fricative { .. } => 0.09,
        Class::Stop { .. } => 0.07,
        Class::Pause => 0.06,
    }
}

fn resonance(f: f64, formants: &[f64; 3]) -> f64 {
    const BW: [f64; 3] = [90.0, 110.0, 170.0];
    const GAIN: [f64; 3] = [1.0, 0.6, 0.3];
    formants
        .iter()
        .zip(BW.iter().zip(GAIN))
        .map(|(&fc, (&bw, g))| g / (1.0 + ((f - fc) / bw).powi(2)))
        .sum()
}

/// Two-pole resonator applied to white noise for frication.
struct Resonator {
    a1: f64,
    a2: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(center: f64, bandwidth: f64, fs: f64) -> Self {
        let r = (-PI * bandwidth / fs).exp();
        Self { a1: 2.0 * r * (2.0 * PI * center / fs).cos(), a2: -r * r, y1: 0.0, y2: 0.0 }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Renders a phone sequence with the given voice. Leading and trailing
/// pauses of 80 ms frame the utterance.
pub fn synthesize(phones: &PhonemeSequence, voice: &Voice, sample_rate: u32) -> Waveform {
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(voice.seed ^ phones.ids().iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
    }));
    let edge = (0.08 * fs) as usize;
    let mut out = vec![0.0; edge];
    let mut phase = 0.0f64;
    let total_phones = phones.len().max(1) as f64;
    let nyquist = fs / 2.0;

    for (idx, &id) in phones.ids().iter().enumerate() {
        let class = class_of(phonemes::symbol(id).unwrap_or("_"));
        let n = (nominal_duration_s(class) * voice.tempo * fs) as usize;
        let ramp = (0.01 * fs) as usize;
        let mut noise = match class {
            Class::Fricative { center, .. } | Class::Stop { center, .. } => {
                Some(Resonator::new((center * voice.formant_scale).min(nyquist * 0.9), 900.0, fs))
            }
            _ => None,
        };
        for i in 0..n {
            let progress = i as f64 / n as f64;
            // Slow declination plus a little vibrato keeps f0 speech-like.
            let f0 = voice.f0_hz
                * (1.08 - 0.16 * (idx as f64 + progress) / total_phones)
                * (1.0 + 0.01 * (2.0 * PI * 5.0 * out.len() as f64 / fs).sin());
            phase += 2.0 * PI * f0 / fs;
            let env = (i.min(n - 1 - i) as f64 / ramp as f64).min(1.0);
            let voiced = |formants: [f64; 3], amp: f64, phase: f64| -> f64 {
                let scaled = formants.map(|f| f * voice.formant_scale);
                let mut acc = 0.0;
                let mut k = 1.0;
                while k * f0 < nyquist.min(4500.0) {
                    acc += resonance(k * f0, &scaled) * (k * phase).sin() / k.sqrt();
                    k += 1.0;
                }
                amp * acc
            };
            let sample = match class {
                Class::Vowel(f) => voiced(f, 0.09, phase),
                Class::Diphthong(a, b) => {
                    let f = [0, 1, 2].map(|j| a[j] + (b[j] - a[j]) * progress);
                    voiced(f, 0.09, phase)
                }
                Class::Sonorant(f) => voiced(f, 0.05, phase),
                Class::Fricative { voiced: v, .. } => {
                    let hiss = noise.as_mut().map_or(0.0, |r| r.step(rng.gen_range(-1.0..1.0))) * 0.02;
                    hiss + if v { voiced([300.0, 1500.0, 2500.0], 0.02, phase) } else { 0.0 }
                }
                Class::Stop { voiced: v, .. } => {
                    let burst_start = n * 3 / 5;
                    if i >= burst_start {
                        noise.as_mut().map_or(0.0, |r| r.step(rng.gen_range(-1.0..1.0))) * 0.03
                    } else if v {
                        voiced([250.0, 900.0, 2400.0], 0.015, phase)
                    } else {
                        0.0
                    }
                }
                Class::Pause => 0.0,
            };
            out.push(sample * env);
        }
    }
    out.extend(std::iter::repeat_n(0.0, edge));
    // Faint breath noise so silent stretches are not digitally zero.
    for s in out.iter_mut() {
        *s += rng.gen_range(-1.0..1.0) * 2e-4;
    }
    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let g = 0.6 / peak;
        out.iter_mut().for_each(|s| *s *= g);
    }
    Waveform::new(out, sample_rate).expect("synthesized samples are finite")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Clean,
    Playback,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Clean => "clean",
            Role::Playback => "playback",
        }
    }
}

/// Line of a source-utterance manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub text: String,
    #[serde(default)]
    pub speaker: String,
}

/// A source utterance with audio loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub speaker: String,
    pub waveform: Waveform,
}

struct Script {
    role: Role,
    split: Split,
    voice: usize,
    text: &'static str,
}

const USER_VOICES: [(&str, f64, f64, f64); 4] = [
    ("user_a", 112.0, 1.0, 1.0),
    ("user_b", 150.0, 1.05, 1.05),
    ("user_c", 128.0, 0.97, 0.95),
    ("user_d", 175.0, 1.08, 1.0),
];

const TTS_VOICE: usize = usize::MAX;

const SCRIPT: &[Script] = &[
    Script { role: Role::Clean, split: Split::Train, voice: 0, text: "what about tomorrow" },
    Script { role: Role::Clean, split: Split::Train, voice: 1, text: "turn off the lights" },
    Script { role: Role::Clean, split: Split::Train, voice: 0, text: "play some music" },
    Script { role: Role::Clean, split: Split::Train, voice: 1, text: "call my mother" },
    Script { role: Role::Clean, split: Split::Test, voice: 2, text: "what's the weather today" },
    Script { role: Role::Clean, split: Split::Test, voice: 3, text: "how far is the moon" },
    Script { role: Role::Clean, split: Split::Test, voice: 2, text: "set a timer for ten minutes" },
    Script { role: Role::Playback, split: Split::Train, voice: TTS_VOICE, text: "today is sunny" },
    Script { role: Role::Playback, split: Split::Train, voice: TTS_VOICE, text: "it will rain" },
    Script { role: Role::Playback, split: Split::Train, voice: TTS_VOICE, text: "sure here is some music" },
    Script { role: Role::Playback, split: Split::Test, voice: TTS_VOICE, text: "it will rain tomorrow afternoon" },
    Script {
        role: Role::Playback,
        split: Split::Test,
        voice: TTS_VOICE,
        text: "the moon is about three hundred eighty thousand kilometers away from the earth",
    },
    Script {
        role: Role::Playback,
        split: Split::Test,
        voice: TTS_VOICE,
        text: "here is a playlist you might enjoy while you work in the living room this morning",
    },
];

fn voice_for(idx: usize) -> Voice {
    if idx == TTS_VOICE {
        return Voice::tts();
    }
    let (name, f0, scale, tempo) = USER_VOICES[idx];
    Voice { name: name.into(), f0_hz: f0, formant_scale: scale, tempo, seed: 100 + idx as u64 }
}

/// The bundled corpus rendered in memory, as `(role, split, utterance)`.
pub fn bundled_corpus() -> Vec<(Role, Split, Utterance)> {
    let mut counters = std::collections::HashMap::new();
    SCRIPT
        .iter()
        .map(|s| {
            let n = counters.entry((s.role, s.split)).or_insert(0usize);
            let id = format!("{}_{}_{:02}", s.split.as_str(), s.role.as_str(), *n);
            *n += 1;
            let voice = voice_for(s.voice);
            let waveform = synthesize(&PhonemeSequence::from_text(s.text), &voice, DEFAULT_SAMPLE_RATE);
            (s.role, s.split, Utterance { id, text: s.text.to_string(), speaker: voice.name, waveform })
        })
        .collect()
}

pub fn manifest_path(root: &Path, split: Split, role: Role) -> PathBuf {
    root.join(split.as_str()).join(format!("{}.jsonl", role.as_str()))
}

/// Writes the bundled corpus as `<root>/<split>/<role>.jsonl` plus WAV files.
pub fn write_bundled_corpus(root: &Path) -> Result<()> {
    let corpus = bundled_corpus();
    for split in [Split::Train, Split::Test] {
        for role in [Role::Clean, Role::Playback] {
            let dir = root.join(split.as_str());
            fs::create_dir_all(dir.join(role.as_str()))?;
            let mut lines = String::new();
            for (_, _, u) in corpus.iter().filter(|(r, s, _)| *r == role && *s == split) {
                let rel = format!("{}/{}.wav", role.as_str(), u.id);
                wav::write_wav(dir.join(&rel), &u.waveform)?;
                let entry = SourceEntry { id: u.id.clone(), path: rel, text: u.text.clone(), speaker: u.speaker.clone() };
                lines.push_str(&serde_json::to_string(&entry)?);
                lines.push('\n');
            }
            fs::write(manifest_path(root, split, role), lines)?;
        }
    }
    Ok(())
}

pub fn read_source_manifest(path: &Path) -> Result<Vec<SourceEntry>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Loads every entry of a source manifest, resolving paths against its directory.
pub fn load_utterances(manifest: &Path) -> Result<Vec<Utterance>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    read_source_manifest(manifest)?
        .into_iter()
        .map(|e| {
            let waveform = wav::read_wav(base.join(&e.path))?;
            Ok(Utterance { id: e.id, text: e.text, speaker: e.speaker, waveform })
        })
        .collect()
}
