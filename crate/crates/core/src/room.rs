//! Shoebox image-source room impulse responses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Waveform, DEFAULT_SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomConfig {
    /// (length, width, height) in metres.
    pub dimensions_m: [f64; 3],
    pub source_pos_m: [f64; 3],
    pub mic_pos_m: [f64; 3],
    /// Wall absorption coefficient in (0, 1]; each reflection keeps `1 - absorption`.
    pub absorption: f64,
    pub max_order: usize,
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound_mps: f64,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: u32,
}

fn default_speed_of_sound() -> f64 {
    343.0
}

fn default_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}

impl RoomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions_m.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "degenerate room dimensions {:?}",
                self.dimensions_m
            )));
        }
        for (label, p) in [("source", &self.source_pos_m), ("microphone", &self.mic_pos_m)] {
            let inside = p.iter().zip(&self.dimensions_m).all(|(&c, &d)| c > 0.0 && c < d);
            if !inside {
                return Err(Error::InvalidConfig(format!("{label} position {p:?} is not strictly inside the room")));
            }
        }
        if !(self.absorption > 0.0 && self.absorption <= 1.0) {
            return Err(Error::InvalidConfig("absorption must lie in (0, 1]".into()));
        }
        if !(self.speed_of_sound_mps > 0.0) || self.sample_rate_hz == 0 {
            return Err(Error::InvalidConfig("speed of sound and sample rate must be positive".into()));
        }
        Ok(())
    }

    pub fn direct_distance(&self) -> f64 {
        distance(&self.source_pos_m, &self.mic_pos_m)
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Finite impulse response of the loudspeaker-to-microphone path.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Rir {
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    pub fn first_nonzero(&self) -> Option<usize> {
        self.taps.iter().position(|&t| t != 0.0)
    }

    pub fn from_waveform(w: &Waveform) -> Result<Self> {
        let rir = Self { taps: w.samples().to_vec(), sample_rate_hz: w.sample_rate() };
        if !(rir.energy() > 0.0) {
            return Err(Error::ZeroEnergy("impulse response"));
        }
        Ok(rir)
    }

    pub fn to_waveform(&self) -> Waveform {
        Waveform::silence(0, self.sample_rate_hz).with_samples(self.taps.clone())
    }
}

/// One mirror image of the source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: [f64; 3],
    pub reflections: usize,
}

/// Enumerates image sources with at most `max_order` wall reflections.
///
/// Along each axis an image is `(1 - 2q) * s + 2 n L` for `q in {0, 1}`,
/// reflecting `|n - q| + |n|` times.
pub fn image_sources(cfg: &RoomConfig) -> Vec<ImageSource> {
    let order = cfg.max_order as i64;
    let axis_images = |axis: usize| -> Vec<(f64, usize)> {
        let (s, len) = (cfg.source_pos_m[axis], cfg.dimensions_m[axis]);
        let mut out = Vec::new();
        for n in -order..=order {
            for q in 0..=1i64 {
                let refl = ((n - q).abs() + n.abs()) as usize;
                if refl <= cfg.max_order {
                    out.push(((1 - 2 * q) as f64 * s + 2.0 * n as f64 * len, refl));
                }
            }
        }
        out
    };
    let (xs, ys, zs) = (axis_images(0), axis_images(1), axis_images(2));
    let mut images = Vec::new();
    for &(x, rx) in &xs {
        for &(y, ry) in &ys {
            for &(z, rz) in &zs {
                let reflections = rx + ry + rz;
                if reflections <= cfg.max_order {
                    images.push(ImageSource { position: [x, y, z], reflections });
                }
            }
        }
    }
    images
}

/// Image-source RIR: each image contributes `(1 / d) * (1 - absorption)^reflections`
/// at delay `round(d / c * fs)`.
pub fn generate_rir(cfg: &RoomConfig) -> Result<Rir> {
    cfg.validate()?;
    let keep = 1.0 - cfg.absorption;
    let fs = cfg.sample_rate_hz as f64;
    let mut contributions = Vec::new();
    for img in image_sources(cfg) {
        let gain = if img.reflections == 0 { 1.0 } else { keep.powi(img.reflections as i32) };
        if gain == 0.0 {
            continue;
        }
        let d = distance(&img.position, &cfg.mic_pos_m);
        let delay = (d / cfg.speed_of_sound_mps * fs).round() as usize;
        contributions.push((delay, gain / d));
    }
    let len = contributions.iter().map(|&(d, _)| d + 1).max().unwrap_or(1);
    let mut taps = vec![0.0; len];
    for (delay, amp) in contributions {
        taps[delay] += amp;
    }
    Ok(Rir { taps, sample_rate_hz: cfg.sample_rate_hz })
}

/// Ranges from which rooms for a dataset are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoomDistribution {
    pub length_m: [f64; 2],
    pub width_m: [f64; 2],
    pub height_m: [f64; 2],
    pub absorption: [f64; 2],
    pub max_order: usize,
    /// Minimum distance of source and microphone from any wall.
    pub wall_margin_m: f64,
    /// Number of simulated RIRs in the pool records draw from.
    pub pool_size: usize,
    /// Optional measured RIRs (16-bit mono WAV), appended to the pool.
    pub rir_files: Vec<std::path::PathBuf>,
    pub speed_of_sound_mps: f64,
    pub sample_rate_hz: u32,
}

impl Default for RoomDistribution {
    fn default() -> Self {
        Self {
            length_m: [3.0, 8.0],
            width_m: [3.0, 6.0],
            height_m: [2.5, 3.5],
            absorption: [0.3, 0.8],
            max_order: 4,
            wall_margin_m: 0.5,
            pool_size: 16,
            rir_files: Vec::new(),
            speed_of_sound_mps: 343.0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl RoomDistribution {
    pub fn sample(&self, rng: &mut impl Rng) -> Result<RoomConfig> {
        let draw = |rng: &mut dyn rand::RngCore, [lo, hi]: [f64; 2]| -> f64 {
            if hi > lo {
                rng.gen_range(lo..hi)
            } else {
                lo
            }
        };
        let dims = [draw(rng, self.length_m), draw(rng, self.width_m), draw(rng, self.height_m)];
        let margin = self.wall_margin_m;
        if dims.iter().any(|&d| d <= 2.0 * margin) {
            return Err(Error::InvalidConfig("room too small for the wall margin".into()));
        }
        let mut pos = || -> [f64; 3] {
            let mut p = [0.0; 3];
            for (c, &d) in p.iter_mut().zip(&dims) {
                *c = draw(rng, [margin, d - margin]);
            }
            p
        };
        let source_pos_m = pos();
        let mic_pos_m = pos();
        let absorption = draw(rng, self.absorption).clamp(f64::MIN_POSITIVE, 1.0);
        let cfg = RoomConfig {
            dimensions_m: dims,
            source_pos_m,
            mic_pos_m,
            absorption,
            max_order: self.max_order,
            speed_of_sound_mps: self.speed_of_sound_mps,
            sample_rate_hz: self.sample_rate_hz,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
