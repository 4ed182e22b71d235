#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tec_grad::Tensor;
use tec_model::{Example, Mode, ModelConfig, SideInput};

pub fn random(shape: &[usize], seed: u64, scale: f64) -> Tensor {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.gen_range(-scale..scale)).collect()).unwrap()
}

/// Smooth target with a louder interferer added on top.
pub fn example(mode: Mode, t: usize, mel: usize, seed: u64) -> Example {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let phase: f64 = r.gen_range(0.0..6.0);
    let target: Vec<f64> =
        (0..t * mel).map(|i| ((i / mel) as f64 * 0.4 + (i % mel) as f64 * 0.7 + phase).sin()).collect();
    let echo = random(&[t, mel], seed + 1, 1.0);
    let mixture: Vec<f64> = target.iter().zip(echo.data()).map(|(a, b)| a + b).collect();
    let side = match mode {
        Mode::Tec => SideInput::Text((0..5).map(|_| r.gen_range(1..30)).collect()),
        Mode::Vanilla => SideInput::None,
        Mode::AecSeq2seq => SideInput::Playback(echo.clone()),
    };
    Example {
        mixture: Tensor::matrix(t, mel, mixture).unwrap(),
        side,
        target: Tensor::matrix(t, mel, target).unwrap(),
    }
}

pub fn micro(mode: Mode) -> ModelConfig {
    ModelConfig::micro().with_mode(mode)
}
