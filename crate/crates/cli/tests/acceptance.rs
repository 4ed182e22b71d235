//! The ten acceptance criteria, each checked at its stated tolerance and
//! time limit. One PASS/FAIL line per criterion goes straight to stdout, so
//! it shows even when the harness captures test output.
//!
//! `TEC_ACCEPTANCE=3,7` runs a subset.

use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tec_cli::demo::{model_mcd, training_set, DemoOptions};
use tec_cli::pipeline::{self, FeatureNorm, TrainSettings};
use tec_core::corpus::{load_utterances, manifest_path, write_bundled_corpus, Role, Split, Utterance};
use tec_core::metrics::{mcd_from_mfcc, side_input_size};
use tec_core::nlms::{nlms_cancel, NlmsConfig};
use tec_core::room::RoomDistribution;
use tec_core::synth::{build_dataset, MixtureRecord};
use tec_core::{Matrix, Method, MfccMatrix, PhonemeSequence, Waveform};
use tec_grad::gradcheck::{check_gradients, GradCheckConfig, GradCheckReport, Stencil};
use tec_grad::nn::{BatchNorm, BiConvLstm, BiLstm, Conv1d, Conv2d, Dense, Embedding, Lstm};
use tec_grad::{Graph, ParamSpec, ParamStore, Tensor, Var};
use tec_model::attention::GmmAttention;
use tec_model::decoder::Postnet;
use tec_model::{flops_estimate, variant_factory, Example, Mode, ModelConfig, SideInput};

type Outcome = Result<String, Box<dyn std::error::Error>>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+).into());
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.gen_range(lo..hi)).collect()).unwrap()
}

// 1 ------------------------------------------------------------------------

fn noise_utterance(id: String, text: &str, len: usize, amp: f64, seed: u64) -> Utterance {
    let mut r = rng(seed);
    let s = (0..len).map(|_| r.gen_range(-amp..amp)).collect();
    Utterance { id, text: text.into(), speaker: "s".into(), waveform: Waveform::new(s, 16000).unwrap() }
}

fn reconstruction() -> Outcome {
    let texts = ["play some music", "what about tomorrow", "call my mother", "turn the lights off"];
    let mut r = rng(1);
    let clean: Vec<Utterance> = (0..100)
        .map(|i| noise_utterance(format!("c{i:03}"), texts[i % 4], r.gen_range(2000..6000), 0.1, 100 + i as u64))
        .collect();
    let playback: Vec<Utterance> = (0..5)
        .map(|i| noise_utterance(format!("p{i}"), texts[(i + 1) % 4], r.gen_range(1500..7000), 0.1, 900 + i as u64))
        .collect();
    let rooms = RoomDistribution { pool_size: 8, ..Default::default() };
    let build = build_dataset(&clean, &playback, &rooms, 1234, 0.0)?;
    ensure!(build.failures.is_empty() && build.records.len() == 100, "{} records, {} failures", build.records.len(), build.failures.len());
    let (mut worst, mut loudest) = (0.0f64, 0.0f64);
    for rec in &build.records {
        let taps = &build.rirs.iter().find(|(id, _)| *id == rec.rir_id).ok_or("unknown rir")?.1.taps;
        let y = rec.playback.samples();
        let mut echo = vec![0.0; y.len() + taps.len() - 1];
        for (k, &h) in taps.iter().enumerate().filter(|(_, h)| **h != 0.0) {
            for (n, &v) in y.iter().enumerate() {
                echo[n + k] += h * v;
            }
        }
        let z = clean.iter().find(|u| u.id == rec.clean_id).ok_or("unknown clean id")?.waveform.samples();
        let x = rec.mix.mixture.samples();
        ensure!(x.len() >= z.len(), "{}: mixture shorter than clean", rec.id);
        for (n, &xn) in x.iter().enumerate() {
            let padded = z.get(n).copied().unwrap_or(0.0);
            let e = echo.get(n).copied().unwrap_or(0.0);
            worst = worst.max((xn - rec.mix.gain * e - padded).abs());
            loudest = loudest.max((rec.mix.gain * e).abs());
        }
    }
    ensure!(worst <= 1e-6, "max |x - g*e - z| = {worst:e}");
    ensure!(loudest > 1e-2, "echo is negligible ({loudest:e})");
    Ok(format!("100 records, max residual {worst:.1e}, peak scaled echo {loudest:.3}"))
}

// 2 ------------------------------------------------------------------------

/// Cheapest monotone path, every path enumerated.
fn all_paths(a: &Matrix, b: &Matrix, i: usize, j: usize) -> f64 {
    let d = a.row(i).iter().zip(b.row(j)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    if i == 0 && j == 0 {
        return d;
    }
    let mut best = f64::INFINITY;
    if i > 0 {
        best = best.min(all_paths(a, b, i - 1, j));
    }
    if j > 0 {
        best = best.min(all_paths(a, b, i, j - 1));
    }
    if i > 0 && j > 0 {
        best = best.min(all_paths(a, b, i - 1, j - 1));
    }
    d + best
}

fn mcd_literal() -> Outcome {
    let scale = 10.0 / 10f64.ln() * 2f64.sqrt();
    let a = Matrix::new(4, 13, vec![0.3; 52])?;
    let mut b = a.clone();
    b.row_mut(2)[5] += 1.0;
    let single = mcd_from_mfcc(&MfccMatrix::new(a), &MfccMatrix::new(b))?.total_db;
    ensure!((single - scale).abs() < 1e-6, "single deviation {single} vs {scale}");
    ensure!((single - 6.1418).abs() < 1e-4, "{single}");
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (n, m) = (r.gen_range(1..=6), r.gen_range(1..=6));
        let a = Matrix::new(n, 13, (0..n * 13).map(|_| r.gen_range(-3.0..3.0)).collect())?;
        let b = Matrix::new(m, 13, (0..m * 13).map(|_| r.gen_range(-3.0..3.0)).collect())?;
        let oracle = scale * all_paths(&a, &b, n - 1, m - 1);
        let got = mcd_from_mfcc(&MfccMatrix::new(a), &MfccMatrix::new(b))?.total_db;
        worst = worst.max((got - oracle).abs() / oracle.max(1.0));
    }
    ensure!(worst < 1e-9, "worst relative gap to the path oracle {worst:e}");
    Ok(format!("single deviation {single:.7} dB; 50 pairs, max rel gap {worst:.1e}"))
}

// 3 ------------------------------------------------------------------------

fn lstm_params(input: u64, units: u64) -> u64 {
    4 * units * (input + units + 1)
}

fn audio_params(c: &ModelConfig) -> u64 {
    let a = &c.audio_enc;
    let (ch, u, h) = (a.conv_channels as u64, a.clstm_units as u64, a.bilstm_units as u64);
    let f = (c.decoder.mel_dim as u64).div_ceil(4);
    let convs = 9 * ch + ch + 2 * ch + 9 * ch * ch + ch + 2 * ch;
    let clstm = 2 * (4 * u * (ch + u) * a.clstm_kernel as u64 + 4 * u) + 2 * 2 * f * u;
    let lstms: u64 = (0..a.bilstm_layers)
        .map(|i| {
            let input = if i == 0 { 2 * f * u } else { 2 * h };
            2 * lstm_params(input, h) + 2 * 2 * h
        })
        .sum();
    convs + clstm + lstms
}

fn text_params(c: &ModelConfig) -> u64 {
    let t = &c.text_enc;
    let (e, ch, k, h) = (t.embedding_dim as u64, t.conv_channels as u64, t.conv_kernel as u64, t.bilstm_units as u64);
    let convs: u64 = (0..t.conv_layers).map(|i| k * if i == 0 { e } else { ch } * ch + ch + 2 * ch).sum();
    t.vocab_size as u64 * e + convs + 2 * lstm_params(ch, h) + 2 * 2 * h
}

fn decoder_params(c: &ModelConfig) -> u64 {
    let d = &c.decoder;
    let (m, p, l, x) = (d.mel_dim as u64, d.prenet_units as u64, d.lstm_units as u64, c.attention.context_dim as u64);
    let (ch, k) = (d.postnet_channels as u64, d.postnet_kernel as u64);
    let prenet = m * p + p + p * p + p;
    let lstms = lstm_params(p + x, l) + lstm_params(l, l);
    let heads = (l + x) * m + m + (l + x) * 2 + 2;
    let postnet = (k * m * ch + 3 * ch) + 3 * (k * ch * ch + 3 * ch) + (k * ch * m + 3 * m);
    prenet + lstms + heads + postnet
}

fn flops_oracle(c: &ModelConfig, tx: u64, ty: u64, tz: u64) -> u64 {
    let x = c.attention.context_dim as u64;
    let per_source = |t: u64| c.encoder_dim() as u64 * x * t + (c.decoder.prenet_units as u64 + x) * 3 * c.attention.components as u64 * tz;
    let (side, atten) = match c.mode {
        Mode::Tec => (text_params(c), per_source(tx) + per_source(ty)),
        Mode::Vanilla => (0, per_source(tx)),
        Mode::AecSeq2seq => (audio_params(c), per_source(tx) + per_source(ty)),
    };
    audio_params(c) * tx + side * ty + decoder_params(c) * tz + atten
}

fn flops() -> Outcome {
    let mut wide = ModelConfig::toy();
    wide.attention.components = 4;
    wide.decoder.mel_dim = 20;
    wide.text_enc.conv_kernel = 3;
    let mut deep = ModelConfig::micro();
    deep.audio_enc.bilstm_layers = 1;
    deep.text_enc.conv_layers = 2;
    let configs = [("full size", ModelConfig::default()), ("toy", ModelConfig::toy()), ("toy wide", wide), ("micro shallow", deep)];
    let mut n = 0;
    for (label, base) in &configs {
        for mode in Mode::ALL {
            let c = base.clone().with_mode(mode);
            for (tx, ty, tz) in [(100, 20, 100), (523, 41, 498), (4, 1, 1)] {
                let got = flops_estimate(&c, tx, ty, tz)?.total;
                let want = flops_oracle(&c, tx, ty, tz);
                ensure!(got == want, "{label} {mode} ({tx},{ty},{tz}): {got} vs oracle {want}");
                n += 1;
            }
        }
    }
    let full = flops_estimate(&ModelConfig::default(), 100, 20, 100)?.total;
    Ok(format!("{n} exact matches; full-size config at (100, 20, 100): {full}"))
}

// 4 ------------------------------------------------------------------------

fn context_and_monotonicity() -> Outcome {
    let mut cfg = ModelConfig::micro();
    cfg.attention.components = 3;
    let model = variant_factory(Mode::Tec, &cfg)?;
    let mut runner = TestRunner::new(PropConfig { cases: 50, failure_persistence: None, ..PropConfig::default() });
    let steps = std::cell::Cell::new(0usize);
    let strategy = (any::<u64>(), 4usize..20, 1usize..12);
    let result = runner.run(&strategy, |(seed, t, text_len)| {
        let store = model.init_params(seed).unwrap();
        let mut r = rng(seed);
        let mixture = uniform(&[t, 8], seed ^ 1, -2.0, 2.0);
        let ids: Vec<usize> = (0..text_len).map(|_| r.gen_range(1..60)).collect();
        let mut g = Graph::inference(&store);
        let enc = model.encode(&mut g, &[(&mixture, &SideInput::Text(ids))]).unwrap().remove(0);
        let mut state = model.initial_state(&mut g);
        let mut last: Vec<Vec<f64>> = vec![vec![0.0; 3]; 2];
        for _ in 0..20 {
            let (out, mut next) = model.decoder_step(&mut g, &state, &enc).unwrap();
            let c = g.value(out.context).data();
            let (cx, cy) = (g.value(out.attention[0].context).data(), g.value(out.attention[1].context).data());
            for i in 0..c.len() {
                prop_assert_eq!(c[i] - (cx[i] + cy[i]), 0.0);
            }
            for (s, prev) in last.iter_mut().enumerate() {
                let k = g.value(out.attention[s].kappa).data().to_vec();
                for (now, before) in k.iter().zip(prev.iter()) {
                    prop_assert!(now >= before, "kappa fell from {} to {}", before, now);
                }
                *prev = k;
            }
            // Random previous frames drive the queries around.
            next.prev = g.constant(uniform(&[1, 8], r.gen(), -3.0, 3.0));
            state = next;
            steps.set(steps.get() + 1);
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    ensure!(steps.get() >= 1000, "only {} steps", steps.get());
    Ok(format!("{} decoder steps, c = c_x + c_y exactly, every kappa non-decreasing", steps.get()))
}

// 5 ------------------------------------------------------------------------

fn layer_store(inputs: &[(&str, Tensor)], specs: &[ParamSpec], seed: u64) -> ParamStore {
    let mut s = ParamStore::from_specs(specs, &mut rng(seed)).unwrap();
    for (n, t) in inputs {
        s.insert(n, t.clone()).unwrap();
    }
    let names: Vec<String> = s.trainable_names().map(str::to_string).collect();
    for (k, n) in names.iter().enumerate() {
        if n.ends_with("bias") || n.ends_with("beta") || n.ends_with("gamma") {
            let shape = s.get(n).unwrap().shape().to_vec();
            let lo = if n.ends_with("gamma") { 0.5 } else { -0.5 };
            s.set(n, uniform(&shape, seed + 50 + k as u64, lo, lo + 1.0)).unwrap();
        }
    }
    s
}

fn weighted(g: &mut Graph, y: Var) -> tec_grad::Result<Var> {
    let shape = g.shape(y).to_vec();
    let n: usize = shape.iter().product();
    let w = g.constant(Tensor::new(shape, (0..n).map(|i| ((i * 5 % 11) as f64 - 5.0) / 4.0).collect())?);
    let p = g.mul(y, w)?;
    g.sum(p)
}

fn lift<T>(r: tec_model::Result<T>) -> tec_grad::Result<T> {
    r.map_err(|e| tec_grad::Error::Invalid { op: "model", msg: e.to_string() })
}

struct Tally {
    checks: usize,
    entries: usize,
    skipped: usize,
    worst: f64,
}

impl Tally {
    fn add(&mut self, label: &str, r: GradCheckReport) -> Result<(), String> {
        self.checks += 1;
        self.entries += r.checked;
        self.skipped += r.skipped;
        self.worst = self.worst.max(r.max_rel_error);
        if !r.passed() {
            return Err(format!("{label}: {} failures, first {:?}", r.failures.len(), r.failures.first()));
        }
        if r.skipped * 20 >= r.checked {
            return Err(format!("{label}: {} of {} entries skipped at kinks", r.skipped, r.checked));
        }
        Ok(())
    }
}

fn layer(tally: &mut Tally, label: &str, store: &ParamStore, training: bool, f: impl Fn(&mut Graph) -> tec_grad::Result<Var>) -> Result<(), String> {
    let r = check_gradients(store, training, &GradCheckConfig::default(), f).map_err(|e| e.to_string())?;
    tally.add(label, r)
}

fn gradients() -> Outcome {
    let mut t = Tally { checks: 0, entries: 0, skipped: 0, worst: 0.0 };
    let x = |shape: &[usize], seed| uniform(shape, seed, -1.0, 1.0);

    let ops = layer_store(&[("a", x(&[3, 4], 1)), ("b", uniform(&[3, 4], 2, 0.5, 1.5)), ("m", x(&[4, 2], 3))], &[], 0);
    type Un = fn(&mut Graph, Var) -> tec_grad::Result<Var>;
    let unaries: [(&str, Un); 9] = [
        ("relu", |g, v| g.relu(v)),
        ("tanh", |g, v| g.tanh(v)),
        ("sigmoid", |g, v| g.sigmoid(v)),
        ("exp", |g, v| g.exp(v)),
        ("softplus", |g, v| g.softplus(v)),
        ("abs", |g, v| g.abs(v)),
        ("square", |g, v| g.square(v)),
        ("softmax", |g, v| g.softmax(v)),
        ("log_softmax", |g, v| g.log_softmax(v)),
    ];
    for (label, op) in unaries {
        layer(&mut t, label, &ops, true, |g| {
            let a = g.param("a")?;
            let y = op(g, a)?;
            weighted(g, y)
        })?;
    }
    layer(&mut t, "mul/div/matmul", &ops, true, |g| {
        let (a, b, m) = (g.param("a")?, g.param("b")?, g.param("m")?);
        let p = g.mul(a, b)?;
        let q = g.div(p, b)?;
        let q = g.add(q, p)?;
        let y = g.matmul(q, m)?;
        weighted(g, y)
    })?;

    let c1 = Conv1d { stride: 2, ..Conv1d::new("c1", 3, 4, 5) };
    let s = layer_store(&[("x", x(&[9, 3], 4))], &c1.specs(), 5);
    layer(&mut t, "conv1d", &s, true, |g| {
        let v = g.param("x")?;
        let y = c1.forward(g, v)?;
        weighted(g, y)
    })?;
    let c2 = Conv2d::new("c2", 2, 3, (3, 3), (2, 2));
    let s = layer_store(&[("x", x(&[7, 6, 2], 6))], &c2.specs(), 7);
    layer(&mut t, "conv2d", &s, true, |g| {
        let v = g.param("x")?;
        let y = c2.forward(g, v)?;
        weighted(g, y)
    })?;
    let lstm = Lstm::new("l", 3, 4);
    let s = layer_store(&[("x", x(&[5, 3], 8))], &lstm.specs(), 9);
    layer(&mut t, "lstm", &s, true, |g| {
        let v = g.param("x")?;
        let y = lstm.sequence(g, v, false)?;
        weighted(g, y)
    })?;
    let bi = BiLstm::new("b", 3, 3);
    let s = layer_store(&[("x", x(&[4, 3], 10))], &bi.specs(), 11);
    layer(&mut t, "bilstm", &s, true, |g| {
        let v = g.param("x")?;
        let y = bi.run(g, v)?;
        weighted(g, y)
    })?;
    let cl = BiConvLstm::new("cl", 2, 3, 3);
    let s = layer_store(&[("x", x(&[4, 5, 2], 12))], &cl.specs(), 13);
    layer(&mut t, "bi-clstm", &s, true, |g| {
        let v = g.param("x")?;
        let y = cl.run(g, v)?;
        weighted(g, y)
    })?;
    let bn = BatchNorm::new("bn", 3);
    let s = layer_store(&[("x", uniform(&[6, 3], 14, -2.0, 2.0))], &bn.specs(), 15);
    for training in [true, false] {
        layer(&mut t, "batch norm", &s, training, |g| {
            let v = g.param("x")?;
            let y = bn.forward(g, v)?;
            weighted(g, y)
        })?;
    }
    let (emb, dense) = (Embedding::new("e", 6, 3), Dense::new("d", 3, 2));
    let s = layer_store(&[], &[emb.specs(), dense.specs()].concat(), 16);
    layer(&mut t, "embedding+dense", &s, true, |g| {
        let e = emb.forward(g, &[5, 0, 5, 2])?;
        let y = dense.forward(g, e)?;
        weighted(g, y)
    })?;

    let att = GmmAttention::new("att", 5, 4, 3, 2, 1e-4);
    let mut s = layer_store(&[("q", x(&[3, 5], 17)), ("h", x(&[6, 4], 18))], &att.specs(), 19);
    att.init_bias(&mut s, 1.0, 0.8)?;
    layer(&mut t, "gmm attention", &s, true, |g| {
        let h = g.param("h")?;
        let src = lift(att.prepare(g, h))?;
        let mut st = att.initial_state(g);
        let q = g.param("q")?;
        let mut ctx = Vec::new();
        for i in 0..3 {
            let qi = g.slice(q, 0, i, i + 1)?;
            let (next, step) = lift(att.step(g, qi, &st, &src))?;
            ctx.push(step.context);
            st = next;
        }
        let c = g.concat(&ctx, 0)?;
        weighted(g, c)
    })?;

    let mut dcfg = ModelConfig::micro().decoder;
    dcfg.mel_dim = 3;
    dcfg.postnet_channels = 4;
    dcfg.postnet_kernel = 3;
    let post = Postnet::new("post", &dcfg);
    let s = layer_store(&[("z", x(&[5, 3], 20))], &post.specs(), 21);
    layer(&mut t, "postnet", &s, false, |g| {
        let z = g.param("z")?;
        let y = lift(post.forward(g, &[z]))?[0];
        weighted(g, y)
    })?;

    let model = variant_factory(Mode::Tec, &ModelConfig::micro())?;
    let mut store = model.init_params(11)?;
    let names: Vec<String> = store.trainable_names().map(str::to_string).collect();
    for (k, n) in names.iter().enumerate() {
        if !n.starts_with("attention") && (n.ends_with("bias") || n.ends_with("beta") || n.ends_with("gamma")) {
            let shape = store.get(n)?.shape().to_vec();
            let mut v = uniform(&shape, 700 + k as u64, -0.1, 0.1);
            if n.ends_with("gamma") {
                v.data_mut().iter_mut().for_each(|w| *w += 1.0);
            }
            store.set(n, v)?;
        }
    }
    let batch: Vec<Example> = [(9, 31), (7, 32)]
        .iter()
        .map(|&(frames, seed)| {
            let target = uniform(&[frames, 8], seed, -1.0, 1.0);
            let echo = uniform(&[frames, 8], seed + 100, -1.0, 1.0);
            let mix: Vec<f64> = target.data().iter().zip(echo.data()).map(|(a, b)| a + b).collect();
            Example { mixture: Tensor::matrix(frames, 8, mix).unwrap(), side: SideInput::Text(vec![3, 17, 9, 40, 22]), target }
        })
        .collect();
    let cfg = GradCheckConfig { stencil: Stencil::FivePoint, ..Default::default() };
    let full = check_gradients(&store, true, &cfg, |g| {
        Ok(lift(model.batch_loss(g, &batch))?.0)
    })?;
    let full_entries = full.checked;
    t.add("micro TEC loss", full)?;
    Ok(format!(
        "{} checks, {} entries ({} in the full TEC loss), {} skipped at kinks, max rel {:.1e}",
        t.checks, t.entries, full_entries, t.skipped, t.worst
    ))
}

// 6 ------------------------------------------------------------------------

fn nlms_erle() -> Outcome {
    let mut r = rng(6);
    let reference: Vec<f64> = (0..16000).map(|_| r.gen_range(-0.5..0.5)).collect();
    let path = [0.7, -0.35, 0.2, 0.12, -0.08, 0.05, 0.03, -0.02];
    let echo: Vec<f64> = (0..reference.len())
        .map(|n| path.iter().enumerate().take(n + 1).map(|(k, h)| h * reference[n - k]).sum())
        .collect();
    let out = nlms_cancel(&Waveform::new(echo.clone(), 16000)?, &Waveform::new(reference, 16000)?, &NlmsConfig::default())?;
    let q = 3 * echo.len() / 4..echo.len();
    let energy = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
    let erle = 10.0 * (energy(&echo[q.clone()]) / energy(&out.samples()[q])).log10();
    ensure!(erle >= 20.0, "ERLE {erle:.2} dB");
    Ok(format!("ERLE over the final quarter {erle:.1} dB"))
}

// 7 ------------------------------------------------------------------------

fn end_to_end() -> Outcome {
    let opts = DemoOptions::default();
    let set = training_set(&opts)?;
    ensure!(set.len() <= 10, "{} utterances", set.len());
    let norm = FeatureNorm::fit(set.iter().flat_map(|(_, p)| [p.mixture.values(), p.clean.values()]))?;
    let settings = TrainSettings { steps: 2000, ..TrainSettings::default() };
    let cfg = pipeline::default_model_config(Mode::Tec);
    let (mcd, losses) = model_mcd(&set, Mode::Tec, &cfg, &norm, &settings, &mut |_, _, _| {})?;
    let (at10, last) = (losses[10], *losses.last().ok_or("no losses")?);
    let mut rows = Vec::new();
    let mut ok = last <= 0.1 * at10;
    for ((_, p), m) in set.iter().zip(&mcd) {
        let mixture = pipeline::mcd(&p.mixture, &p.clean)?.per_frame_db;
        ok &= *m < mixture;
        rows.push(format!("{m:.2}<{mixture:.2}"));
    }
    let detail = format!(
        "{} utterances, loss {at10:.0} (step 10) -> {last:.0} ({:.1}%), MCD model<mixture dB: {}",
        set.len(),
        100.0 * last / at10,
        rows.join(" ")
    );
    ensure!(ok, "{detail}");
    Ok(detail)
}

// 8 ------------------------------------------------------------------------

fn side_input() -> Outcome {
    let dir = tempfile::tempdir()?;
    write_bundled_corpus(dir.path())?;
    let mut ratios = Vec::new();
    for split in [Split::Train, Split::Test] {
        let manifest = manifest_path(dir.path(), split, Role::Playback);
        let base = manifest.parent().ok_or("manifest without a directory")?;
        let entries = tec_core::corpus::read_source_manifest(&manifest)?;
        for (u, e) in load_utterances(&manifest)?.iter().zip(entries) {
            if (u.waveform.len() as f64) < 3.0 * u.waveform.sample_rate() as f64 {
                continue;
            }
            let rec = MixtureRecord {
                id: u.id.clone(),
                mixture_path: String::new(),
                clean_path: String::new(),
                playback_path: e.path.clone(),
                text: u.text.clone(),
                phonemes: PhonemeSequence::from_text(&u.text).symbols(),
                snr_db: 0.0,
                rir_id: String::new(),
                seed: 0,
                clean_text: String::new(),
                echo_gain: 0.0,
            };
            let text = side_input_size(&rec, Method::Tec, base)?;
            let audio = side_input_size(&rec, Method::AecSeq2seq, base)?;
            ensure!(text > 0 && audio >= 1000 * text, "{}: text {text} B vs playback {audio} B", u.id);
            ratios.push((u.id.clone(), text, audio));
        }
    }
    ensure!(!ratios.is_empty(), "no bundled utterance of 3 s or more");
    let parts: Vec<String> = ratios.iter().map(|(id, t, a)| format!("{id} {t} B vs {a} B ({}x)", a / t)).collect();
    Ok(parts.join("; "))
}

// 9 ------------------------------------------------------------------------

fn encoder_length() -> Outcome {
    for mel in [8, 20] {
        let model = variant_factory(Mode::Tec, &ModelConfig::toy().with_mel_dim(mel))?;
        let store = model.init_params(9)?;
        for t in 4..=64usize {
            let mut g = Graph::inference(&store);
            let h = model.encode_audio(&mut g, &uniform(&[t, mel], t as u64, -1.0, 1.0))?;
            let rows = g.value(h).dims2().0;
            ensure!(rows == t.div_ceil(4), "T={t}, {mel} bands: {rows} rows");
        }
        let mut g = Graph::inference(&store);
        ensure!(model.encode_audio(&mut g, &uniform(&[3, mel], 3, -1.0, 1.0)).is_err(), "T=3 accepted");
    }
    Ok("T = 4..64 at 8 and 20 bands, output ceil(T/4); T = 3 rejected".into())
}

// 10 -----------------------------------------------------------------------

fn demo_run(dir: &Path, threads: &str, tag: &str) -> Result<(Vec<u8>, Vec<u8>), Box<dyn std::error::Error>> {
    let report = dir.join(format!("{tag}.txt"));
    let out = Command::new(env!("CARGO_BIN_EXE_tec"))
        .args(["--seed", "5", "--threads", threads, "--log-level", "quiet", "--out-dir"])
        .arg(dir.join(tag))
        .args(["demo", "--steps", "40", "--report"])
        .arg(&report)
        .env_remove("TEC_DATA_DIR")
        .output()?;
    ensure!(out.status.success(), "demo exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    Ok((out.stdout, std::fs::read(report)?))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir()?;
    let a = demo_run(dir.path(), "1", "a")?;
    let b = demo_run(dir.path(), "1", "b")?;
    let c = demo_run(dir.path(), "4", "c")?;
    ensure!(a == b, "two single-thread runs differ");
    ensure!(a == c, "1 and 4 threads differ");
    ensure!(a.0 == a.1, "stdout and report file differ");
    Ok(format!("3 runs (threads 1, 1, 4), {}-byte reports identical", a.1.len()))
}

// --------------------------------------------------------------------------

type Criterion = (u8, &'static str, u64, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "mixture reconstruction", 30, reconstruction),
    (2, "MCD constant and DTW oracle", 60, mcd_literal),
    (3, "FLOPS parameter-count oracle", 60, flops),
    (4, "summed context, monotone attention", 120, context_and_monotonicity),
    (5, "gradient integrity", 300, gradients),
    (6, "NLMS efficacy", 10, nlms_erle),
    (7, "end-to-end learning signal", 600, end_to_end),
    (8, "side-input accounting", 60, side_input),
    (9, "audio encoder length", 60, encoder_length),
    (10, "demo determinism", 300, determinism),
];

fn selected() -> Option<Vec<u8>> {
    let v = std::env::var("TEC_ACCEPTANCE").ok()?;
    Some(v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
}

#[test]
fn acceptance() {
    let only = selected();
    let mut failed = Vec::new();
    for (id, name, limit, check) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()).into())
        });
        let took = start.elapsed();
        let result = result.and_then(|d| {
            if took <= Duration::from_secs(limit) {
                Ok(d)
            } else {
                Err(format!("{d}; over the {limit} s limit").into())
            }
        });
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d.clone()),
            Err(e) => ("FAIL", e.to_string()),
        };
        let line = format!("acceptance {id:>2} {tag} {name} [{:.1} s]: {detail}\n", took.as_secs_f64());
        let _ = std::io::stdout().lock().write_all(line.as_bytes());
        if result.is_err() {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
