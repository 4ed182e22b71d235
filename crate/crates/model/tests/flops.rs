//! Parameter counts recomputed from layer formulas, independent of the
//! model's own parameter declarations.

use tec_model::{flops_estimate, Mode, ModelConfig};

fn lstm(input: u64, units: u64) -> u64 {
    4 * units * (input + units) + 4 * units
}

fn bn(features: u64) -> u64 {
    2 * features
}

fn audio_encoder(c: &ModelConfig) -> u64 {
    let a = &c.audio_enc;
    let (ch, u, h) = (a.conv_channels as u64, a.clstm_units as u64, a.bilstm_units as u64);
    let freq = (c.decoder.mel_dim as u64).div_ceil(4);
    let convs = (9 * ch + ch) + bn(ch) + (9 * ch * ch + ch) + bn(ch);
    let clstm = 2 * (4 * u * (ch + u) * a.clstm_kernel as u64 + 4 * u) + bn(2 * freq * u);
    let mut lstms = 0;
    for i in 0..a.bilstm_layers {
        let input = if i == 0 { 2 * freq * u } else { 2 * h };
        lstms += 2 * lstm(input, h) + bn(2 * h);
    }
    convs + clstm + lstms
}

fn text_encoder(c: &ModelConfig) -> u64 {
    let t = &c.text_enc;
    let (e, ch, k, h) = (t.embedding_dim as u64, t.conv_channels as u64, t.conv_kernel as u64, t.bilstm_units as u64);
    let mut n = t.vocab_size as u64 * e;
    for i in 0..t.conv_layers {
        let cin = if i == 0 { e } else { ch };
        n += k * cin * ch + ch + bn(ch);
    }
    n + 2 * lstm(ch, h) + bn(2 * h)
}

fn decoder(c: &ModelConfig) -> u64 {
    let d = &c.decoder;
    let (m, p, l, ctx) = (d.mel_dim as u64, d.prenet_units as u64, d.lstm_units as u64, c.attention.context_dim as u64);
    let prenet = (m * p + p) + (p * p + p);
    let lstms = lstm(p + ctx, l) + lstm(l, l);
    let heads = ((l + ctx) * m + m) + ((l + ctx) * 2 + 2);
    let (ch, k) = (d.postnet_channels as u64, d.postnet_kernel as u64);
    let postnet = (k * m * ch + ch + bn(ch)) + 3 * (k * ch * ch + ch + bn(ch)) + (k * ch * m + m + bn(m));
    prenet + lstms + heads + postnet
}

fn oracle(c: &ModelConfig, t_x: u64, t_y: u64, t_z: u64) -> u64 {
    let h = c.encoder_dim() as u64;
    let ctx = c.attention.context_dim as u64;
    let query = (c.decoder.prenet_units as u64 + ctx) * 3 * c.attention.components as u64;
    let source = h * ctx;
    let (m_side, sources) = match c.mode {
        Mode::Tec => (text_encoder(c), vec![t_x, t_y]),
        Mode::Vanilla => (0, vec![t_x]),
        Mode::AecSeq2seq => (audio_encoder(c), vec![t_x, t_y]),
    };
    let atten: u64 = sources.iter().map(|&t| source * t + query * t_z).sum();
    audio_encoder(c) * t_x + m_side * t_y + decoder(c) * t_z + atten
}

fn configs() -> Vec<ModelConfig> {
    let mut wide = ModelConfig::toy();
    wide.attention.components = 3;
    wide.decoder.mel_dim = 20;
    wide.text_enc.conv_kernel = 3;
    vec![ModelConfig::default(), ModelConfig::toy(), ModelConfig::micro(), wide]
}

#[test]
fn matches_parameter_counting_oracle() {
    for base in configs() {
        for mode in Mode::ALL {
            let c = base.clone().with_mode(mode);
            for (tx, ty, tz) in [(100, 20, 100), (400, 37, 380), (1, 1, 1)] {
                let r = flops_estimate(&c, tx, ty, tz).unwrap();
                assert_eq!(r.total, oracle(&c, tx, ty, tz), "{mode} {tx} {ty} {tz}");
                assert!(r.is_consistent());
            }
        }
    }
}

#[test]
fn degenerate_lengths_and_vanilla() {
    let r = flops_estimate(&ModelConfig::toy(), 0, 0, 0).unwrap();
    assert_eq!((r.total, r.flops_atten), (0, 0));
    let v = flops_estimate(&ModelConfig::toy().with_mode(Mode::Vanilla), 100, 20, 100).unwrap();
    assert_eq!(v.m_text, 0);
    assert_eq!(v.total, v.m_audio * 100 + v.m_dec * 100 + v.flops_atten);
}

#[test]
fn side_encoder_fills_text_slot() {
    let toy = ModelConfig::toy();
    let tec = flops_estimate(&toy, 100, 20, 100).unwrap();
    let aec = flops_estimate(&toy.clone().with_mode(Mode::AecSeq2seq), 100, 100, 100).unwrap();
    assert_eq!(aec.m_text, aec.m_audio);
    assert!(tec.m_text > 0);
}
