use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tec_model::Mode;

#[derive(Debug, Parser)]
#[command(name = "tec", version, about = "Textual echo cancellation toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Run seed; every component derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    pub seed: u64,

    /// Worker threads for per-record work; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    pub log_level: LogLevel,

    /// Where `run.meta` goes; defaults to the directory of the command's output.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Quiet,
    Info,
    Debug,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Full,
    Toy,
    Micro,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize echoic mixtures from clean and playback manifests.
    Mix(MixArgs),
    /// Cancel the playback echo with an NLMS adaptive filter.
    Nlms(NlmsArgs),
    /// Train a sequence-to-sequence model on a mixture manifest.
    Train(TrainArgs),
    /// Enhance one mixture with a trained checkpoint.
    Enhance(EnhanceArgs),
    /// Score enhanced outputs against the clean references.
    Eval(EvalArgs),
    /// Estimate inference FLOPS for a model configuration.
    Flops(FlopsArgs),
    /// Run the interrupted-query scenario end to end.
    Demo(DemoArgs),
    /// Write the bundled corpus as WAV files and manifests.
    Corpus(CorpusArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Mix(_) => "mix",
            Command::Nlms(_) => "nlms",
            Command::Train(_) => "train",
            Command::Enhance(_) => "enhance",
            Command::Eval(_) => "eval",
            Command::Flops(_) => "flops",
            Command::Demo(_) => "demo",
            Command::Corpus(_) => "corpus",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MixArgs {
    /// Manifest of clean user utterances.
    #[arg(long)]
    pub clean: PathBuf,
    /// Manifest of TTS playback utterances.
    #[arg(long)]
    pub playback: PathBuf,
    /// Room distribution (TOML); built-in ranges when omitted.
    #[arg(long)]
    pub rooms: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub snr_db: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NlmsArgs {
    #[arg(long)]
    pub mixture: PathBuf,
    #[arg(long)]
    pub playback: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1024)]
    pub taps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub mu: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// tec, vanilla or aec.
    #[arg(long, value_parser = parse_mode, default_value = "tec")]
    pub mode: Mode,
    /// Model configuration (TOML); the toy configuration when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long)]
    pub ckpt_out: PathBuf,
    #[arg(long, default_value_t = 3e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 3e-4)]
    pub final_lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// Per-step losses as CSV.
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub mixture: PathBuf,
    /// Playback source text: a transcript or space-separated phone symbols.
    #[arg(long)]
    pub text: Option<String>,
    /// Playback waveform, for AEC-Seq2seq checkpoints.
    #[arg(long)]
    pub playback: Option<PathBuf>,
    #[arg(long)]
    pub out_mel: PathBuf,
    /// Also write a Griffin-Lim reconstruction.
    #[arg(long)]
    pub out_wav: Option<PathBuf>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub griffin_lim_iters: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Holds `<id>.mel` or `<id>.wav` per record.
    #[arg(long)]
    pub enhanced_dir: PathBuf,
    /// Recognizer output, one `words (id)` line per record.
    #[arg(long)]
    pub hyp: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
    /// Method whose side input is accounted: tec, vanilla, aec or nlms.
    #[arg(long, default_value = "tec")]
    pub method: String,
    #[arg(long, default_value_t = crate::pipeline::MEL_BANDS)]
    pub n_mels: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FlopsArgs {
    /// Model configuration (TOML); overrides --preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long, default_value_t = 100)]
    pub tx: u64,
    #[arg(long, default_value_t = 20)]
    pub ty: u64,
    #[arg(long, default_value_t = 100)]
    pub tz: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 400)]
    pub steps: usize,
    /// Use at most this many training utterances.
    #[arg(long)]
    pub records: Option<usize>,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
}
