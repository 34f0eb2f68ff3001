mod analyze;
mod config;
mod domains;
mod fail;
mod io;
mod synth;
mod train;
mod translate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use fail::Failure;

/// Outcome-defined streetscape domains, shared-latent image translation and
/// translation analysis.
///
/// Every flag can also be given as a key in a TOML file passed with
/// `--config` (same name, dashes as underscores); flags win. Set
/// STREETSHIFT_THREADS to cap internal parallelism.
#[derive(Parser)]
#[command(name = "streetshift", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render two synthetic street-scene domains (grass vs sealed ground).
    Synth(SynthArgs),
    /// Build best/worst image domains from outcome records and an image index.
    Domains(DomainsArgs),
    /// Train a translation model on two image domains.
    Train(TrainArgs),
    /// Translate a directory of images with a trained model.
    Translate(TranslateArgs),
    /// Measure original/translated pairs and write the report.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct Common {
    /// TOML file with default values for any flag.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory; receives domain_a/ and domain_b/. [required]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Images per domain. [default: 200]
    #[arg(long, value_name = "N")]
    per_domain: Option<usize>,
    /// Master seed. [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Square image side in pixels: 16, 32, 64 or 128. [default: 32]
    #[arg(long, value_name = "PX")]
    image_size: Option<u32>,
    /// How far domain B moves from grass towards sealed ground, in [0, 1]. [default: 1]
    #[arg(long, value_name = "T")]
    overlap: Option<f64>,
}

#[derive(Args)]
struct DomainsArgs {
    #[command(flatten)]
    common: Common,
    /// Outcome records CSV (lat,lon,outcome,value[,group]). [required]
    #[arg(long, value_name = "FILE")]
    records: Option<PathBuf>,
    /// Image index CSV (id,lat,lon,heading,path). [required]
    #[arg(long, value_name = "FILE")]
    images: Option<PathBuf>,
    /// Manifest CSV to write. [required]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Share of records taken from each end of the ranking, in (0, 0.5]. [default: 0.1]
    #[arg(long)]
    fraction: Option<f64>,
    /// Matching radius in metres. [default: 50]
    #[arg(long, value_name = "M")]
    radius_m: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of domain A images (PNG, optional index.csv).
    #[arg(long, value_name = "DIR")]
    domain_a: Option<PathBuf>,
    /// Directory of domain B images.
    #[arg(long, value_name = "DIR")]
    domain_b: Option<PathBuf>,
    /// Domain manifest from `domains`; best side is A, worst side B. Alternative to --domain-a/--domain-b.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Skip image files smaller than this many bytes. [default: 0]
    #[arg(long, value_name = "BYTES")]
    min_bytes: Option<u64>,
    /// Output directory for checkpoint.bin, trace.csv and run.toml. [required]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Total training steps (a resumed run continues up to this count). [default: 10000]
    #[arg(long)]
    steps: Option<u64>,
    /// Model initialization and training seed. [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Model input size: 16, 32, 64 or 128; other images are resized. [default: 32]
    #[arg(long, value_name = "PX")]
    image_size: Option<u32>,
    /// Adversarial weight. [default: 50]
    #[arg(long)]
    lambda0: Option<f32>,
    /// KL weight. [default: 0.1]
    #[arg(long)]
    lambda1: Option<f32>,
    /// Reconstruction weight. [default: 100]
    #[arg(long)]
    lambda2: Option<f32>,
    /// Cycle KL weight. [default: 0.1]
    #[arg(long)]
    lambda3: Option<f32>,
    /// Cycle reconstruction weight. [default: 100]
    #[arg(long)]
    lambda4: Option<f32>,
    /// Write checkpoint and trace every N steps. [default: 1000]
    #[arg(long, value_name = "N")]
    checkpoint_every: Option<u64>,
    /// Keep a trace row every K steps. [default: 1]
    #[arg(long, value_name = "K")]
    trace_every: Option<u64>,
    /// Continue from this checkpoint; its model settings take precedence.
    #[arg(long, value_name = "FILE")]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct TranslateArgs {
    #[command(flatten)]
    common: Common,
    /// Trained checkpoint. [required]
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Directory of images to translate. [required]
    #[arg(long, value_name = "DIR")]
    input: Option<PathBuf>,
    /// Output directory; receives original/, translated/, diff/ and optionally triptych/. [required]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// a-to-b or b-to-a. [default: a-to-b]
    #[arg(long)]
    direction: Option<String>,
    /// Change threshold for the difference images, in [0, 1]. [default: 0.05]
    #[arg(long)]
    fuzz: Option<f64>,
    /// Also write original | generated | difference strips.
    #[arg(long)]
    triptych: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of original images. [required]
    #[arg(long, value_name = "DIR")]
    original: Option<PathBuf>,
    /// Directory of translated images, paired with originals by file name. [required]
    #[arg(long, value_name = "DIR")]
    translated: Option<PathBuf>,
    /// Output directory for the report, metric dump and images. [required]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Change threshold, in [0, 1]. [default: 0.05]
    #[arg(long)]
    fuzz: Option<f64>,
    /// Amplification of channel changes. [default: 4]
    #[arg(long)]
    gain: Option<f64>,
    /// csv or markdown. [default: markdown]
    #[arg(long)]
    format: Option<String>,
    /// Row name in the report. [default: Translation]
    #[arg(long)]
    subject: Option<String>,
    /// Direction name in the report. [default: A to B]
    #[arg(long)]
    label: Option<String>,
}

impl Command {
    fn config_path(&self) -> Option<&PathBuf> {
        match self {
            Command::Synth(a) => a.common.config.as_ref(),
            Command::Domains(a) => a.common.config.as_ref(),
            Command::Train(a) => a.common.config.as_ref(),
            Command::Translate(a) => a.common.config.as_ref(),
            Command::Analyze(a) => a.common.config.as_ref(),
        }
    }

    fn flags(&self) -> RunConfig {
        match self {
            Command::Synth(a) => RunConfig {
                out: a.out.clone(),
                per_domain: a.per_domain,
                seed: a.seed,
                image_size: a.image_size,
                overlap: a.overlap,
                ..RunConfig::default()
            },
            Command::Domains(a) => RunConfig {
                records: a.records.clone(),
                images: a.images.clone(),
                out: a.out.clone(),
                fraction: a.fraction,
                radius_m: a.radius_m,
                ..RunConfig::default()
            },
            Command::Train(a) => RunConfig {
                domain_a: a.domain_a.clone(),
                domain_b: a.domain_b.clone(),
                manifest: a.manifest.clone(),
                min_bytes: a.min_bytes,
                out: a.out.clone(),
                steps: a.steps,
                seed: a.seed,
                image_size: a.image_size,
                lambda0: a.lambda0,
                lambda1: a.lambda1,
                lambda2: a.lambda2,
                lambda3: a.lambda3,
                lambda4: a.lambda4,
                checkpoint_every: a.checkpoint_every,
                trace_every: a.trace_every,
                resume: a.resume.clone(),
                ..RunConfig::default()
            },
            Command::Translate(a) => RunConfig {
                checkpoint: a.checkpoint.clone(),
                input: a.input.clone(),
                out: a.out.clone(),
                direction: a.direction.clone(),
                fuzz: a.fuzz,
                triptych: a.triptych.then_some(true),
                ..RunConfig::default()
            },
            Command::Analyze(a) => RunConfig {
                original: a.original.clone(),
                translated: a.translated.clone(),
                out: a.out.clone(),
                fuzz: a.fuzz,
                gain: a.gain,
                format: a.format.clone(),
                subject: a.subject.clone(),
                label: a.label.clone(),
                ..RunConfig::default()
            },
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("STREETSHIFT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::usage(format!("STREETSHIFT_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    let file = match cli.command.config_path() {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = file.overlay(cli.command.flags());
    match cli.command {
        Command::Synth(_) => synth::run(&cfg),
        Command::Domains(_) => domains::run(&cfg),
        Command::Train(_) => train::run(&cfg),
        Command::Translate(_) => translate::run(&cfg),
        Command::Analyze(_) => analyze::run(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
