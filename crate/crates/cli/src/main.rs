use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use nae_core::dsp::{read_wav, write_wav, StftConfig, WavFormat};
use nae_core::harness::corpus::SplitRule;
use nae_core::harness::experiment::{run_experiment, ExperimentConfig};
use nae_core::harness::synth::{make_synthetic_corpus, SyntheticCorpusConfig};
use nae_core::harness::toy::generate_toy_notes;
use nae_core::metrics::{bss_eval, DEFAULT_FILTER_LEN};
use nae_core::nae::TrainConfig;
use nae_core::separation::{separate, train_source_model, ModelKind, ModelSpec, SourceModel};

#[derive(Parser)]
#[command(
    name = "nae",
    version,
    about = "Supervised source separation with non-negative autoencoders and KL-NMF"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one source model on WAV files.
    Train(TrainArgs),
    /// Separate a mixture with one model per source.
    Separate(SeparateArgs),
    /// Score estimates against references with BSS_EVAL.
    Eval(EvalArgs),
    /// Run the method × rank experiment on a corpus.
    Experiment(Box<ExperimentArgs>),
    /// Write the four-pitch toy sequence and its ground truth.
    Toy(ToyArgs),
    /// Generate a synthetic speaker corpus.
    MakeCorpus(MakeCorpusArgs),
}

#[derive(Args, Clone)]
struct StftArgs {
    #[arg(long, default_value_t = 512)]
    n_fft: usize,
    #[arg(long, default_value_t = 128)]
    hop: usize,
}

impl From<&StftArgs> for StftConfig {
    fn from(a: &StftArgs) -> Self {
        StftConfig {
            n_fft: a.n_fft,
            hop: a.hop,
        }
    }
}

#[derive(Args, Clone)]
struct OptimArgs {
    /// Sparsity weight on the latent code.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    /// Relative cost change counted as a stall; 0 disables early stopping.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl From<&OptimArgs> for TrainConfig {
    fn from(a: &OptimArgs) -> Self {
        TrainConfig {
            lambda: a.lambda,
            max_iterations: a.iterations,
            tol: a.tol,
            patience: a.patience,
            seed: a.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Nmf,
    NaeShallow,
    NaeDeep,
}

impl From<Method> for ModelKind {
    fn from(m: Method) -> Self {
        match m {
            Method::Nmf => ModelKind::Nmf,
            Method::NaeShallow => ModelKind::NaeShallow,
            Method::NaeDeep => ModelKind::NaeDeep,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Pcm16,
    Float32,
}

impl From<Format> for WavFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Pcm16 => WavFormat::Pcm16,
            Format::Float32 => WavFormat::Float32,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training WAV files.
    #[arg(required = true)]
    wavs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "nae-shallow")]
    method: Method,
    #[arg(long, default_value_t = 20)]
    rank: usize,
    /// Encoder and decoder depth of `nae-deep`.
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    stft: StftArgs,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Args)]
struct SeparateArgs {
    mixture: PathBuf,
    /// One model file per source, in output order.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// Writes `source0.wav`, `source1.wav`, … here.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "pcm16")]
    format: Format,
    #[command(flatten)]
    stft: StftArgs,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "estimate", required = true)]
    estimates: Vec<PathBuf>,
    #[arg(long = "reference", required = true)]
    references: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FILTER_LEN)]
    filter_len: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Master seed; every model, mixture and fit derives from it.
    #[arg(long)]
    seed: u64,
    /// JSON file with `ExperimentConfig` fields; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Name of the held-out clip in every speaker directory. Defaults to
    /// the lexicographically last WAV.
    #[arg(long)]
    test_clip: Option<String>,
    /// [default: 32]
    #[arg(long)]
    n_mixtures: Option<usize>,
    /// Comma-separated. [default: nmf,nae-shallow,nae-deep]
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Comma-separated. [default: 20,100]
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    /// [default: 2]
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    n_fft: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    /// [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// [default: 0.1]
    #[arg(long)]
    lambda: Option<f64>,
    /// [default: 2000]
    #[arg(long)]
    train_iterations: Option<usize>,
    /// [default: 2000]
    #[arg(long)]
    fit_iterations: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    /// [default: 512]
    #[arg(long)]
    filter_len: Option<usize>,
    /// 0 uses every core. [default: 0]
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MakeCorpusArgs {
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    speakers: usize,
    #[arg(long, default_value_t = 10)]
    clips: usize,
    #[arg(long, default_value_t = 1.0)]
    seconds: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .downcast_ref::<nae_core::Error>()
                .map_or("error", nae_core::Error::kind);
            eprintln!("{}", json!({ "error": kind, "message": format!("{e:#}") }));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Separate(a) => separate_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Experiment(a) => experiment(*a),
        Command::Toy(a) => toy(a),
        Command::MakeCorpus(a) => make_corpus(a),
    }
}

fn load_all(paths: &[PathBuf]) -> anyhow::Result<Vec<nae_core::dsp::Waveform>> {
    paths
        .iter()
        .map(|p| read_wav(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let waves = load_all(&a.wavs)?;
    let spec = ModelSpec {
        depth: a.depth,
        ..ModelSpec::new(a.method.into(), a.rank)
    };
    let model = train_source_model(&waves, &spec, &(&a.stft).into(), &(&a.optim).into())?;
    model.save(&a.out)?;
    println!(
        "{}",
        json!({
            "model": a.out,
            "method": model.kind.as_str(),
            "rank": a.rank,
            "iterations": model.metadata.iterations,
            "final_cost": model.metadata.final_cost,
        })
    );
    Ok(())
}

fn separate_cmd(a: SeparateArgs) -> anyhow::Result<()> {
    let mixture = read_wav(&a.mixture).with_context(|| format!("reading {}", a.mixture.display()))?;
    let models = a
        .models
        .iter()
        .map(|p| SourceModel::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let refs: Vec<&SourceModel> = models.iter().collect();
    let sources = separate(&mixture, &refs, &(&a.stft).into(), &(&a.optim).into())?;
    std::fs::create_dir_all(&a.out_dir)?;
    let mut written = Vec::new();
    for (i, s) in sources.iter().enumerate() {
        let path = a.out_dir.join(format!("source{i}.wav"));
        write_wav(&path, s, a.format.into())?;
        written.push(path);
    }
    println!("{}", json!({ "sources": written }));
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    if a.estimates.len() != a.references.len() {
        bail!(
            "got {} estimates but {} references",
            a.estimates.len(),
            a.references.len()
        );
    }
    let result = bss_eval(&load_all(&a.estimates)?, &load_all(&a.references)?, a.filter_len)?;
    println!("{}", serde_json::to_string(&result)?);
    Ok(())
}

fn experiment_config(a: ExperimentArgs) -> anyhow::Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(path) => {
            serde_json::from_str(&std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    c.master_seed = a.seed;
    if let Some(v) = a.corpus {
        c.corpus = v;
    }
    if let Some(v) = a.output_dir {
        c.output_dir = v;
    }
    if let Some(v) = a.test_clip {
        c.split = SplitRule::Named(v);
    }
    if let Some(v) = a.n_mixtures {
        c.n_mixtures = v;
    }
    if let Some(v) = a.methods {
        c.methods = v.into_iter().map(ModelKind::from).collect();
    }
    if let Some(v) = a.ranks {
        c.ranks = v;
    }
    if let Some(v) = a.depth {
        c.depth = v;
    }
    if let Some(v) = a.n_fft {
        c.stft.n_fft = v;
    }
    if let Some(v) = a.hop {
        c.stft.hop = v;
    }
    if let Some(v) = a.snr_db {
        c.snr_db = v;
    }
    if let Some(v) = a.lambda {
        c.lambda = v;
    }
    if let Some(v) = a.train_iterations {
        c.train_iterations = v;
    }
    if let Some(v) = a.fit_iterations {
        c.fit_iterations = v;
    }
    if let Some(v) = a.tol {
        c.tol = v;
    }
    if let Some(v) = a.patience {
        c.patience = v;
    }
    if let Some(v) = a.filter_len {
        c.filter_len = v;
    }
    if let Some(v) = a.threads {
        c.threads = v;
    }
    Ok(c)
}

fn experiment(a: ExperimentArgs) -> anyhow::Result<()> {
    let config = experiment_config(a)?;
    let out = run_experiment(&config)?;
    for cell in &out.summary.cells {
        log::info!(
            "{} rank {}: median SDR {:.2} dB, SIR {:.2} dB, SAR {:.2} dB",
            cell.method,
            cell.rank,
            cell.metrics.sdr.median,
            cell.metrics.sir.median,
            cell.metrics.sar.median
        );
    }
    println!(
        "{}",
        json!({
            "output_dir": config.output_dir,
            "rows": out.rows.len(),
            "computed_cells": out.computed_cells,
        })
    );
    Ok(())
}

fn toy(a: ToyArgs) -> anyhow::Result<()> {
    let notes = generate_toy_notes(a.seed);
    write_wav(&a.out, &notes.wave, WavFormat::Float32)?;
    let truth = truth_path(&a.out);
    let rows = |m: &nae_core::Matrix| (0..m.rows()).map(|i| m.row(i).to_vec()).collect::<Vec<_>>();
    std::fs::write(
        &truth,
        serde_json::to_string(&json!({
            "sample_rate": notes.wave.sample_rate,
            "n_fft": notes.stft.n_fft,
            "hop": notes.stft.hop,
            "sequence": notes.sequence,
            "segments": notes.segments,
            "templates": rows(&notes.templates),
            "gates": rows(&notes.gates),
        }))?,
    )?;
    println!("{}", json!({ "wav": a.out, "truth": truth }));
    Ok(())
}

fn truth_path(wav: &Path) -> PathBuf {
    wav.with_extension("truth.json")
}

fn make_corpus(a: MakeCorpusArgs) -> anyhow::Result<()> {
    let config = SyntheticCorpusConfig {
        clip_seconds: a.seconds,
        ..SyntheticCorpusConfig::new(a.seed, a.speakers, a.clips)
    };
    let speakers = make_synthetic_corpus(&a.out, &config)?;
    println!(
        "{}",
        json!({ "root": a.out, "speakers": speakers.len(), "clips_per_speaker": a.clips })
    );
    Ok(())
}
