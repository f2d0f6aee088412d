//! The `beamosd` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use beamosd_core::array::{AngleGrid, ArrayGeometry};
use beamosd_core::beamformer::{uniform_looks, BeamformerBank, DEFAULT_BAND, DEFAULT_LOADING};
use beamosd_core::dsp::{multichannel_stft, Stft, StftConfig};
use beamosd_core::features::{FeatureConfig, FeatureExtractor, FeatureKind};
use beamosd_core::models::{ModelConfig, ModelKind};
use beamosd_core::nn::gradcheck::GradCheckConfig;
use beamosd_core::nn::optim::AdamConfig;
use beamosd_core::simulator::DatasetConfig;
use beamosd_core::spatial::DEFAULT_SMOOTHING;
use beamosd_core::train::{TrainConfig, DEFAULT_THRESHOLD};
use clap::{Args, Parser, Subcommand};

use crate::config::{parse_kind, pick, ConfigFile};
use crate::manifest::{Manifest, SplitFilter};
use crate::parallel::Workers;
use crate::runs::{gradcheck_model, load_detector, run_eval, run_train, write_file, GradCheckSummary, TrainRun};
use crate::{btns, csv, dataset, wav, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "beamosd", version, about = "Overlapped speech detection on circular microphone arrays")]
pub struct Cli {
    /// Single-threaded, deterministic execution.
    #[arg(long, global = true)]
    pub serial: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset of 8-channel WAV segments and a manifest.
    Simulate(SimulateArgs),
    /// Extract one feature tensor from a WAV file into a BTNS file.
    Features(FeaturesArgs),
    /// Tabulate one beam's response over the angle grid as CSV.
    Beampattern(BeampatternArgs),
    /// Per-frame SRP spectrum and DOA tracks of a WAV file as CSV.
    Srp(SrpArgs),
    /// Train a detector on a manifest's train split.
    Train(TrainArgs),
    /// Score a checkpoint on a manifest split and emit a JSON report.
    Eval(EvalArgs),
    /// Compare backprop gradients with central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub num: Option<usize>,
    #[arg(long)]
    pub overlap_frac: Option<f64>,
    #[arg(long)]
    pub seconds: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long = "type", value_parser = ["beams", "spatial", "single"])]
    pub kind: String,
    #[arg(long, default_value_t = 40, value_parser = parse_fbank)]
    pub fbank: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BeampatternArgs {
    /// Beam index, 0 looks at 0° and beams step by 45°.
    #[arg(long, default_value_t = 0)]
    pub beam: usize,
    #[arg(long, default_value_t = 1000.0)]
    pub freq: f64,
    #[arg(long, default_value_t = 120)]
    pub angles: usize,
    #[arg(long, default_value_t = DEFAULT_LOADING)]
    pub loading: f64,
    /// Standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SrpArgs {
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SMOOTHING)]
    pub smoothing: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest file or dataset directory.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// baseline, bt, spatial or combined.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long = "F")]
    pub fbank: Option<usize>,
    #[arg(long = "D")]
    pub dim: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    /// Split scored after each epoch: train, test, all or none.
    #[arg(long)]
    pub eval_split: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to model.json beside the checkpoint.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long = "F", default_value_t = 8)]
    pub fbank: usize,
    #[arg(long = "L", default_value_t = 8)]
    pub length: usize,
    #[arg(long = "D", default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 200)]
    pub coords: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_fbank(s: &str) -> std::result::Result<usize, String> {
    match s {
        "40" => Ok(40),
        "160" => Ok(160),
        _ => Err(format!("filterbank size must be 40 or 160, got {s}")),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
                _ => Ok(()),
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let workers = Workers::from_env(cli.serial)?;
    match cli.command {
        Command::Simulate(a) => simulate(a, workers),
        Command::Features(a) => features(a),
        Command::Beampattern(a) => beampattern(a),
        Command::Srp(a) => srp(a),
        Command::Train(a) => train(a, workers),
        Command::Eval(a) => eval(a, workers),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

/// Dataset settings from flags over a config file over defaults.
pub fn dataset_config(a: &SimulateArgs, file: &ConfigFile) -> Result<DatasetConfig> {
    let d = DatasetConfig::default();
    let cfg = DatasetConfig {
        num_segments: pick(a.num, file.num, d.num_segments),
        overlap_fraction: pick(a.overlap_frac, file.overlap_frac, d.overlap_fraction),
        seconds: pick(a.seconds, file.seconds, d.seconds),
        seed: pick(a.seed, file.seed, d.seed),
        ..d
    };
    if cfg.seconds != 1.0 && cfg.seconds != 2.0 {
        return Err(Error::usage(format!("--seconds must be 1 or 2, got {}", cfg.seconds)));
    }
    if cfg.num_segments == 0 {
        return Err(Error::usage("--num must be positive"));
    }
    if !(0.0..=1.0).contains(&cfg.overlap_fraction) {
        return Err(Error::usage("--overlap-frac must lie in [0, 1]"));
    }
    Ok(cfg)
}

fn simulate(a: SimulateArgs, workers: Workers) -> Result<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let cfg = dataset_config(&a, &file)?;
    let entries = dataset::simulate_to_dir(&cfg, &ArrayGeometry::default(), &a.out, workers)?;
    let overlapped = entries.iter().filter(|e| e.label == 1).count();
    eprintln!(
        "wrote {} segments ({overlapped} overlapped) to {}",
        entries.len(),
        a.out.display()
    );
    Ok(())
}

fn features(a: FeaturesArgs) -> Result<()> {
    let kind: FeatureKind = a.kind.parse()?;
    let signal = wav::load(&a.wav)?;
    let cfg = FeatureConfig {
        fbank: a.fbank,
        ..FeatureConfig::default()
    };
    let ex = FeatureExtractor::new(cfg, ArrayGeometry::default())?;
    let f = ex.extract(&signal, &[kind])?;
    let t = f.get(kind).expect("requested kind is extracted").clone();
    btns::save(&a.out, &[(kind.as_str().to_string(), t)])
}

fn beampattern(a: BeampatternArgs) -> Result<()> {
    if a.beam >= 8 {
        return Err(Error::usage(format!("beam must be 0..=7, got {}", a.beam)));
    }
    let grid = StftConfig::default().grid();
    if !(DEFAULT_BAND.0..=DEFAULT_BAND.1).contains(&a.freq) {
        return Err(Error::usage(format!(
            "frequency {} Hz lies outside the design band {}-{} Hz",
            a.freq, DEFAULT_BAND.0, DEFAULT_BAND.1
        )));
    }
    let angles = AngleGrid::new(a.angles).map_err(|e| Error::usage(e.to_string()))?;
    let bank = BeamformerBank::design(&ArrayGeometry::default(), &uniform_looks(8), grid, DEFAULT_BAND, a.loading)?;
    emit(a.out.as_deref(), &csv::beampattern(&bank, a.beam, a.freq, &angles)?)
}

fn srp(a: SrpArgs) -> Result<()> {
    let signal = wav::load(&a.wav)?;
    let cfg = FeatureConfig {
        smoothing: a.smoothing,
        ..FeatureConfig::default()
    };
    let ex = FeatureExtractor::new(cfg, ArrayGeometry::default())?;
    let stft = Stft::new(cfg.stft)?;
    let stack = multichannel_stft(&signal, &stft)?;
    let spectrum = ex.analyzer().spectrum(&stack)?;
    emit(a.out.as_deref(), &csv::srp(&spectrum, ex.analyzer().angles()))
}

fn parse_eval_split(s: &str) -> Result<Option<SplitFilter>> {
    if s == "none" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

/// Training settings from flags over a config file over defaults.
pub fn train_run(a: &TrainArgs, file: &ConfigFile) -> Result<TrainRun> {
    let kind_name = a
        .model
        .clone()
        .or_else(|| file.model.clone())
        .ok_or_else(|| Error::usage("--model is required (baseline, bt, spatial, combined)"))?;
    let kind: ModelKind = parse_kind(&kind_name)?;
    let d = ModelConfig::new(kind);
    let seed = pick(a.seed, file.seed, 0);
    let model = ModelConfig {
        kind,
        fbank: pick(a.fbank, file.fbank, d.fbank),
        dim: pick(a.dim, file.dim, d.dim),
        heads: pick(a.heads, file.heads, d.heads),
        layers: pick(a.layers, file.layers, d.layers),
        seed,
    };
    model.validate().map_err(|e| Error::usage(e.to_string()))?;
    let t = TrainConfig::default();
    let train = TrainConfig {
        adam: AdamConfig {
            lr: pick(a.lr, file.lr, t.adam.lr),
            ..t.adam
        },
        batch_size: pick(a.batch_size, file.batch_size, t.batch_size),
        epochs: pick(a.epochs, file.epochs, t.epochs),
        seed,
    };
    train.validate().map_err(|e| Error::usage(e.to_string()))?;
    let split = pick(a.eval_split.clone(), file.eval_split.clone(), "test".to_string());
    Ok(TrainRun {
        model,
        train,
        eval_split: parse_eval_split(&split)?,
    })
}

fn train(a: TrainArgs, workers: Workers) -> Result<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let run = train_run(&a, &file)?;
    let manifest = Manifest::load(&a.manifest)?;
    let logs = run_train(&manifest, &run, &a.out, workers)?;
    for l in &logs {
        match &l.eval {
            Some(m) => eprintln!("epoch {:3}  loss {:.4}  accuracy {:.4}", l.epoch, l.train_loss, m.accuracy),
            None => eprintln!("epoch {:3}  loss {:.4}", l.epoch, l.train_loss),
        }
    }
    Ok(())
}

fn eval(a: EvalArgs, workers: Workers) -> Result<()> {
    let file = ConfigFile::load(a.config.as_deref())?;
    let split: SplitFilter = pick(a.split.clone(), file.split.clone(), "test".to_string()).parse()?;
    let threshold = pick(a.threshold, file.threshold, DEFAULT_THRESHOLD);
    let manifest = Manifest::load(&a.manifest)?;
    let det = load_detector(&a.checkpoint, a.model_config.as_deref())?;
    let report = run_eval(&manifest, &det, split, threshold, workers)?;
    emit(a.out.as_deref(), &report.to_json())
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let kind = parse_kind(&a.model)?;
    let model = ModelConfig {
        kind,
        fbank: a.fbank,
        dim: a.dim,
        heads: a.heads,
        layers: a.layers,
        seed: a.seed,
    };
    model.validate().map_err(|e| Error::usage(e.to_string()))?;
    let cfg = GradCheckConfig {
        eps: a.eps,
        num_coords: a.coords,
        seed: a.seed,
    };
    let rep = gradcheck_model(&model, a.length, cfg)?;
    let summary = GradCheckSummary {
        model: kind.as_str().to_string(),
        fbank: a.fbank,
        length: a.length,
        dim: a.dim,
        layers: a.layers,
        eps: a.eps,
        coords: rep.coords.len(),
        skipped_kinks: rep.skipped_kinks,
        max_rel_error: rep.max_rel_error,
        tolerance: a.tolerance,
        pass: rep.max_rel_error <= a.tolerance,
    };
    emit(
        a.out.as_deref(),
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;
    if summary.pass {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "max relative error {:e} exceeds {:e}",
            rep.max_rel_error, a.tolerance
        )))
    }
}
