//! Command-line front end.
//!
//! Every subcommand is a plain function taking its parsed arguments, so the
//! commands can be driven from tests without spawning a process.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::coeff_model::{read_model, write_model};
use crate::coeff_model::DEFAULT_COMPONENTS;
use crate::filter_bank::FilterBank;
use crate::globalizer::{globalize, SolverConfig};
use crate::metrics::{depth_to_scene, evaluate, scene_to_depth, DEFAULT_Z_MAX, DEFAULT_Z_MIN};
use crate::pipeline::{fit_model_from_scenes, run_demo, DemoConfig};
use crate::predictor::{read_weight_map, synth_predict, write_weight_map, CorruptionConfig};
use crate::{pfm, DepthMetrics, ScalarField};

#[derive(Debug, Parser)]
#[command(name = "derivdepth", version, about = "Inverse-depth recovery from derivative-coefficient distributions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump every filter kernel as PFM plus a `bank.txt` index.
    Bank(BankArgs),
    /// Fit per-filter mixture models to a corpus of PFM depth maps.
    Fit(FitArgs),
    /// Produce a weight map from a ground-truth depth map.
    PredictSynth(PredictArgs),
    /// Recover a scene map from a weight map.
    Globalize(GlobalizeArgs),
    /// Compare a predicted depth map against ground truth.
    Eval(EvalArgs),
    /// Run the synthetic end-to-end pipeline and write a summary table.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct BankArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Directory of `.pfm` depth maps (meters).
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    pub components: usize,
    /// Minimum cluster size counted in the variance estimate.
    #[arg(long)]
    pub min_assign: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output `GMM1` file.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Ground-truth depth map (PFM, meters).
    #[arg(long)]
    pub depth: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "full")]
    pub subset: String,
    #[arg(long, default_value_t = 0.0)]
    pub ambiguity: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output `OWM1` file.
    #[arg(long)]
    pub weights: PathBuf,
}

#[derive(Debug, Args)]
pub struct GlobalizeArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Filter indices and/or group names; defaults to every filter in the weight map.
    #[arg(long)]
    pub subset: Option<String>,
    #[arg(long, default_value_t = 2f64.powi(-10))]
    pub beta_init: f64,
    #[arg(long, default_value_t = 2f64.powi(7))]
    pub beta_final: f64,
    #[arg(long, default_value_t = 2f64.powf(0.125))]
    pub beta_growth: f64,
    #[arg(long, default_value_t = 1.0)]
    pub reg_weight: f64,
    /// Recovered scene map y (PFM).
    #[arg(long)]
    pub out_scene: PathBuf,
    /// Recovered depth map z = 1/y, clamped (PFM).
    #[arg(long)]
    pub out_depth: Option<PathBuf>,
    /// Per-iteration CSV trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Validity mask (PFM); nonzero pixels are evaluated.
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub corpus_size: usize,
    #[arg(long, default_value_t = 2)]
    pub test_maps: usize,
    /// Side length of the square synthetic maps.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = DEFAULT_COMPONENTS)]
    pub components: usize,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Bank(a) => cmd_bank(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::PredictSynth(a) => cmd_predict_synth(&a),
        Command::Globalize(a) => cmd_globalize(&a),
        Command::Eval(a) => cmd_eval(&a).map(|m| println!("{}", m.to_record())),
        Command::Demo(a) => cmd_demo(&a).map(|table| print!("{table}")),
    }
}

/// Process entry point; returns the exit status.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    if dir.as_os_str().is_empty() {
        bail!("empty output directory path");
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn cmd_bank(args: &BankArgs) -> anyhow::Result<()> {
    ensure_dir(&args.out_dir)?;
    let bank = FilterBank::build();
    for (i, f) in bank.iter().enumerate() {
        pfm::write(args.out_dir.join(format!("filter_{i:02}.pfm")), &f.as_field())?;
    }
    let index = args.out_dir.join("bank.txt");
    fs::write(&index, bank.index_listing()).with_context(|| format!("cannot write {}", index.display()))?;
    Ok(())
}

/// Reads every `.pfm` file in `dir`, in file-name order.
pub fn read_corpus(dir: &Path) -> anyhow::Result<Vec<ScalarField>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read corpus directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pfm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("empty corpus: no .pfm files in {}", dir.display());
    }
    paths.iter().map(|p| Ok(pfm::read(p)?)).collect()
}

pub fn cmd_fit(args: &FitArgs) -> anyhow::Result<()> {
    let depths = read_corpus(&args.corpus)?;
    let scenes: Vec<ScalarField> = depths.iter().map(|z| depth_to_scene(z, DEFAULT_Z_MIN)).collect();
    let bank = FilterBank::build();
    let model = fit_model_from_scenes(&scenes, &bank, args.components, args.min_assign, args.seed)?;
    write_model(&args.model, &model)?;
    Ok(())
}

pub fn cmd_predict_synth(args: &PredictArgs) -> anyhow::Result<()> {
    let bank = FilterBank::build();
    let subset = bank.parse_subset(&args.subset)?;
    let model = read_model(&args.model)?;
    let depth = pfm::read(&args.depth)?;
    let corruption = CorruptionConfig {
        ambiguity_fraction: args.ambiguity,
        blur_temperature: args.temperature,
        seed: args.seed,
    };
    let scene = depth_to_scene(&depth, DEFAULT_Z_MIN);
    let weights = synth_predict(&scene, &bank, &model, &subset, &corruption)?;
    write_weight_map(&args.weights, &weights)?;
    Ok(())
}

pub fn cmd_globalize(args: &GlobalizeArgs) -> anyhow::Result<()> {
    let bank = FilterBank::build();
    let weights = read_weight_map(&args.weights)?;
    let model = read_model(&args.model)?;
    let subset = match &args.subset {
        Some(s) => bank.parse_subset(s)?,
        None => weights.filters().to_vec(),
    };
    let config = SolverConfig {
        beta_init: args.beta_init,
        beta_final: args.beta_final,
        beta_growth: args.beta_growth,
        reg_weight: args.reg_weight,
        record_trace: args.trace.is_some(),
        ..SolverConfig::new(subset)
    };
    let (y, trace) = globalize(&weights, &model, &bank, &config)?;
    pfm::write(&args.out_scene, &y)?;
    if let Some(path) = &args.out_depth {
        pfm::write(path, &scene_to_depth(&y, DEFAULT_Z_MIN, DEFAULT_Z_MAX))?;
    }
    if let Some(path) = &args.trace {
        fs::write(path, trace.to_csv()).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> anyhow::Result<DepthMetrics> {
    let pred = pfm::read(&args.pred)?;
    let truth = pfm::read(&args.truth)?;
    let mask = match &args.mask {
        Some(path) => {
            let m = pfm::read(path)?;
            if (m.width(), m.height()) != (truth.width(), truth.height()) {
                bail!(
                    "shape mismatch: mask {}x{}, truth {}x{}",
                    m.width(),
                    m.height(),
                    truth.width(),
                    truth.height()
                );
            }
            Some(m.values().iter().map(|&v| v != 0.0).collect::<Vec<bool>>())
        }
        None => None,
    };
    Ok(evaluate(&pred, &truth, mask.as_deref())?)
}

/// Runs the demo, writes `summary.txt` and `model.gmm` into the output
/// directory and returns the summary table.
pub fn cmd_demo(args: &DemoArgs) -> anyhow::Result<String> {
    ensure_dir(&args.out_dir)?;
    let config = DemoConfig {
        seed: args.seed,
        corpus_size: args.corpus_size,
        test_maps: args.test_maps,
        width: args.size,
        height: args.size,
        components: args.components,
        ..DemoConfig::default()
    };
    let (model, report) = run_demo(&config, |msg| eprintln!("{msg}"))?;
    let table = report.to_table();
    let summary = args.out_dir.join("summary.txt");
    fs::write(&summary, &table).with_context(|| format!("cannot write {}", summary.display()))?;
    write_model(args.out_dir.join("model.gmm"), &model)?;
    Ok(table)
}
