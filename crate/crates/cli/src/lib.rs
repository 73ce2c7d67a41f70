//! `seqnas` subcommands. Each command returns the text it prints on stdout;
//! logs go to stderr.

pub mod error;

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use seqnas_core::{
    arch_cost, count_space, enumerate_paths, gen_dataset, parse_arch, Architecture, Dataset,
    GlyphSet, SpaceSpec, SynthConfig,
};
use seqnas_neural::{build_fixed, evaluate_fixed, train_fixed, TrainConfig};
use seqnas_search::{execute, parse_path, Backend, RunConfig, RunMode, RunOutput};

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "seqnas",
    version,
    about = "Downsampling-path and operation search for sequence recognition backbones"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count (and optionally list) the downsampling paths of an (L, a, b) space.
    Enumerate(EnumerateArgs),
    /// Print the MAC/parameter report of an architecture as JSON.
    Cost(CostArgs),
    /// Generate a synthetic sequence dataset file.
    Gendata(GendataArgs),
    /// Train a fixed architecture on a dataset file and print its report.
    Eval(EvalArgs),
    /// Run the two-step search (or one of its steps).
    Search(SearchArgs),
    /// Run the random-search baseline.
    Random(RandomArgs),
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long = "L")]
    pub layers: usize,
    #[arg(long)]
    pub a: usize,
    #[arg(long)]
    pub b: usize,
    /// Print one path per line instead of the count.
    #[arg(long)]
    pub list: bool,
    /// Also print the number of architectures over the 7-op vocabulary.
    #[arg(long)]
    pub archs: bool,
}

/// Configuration file plus `key=value` overrides.
#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set reg.beta=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Architecture text, or a file containing it.
    pub arch: String,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct GendataArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Architecture text, or a file containing it.
    #[arg(long)]
    pub arch: String,
    #[arg(long)]
    pub data: PathBuf,
    /// Training epochs; defaults to `run.step1_epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, conflicts_with = "step2_only")]
    pub step1_only: bool,
    #[arg(long, requires = "path")]
    pub step2_only: bool,
    /// Path for `--step2-only`, e.g. `ABAB@1,3,5,7`.
    #[arg(long)]
    pub path: Option<String>,
}

#[derive(Debug, Args)]
pub struct RandomArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of random candidates (`run.random_candidates`).
    #[arg(long)]
    pub n: Option<usize>,
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn load_config(args: &ConfigArgs, extra: &[String]) -> Result<RunConfig> {
    let text = match &args.config {
        Some(p) => read_file(p)?,
        None => String::new(),
    };
    let mut overrides = args.set.clone();
    overrides.extend_from_slice(extra);
    Ok(RunConfig::parse_with_overrides(&text, &overrides)?)
}

fn arch_text(arg: &str) -> Result<String> {
    let p = Path::new(arg);
    if !arg.starts_with("path=") && p.is_file() {
        read_file(p)
    } else {
        Ok(arg.to_string())
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data") + "\n"
}

pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Enumerate(a) => enumerate(&a),
        Command::Cost(a) => cost(&a),
        Command::Gendata(a) => gendata(&a),
        Command::Eval(a) => eval(&a),
        Command::Search(a) => search(&a),
        Command::Random(a) => random(&a),
    }
}

pub fn enumerate(args: &EnumerateArgs) -> Result<String> {
    let space = SpaceSpec::minimal(args.layers, args.a, args.b);
    space.validate()?;
    if args.list {
        let paths = enumerate_paths(&space)?;
        log::info!("{} paths", paths.len());
        return Ok(paths.iter().map(|p| format!("{p}\n")).collect());
    }
    let count = count_space(&space)?;
    let mut out = format!("{}\n", count.paths);
    if args.archs {
        out.push_str(&format!("{}\n", count.architectures));
    }
    Ok(out)
}

pub fn cost(args: &CostArgs) -> Result<String> {
    let cfg = load_config(&args.cfg, &[])?;
    let arch = parse_arch(&arch_text(&args.arch)?, &cfg.run.space)?;
    Ok(to_json(&arch_cost(&arch, &cfg.run.space)?))
}

fn synth(cfg: &RunConfig) -> Result<Dataset> {
    let d = &cfg.data;
    let glyphs = GlyphSet::generate(d.classes, d.glyph_size, d.glyph_seed)?;
    Ok(gen_dataset(
        &cfg.run.space,
        &glyphs,
        &SynthConfig {
            n: d.n,
            noise: d.noise,
            max_jitter: d.jitter,
            seed: d.seed,
        },
    )?)
}

pub fn gendata(args: &GendataArgs) -> Result<String> {
    let mut extra = Vec::new();
    if let Some(s) = args.seed {
        extra.push(format!("data.seed={s}"));
    }
    if let Some(n) = args.n {
        extra.push(format!("data.n={n}"));
    }
    let cfg = load_config(&args.cfg, &extra)?;
    let data = synth(&cfg)?;
    let file = fs::File::create(&args.out).map_err(|source| CliError::File {
        path: args.out.clone(),
        source,
    })?;
    data.write_to(BufWriter::new(file))?;
    log::info!("wrote {} samples to {}", data.len(), args.out.display());
    Ok(String::new())
}

pub fn eval(args: &EvalArgs) -> Result<String> {
    let cfg = load_config(&args.cfg, &[])?;
    let space = &cfg.run.space;
    let arch: Architecture = parse_arch(&arch_text(&args.arch)?, space)?;
    let file = fs::File::open(&args.data).map_err(|source| CliError::File {
        path: args.data.clone(),
        source,
    })?;
    let data = Dataset::read_from(BufReader::new(file))?;
    data.check_space(space)?;
    let (train, val) = data.split(cfg.data.train_frac, cfg.data.seed);
    if train.is_empty() || val.is_empty() {
        return Err(CliError::Usage("the dataset is too small to split".into()));
    }
    let mut net = build_fixed::<f32>(&arch, space, data.classes, cfg.run.seed)?;
    let epochs = args.epochs.unwrap_or(cfg.run.step1_epochs);
    if epochs == 0 {
        let m = evaluate_fixed(&net, &val, cfg.run.batch)?;
        return Ok(to_json(&m));
    }
    let mut tc = TrainConfig::new(epochs, cfg.run.batch, cfg.run.seed);
    tc.optim.lr = cfg.run.weight_lr;
    tc.optim.rho = cfg.run.rho;
    tc.optim.eps = cfg.run.eps;
    let report = train_fixed(&mut net, &train, &val, &tc)?;
    Ok(to_json(&report))
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut extra = Vec::new();
    if let Some(b) = &args.backend {
        b.parse::<Backend>()?;
        extra.push(format!("run.backend={b}"));
    }
    if let Some(s) = args.seed {
        extra.push(format!("run.seed={s}"));
    }
    if let Some(d) = &args.output_dir {
        extra.push(format!("run.output_dir={}", d.display()));
    }
    load_config(&args.cfg, &extra)
}

fn output_json(out: &RunOutput) -> String {
    match out {
        RunOutput::Path(p) => to_json(p),
        RunOutput::Search(r) => to_json(r),
    }
}

pub fn search(args: &SearchArgs) -> Result<String> {
    let cfg = run_config(&args.run)?;
    let mode = if args.step1_only {
        RunMode::Step1Only
    } else if args.step2_only {
        let text = args.path.as_deref().expect("clap requires --path");
        RunMode::Step2Only(parse_path(text, &cfg.run.space)?)
    } else {
        if args.path.is_some() {
            return Err(CliError::Usage(
                "--path only applies with --step2-only".into(),
            ));
        }
        RunMode::TwoStep
    };
    Ok(output_json(&execute(&cfg, &mode)?))
}

pub fn random(args: &RandomArgs) -> Result<String> {
    let mut cfg = run_config(&args.run)?;
    if let Some(n) = args.n {
        if n == 0 {
            return Err(CliError::Usage("--n must be >= 1".into()));
        }
        cfg.run.random_candidates = n;
    }
    Ok(output_json(&execute(&cfg, &RunMode::Random)?))
}
