//! Command-line front end. The `detkit` binary only parses arguments and
//! calls [`run`].

mod manifest;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{build_graph, genome_from_json, reparam_fold, DetectorGenome, RepBranchParams};
use crate::assign::{assign_images, read_assign_input, AlignOta, Assigner, Atss, CostOptions, SinkhornOta};
use crate::cost::{cost_report_with_latency, CountOptions, DeviceProfile};
use crate::error::{Error, Result};
use crate::json::deserialize_with_path;
use crate::losses::{
    components_from_samples, distill_weight, multi_scale_distill, Cwd, DistillSchedule, FeatureDistiller, LossBreakdown,
    LossComponents, LossSample, LossWeights, Mgd, Mimic, DEFAULT_QFL_BETA,
};
use crate::nas::{entropy_score, search_with_progress, SearchConfig};
use crate::tensor::{conv2d_forward, io::read_tensor, Tensor4};

pub use manifest::{hash_inputs, manifest_path, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Invariant(_) => EXIT_INTERNAL,
        _ => EXIT_INPUT,
    }
}

#[derive(Debug, Parser)]
#[command(name = "detkit", version, about = "Detector design toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AssignerKind {
    AlignOta,
    Sinkhorn,
    Atss,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Latency-constrained evolutionary search from a seed genome.
    Search {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-generation CSV for plotting.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// FLOPs, parameters and modeled latency of a genome.
    Cost {
        #[arg(long)]
        genome: PathBuf,
        /// Square input resolution overriding the genome's.
        #[arg(long)]
        res: Option<usize>,
        /// Profile JSON file or builtin name (t4-like, x86-like).
        #[arg(long, default_value = "t4-like")]
        profile: String,
        /// Also charge activations and batch norm.
        #[arg(long)]
        strict: bool,
        /// Aligned text table instead of JSON.
        #[arg(long)]
        table: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Training-free entropy score of a genome.
    Score {
        #[arg(long)]
        genome: PathBuf,
        #[arg(long)]
        res: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label assignment for every image of a detections document.
    Assign {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "align-ota")]
        assigner: AssignerKind,
        /// Only anchors inside the GT box are candidates.
        #[arg(long)]
        center_prior: bool,
    },
    /// Composite detection loss, optionally with feature distillation.
    Loss {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fold a multi-branch block into a single conv.
    Fold {
        #[arg(long)]
        block: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed of the random probe input used to check the fold.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parses `args` (without the program name) and runs. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(std::iter::once("detkit".into()).chain(args.into_iter().map(Into::into))) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("detkit: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Search {
            space,
            config,
            out,
            history,
            quiet,
        } => cmd_search(&space, &config, out.as_deref(), history.as_deref(), quiet),
        Command::Cost {
            genome,
            res,
            profile,
            strict,
            table,
            out,
        } => cmd_cost(&genome, res, &profile, strict, table, out.as_deref()),
        Command::Score { genome, res, out } => cmd_score(&genome, res, out.as_deref()),
        Command::Assign {
            input,
            out,
            assigner,
            center_prior,
        } => cmd_assign(&input, out.as_deref(), assigner, center_prior),
        Command::Loss { input, out } => cmd_loss(&input, out.as_deref()),
        Command::Fold { block, out, seed } => cmd_fold(&block, out.as_deref(), seed),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Schema {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    deserialize_with_path(value)
}

/// Writes `content` to `out` plus its manifest, or to stdout.
fn emit(content: &str, out: Option<&Path>, manifest: impl FnOnce(&Path) -> RunManifest) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, content)?;
            manifest(path).write_for(path)
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn load_genome(path: &Path, res: Option<usize>) -> Result<(String, DetectorGenome)> {
    let text = read(path)?;
    let mut genome = genome_from_json(&text)?;
    if let Some(r) = res {
        genome.input_res = [r, r];
        genome.validate()?;
    }
    Ok((text, genome))
}

/// A builtin profile name or a path to a profile JSON file.
pub fn load_profile(spec: &str) -> Result<(String, DeviceProfile)> {
    if let Some(p) = DeviceProfile::builtin(spec) {
        return Ok((serde_json::to_string(&p)?, p));
    }
    let text = read(Path::new(spec))?;
    let profile: DeviceProfile = parse(&text)?;
    profile.validate()?;
    Ok((text, profile))
}

fn cmd_search(space: &Path, config: &Path, out: Option<&Path>, history: Option<&Path>, quiet: bool) -> Result<()> {
    let started = manifest::now();
    let (genome_text, seed_genome) = load_genome(space, None)?;
    let config_text = read(config)?;
    let cfg: SearchConfig = parse(&config_text)?;
    cfg.validate()?;
    let outcome = search_with_progress(&seed_genome, &cfg, |r| {
        if !quiet {
            eprintln!(
                "generation {:>3}: best score {:.3} at {:.4} ms, archive {}",
                r.generation, r.best_score, r.best_latency_ms, r.archive_size
            );
        }
    })?;
    if let Some(h) = history {
        fs::write(h, outcome.history_csv()?)?;
    }
    let inputs = [genome_text.as_bytes(), config_text.as_bytes()];
    emit(&outcome.archive.to_ndjson()?, out, |p| {
        RunManifest::new("search", &inputs, Some(cfg.seed), started, p)
    })
}

fn cmd_cost(genome: &Path, res: Option<usize>, profile: &str, strict: bool, table: bool, out: Option<&Path>) -> Result<()> {
    let started = manifest::now();
    let (text, genome) = load_genome(genome, res)?;
    let (profile_text, profile) = load_profile(profile)?;
    let graph = build_graph(&genome)?;
    let report = cost_report_with_latency(&graph, CountOptions { strict }, &profile)?;
    report.check_consistency()?;
    let body = if table {
        report.to_table()
    } else {
        serde_json::to_string_pretty(&report)? + "\n"
    };
    let res_text = res.map(|r| r.to_string()).unwrap_or_default();
    let inputs = [text.as_bytes(), profile_text.as_bytes(), res_text.as_bytes()];
    emit(&body, out, |p| RunManifest::new("cost", &inputs, None, started, p))
}

fn cmd_score(genome: &Path, res: Option<usize>, out: Option<&Path>) -> Result<()> {
    let started = manifest::now();
    let (text, genome) = load_genome(genome, res)?;
    let score = entropy_score(&build_graph(&genome)?)?;
    let body = serde_json::to_string_pretty(&score)? + "\n";
    let res_text = res.map(|r| r.to_string()).unwrap_or_default();
    let inputs = [text.as_bytes(), res_text.as_bytes()];
    emit(&body, out, |p| RunManifest::new("score", &inputs, None, started, p))
}

fn cmd_assign(input: &Path, out: Option<&Path>, kind: AssignerKind, center_prior: bool) -> Result<()> {
    let started = manifest::now();
    let text = read(input)?;
    let doc = read_assign_input(&text)?;
    let cost = CostOptions {
        center_prior,
        ..Default::default()
    };
    let assigner: Box<dyn Assigner> = match kind {
        AssignerKind::AlignOta => Box::new(AlignOta { cost }),
        AssignerKind::Sinkhorn => Box::new(SinkhornOta {
            cost,
            ..Default::default()
        }),
        AssignerKind::Atss => Box::new(Atss::default()),
    };
    let results = assign_images(&doc, assigner.as_ref())?;
    let mut body = String::new();
    for r in &results {
        r.result.check_invariants()?;
        for g in &r.result.empty_gts {
            eprintln!("warning: image {} ground truth {g} has no candidate predictions", r.image);
        }
        body.push_str(&serde_json::to_string(r)?);
        body.push('\n');
    }
    let flags = format!("{kind:?}/{center_prior}");
    let inputs = [text.as_bytes(), flags.as_bytes()];
    emit(&body, out, |p| RunManifest::new("assign", &inputs, None, started, p))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillMethod {
    #[default]
    Cwd,
    Mimic,
    Mgd,
}

/// One feature level: raw tensor sidecars, relative to the loss input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillLevel {
    pub teacher: String,
    pub student: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillInput {
    #[serde(default)]
    pub method: DistillMethod,
    pub epoch: f64,
    #[serde(default)]
    pub schedule: DistillSchedule,
    pub levels: Vec<DistillLevel>,
    /// Per-level weights; equal weights when absent.
    #[serde(default)]
    pub level_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

/// Loss input: either precomputed `components` or per-positive `samples`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossInput {
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub components: Option<LossComponents>,
    #[serde(default)]
    pub samples: Option<Vec<LossSample>>,
    #[serde(default = "default_beta")]
    pub qfl_beta: f64,
    #[serde(default)]
    pub distill: Option<DistillInput>,
}

fn default_beta() -> f64 {
    DEFAULT_QFL_BETA
}

/// Evaluates a loss document; sidecar paths resolve against `base`.
pub fn evaluate_loss_input(input: &LossInput, base: &Path) -> Result<LossBreakdown> {
    let components = match (&input.components, &input.samples) {
        (Some(c), None) => *c,
        (None, Some(s)) => components_from_samples(s, input.qfl_beta)?,
        _ => {
            return Err(Error::Schema {
                path: String::new(),
                msg: "exactly one of `components` or `samples` is required".into(),
            })
        }
    };
    let (distill, weight) = match &input.distill {
        None => (0.0, 0.0),
        Some(d) => {
            d.schedule.validate()?;
            let mut levels = Vec::with_capacity(d.levels.len());
            for l in &d.levels {
                levels.push((read_tensor(&base.join(&l.teacher))?, read_tensor(&base.join(&l.student))?));
            }
            let distiller: Box<dyn FeatureDistiller> = match d.method {
                DistillMethod::Cwd => Box::new(Cwd),
                DistillMethod::Mimic => Box::new(Mimic),
                DistillMethod::Mgd => {
                    let c = levels.first().map_or(1, |(t, _)| t.channels());
                    Box::new(Mgd::new(c, 0.65, d.seed))
                }
            };
            let loss = multi_scale_distill(distiller.as_ref(), &levels, d.level_weights.as_deref())?;
            (loss, distill_weight(d.epoch, &d.schedule))
        }
    };
    LossBreakdown::new(&components, &input.weights, distill, weight)
}

fn cmd_loss(input: &Path, out: Option<&Path>) -> Result<()> {
    let started = manifest::now();
    let text = read(input)?;
    let doc: LossInput = parse(&text)?;
    let base = input.parent().unwrap_or_else(|| Path::new("."));
    let breakdown = evaluate_loss_input(&doc, base)?;
    let body = serde_json::to_string_pretty(&breakdown)? + "\n";
    emit(&body, out, |p| RunManifest::new("loss", &[text.as_bytes()], None, started, p))
}

/// Tolerance of the folded-versus-branched probe check.
pub const FOLD_TOLERANCE: f64 = 1e-4;

fn cmd_fold(block: &Path, out: Option<&Path>, seed: u64) -> Result<()> {
    let started = manifest::now();
    let text = read(block)?;
    let params: RepBranchParams = parse(&text)?;
    let folded = reparam_fold(&params)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = Tensor4::from_fn([1, folded.in_ch, 7, 7], |_, _, _, _| rng.gen_range(-1.0..1.0))?;
    let gap = conv2d_forward(&probe, &folded)?.max_abs_diff(&params.forward_branches(&probe)?)?;
    eprintln!("fold check: max |folded - branched| = {gap:.3e} on a 7x7 probe (seed {seed})");
    if !(gap <= FOLD_TOLERANCE) {
        return Err(Error::Invariant(format!("folded conv deviates from branches by {gap}")));
    }
    let body = serde_json::to_string_pretty(&folded)? + "\n";
    emit(&body, out, |p| RunManifest::new("fold", &[text.as_bytes()], Some(seed), started, p))
}
