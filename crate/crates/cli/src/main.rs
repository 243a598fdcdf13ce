use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gatar::agent::Composition;
use gatar::model::{ModelParams, Tying};
use gatar::pipeline::{
    evaluate, evaluate_baseline, generate_dataset, generate_test_set, read_dataset, run_ablation, sweep_comm, train,
    write_dataset, write_loss_csv, write_metrics_csv, AblationVariant, Baseline, DatasetConfig, EvalOverrides,
    MetricsRow, TrainConfig,
};
use gatar::rollout::{self, Allocator, RolloutConfig};
use gatar::world::{generate_world, save_world, WorldConfig};

/// Environment variable that roots relative `--out` paths.
const OUT_ROOT_ENV: &str = "GATAR_OUT_ROOT";

/// Heterogeneous multi-robot task allocation: data, training, evaluation and rollouts.
#[derive(Parser, Serialize)]
#[command(name = "gatar", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Serialize)]
struct Global {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for sample-level parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Generate one random map and write it as TOML.
    GenWorld(GenWorld),
    /// Generate a labelled dataset of team snapshots.
    GenData(GenData),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a baseline on a test set.
    Eval(EvalArgs),
    /// Evaluate a checkpoint over a range of communication radii.
    SweepComm(SweepArgs),
    /// Train and evaluate ablation variants under one budget.
    Ablate(AblateArgs),
    /// Run sequential missions with an allocator.
    Rollout(RolloutArgs),
    /// Render a stored episode to PPM frames and a coverage CSV.
    Render(RenderArgs),
}

#[derive(Args, Serialize)]
struct WorldArgs {
    /// Map width in cells.
    #[arg(long, default_value_t = 15)]
    width: usize,
    /// Map height in cells.
    #[arg(long, default_value_t = 15)]
    height: usize,
    /// Obstacle density inside rich sub-areas.
    #[arg(long, default_value_t = 0.3)]
    density: f64,
}

impl WorldArgs {
    fn config(&self) -> WorldConfig {
        WorldConfig { width: self.width, height: self.height, density: self.density, ..Default::default() }
    }
}

#[derive(Args, Serialize)]
struct GenWorld {
    #[command(flatten)]
    world: WorldArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Split {
    Train,
    Test,
}

#[derive(Args, Serialize)]
struct GenData {
    #[command(flatten)]
    world: WorldArgs,
    /// Number of maps.
    #[arg(long, default_value_t = 100)]
    maps: usize,
    /// Team placements per map.
    #[arg(long, default_value_t = 10)]
    samples_per_map: usize,
    /// Team composition, e.g. 2A2G for two UAVs and two UGVs.
    #[arg(long, default_value = "2A2G")]
    team: String,
    /// Targets per agent.
    #[arg(long, default_value_t = 10)]
    targets_per_agent: usize,
    /// Replace every agent's communication radius.
    #[arg(long)]
    r_comm: Option<f64>,
    /// Seed stream: training pool or held-out test maps.
    #[arg(long, value_enum, default_value_t = Split::Train)]
    split: Split,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Dataset file from gen-data.
    #[arg(long)]
    data: PathBuf,
    /// Feature ablation / architecture variant.
    #[arg(long, default_value = "full")]
    variant: String,
    /// Share parameters between the first downward layer and the skip layers.
    #[arg(long)]
    tied: bool,
    /// Maximum training epochs.
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
    /// Early-stopping patience in epochs (0 disables).
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Wall-clock budget in seconds.
    #[arg(long, default_value_t = 1800.0)]
    time_budget: f64,
    /// Samples per gradient step.
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Validation share of the dataset.
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum BaselineArg {
    GreedyNoComm,
    Random,
    Expert,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    /// Model checkpoint (required unless --baseline is given).
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Test dataset file.
    #[arg(long)]
    test: PathBuf,
    /// Evaluate a baseline allocator instead of a checkpoint.
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
    /// Inference-time communication radius for every agent.
    #[arg(long)]
    r_comm: Option<f64>,
    /// Variant the checkpoint was trained as (selects feature preprocessing).
    #[arg(long, default_value = "full")]
    variant: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    /// Model checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Test dataset file.
    #[arg(long)]
    test: PathBuf,
    /// Inclusive integer range of radii, as LO:HI.
    #[arg(long, default_value = "0:7")]
    range: String,
    /// Variant the checkpoint was trained as (selects feature preprocessing).
    #[arg(long, default_value = "full")]
    variant: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct AblateArgs {
    /// Training dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Test dataset file.
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated variants; the full model is always added.
    #[arg(long, default_value = "none_of_preprocessing,no_EC,no_PM,no_vcycle_shortcut")]
    variants: String,
    /// Maximum training epochs.
    #[arg(long, default_value_t = 200)]
    max_epochs: usize,
    /// Wall-clock budget per variant in seconds.
    #[arg(long, default_value_t = 1800.0)]
    time_budget: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum AllocatorArg {
    Gatar,
    GreedyNoComm,
    Random,
    Expert,
}

#[derive(Args, Serialize)]
struct RolloutArgs {
    /// Task allocator.
    #[arg(long, value_enum, default_value_t = AllocatorArg::Expert)]
    allocator: AllocatorArg,
    /// Checkpoint for the gatar allocator.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Variant the checkpoint was trained as (selects feature preprocessing).
    #[arg(long, default_value = "full")]
    variant: String,
    /// Number of missions, each on a fresh map.
    #[arg(long, default_value_t = 1)]
    episodes: usize,
    /// Team composition, e.g. 2A2G for two UAVs and two UGVs.
    #[arg(long, default_value = "2A2G")]
    team: String,
    /// Targets per episode (default: 10 per agent).
    #[arg(long)]
    targets: Option<usize>,
    /// Step budget per mission.
    #[arg(long, default_value_t = 40)]
    steps: usize,
    /// Re-allocate every agent every step instead of committing to tasks.
    #[arg(long)]
    reallocate: bool,
    #[command(flatten)]
    world: WorldArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct RenderArgs {
    /// Episode JSON written by rollout.
    #[arg(long)]
    episode: PathBuf,
    /// Pixels per cell.
    #[arg(long, default_value_t = 16)]
    scale: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn resolve_out(out: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if out.is_relative() => PathBuf::from(root).join(out),
        _ => out.to_path_buf(),
    }
}

/// Creates the output directory and stores the exact invocation in it.
fn prepare_out(out: &Path, cli: &Cli) -> Result<PathBuf> {
    let dir = resolve_out(out);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let snapshot = serde_json::json!({
        "argv": std::env::args().collect::<Vec<_>>(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cli,
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&snapshot)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(dir)
}

fn variant(name: &str) -> Result<AblationVariant> {
    name.parse().map_err(|e| anyhow::anyhow!("{e}"))
}

fn composition(s: &str) -> Result<Composition> {
    s.parse().with_context(|| format!("bad --team {s:?} (expected mAnG, e.g. 2A2G)"))
}

fn parse_range(s: &str) -> Result<Vec<f64>> {
    let (lo, hi) = s.split_once(':').with_context(|| format!("bad --range {s:?} (expected LO:HI)"))?;
    let (lo, hi): (u32, u32) = (lo.trim().parse()?, hi.trim().parse()?);
    if lo > hi {
        bail!("bad --range {s:?}: LO exceeds HI");
    }
    Ok((lo..=hi).map(f64::from).collect())
}

fn load_model(path: &Path) -> Result<ModelParams> {
    Ok(ModelParams::load(path)?)
}

fn run(cli: &Cli) -> Result<()> {
    let seed = cli.global.seed;
    match &cli.command {
        Command::GenWorld(a) => {
            let dir = prepare_out(&a.out, cli)?;
            let world = generate_world(&a.world.config(), seed)?;
            save_world(&world, &dir.join("world.toml"))?;
            println!("{}", dir.join("world.toml").display());
        }
        Command::GenData(a) => {
            let dir = prepare_out(&a.out, cli)?;
            let config = DatasetConfig {
                world: a.world.config(),
                maps: a.maps,
                samples_per_map: a.samples_per_map,
                team: composition(&a.team)?,
                targets_per_agent: a.targets_per_agent,
                r_comm: a.r_comm,
                ..Default::default()
            };
            let data = match a.split {
                Split::Train => generate_dataset(&config, seed)?,
                Split::Test => generate_test_set(&config, seed)?,
            };
            let path = dir.join("dataset.bin");
            write_dataset(&path, &data)?;
            println!("{} samples -> {}", data.samples.len(), path.display());
        }
        Command::Train(a) => {
            let data = read_dataset(&a.data)?;
            let dir = prepare_out(&a.out, cli)?;
            let mut base = TrainConfig {
                max_epochs: a.max_epochs,
                patience: (a.patience > 0).then_some(a.patience),
                time_budget_secs: a.time_budget,
                batch_size: a.batch_size,
                val_fraction: a.val_fraction,
                seed,
                ..Default::default()
            };
            base.adam.lr = a.lr;
            if a.tied {
                base.model.tying = Tying::Tied;
            }
            let config = variant(&a.variant)?.apply(&base);
            let out = train(&data.samples, &config)?;
            out.params.save(&dir.join("model.bin"))?;
            write_loss_csv(&dir.join("loss.csv"), &out.curve)?;
            println!(
                "best epoch {} val dist_50 {:.3} ({:?}) -> {}",
                out.best_epoch,
                out.best_val_dist50,
                out.stop,
                dir.join("model.bin").display()
            );
        }
        Command::Eval(a) => {
            let test = read_dataset(&a.test)?;
            let team = test.header.config.team.to_string();
            let (name, report) = match (a.baseline, &a.ckpt) {
                (Some(b), _) => {
                    let b = match b {
                        BaselineArg::GreedyNoComm => Baseline::GreedyNoComm,
                        BaselineArg::Random => Baseline::Random,
                        BaselineArg::Expert => Baseline::Expert,
                    };
                    (b.name().to_string(), evaluate_baseline(&test.samples, b, seed))
                }
                (None, Some(ckpt)) => {
                    let params = load_model(ckpt)?;
                    let v = variant(&a.variant)?;
                    let overrides = EvalOverrides { r_comm: a.r_comm, ablation: v.ablation() };
                    (v.name().to_string(), evaluate(&params, &test.samples, &overrides)?)
                }
                (None, None) => bail!("eval needs --ckpt or --baseline"),
            };
            let dir = prepare_out(&a.out, cli)?;
            write_metrics_csv(&dir.join("metrics.csv"), &[MetricsRow::new(name, a.r_comm, team, &report)])?;
            println!("dist_avg {:.3} dist_50 {:.3} dist_90 {:.3} n {}", report.dist_avg, report.dist_50, report.dist_90, report.n);
        }
        Command::SweepComm(a) => {
            let ranges = parse_range(&a.range)?;
            let params = load_model(&a.ckpt)?;
            let test = read_dataset(&a.test)?;
            let dir = prepare_out(&a.out, cli)?;
            let v = variant(&a.variant)?;
            let team = test.header.config.team.to_string();
            let rows: Vec<MetricsRow> = sweep_comm(&params, &test.samples, &ranges, v.ablation())?
                .iter()
                .map(|(r, m)| MetricsRow::new(v.name(), Some(*r), team.clone(), m))
                .collect();
            write_metrics_csv(&dir.join("sweep.csv"), &rows)?;
            for r in &rows {
                println!("r_comm {:>4} dist_50 {:.3} dist_90 {:.3}", r.r_comm.unwrap_or_default(), r.dist_50, r.dist_90);
            }
        }
        Command::Ablate(a) => {
            let variants = a.variants.split(',').map(|s| variant(s.trim())).collect::<Result<Vec<_>>>()?;
            let data = read_dataset(&a.data)?;
            let test = read_dataset(&a.test)?;
            let dir = prepare_out(&a.out, cli)?;
            let base = TrainConfig { max_epochs: a.max_epochs, time_budget_secs: a.time_budget, seed, ..Default::default() };
            let team = test.header.config.team.to_string();
            let rows: Vec<MetricsRow> = run_ablation(&variants, &data.samples, &test.samples, &base)?
                .iter()
                .map(|r| MetricsRow::new(r.variant.name(), None, team.clone(), &r.report))
                .collect();
            write_metrics_csv(&dir.join("ablation.csv"), &rows)?;
            for r in &rows {
                println!("{:<24} dist_50 {:.3} dist_avg {:.3}", r.config, r.dist_50, r.dist_avg);
            }
        }
        Command::Rollout(a) => {
            let team = composition(&a.team)?;
            let allocator = match a.allocator {
                AllocatorArg::Gatar => {
                    let ckpt = a.ckpt.as_ref().context("the gatar allocator needs --ckpt")?;
                    Allocator::Gatar { params: Box::new(load_model(ckpt)?), ablation: variant(&a.variant)?.ablation() }
                }
                AllocatorArg::GreedyNoComm => Allocator::GreedyNoComm,
                AllocatorArg::Random => Allocator::Random { seed },
                AllocatorArg::Expert => Allocator::Expert,
            };
            let dir = prepare_out(&a.out, cli)?;
            let config = RolloutConfig { max_steps: a.steps, reallocate_every_step: a.reallocate, ..Default::default() };
            let targets = a.targets.unwrap_or(10 * team.size());
            let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
            summary.write_record(["episode", "allocator", "covered", "steps_to_completion"])?;
            for k in 0..a.episodes {
                let (world, agents) =
                    rollout::random_mission(&a.world.config(), team, targets, gatar::seed::derive_seed(seed, k as u64))?;
                let report = rollout::run_episode(world, agents, &allocator, &config)?;
                rollout::save_episode(&report.episode, &dir.join(format!("episode_{k:03}.json")))?;
                let done = report.steps_to_completion.map_or(String::new(), |s| s.to_string());
                summary.write_record([k.to_string(), allocator.name().into(), report.total.to_string(), done])?;
                println!("episode {k}: {} of {targets} targets localized", report.total);
            }
            summary.flush()?;
        }
        Command::Render(a) => {
            let episode = rollout::load_episode(&a.episode)?;
            let dir = prepare_out(&a.out, cli)?;
            let frames = rollout::render_frames(&episode, &dir, a.scale)?;
            println!("{} frames -> {}", frames.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
