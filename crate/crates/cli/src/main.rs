use advscene::{FusionMode, Layout, SceneGenConfig};
use advscene_cli::config::{ConfigFile, Resolver};
use advscene_cli::runner::{self, CurateViewpoints};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "advscene",
    version,
    about = "Adversarial scene search for cooperative LiDAR perception",
    after_help = "Flags may also come from a config file: [shared] applies to every \
                  subcommand, a [attack]-style section to one. Command-line flags win."
)]
struct Cli {
    /// Flat sectioned key-value config file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random scenes as JSON files.
    GenScenes(GenScenesCli),
    /// Keep the scenes whose boxes collect few LiDAR points on average.
    Curate(CurateCli),
    /// Run the two-stage attack and write CSV rows, reports and adversarial scenes.
    Attack(AttackCli),
    /// Compare optimizers on a shared per-scene collaborator stage.
    Bench(BenchCli),
    /// Attack against each model, then score every model on the saved results.
    Transfer(TransferCli),
    /// Draw scenes as SVG.
    Render(RenderCli),
}

#[derive(Args, Default)]
struct SharedArgs {
    /// Scene source: a directory, a file, or a comma list of files.
    #[arg(long)]
    scenes: Option<String>,
    /// Surrogate model: no-fusion, late, early or att. Comma list where a
    /// command accepts several.
    #[arg(long)]
    model: Option<String>,
    /// Optimizer: rs, ga or bo. Comma list where a command accepts several.
    #[arg(long)]
    optimizer: Option<String>,
    /// Scene evaluations allowed in the perturbation stage.
    #[arg(long)]
    budget: Option<usize>,
    /// Collaboration size, ego included.
    #[arg(long)]
    k: Option<usize>,
    /// Collaborator combinations sampled per scene.
    #[arg(long)]
    k0: Option<usize>,
    /// Softmax temperature over combination weakness.
    #[arg(long)]
    tau: Option<f64>,
    /// Agents perturbed per scene.
    #[arg(long = "m-targets")]
    m_targets: Option<usize>,
    /// Uniform draws when building the feasible perturbation set.
    #[arg(long)]
    nq: Option<usize>,
    /// Seed, or a comma list to repeat the run.
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct AttackCli {
    #[command(flatten)]
    shared: SharedArgs,
    /// Record wall-clock milliseconds in the post_aps rows. Off by default
    /// so reruns are byte-identical.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct BenchCli {
    #[command(flatten)]
    shared: SharedArgs,
    /// Record wall-clock milliseconds per row.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct TransferCli {
    #[command(flatten)]
    shared: SharedArgs,
}

#[derive(Args)]
struct GenScenesCli {
    /// How many scenes to write.
    #[arg(long)]
    count: Option<usize>,
    /// Agent placement: uniform or corridor.
    #[arg(long)]
    layout: Option<String>,
    #[arg(long = "n-agents")]
    n_agents: Option<usize>,
    #[arg(long = "n-intelligent")]
    n_intelligent: Option<usize>,
    #[arg(long = "n-infrastructure")]
    n_infrastructure: Option<usize>,
    #[arg(long = "n-obstacles")]
    n_obstacles: Option<usize>,
    /// Half extent of the square map in meters.
    #[arg(long = "map-half")]
    map_half: Option<f64>,
    #[arg(long = "sensor-range")]
    sensor_range: Option<f64>,
    #[arg(long)]
    beams: Option<u32>,
    /// Give the last non-ego intelligent vehicle this sensor range instead.
    #[arg(long = "weak-sensor-range")]
    weak_sensor_range: Option<f64>,
    /// Extra clearance between footprints at placement time.
    #[arg(long = "min-gap")]
    min_gap: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct CurateCli {
    #[arg(long)]
    scenes: Option<String>,
    /// Keep scenes whose average LiDAR points per box is below this.
    #[arg(long)]
    threshold: Option<f64>,
    /// Whose scans to pool: intelligent or ego.
    #[arg(long)]
    viewpoints: Option<String>,
    /// Copy kept scenes into this directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct RenderCli {
    #[arg(long)]
    scenes: Option<String>,
    /// Attack report to take the collaboration, targets and scene from.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Overlay this model's detections.
    #[arg(long)]
    model: Option<String>,
    /// Comma list of collaborator ids to outline.
    #[arg(long)]
    collab: Option<String>,
    /// Comma list of agent ids to circle.
    #[arg(long)]
    targets: Option<String>,
    /// Skip the LiDAR point overlay.
    #[arg(long = "no-lidar")]
    no_lidar: bool,
    /// Output directory, or an .svg path for a single scene.
    #[arg(long)]
    out: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{failures} unit(s) of work failed; see messages above");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Prints a status line; a closed stdout (the reader hung up, e.g. `| head`)
/// ends the process the way the default SIGPIPE disposition would.
fn say(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout();
    if out.write_all(text.as_bytes()).and_then(|_| out.write_all(b"\n")).is_err() {
        std::process::exit(141);
    }
}

fn run(cli: Cli) -> Result<usize> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::GenScenes(a) => {
            let settings = resolve_gen_scenes(&file, a)?;
            let paths = runner::run_gen_scenes(&settings)?;
            say(&format!("wrote {} scenes to {}", paths.len(), settings.out.display()));
            Ok(0)
        }
        Command::Curate(a) => {
            let settings = resolve_curate(&file, a)?;
            let out = runner::run_curate(&settings)?;
            for (id, avg) in &out.kept {
                say(&format!("keep {id} avg_points_per_box={avg:.2}"));
            }
            for (id, avg) in &out.dropped {
                say(&format!("drop {id} avg_points_per_box={avg:.2}"));
            }
            say(&format!(
                "kept {}/{} scenes below {}",
                out.kept.len(),
                out.kept.len() + out.dropped.len(),
                settings.threshold
            ));
            Ok(out.failures)
        }
        Command::Attack(a) => {
            let settings = resolve_attack(&file, a)?;
            let out = runner::run_attack(&settings)?;
            say(&format!(
                "wrote {} rows to {} ({} adversarial scenes and reports under {})",
                out.rows.len(),
                out.csv_path.display(),
                out.rows.len() / 3,
                settings.out.display()
            ));
            Ok(out.failures)
        }
        Command::Bench(a) => {
            let settings = resolve_bench(&file, a)?;
            let out = runner::run_bench(&settings)?;
            for (opt, med, mean) in &out.summary {
                say(&format!("{}: median l_adv {:.4}, mean {:.4}", opt.as_str(), med, mean));
            }
            say(&format!("wrote bench.csv and bench.md to {}", settings.out.display()));
            Ok(out.failures)
        }
        Command::Transfer(a) => {
            let settings = resolve_transfer(&file, a)?;
            let out = runner::run_transfer(&settings)?;
            for (ti, target) in out.models.iter().enumerate() {
                let cells: Vec<String> =
                    out.matrix[ti].iter().map(|v| format!("{v:.4}")).collect();
                say(&format!(
                    "evaluated {}: normal {:.4}, attacked [{}]",
                    target.as_str(),
                    out.normal[ti],
                    cells.join(", ")
                ));
            }
            say(&format!("wrote transfer.csv and transfer.md to {}", settings.out.display()));
            Ok(out.failures)
        }
        Command::Render(a) => {
            let settings = resolve_render(&file, a)?;
            let written = runner::run_render(&settings)?;
            for p in &written {
                say(&format!("wrote {}", p.display()));
            }
            Ok(0)
        }
    }
}

fn out_dir(r: &Resolver, cli: Option<String>, default: &str) -> PathBuf {
    PathBuf::from(r.string(cli, "out").unwrap_or_else(|| default.to_string()))
}

fn scenes_required(r: &Resolver, cli: Option<String>) -> Result<String> {
    r.string(cli, "scenes").context("--scenes is required (flag or config)")
}

struct SharedResolved {
    budget: usize,
    k: usize,
    k0: usize,
    tau: f64,
    m_targets: usize,
    nq: usize,
    seeds: Vec<u64>,
    jobs: usize,
}

fn resolve_shared_numbers(r: &Resolver, s: &SharedArgs) -> Result<SharedResolved> {
    Ok(SharedResolved {
        budget: r.parsed(s.budget, "budget", 50)?,
        k: r.parsed(s.k, "k", 3)?,
        k0: r.parsed(s.k0, "k0", 3)?,
        tau: r.parsed(s.tau, "tau", 0.03)?,
        m_targets: r.parsed(s.m_targets, "m-targets", 3)?,
        nq: r.parsed(s.nq, "nq", 1000)?,
        seeds: runner::parse_seeds(
            &r.string(s.seed.clone(), "seed").unwrap_or_else(|| "0".into()),
        )?,
        jobs: r.parsed(s.jobs, "jobs", 0)?,
    })
}

fn resolve_attack(file: &ConfigFile, a: AttackCli) -> Result<runner::AttackSettings> {
    let r = Resolver::new(file, "attack");
    let n = resolve_shared_numbers(&r, &a.shared)?;
    Ok(runner::AttackSettings {
        scenes: scenes_required(&r, a.shared.scenes)?,
        models: runner::parse_models(
            &r.string(a.shared.model, "model").unwrap_or_else(|| "att".into()),
        )?,
        optimizers: runner::parse_optimizers(
            &r.string(a.shared.optimizer, "optimizer").unwrap_or_else(|| "bo".into()),
        )?,
        budget: n.budget,
        k: n.k,
        k0: n.k0,
        tau: n.tau,
        m_targets: n.m_targets,
        nq: n.nq,
        seeds: n.seeds,
        jobs: n.jobs,
        out: out_dir(&r, a.shared.out, "out"),
        timing: r.flag(a.timing, "timing")?,
    })
}

fn resolve_bench(file: &ConfigFile, a: BenchCli) -> Result<runner::BenchSettings> {
    let r = Resolver::new(file, "bench");
    let n = resolve_shared_numbers(&r, &a.shared)?;
    let models = runner::parse_models(
        &r.string(a.shared.model, "model").unwrap_or_else(|| "att".into()),
    )?;
    Ok(runner::BenchSettings {
        scenes: scenes_required(&r, a.shared.scenes)?,
        model: models[0],
        optimizers: runner::parse_optimizers(
            &r.string(a.shared.optimizer, "optimizer").unwrap_or_else(|| "rs,ga,bo".into()),
        )?,
        budget: n.budget,
        k: n.k,
        k0: n.k0,
        tau: n.tau,
        m_targets: n.m_targets,
        nq: n.nq,
        seeds: if a.shared.seed.is_none() && r.string(None, "seed").is_none() {
            vec![0, 1, 2]
        } else {
            n.seeds
        },
        jobs: n.jobs,
        out: out_dir(&r, a.shared.out, "out"),
        timing: r.flag(a.timing, "timing")?,
    })
}

fn resolve_transfer(file: &ConfigFile, a: TransferCli) -> Result<runner::TransferSettings> {
    let r = Resolver::new(file, "transfer");
    let n = resolve_shared_numbers(&r, &a.shared)?;
    let optimizers = runner::parse_optimizers(
        &r.string(a.shared.optimizer, "optimizer").unwrap_or_else(|| "bo".into()),
    )?;
    Ok(runner::TransferSettings {
        scenes: scenes_required(&r, a.shared.scenes)?,
        models: runner::parse_models(
            &r.string(a.shared.model, "model").unwrap_or_else(|| "late,early,att".into()),
        )?,
        optimizer: optimizers[0],
        budget: n.budget,
        k: n.k,
        k0: n.k0,
        tau: n.tau,
        m_targets: n.m_targets,
        nq: n.nq,
        seed: n.seeds[0],
        jobs: n.jobs,
        out: out_dir(&r, a.shared.out, "out"),
    })
}

fn resolve_gen_scenes(file: &ConfigFile, a: GenScenesCli) -> Result<runner::GenScenesSettings> {
    let r = Resolver::new(file, "gen-scenes");
    let defaults = SceneGenConfig::default();
    let layout = match r.string(a.layout, "layout") {
        Some(s) => runner::parse_layout(&s)?,
        None => Layout::UniformField,
    };
    let map_half = r.parsed(a.map_half, "map-half", 40.0)?;
    let weak = match (a.weak_sensor_range, r.string(None, "weak-sensor-range")) {
        (Some(v), _) => Some(v),
        (None, Some(s)) => {
            Some(s.parse::<f64>().map_err(|e| anyhow::anyhow!("bad weak-sensor-range: {e}"))?)
        }
        (None, None) => None,
    };
    Ok(runner::GenScenesSettings {
        count: r.parsed(a.count, "count", 10)?,
        config: SceneGenConfig {
            layout,
            n_agents: r.parsed(a.n_agents, "n-agents", defaults.n_agents)?,
            n_intelligent: r.parsed(a.n_intelligent, "n-intelligent", defaults.n_intelligent)?,
            n_infrastructure: r
                .parsed(a.n_infrastructure, "n-infrastructure", defaults.n_infrastructure)?,
            n_obstacles: r.parsed(a.n_obstacles, "n-obstacles", defaults.n_obstacles)?,
            map_bounds: (-map_half, -map_half, map_half, map_half),
            sensor_range: r.parsed(a.sensor_range, "sensor-range", defaults.sensor_range)?,
            sensor_beams: r.parsed(a.beams, "beams", defaults.sensor_beams)?,
            weak_sensor_range: weak,
            min_gap: r.parsed(a.min_gap, "min-gap", defaults.min_gap)?,
        },
        seed: r.parsed(a.seed, "seed", 0)?,
        out: out_dir(&r, a.out, "scenes"),
    })
}

fn resolve_curate(file: &ConfigFile, a: CurateCli) -> Result<runner::CurateSettings> {
    let r = Resolver::new(file, "curate");
    let viewpoints: CurateViewpoints = r
        .string(a.viewpoints, "viewpoints")
        .unwrap_or_else(|| "intelligent".into())
        .parse()
        .map_err(anyhow::Error::msg)?;
    Ok(runner::CurateSettings {
        scenes: scenes_required(&r, a.scenes)?,
        threshold: r.parsed(a.threshold, "threshold", 25.0)?,
        viewpoints,
        out: r.string(a.out, "out").map(PathBuf::from),
    })
}

fn resolve_render(file: &ConfigFile, a: RenderCli) -> Result<runner::RenderSettings> {
    let r = Resolver::new(file, "render");
    let model = match r.string(a.model, "model") {
        Some(s) => Some(s.parse::<FusionMode>().map_err(anyhow::Error::msg)?),
        None => None,
    };
    let ids = |cli: Option<String>, key: &str| -> Result<Vec<u64>> {
        match r.string(cli, key) {
            Some(s) => runner::parse_ids(&s),
            None => Ok(Vec::new()),
        }
    };
    Ok(runner::RenderSettings {
        scenes: r.string(a.scenes, "scenes"),
        report: a.report.or_else(|| r.string(None, "report").map(PathBuf::from)),
        model,
        collab: ids(a.collab, "collab")?,
        targets: ids(a.targets, "targets")?,
        lidar: !r.flag(a.no_lidar, "no-lidar")?,
        out: PathBuf::from(r.string(a.out, "out").unwrap_or_else(|| "render".into())),
    })
}
