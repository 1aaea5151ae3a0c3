use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use nalgebra::Vector3;

use viewplan::io::{self, IoError};
use viewplan::sdsmm::{train, DiagonalParams, NoiseModel, SdsmmError};
use viewplan::sim::{self, ExperimentConfig, Mode, SimError, Strategy};
use viewplan::world::raycast;

#[derive(Parser)]
#[command(name = "viewplan", version, about = "Uncertainty-aware viewpoint planning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare search strategies on seeded random maps.
    Numeval {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed range, `a..b` (exclusive) or `a..=b`.
        #[arg(long)]
        seeds: Option<String>,
        /// Comma-separated subset of de,brute,random,center.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
    },
    /// Drive the rover along the waypoint course with one strategy.
    Sim {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        strategy: Option<String>,
        /// Output directory; defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run seed; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the trainable diagonal noise model to a measurement dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
    },
    /// Cast one ray through a saved map.
    RaycastDebug {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, value_parser = parse_point)]
        from: [f64; 3],
        #[arg(long, value_parser = parse_point)]
        to: [f64; 3],
    },
}

/// Failure classes, mapped to exit codes 1 and 2.
enum Failure {
    Invalid(anyhow::Error),
    Experiment(anyhow::Error),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => Failure::Invalid(e.into()),
            other => Failure::Experiment(other.into()),
        }
    }
}

fn invalid<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Invalid(e.into())
}

fn failed<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Experiment(e.into())
}

fn parse_point(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| "expected three comma-separated numbers".to_string())
}

fn parse_seeds(s: &str) -> anyhow::Result<Vec<u64>> {
    let (a, b, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b, false)
    } else {
        let one = s.trim().parse().context("seed")?;
        return Ok(vec![one]);
    };
    let a: u64 = a.trim().parse().context("seed range start")?;
    let b: u64 = b.trim().parse().context("seed range end")?;
    let seeds: Vec<u64> = if inclusive { (a..=b).collect() } else { (a..b).collect() };
    if seeds.is_empty() {
        bail!("empty seed range {s:?}");
    }
    Ok(seeds)
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .map_err(invalid)?;
            ExperimentConfig::from_json(&text)
                .with_context(|| format!("in {}", p.display()))
                .map_err(invalid)
        }
    }
}

/// `--out` wins over the config's `output_dir`. The echoed config is left
/// as given so outputs do not depend on where they are written.
fn output_dir(out: Option<&Path>, cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .ok_or_else(|| invalid(anyhow!("no output directory: pass --out or set output_dir")))
}

fn prepare_out(dir: &Path, cfg: &ExperimentConfig) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(failed)?;
    io::write_json_file(&dir.join("config.json"), cfg).map_err(failed)
}

fn create(path: &Path) -> Result<fs::File, Failure> {
    fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(failed)
}

fn numeval(
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
    config: Option<&Path>,
    out: Option<&Path>,
    seeds: Option<&str>,
    strategies: Option<&[String]>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    cfg.mode = Mode::Numeval;
    if let Some(s) = seeds {
        cfg.seeds = parse_seeds(s).map_err(invalid)?;
    }
    let strategies: Vec<Strategy> = match strategies {
        None => Strategy::ALL.to_vec(),
        Some(names) => names.iter().map(|n| n.parse()).collect::<Result<_, _>>().map_err(invalid)?,
    };
    cfg.validate().map_err(invalid)?;
    let out = &output_dir(out, &cfg)?;
    prepare_out(out, &cfg)?;

    let result = sim::numerical_experiment(&cfg, &strategies)?;
    let summary = sim::summarize(&result);
    io::write_json_file(&out.join("summary.json"), &summary).map_err(failed)?;
    io::write_per_map(create(&out.join("per_map.csv"))?, &result.maps).map_err(failed)?;

    for f in &result.failures {
        writeln!(stderr, "map {} excluded: {}", f.seed, f.error).map_err(failed)?;
    }
    for s in &summary.strategies {
        let show = |c: Option<f64>| c.map_or("inf".to_string(), |v| format!("{v:.4}"));
        writeln!(
            stdout,
            "{:<7} maps {:>3}  cost min {} median {} max {}  evaluations median {}",
            s.strategy,
            s.maps,
            show(s.cost_min),
            show(s.cost_median),
            show(s.cost_max),
            s.evaluations_median
        )
        .map_err(failed)?;
    }
    if result.maps.is_empty() {
        return Err(failed(anyhow!("every map failed")));
    }
    Ok(())
}

fn run_sim(stdout: &mut dyn Write, config: Option<&Path>, strategy: Option<&str>, out: Option<&Path>, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    cfg.mode = Mode::Sim;
    if let Some(s) = strategy {
        cfg.strategy = s.parse().map_err(invalid)?;
    }
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    cfg.validate().map_err(invalid)?;
    let out = &output_dir(out, &cfg)?;
    prepare_out(out, &cfg)?;

    let log = sim::run_rendezvous_loop(&cfg, cfg.seeds[0])?;
    io::write_trajectory(create(&out.join("trajectory.csv"))?, &log).map_err(failed)?;
    let summary = log.summary(cfg.record_timing);
    io::write_json_file(&out.join("metrics.json"), &summary).map_err(failed)?;
    let e = &summary.error;
    writeln!(
        stdout,
        "{} seed {}: rmse {:.4} m, median {:.4}, mean {:.4}, stdev {:.4}, max {:.4}; {} of {} waypoints measured",
        summary.strategy, summary.seed, e.rmse, e.median, e.mean, e.stdev, e.max, summary.updated, summary.waypoints
    )
    .map_err(failed)
}

fn run_train(stdout: &mut dyn Write, data: &Path, out: &Path, steps: usize, lr: f64) -> Result<(), Failure> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(invalid(anyhow!("--lr must be positive")));
    }
    let dataset = io::load_dataset(data)
        .with_context(|| format!("reading {}", data.display()))
        .map_err(invalid)?;
    let n = dataset.len().max(1) as f64;
    let start_var = dataset.records.iter().map(|r| r.error.norm_squared()).sum::<f64>() / (2.0 * n);
    let init = DiagonalParams::constant(start_var.max(1e-4));
    let (fit, report) = match train(&init, &dataset, steps, lr) {
        Ok(x) => x,
        Err(e @ (SdsmmError::TooFewRecords { .. } | SdsmmError::EmptyDataset)) => return Err(invalid(e)),
        Err(e) => return Err(failed(e)),
    };
    io::save_model(out, &NoiseModel::TrainableDiagonal(fit)).map_err(failed)?;
    writeln!(stdout, "final_loss {}", report.final_loss).map_err(failed)?;
    writeln!(stdout, "steps {}", report.steps).map_err(failed)
}

fn raycast_debug(stdout: &mut dyn Write, map: &Path, from: [f64; 3], to: [f64; 3]) -> Result<(), Failure> {
    let world = io::load_map(map)
        .with_context(|| format!("reading {}", map.display()))
        .map_err(|e: anyhow::Error| match e.downcast_ref::<IoError>() {
            Some(IoError::Io(_)) | None => Failure::Experiment(e),
            Some(_) => Failure::Invalid(e),
        })?;
    let origin = Vector3::from(from);
    let delta = Vector3::from(to) - origin;
    let hit = raycast(&world.grid, &origin, &delta, delta.norm()).map_err(invalid)?;
    writeln!(stdout, "hit {}", hit.hit).map_err(failed)?;
    writeln!(stdout, "distance {}", hit.distance).map_err(failed)?;
    match hit.voxel {
        Some([i, j, k]) => {
            let c = world.grid.voxel_center([i, j, k]);
            writeln!(stdout, "voxel {i},{j},{k}").map_err(failed)?;
            writeln!(stdout, "voxel_center {},{},{}", c.x, c.y, c.z).map_err(failed)
        }
        None => writeln!(stdout, "voxel none").map_err(failed),
    }
}

/// Runs one command line and returns the process exit code.
fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render();
            return if e.use_stderr() {
                let _ = write!(stderr, "{}", text.ansi());
                1
            } else {
                let _ = write!(stdout, "{}", text.ansi());
                0
            };
        }
    };
    let result = match &cli.command {
        Command::Numeval {
            config,
            out,
            seeds,
            strategies,
        } => numeval(stdout, stderr, config.as_deref(), out.as_deref(), seeds.as_deref(), strategies.as_deref()),
        Command::Sim {
            config,
            strategy,
            out,
            seed,
        } => run_sim(stdout, config.as_deref(), strategy.as_deref(), out.as_deref(), *seed),
        Command::Train { data, out, steps, lr } => run_train(stdout, data, out, *steps, *lr),
        Command::RaycastDebug { map, from, to } => raycast_debug(stdout, map, *from, *to),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Invalid(e)) => {
            let _ = writeln!(stderr, "error: {e:#}");
            1
        }
        Err(Failure::Experiment(e)) => {
            let _ = writeln!(stderr, "error: {e:#}");
            2
        }
    }
}

fn main() -> ExitCode {
    let code = run(std::env::args_os(), &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    ExitCode::from(code)
}
