use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lppm::bench::{run_sweep, write_csv, ExperimentSpec, ScenarioKind, SweepHeader};
use lppm::ingest::{open_checkins, for_each_checkin, write_poi_csv, CountMode, PriorBuilder, Region};
use lppm::{LppmError, Result};

#[derive(Parser)]
#[command(name = "lppm", version, about = "Location privacy mechanisms: ingest check-ins and run metric sweeps")]
struct Cli {
    /// Master seed; overrides the one in the experiment spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Count {
    Events,
    Users,
}

#[derive(Subcommand)]
enum Command {
    /// Build a POI set and prior from SNAP check-ins.
    Ingest {
        /// Tab-separated check-ins, optionally gzip-compressed.
        #[arg(long)]
        dataset: PathBuf,
        /// lat0,lat1,lon0,lon1 in degrees.
        #[arg(long, allow_hyphen_values = true)]
        region: String,
        #[arg(long)]
        out: PathBuf,
        /// Count every check-in, or each user once per location.
        #[arg(long, value_enum, default_value = "events")]
        count_mode: Count,
    },
    /// Run a mechanism sweep from an experiment spec.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the spec's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep on the synthetic grid scenario.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn ingest(dataset: &Path, region: &str, out: &Path, mode: CountMode) -> Result<()> {
    let region = Region::parse(region)?;
    let mut b = PriorBuilder::new(region, mode);
    let malformed = for_each_checkin(open_checkins(dataset)?, |r| b.add(&r))?;
    if malformed > 0 {
        log::warn!("skipped {malformed} malformed lines");
    }
    let pp = b.finish(region.center())?;
    let top = pp.prior.mass().iter().cloned().fold(0.0, f64::max);
    eprintln!("{} POIs, top prior mass {top:.4}", pp.prior.len());
    let mut w = BufWriter::new(File::create(out)?);
    write_poi_csv(&pp.prior, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Returns the number of error rows.
fn sweep(config: &Path, out: Option<PathBuf>, seed: Option<u64>, grid: bool) -> Result<usize> {
    let (mut spec, hash) = ExperimentSpec::load(config)?;
    if grid {
        if spec.experiment.scenario != ScenarioKind::Grid {
            log::info!("running {} on the grid scenario", config.display());
        }
        spec.experiment.scenario = ScenarioKind::Grid;
        spec.validate()?;
    }
    if let Some(s) = seed {
        spec.experiment.seed = s;
    }
    let out = out
        .or_else(|| spec.experiment.out.as_ref().map(|o| config.parent().unwrap_or(Path::new(".")).join(o)))
        .ok_or_else(|| LppmError::Config("no output path: pass --out or set `out`".into()))?;
    let rows = run_sweep(&spec)?;
    let header = SweepHeader { spec_sha256: hash, seed: spec.experiment.seed };
    let mut w = BufWriter::new(File::create(&out)?);
    write_csv(&header, &rows, &mut w)?;
    w.flush()?;
    let mut errors = 0;
    for r in &rows {
        if let Err(e) = &r.outcome {
            eprintln!("error: {} {}: {e}", r.mechanism, r.param);
            errors += 1;
        }
    }
    eprintln!("{} rows, {errors} errors -> {}", rows.len(), out.display());
    Ok(errors)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Command::Ingest { dataset, region, out, count_mode } => {
            let mode = match count_mode {
                Count::Events => CountMode::Events,
                Count::Users => CountMode::DistinctUsers,
            };
            ingest(&dataset, &region, &out, mode).map(|_| 0)
        }
        Command::Sweep { config, out } => sweep(&config, out, cli.seed, false),
        Command::Grid { config, out } => sweep(&config, out, cli.seed, true),
    };
    match res {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
