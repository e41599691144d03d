use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use mapaware_core::bench::{
    ablate_aou, ablate_roi, ablate_structmap_timing, aou_csv, load_network, load_worlds,
    make_policy, render_ppm, roi_csv, roi_means, run_benchmark, timing_bins, timing_csv,
    write_file,
};
use mapaware_core::policy::checkpoint;
use mapaware_core::rl::{run_episode_observed, train::curve_to_csv};
use mapaware_core::{load_world_file, Point, RunConfig, Strategy};

#[derive(Parser)]
#[command(
    name = "mapaware",
    version,
    about = "Frontier exploration on occupancy grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one exploration episode and print its per-step CSV.
    Explore {
        #[arg(long)]
        world: PathBuf,
        #[arg(long, default_value = "nearest-frontier")]
        strategy: Strategy,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Send raw network waypoints to the planner without correction.
        #[arg(long)]
        no_aou: bool,
        /// Config file for exploration parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Policy checkpoint for the map-aware strategy.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the final map and trajectory as a PPM image.
        #[arg(long)]
        render: Option<PathBuf>,
    },
    /// Train the map-aware policy with PPO.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "train_out")]
        out: PathBuf,
    },
    /// Run the configured worlds × strategies × seeds and write tier CSVs.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ablation studies.
    Ablate {
        which: Ablation,
        #[arg(long)]
        config: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    Structmap,
    Aou,
    Roi,
}

/// Errors before any run starts count as usage errors.
enum Failure {
    Usage(anyhow::Error),
    Run(anyhow::Error),
}

fn usage<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn run<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Run)
}

fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    RunConfig::from_file(path).with_context(|| format!("loading config {}", path.display()))
}

/// The observation grid must hold every world's ROI grid.
fn check_shape(
    cfg: &RunConfig,
    world: &mapaware_core::WorldMap,
    shape: (usize, usize),
) -> anyhow::Result<()> {
    cfg.explore
        .partition_params(Some(shape))
        .roi_shape(world.geometry())
        .map(|_| ())
        .with_context(|| {
            format!(
                "observation grid {}x{} is too small for the world",
                shape.0, shape.1
            )
        })
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => Ok(write_file(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn explore(
    world: &Path,
    strategy: Strategy,
    seed: u64,
    aou: bool,
    config: Option<&Path>,
    checkpoint: Option<PathBuf>,
    out: Option<&Path>,
    render: Option<&Path>,
) -> Result<(), Failure> {
    let mut cfg = match config {
        Some(p) => usage(load_config(p))?,
        None => RunConfig::default(),
    };
    if checkpoint.is_some() {
        cfg.checkpoint = checkpoint;
    }
    let map = usage(
        load_world_file(world).with_context(|| format!("loading world {}", world.display())),
    )?;
    let network = match strategy {
        Strategy::MapAware => {
            let net = usage(load_network(&cfg).context("loading policy"))?;
            usage(check_shape(&cfg, &map, net.input_shape()))?;
            Some(net)
        }
        _ => None,
    };
    let mut policy = usage(
        make_policy(strategy, network.as_ref(), aou, cfg.stochastic).map_err(anyhow::Error::from),
    )?;
    let mut trail: Vec<Point> = Vec::new();
    let mut last = None;
    let rec = run(
        run_episode_observed(&map, policy.as_mut(), &cfg.explore, seed, &mut |v| {
            trail.push(v.pose.position());
            if render.is_some() {
                last = Some(v.belief.clone());
            }
        })
        .context("episode failed"),
    )?;
    run(emit(out, &rec.to_csv()))?;
    if let (Some(path), Some(belief)) = (render, last) {
        let marks: Vec<Point> = rec.steps.iter().filter_map(|s| s.target).collect();
        run(std::fs::write(path, render_ppm(&belief, &trail, &marks))
            .with_context(|| format!("writing {}", path.display())))?;
    }
    eprintln!(
        "{} steps, completeness {:.4}, distance {:.1} m, time {:.1} s, {}",
        rec.steps.len(),
        rec.completeness(),
        rec.distance(),
        rec.time(),
        rec.terminal
    );
    Ok(())
}

fn train(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = usage(load_config(config))?;
    let worlds = usage(load_worlds(&cfg.worlds).map_err(anyhow::Error::from))?;
    let maps: Vec<_> = worlds.into_iter().map(|w| w.world).collect();
    for m in &maps {
        usage(check_shape(&cfg, m, cfg.observation))?;
    }
    let mut save =
        |update: usize, net: &mapaware_core::PolicyNetwork| -> mapaware_core::Result<()> {
            std::fs::create_dir_all(out)?;
            checkpoint::save(net, out.join(format!("checkpoint_{update:05}.bin")))
        };
    let outcome = run(mapaware_core::rl::train(
        &maps,
        &cfg.explore,
        &cfg.ppo,
        &cfg.train,
        cfg.observation,
        cfg.seed,
        &mut save,
    )
    .map_err(anyhow::Error::from))?;
    run(checkpoint::save(&outcome.network, out.join("final.bin")).map_err(anyhow::Error::from))?;
    run(
        write_file(&out.join("curve.csv"), &curve_to_csv(&outcome.curve))
            .map_err(anyhow::Error::from),
    )?;
    eprintln!(
        "{} episodes, {} updates{}",
        outcome.curve.len(),
        outcome.updates,
        outcome
            .plateau_at
            .map_or(String::new(), |e| format!(", plateau at episode {e}"))
    );
    Ok(())
}

fn bench(config: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = usage(load_config(config))?;
    usage(
        load_worlds(&cfg.worlds)
            .map(|_| ())
            .map_err(anyhow::Error::from),
    )?;
    let report = run(run_benchmark(&cfg, Some(out)).map_err(anyhow::Error::from))?;
    for a in report.aggregates() {
        eprintln!(
            "{} {}: {} runs, failure rate {:.2}, mean completeness {:.4}",
            a.world, a.strategy, a.runs, a.failure_rate, a.completeness
        );
    }
    Ok(())
}

fn ablate(which: Ablation, config: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = usage(load_config(config))?;
    let worlds = usage(load_worlds(&cfg.worlds).map_err(anyhow::Error::from))?;
    match which {
        Ablation::Structmap => {
            let mut rows = Vec::new();
            for w in &worlds {
                rows.extend(run(ablate_structmap_timing(
                    w,
                    &cfg.explore,
                    cfg.seed,
                    cfg.timing_snapshots,
                    0.95,
                )
                .map_err(anyhow::Error::from))?);
            }
            run(emit(out, &timing_csv(&rows)))?;
            for b in timing_bins(&rows, &[0.0, 0.2, 0.4, 0.6, 0.8, 0.95, 1.0]) {
                eprintln!(
                    "completeness [{:.2}, {:.2}]: {} snapshots, structured {:.3} ms, direct {:.3} ms",
                    b.lo,
                    b.hi,
                    b.count,
                    b.structured_s * 1e3,
                    b.direct_s * 1e3
                );
            }
        }
        Ablation::Aou => {
            let rows = run(ablate_aou(&cfg, &worlds).map_err(anyhow::Error::from))?;
            run(emit(out, &aou_csv(&rows)))?;
            for aou in [true, false] {
                let sel: Vec<_> = rows.iter().filter(|r| r.aou == aou).collect();
                let steps: usize = sel.iter().map(|r| r.steps).sum();
                let invalid: usize = sel.iter().map(|r| r.invalid_decisions).sum();
                let to93 =
                    sel.iter().map(|r| r.steps_to_93 as f64).sum::<f64>() / sel.len().max(1) as f64;
                eprintln!(
                    "aou={aou}: invalid rate {:.3}, mean steps to 93% {to93:.2}",
                    invalid as f64 / steps.max(1) as f64
                );
            }
        }
        Ablation::Roi => {
            let rows = run(ablate_roi(&cfg, &worlds).map_err(anyhow::Error::from))?;
            run(emit(out, &roi_csv(&rows)))?;
            for (n, c, s) in roi_means(&rows, &cfg.n_values) {
                eprintln!("n={n}: mean completeness {c:.4}, mean steps {s:.2}");
            }
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Explore {
            world,
            strategy,
            seed,
            no_aou,
            config,
            checkpoint,
            out,
            render,
        } => explore(
            &world,
            strategy,
            seed,
            !no_aou,
            config.as_deref(),
            checkpoint,
            out.as_deref(),
            render.as_deref(),
        ),
        Command::Train { config, out } => train(&config, &out),
        Command::Bench { config, out } => bench(&config, &out),
        Command::Ablate { which, config, out } => ablate(which, &config, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
