use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mimo_qos_papc::channel::{load_channels, save_channels};
use mimo_qos_papc::experiment::{write_atomic, Experiment, ExperimentKind, ExperimentSpec, RunSummary};
use mimo_qos_papc::solver::{self, SolveOptions};
use mimo_qos_papc::{Error, SolveStatus};

/// Weighted sum-rate precoding under QoS and per-antenna power constraints.
#[derive(Parser)]
#[command(name = "qos-papc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overrides `[experiment] output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// First trial seed; seeds become seed, seed + 1, ... for `trials` trials.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Per-iteration WSR traces against the baselines.
    Convergence(Common),
    /// Sweep one user's rate target.
    QosSweep(Common),
    /// Final WSR statistics over many seeds.
    Ensemble(Common),
    /// Solve one instance and print its constraint report.
    SolveOne {
        #[command(flatten)]
        common: Common,
        /// Channel file from `channels`; otherwise drawn from the seed.
        #[arg(long)]
        channels: Option<PathBuf>,
    },
    /// Draw a channel realization and write it in binary form.
    Channels {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(common: &Common, kind: Option<ExperimentKind>) -> Result<Experiment, Error> {
    let mut spec = ExperimentSpec::load(&common.config)?;
    if let Some(kind) = kind {
        spec.experiment.kind = kind;
    }
    if let Some(seed) = common.seed {
        spec.experiment.first_seed = seed;
        spec.experiment.seeds = None;
    }
    let mut exp = spec.validate()?;
    if let Some(out) = &common.out {
        exp.output = out.clone();
    }
    if let Some(jobs) = common.jobs {
        exp.jobs = jobs;
    }
    Ok(exp)
}

fn report(summary: &RunSummary) {
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    println!("{} solves, {} QoS-infeasible", summary.solves, summary.infeasible);
}

fn run(cli: Cli) -> Result<RunSummary, Error> {
    let experiment = |common: &Common, kind| -> Result<RunSummary, Error> {
        let summary = load(common, Some(kind))?.run()?;
        report(&summary);
        Ok(summary)
    };
    match cli.command {
        Command::Convergence(c) => experiment(&c, ExperimentKind::Convergence),
        Command::QosSweep(c) => experiment(&c, ExperimentKind::QosSweep),
        Command::Ensemble(c) => experiment(&c, ExperimentKind::EnsembleWsr),
        Command::SolveOne { common, channels } => {
            let exp = load(&common, None)?;
            let seed = exp.seeds[0];
            let channels = match channels {
                Some(path) => load_channels(&path)?.channels,
                None => exp.draw(seed)?.channels,
            };
            let sol = solver::solve(&channels, &exp.config, &SolveOptions { seed, ..Default::default() })?;
            let kkt = solver::kkt_report(&sol.precoders, &channels, &exp.config)?;
            let r = &sol.report;
            println!("status = \"{}\"", r.status.as_str());
            println!("iterations = {}", r.iterations_used);
            println!("infeasible_users = {:?}", r.infeasible_users);
            print!("{}", toml::to_string(&kkt).map_err(|e| Error::Numerical(e.to_string()))?);
            if let Some(out) = &common.out {
                let path = out.join("solve_report.toml");
                write_atomic(&path, r.to_toml().as_bytes())?;
                println!("# wrote {}", path.display());
            }
            Ok(RunSummary {
                files: Vec::new(),
                solves: 1,
                infeasible: (r.status == SolveStatus::InfeasibleQos) as usize,
            })
        }
        Command::Channels { config, seed, out } => {
            let common = Common { config, out: None, seed, jobs: None };
            let exp = load(&common, None)?;
            let draw = exp.draw(exp.seeds[0])?;
            save_channels(&out, &draw)?;
            println!("wrote {}", out.display());
            Ok(RunSummary::default())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Spec(_) | Error::Dimension(_) | Error::NonPositiveNoise(_) | Error::NonPositiveBudget(_) => 2,
        Error::InfeasibleQos { .. } => 3,
        Error::DegenerateGeometry { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::RankDeficient { .. }
        | Error::Numerical(_)
        | Error::NonFinite { .. } => 4,
        Error::ChannelFormat(_) | Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(s) if s.all_infeasible() => {
            eprintln!("every solve ended QoS-infeasible");
            ExitCode::from(3)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
