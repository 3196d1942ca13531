//! Seeded experiment runs that write CSV files.
//!
//! An experiment file is a [`SystemFile`](crate::config_file::SystemFile)
//! plus three optional sections:
//!
//! ```toml
//! [experiment]
//! kind = "qos_sweep"     # convergence | qos_sweep | ensemble_wsr
//! trials = 4             # seeds first_seed, first_seed + 1, ...
//! first_seed = 1
//! # seeds = [3, 9, 27]   # explicit list instead of trials/first_seed
//! output = "results/sweep"
//! jobs = 4               # worker threads, 0 = one per core
//!
//! [channel]
//! pathloss_intercept_db = 128.1
//! pathloss_slope = 37.6
//! distance_range_km = [0.1, 0.2]
//! distances_km = [0.13, 0.1, 0.1, 0.1]   # fixed users; omit to draw per seed
//!
//! [sweep]                # qos_sweep only
//! user = 0               # zero-based
//! from = 1.0
//! to = 7.0
//! step = 1.0
//! ```
//!
//! Every trial seed feeds both the channel draw and the solver, so a rerun of
//! the same file gives byte-identical CSVs regardless of `jobs`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::channel::{generate_channels, generate_channels_at, ChannelDraw, ChannelModelParams};
use crate::config_file::{self, AlgorithmSection, PowerSection, SystemSection};
use crate::error::{ConfigError, ConfigErrors, Error, Result};
use crate::model::{ChannelSet, PrecoderSet, SolveStatus, ValidatedConfig};
use crate::solver::{self, SolveOptions};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Convergence,
    QosSweep,
    EnsembleWsr,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::QosSweep => "qos_sweep",
            ExperimentKind::EnsembleWsr => "ensemble_wsr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub trials: usize,
    pub first_seed: u64,
    pub seeds: Option<Vec<u64>>,
    pub output: PathBuf,
    pub jobs: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            kind: ExperimentKind::default(),
            trials: 1,
            first_seed: 0,
            seeds: None,
            output: PathBuf::from("results"),
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub pathloss_intercept_db: f64,
    pub pathloss_slope: f64,
    pub distance_range_km: [f64; 2],
    pub distances_km: Option<Vec<f64>>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let p = ChannelModelParams::default();
        ChannelSection {
            pathloss_intercept_db: p.pathloss_intercept_db,
            pathloss_slope: p.pathloss_slope,
            distance_range_km: p.distance_range_km,
            distances_km: None,
        }
    }
}

impl ChannelSection {
    pub fn params(&self, seed: u64) -> ChannelModelParams {
        ChannelModelParams {
            pathloss_intercept_db: self.pathloss_intercept_db,
            pathloss_slope: self.pathloss_slope,
            distance_range_km: self.distance_range_km,
            rng_seed: seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub user: usize,
    pub from: f64,
    pub to: f64,
    #[serde(default = "one")]
    pub step: f64,
}

fn one() -> f64 {
    1.0
}

impl SweepSection {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.to - self.from) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.from + i as f64 * self.step).collect()
    }
}

/// The experiment file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub experiment: ExperimentSection,
    pub system: SystemSection,
    pub power: PowerSection,
    #[serde(default)]
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub channel: ChannelSection,
    pub sweep: Option<SweepSection>,
}

/// A checked experiment ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub kind: ExperimentKind,
    pub config: ValidatedConfig,
    pub channel: ChannelSection,
    pub sweep: Option<SweepSection>,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub jobs: usize,
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(ConfigErrors(vec![ConfigError::Other(e.to_string())])))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<Experiment> {
        let config = config_file::to_config(&self.system, &self.power, &self.algorithm)?;
        let e = &self.experiment;
        let seeds = match &e.seeds {
            Some(s) if s.is_empty() => return Err(Error::Spec("seeds must not be empty".into())),
            Some(s) => s.clone(),
            None if e.trials == 0 => return Err(Error::Spec("trials must be at least 1".into())),
            None => (0..e.trials as u64).map(|i| e.first_seed + i).collect(),
        };
        self.channel.params(0).validate()?;
        if let Some(d) = &self.channel.distances_km {
            if d.len() != config.users() || d.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::Spec(format!(
                    "distances_km needs {} positive entries",
                    config.users()
                )));
            }
        }
        if e.kind == ExperimentKind::QosSweep {
            let s = self.sweep.as_ref().ok_or_else(|| Error::Spec("qos_sweep needs a [sweep] section".into()))?;
            if config.users() < 2 {
                return Err(Error::Spec("qos_sweep needs at least two users".into()));
            }
            if s.user >= config.users() {
                return Err(Error::Spec(format!("sweep user {} out of range", s.user)));
            }
            if !(s.from >= 0.0 && s.from <= s.to && s.step > 0.0 && s.to.is_finite()) {
                return Err(Error::Spec(format!(
                    "sweep needs 0 ≤ from ≤ to and step > 0 (got {} to {} step {})",
                    s.from, s.to, s.step
                )));
            }
        }
        Ok(Experiment {
            kind: e.kind,
            config,
            channel: self.channel.clone(),
            sweep: self.sweep.clone(),
            seeds,
            output: e.output.clone(),
            jobs: e.jobs,
        })
    }
}

/// Files written and how many proposed-solver runs ended QoS-infeasible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub solves: usize,
    pub infeasible: usize,
}

impl RunSummary {
    pub fn all_infeasible(&self) -> bool {
        self.solves > 0 && self.infeasible == self.solves
    }
}

impl Experiment {
    pub fn draw(&self, seed: u64) -> Result<ChannelDraw> {
        let params = self.channel.params(seed);
        match &self.channel.distances_km {
            Some(d) => generate_channels_at(&self.config, &params, d),
            None => generate_channels(&self.config, &params),
        }
    }

    pub fn run(&self) -> Result<RunSummary> {
        match self.kind {
            ExperimentKind::Convergence => run_convergence(self),
            ExperimentKind::QosSweep => run_qos_sweep(self),
            ExperimentKind::EnsembleWsr => run_ensemble_wsr(self),
        }
    }

    fn per_seed<T: Send>(&self, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Numerical(format!("worker pool: {e}")))?;
        pool.install(|| self.seeds.par_iter().map(|&s| f(s)).collect())
    }
}

fn options(seed: u64) -> SolveOptions {
    SolveOptions {
        seed,
        ..SolveOptions::default()
    }
}

fn wsr_bits(v: &PrecoderSet, channels: &ChannelSet, cfg: &ValidatedConfig) -> Result<f64> {
    Ok(solver::kkt_report(v, channels, cfg)?.wsr_bits)
}

fn csv_header(kind: ExperimentKind, columns: &[String]) -> String {
    format!("# schema_version = {SCHEMA_VERSION}\n# kind = {}\n{}\n", kind.as_str(), columns.join(","))
}

fn num(x: f64) -> String {
    format!("{x:.9}")
}

fn padded(trace: &[f64], len: usize) -> impl Iterator<Item = f64> + '_ {
    let last = trace.last().copied().unwrap_or(0.0);
    trace.iter().copied().chain(std::iter::repeat(last)).take(len)
}

struct ConvergenceTrial {
    proposed: Vec<f64>,
    papc_only: Vec<f64>,
    wmmse_normalized: f64,
    zf_normalized: f64,
    infeasible: bool,
}

const CONVERGENCE_COLUMNS: [&str; 5] = [
    "iteration",
    "wsr_proposed",
    "wsr_papc_only",
    "wsr_wmmse_normalized",
    "wsr_zf_normalized",
];

fn convergence_csv(kind: ExperimentKind, rows: impl Iterator<Item = [f64; 4]>) -> String {
    let cols: Vec<String> = CONVERGENCE_COLUMNS.iter().map(|s| s.to_string()).collect();
    let mut out = csv_header(kind, &cols);
    for (i, r) in rows.enumerate() {
        let _ = writeln!(out, "{},{},{},{},{}", i + 1, num(r[0]), num(r[1]), num(r[2]), num(r[3]));
    }
    out
}

/// WSR traces of the proposed solver and the QoS-free variant per outer
/// iteration, with the one-shot baselines repeated on every row. Traces are
/// padded with their final value to a common length.
pub fn run_convergence(exp: &Experiment) -> Result<RunSummary> {
    let cfg = &exp.config;
    let trials = exp.per_seed(|seed| {
        let ch = exp.draw(seed)?.channels;
        let proposed = solver::solve(&ch, cfg, &options(seed))?;
        let papc = baselines::papc_only(&ch, cfg, &options(seed))?;
        Ok(ConvergenceTrial {
            infeasible: proposed.report.status == SolveStatus::InfeasibleQos,
            proposed: proposed.report.wsr_trace,
            papc_only: papc.report.wsr_trace,
            wmmse_normalized: wsr_bits(&baselines::wmmse_spc_normalized(&ch, cfg)?, &ch, cfg)?,
            zf_normalized: wsr_bits(&baselines::zf_normalized(&ch, cfg)?, &ch, cfg)?,
        })
    })?;
    let len = trials
        .iter()
        .map(|t| t.proposed.len().max(t.papc_only.len()))
        .max()
        .unwrap_or(0)
        .max(1);
    let rows_of = |t: &ConvergenceTrial| -> Vec<[f64; 4]> {
        padded(&t.proposed, len)
            .zip(padded(&t.papc_only, len))
            .map(|(a, b)| [a, b, t.wmmse_normalized, t.zf_normalized])
            .collect()
    };
    let mut summary = RunSummary::default();
    let mut mean = vec![[0.0; 4]; len];
    for (seed, t) in exp.seeds.iter().zip(&trials) {
        let rows = rows_of(t);
        for (m, r) in mean.iter_mut().zip(&rows) {
            for c in 0..4 {
                m[c] += r[c];
            }
        }
        let path = exp.output.join(format!("convergence_seed_{seed}.csv"));
        write_atomic(&path, convergence_csv(exp.kind, rows.into_iter()).as_bytes())?;
        summary.files.push(path);
        summary.solves += 1;
        summary.infeasible += t.infeasible as usize;
    }
    let n = trials.len() as f64;
    let path = exp.output.join("convergence_mean.csv");
    write_atomic(&path, convergence_csv(exp.kind, mean.iter().map(|m| m.map(|x| x / n))).as_bytes())?;
    summary.files.push(path);
    Ok(summary)
}

/// Sweeps one user's target with the others fixed at their configured
/// targets. One row per (seed, target); the QoS-free rates repeat on every
/// row of a seed.
pub fn run_qos_sweep(exp: &Experiment) -> Result<RunSummary> {
    let cfg = &exp.config;
    let sweep = exp.sweep.as_ref().ok_or_else(|| Error::Spec("qos_sweep needs a [sweep] section".into()))?;
    let targets = sweep.values();
    let users = cfg.users();
    let per_seed = exp.per_seed(|seed| {
        let ch = exp.draw(seed)?.channels;
        let papc = baselines::papc_only(&ch, cfg, &options(seed))?;
        let rows = targets
            .iter()
            .map(|&t| {
                let mut r = cfg.qos_targets_bits().to_vec();
                r[sweep.user] = t;
                let q = cfg.with_qos_targets_bits(&r)?;
                let sol = solver::solve(&ch, &q, &options(seed))?;
                Ok((t, sol.report))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((papc.report.per_user_rates_bits, rows))
    })?;

    let mut cols = vec![
        "seed".to_string(),
        format!("r{}_target", sweep.user + 1),
        "status".into(),
        "feasible".into(),
        "wsr_proposed".into(),
    ];
    cols.extend((1..=users).map(|k| format!("rate{k}_proposed")));
    cols.extend((1..=users).map(|k| format!("rate{k}_papc_only")));
    let mut out = csv_header(exp.kind, &cols);
    let mut summary = RunSummary::default();
    for (seed, (papc_rates, rows)) in exp.seeds.iter().zip(&per_seed) {
        for (t, rep) in rows {
            let feasible = rep.status != SolveStatus::InfeasibleQos
                && rep.qos_satisfied.iter().all(|&b| b)
                && rep.papc_satisfied.iter().all(|&b| b);
            let _ = write!(
                out,
                "{seed},{},{},{},{}",
                num(*t),
                rep.status.as_str(),
                feasible,
                num(rep.final_wsr_bits())
            );
            for r in rep.per_user_rates_bits.iter().chain(papc_rates) {
                let _ = write!(out, ",{}", num(*r));
            }
            out.push('\n');
            summary.solves += 1;
            summary.infeasible += (rep.status == SolveStatus::InfeasibleQos) as usize;
        }
    }
    let path = exp.output.join("qos_sweep.csv");
    write_atomic(&path, out.as_bytes())?;
    summary.files.push(path);
    Ok(summary)
}

pub const ENSEMBLE_METHODS: [&str; 4] = ["proposed", "papc_only", "wmmse_normalized", "zf_normalized"];

/// Final WSR of every method per seed, then mean, sample standard deviation
/// and pairwise win counts (`a` wins over `b` when `wsr_a ≥ wsr_b`).
pub fn run_ensemble_wsr(exp: &Experiment) -> Result<RunSummary> {
    let cfg = &exp.config;
    let trials = exp.per_seed(|seed| {
        let ch = exp.draw(seed)?.channels;
        let proposed = solver::solve(&ch, cfg, &options(seed))?;
        let papc = baselines::papc_only(&ch, cfg, &options(seed))?;
        let wsr = [
            proposed.report.final_wsr_bits(),
            papc.report.final_wsr_bits(),
            wsr_bits(&baselines::wmmse_spc_normalized(&ch, cfg)?, &ch, cfg)?,
            wsr_bits(&baselines::zf_normalized(&ch, cfg)?, &ch, cfg)?,
        ];
        Ok((wsr, proposed.report.status))
    })?;

    let mut summary = RunSummary::default();
    let mut cols = vec!["seed".to_string(), "status".into()];
    cols.extend(ENSEMBLE_METHODS.iter().map(|m| format!("wsr_{m}")));
    let mut out = csv_header(exp.kind, &cols);
    for (seed, (wsr, status)) in exp.seeds.iter().zip(&trials) {
        let _ = write!(out, "{seed},{}", status.as_str());
        for w in wsr {
            let _ = write!(out, ",{}", num(*w));
        }
        out.push('\n');
        summary.solves += 1;
        summary.infeasible += (*status == SolveStatus::InfeasibleQos) as usize;
    }
    let path = exp.output.join("ensemble_trials.csv");
    write_atomic(&path, out.as_bytes())?;
    summary.files.push(path);

    let n = trials.len() as f64;
    let mut cols = vec!["method".to_string(), "mean_wsr".into(), "std_wsr".into()];
    cols.extend(ENSEMBLE_METHODS.iter().map(|m| format!("wins_over_{m}")));
    let mut out = csv_header(exp.kind, &cols);
    for (a, name) in ENSEMBLE_METHODS.iter().enumerate() {
        let mean = trials.iter().map(|(w, _)| w[a]).sum::<f64>() / n;
        let var = if trials.len() > 1 {
            trials.iter().map(|(w, _)| (w[a] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let _ = write!(out, "{name},{},{}", num(mean), num(var.sqrt()));
        for b in 0..ENSEMBLE_METHODS.len() {
            let wins = trials.iter().filter(|(w, _)| w[a] >= w[b]).count();
            let _ = write!(out, ",{wins}");
        }
        out.push('\n');
    }
    let path = exp.output.join("ensemble_summary.csv");
    write_atomic(&path, out.as_bytes())?;
    summary.files.push(path);
    Ok(summary)
}

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
