//! `partner`: simulations and checks for the critical partner model.

mod config;
mod jobs;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use partner_core::analytics::{eigenvalues, hitting_probs, lambda_c, r0, CriticalStructure, HittingProbs};
use partner_core::Error;
use serde::Serialize;

use config::{resolve, usage, Settings, Sources, UsageError};
use jobs::{execute, Job, Manifest};

#[derive(Parser)]
#[command(name = "partner", version, about = "Critical partner model: exact simulation and limit checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Run {
    /// Output directory; must be new or empty.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sources: Sources,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Command {
    /// Print every derived constant as JSON.
    Constants {
        #[command(flatten)]
        sources: Sources,
        #[command(flatten)]
        settings: Settings,
    },
    /// One trajectory sampled on a time grid.
    Simulate(Run),
    /// Independent replicas with marginals at chosen times.
    Ensemble(Run),
    /// Collapse onto the invariant ray from an off-ray start.
    Collapse(Run),
    /// Singles fluctuations against the Ornstein-Uhlenbeck limit.
    OuCheck(Run),
    /// Median extinction time across population sizes.
    ExtinctionScaling(Run),
    /// Infecteds and extinction times against the limit diffusion.
    DiffusionCompare(Run),
    /// Mean-field contact process against its diffusion limit.
    Mfcp(Run),
    /// Repeat the run recorded in a manifest.
    Rerun {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Refusal to write into a non-empty directory.
#[derive(Debug)]
pub struct OutputExists(pub PathBuf);

impl std::fmt::Display for OutputExists {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} exists and is not empty; choose a fresh directory", self.0.display())
    }
}

impl std::error::Error for OutputExists {}

#[derive(Serialize)]
struct Constants {
    lambda_c: Option<f64>,
    r0: f64,
    hitting: HittingProbs,
    #[serde(flatten)]
    structure: CriticalStructure,
    /// `[re, im]`, by decreasing real part.
    eigenvalues: Vec<[f64; 2]>,
}

fn constants(settings: &Settings) -> Result<()> {
    let s = jobs::structure(settings)?;
    let c = Constants {
        lambda_c: lambda_c(s.r_plus, s.r_minus).finite(),
        r0: r0(s.r_plus, s.r_minus, s.lambda),
        hitting: hitting_probs(s.r_plus, s.r_minus, s.lambda, s.y_star),
        eigenvalues: eigenvalues(&s.a()).iter().map(|z| [z.re, z.im]).collect(),
        structure: s,
    };
    partner_core::io::write_json(std::io::stdout().lock(), &c)?;
    Ok(())
}

fn report(dir: &std::path::Path, manifest: &Manifest, verdicts: &[partner_core::stats::Verdict]) {
    for v in verdicts {
        println!("{} {} statistic={:.6} threshold={:.6}", if v.pass { "PASS" } else { "FAIL" }, v.check, v.statistic, v.threshold);
    }
    let events = manifest.events.map(|e| format!(", {e} events")).unwrap_or_default();
    eprintln!("wrote {} ({:.1}s{events})", dir.display(), manifest.wall_time_s);
}

fn dispatch(cli: Cli) -> Result<()> {
    let (run, build): (Run, fn(&Settings) -> Result<Job>) = match cli.command {
        Command::Constants { sources, settings } => return constants(&resolve(settings, &sources)?),
        Command::Rerun { manifest, out, threads } => {
            let text = std::fs::read_to_string(&manifest).with_context(|| format!("reading {}", manifest.display()))?;
            let m: Manifest = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", manifest.display())))?;
            let (m2, verdicts) = execute(&m.job, &out, threads.or(m.threads))?;
            report(&out, &m2, &verdicts);
            return Ok(());
        }
        Command::Simulate(r) => (r, Job::simulate),
        Command::Ensemble(r) => (r, Job::ensemble),
        Command::Collapse(r) => (r, Job::collapse),
        Command::OuCheck(r) => (r, Job::ou_check),
        Command::ExtinctionScaling(r) => (r, Job::extinction_scaling),
        Command::DiffusionCompare(r) => (r, Job::diffusion_compare),
        Command::Mfcp(r) => (r, Job::mfcp),
    };
    let settings = resolve(run.settings, &run.sources)?;
    let job = build(&settings)?;
    let (manifest, verdicts) = execute(&job, &run.out, settings.threads)?;
    report(&run.out, &manifest, &verdicts);
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 64;
    }
    if err.downcast_ref::<OutputExists>().is_some() {
        return 73;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::LambdaCInfinite { .. }) => 2,
        Some(Error::InvalidParams(_) | Error::InvalidConfig(_)) => 64,
        Some(Error::InfeasibleInitial(_) | Error::InvalidState { .. }) => 65,
        Some(Error::CensoredMedian { .. }) => 66,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
