use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use partner_core::model::PopulationState;
use partner_core::simulator::InitialCondition;
use serde::Deserialize;

/// Settings shared by every command. Each may come from a flag or from the
/// flat TOML file given by `--config`; flags win.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[arg(long)]
    pub r_plus: Option<f64>,
    #[arg(long)]
    pub r_minus: Option<f64>,
    /// Infection rate within SI pairs; defaults to the critical value.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Population size.
    #[arg(long)]
    pub n: Option<u64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Horizon in slow time.
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Recording interval in slow time.
    #[arg(long)]
    pub grid: Option<f64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Marginal sampling times in slow time, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// `on-ray:X`, `explicit:S,I,J,K,L` or `plus:I0`.
    #[arg(long)]
    pub init: Option<String>,
    /// Initial singles offset z.
    #[arg(long)]
    pub z0: Option<f64>,
    #[arg(long)]
    pub stop_on_extinction: Option<bool>,
    /// Stop once H is at or below this value.
    #[arg(long)]
    pub h_floor: Option<f64>,
    /// Infected singles at the start of a collapse run.
    #[arg(long)]
    pub i0: Option<i64>,
    /// Reference paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Population sizes for extinction scaling, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<u64>>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lattice_n: Option<u64>,
    #[arg(long)]
    pub lattice_replicas: Option<usize>,
    /// Worker threads; defaults to the available hardware threads.
    #[arg(long)]
    pub threads: Option<usize>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        Settings { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Settings {
    /// `self` where set, otherwise `lower`.
    pub fn over(self, lower: Settings) -> Settings {
        overlay!(
            self,
            lower,
            r_plus,
            r_minus,
            lambda,
            n,
            seed,
            t_max,
            grid,
            replicas,
            times,
            init,
            z0,
            stop_on_extinction,
            h_floor,
            i0,
            paths,
            ns,
            beta,
            lattice_n,
            lattice_replicas,
            threads
        )
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Sources {
    /// Flat TOML file with any of the settings below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON from `partner constants`; supplies r_plus, r_minus and lambda.
    #[arg(long)]
    pub params_from: Option<PathBuf>,
}

#[derive(Deserialize)]
struct ParamsFile {
    r_plus: f64,
    r_minus: f64,
    lambda: f64,
}

/// Flags over `--params-from` over `--config`.
pub fn resolve(flags: Settings, sources: &Sources) -> Result<Settings> {
    let file = match &sources.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => Settings::default(),
    };
    let params = match &sources.params_from {
        Some(path) => read_params(path)?,
        None => Settings::default(),
    };
    Ok(flags.over(params).over(file))
}

fn read_params(path: &Path) -> Result<Settings> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let p: ParamsFile = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(Settings { r_plus: Some(p.r_plus), r_minus: Some(p.r_minus), lambda: Some(p.lambda), ..Settings::default() })
}

/// Errors that map to the usage exit code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn parse_init(spec: &str, z0: f64) -> Result<InitialCondition> {
    let (kind, arg) = spec.split_once(':').ok_or_else(|| usage(format!("--init {spec:?}: expected KIND:VALUE")))?;
    let bad = || usage(format!("--init {spec:?}: malformed value"));
    let mut init = match kind {
        "on-ray" | "on_ray" => InitialCondition::on_ray(arg.parse().map_err(|_| bad())?),
        "plus" => InitialCondition::all_susceptible_plus(arg.parse().map_err(|_| bad())?),
        "explicit" => {
            let v: Vec<i64> = arg.split(',').map(|x| x.trim().parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
            let [s, i, j, k, l] = v[..] else { bail!(bad()) };
            InitialCondition::explicit(PopulationState::new(s, i, j, k, l))
        }
        _ => bail!(usage(format!("--init {spec:?}: kind must be on-ray, explicit or plus"))),
    };
    init.z0 = z0;
    Ok(init)
}
