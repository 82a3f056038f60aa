use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use partner_core::analytics::{critical_structure, CriticalStructure};
use partner_core::experiments::{self, ON_RAY_TIMES};
use partner_core::io;
use partner_core::model::ModelParams;
use partner_core::simulator::{run, run_ensemble, SimConfig};
use partner_core::stats::Verdict;
use serde::{Deserialize, Serialize};

use crate::config::{parse_init, usage, Settings};

/// A fully resolved command: everything needed to reproduce its artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Simulate { config: SimConfig },
    Ensemble { config: SimConfig, replicas: usize, times: Vec<f64> },
    Collapse { r_plus: f64, r_minus: f64, n: u64, replicas: usize, i0: i64, seed: u64 },
    OuCheck { r_plus: f64, r_minus: f64, n: u64, replicas: usize, lattice_n: u64, lattice_replicas: usize, seed: u64 },
    ExtinctionScaling { r_plus: f64, r_minus: f64, ns: Vec<u64>, replicas: usize, t_max: f64, seed: u64 },
    DiffusionCompare { r_plus: f64, r_minus: f64, n: u64, replicas: usize, paths: usize, times: Vec<f64>, t_max: f64, seed: u64 },
    Mfcp { n: u64, beta: f64, replicas: usize, paths: usize, t_max: f64, seed: u64 },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub master_seed: u64,
    pub job: Job,
    pub threads: Option<usize>,
    pub wall_time_s: f64,
    /// Model events simulated; absent for runs of other chains.
    pub events: Option<u64>,
    pub artifacts: Vec<String>,
}

const DEFAULT_SEED: u64 = 1;

fn rates(s: &Settings) -> (f64, f64) {
    (s.r_plus.unwrap_or(4.0), s.r_minus.unwrap_or(1.0))
}

/// Rates are checked here so bad input is a usage error, not a model error.
fn checked_rates(s: &Settings) -> Result<(f64, f64)> {
    let (rp, rm) = rates(s);
    for (name, v) in [("r_plus", rp), ("r_minus", rm)].into_iter().chain(s.lambda.map(|l| ("lambda", l))) {
        if !(v.is_finite() && v > 0.0) {
            return Err(usage(format!("{name} must be positive and finite, got {v}")));
        }
    }
    Ok((rp, rm))
}

/// Critical structure at the requested rates, or the formal structure at an explicit `lambda`.
pub fn structure(s: &Settings) -> Result<CriticalStructure> {
    let (rp, rm) = checked_rates(s)?;
    Ok(match s.lambda {
        Some(l) => CriticalStructure::at_lambda(rp, rm, l)?,
        None => critical_structure(rp, rm)?,
    })
}

fn sim_config(s: &Settings, default_t_max: f64) -> Result<SimConfig> {
    let crit = structure(s)?;
    let p = ModelParams::new(crit.r_plus, crit.r_minus, crit.lambda, s.n.unwrap_or(10_000))?;
    let init = parse_init(s.init.as_deref().unwrap_or("on-ray:1"), s.z0.unwrap_or(0.0))?;
    let t_max = s.t_max.unwrap_or(default_t_max);
    let mut cfg = SimConfig::new(p, init, t_max, s.seed.unwrap_or(DEFAULT_SEED));
    if let Some(g) = s.grid {
        cfg.record_grid_slow = g;
    }
    cfg.stop_on_extinction = s.stop_on_extinction.unwrap_or(true);
    cfg.h_floor = s.h_floor;
    cfg.validate()?;
    Ok(cfg)
}

fn critical_only(s: &Settings, command: &str) -> Result<(f64, f64)> {
    if s.lambda.is_some() {
        return Err(usage(format!("{command} always runs at the critical rate; drop --lambda")));
    }
    checked_rates(s)
}

impl Job {
    pub fn simulate(s: &Settings) -> Result<Job> {
        Ok(Job::Simulate { config: sim_config(s, 2.0)? })
    }

    pub fn ensemble(s: &Settings) -> Result<Job> {
        Ok(Job::Ensemble {
            config: sim_config(s, 15.0)?,
            replicas: s.replicas.unwrap_or(100),
            times: s.times.clone().unwrap_or(ON_RAY_TIMES.to_vec()),
        })
    }

    pub fn collapse(s: &Settings) -> Result<Job> {
        let (r_plus, r_minus) = critical_only(s, "collapse")?;
        let n = s.n.unwrap_or(100_000);
        Ok(Job::Collapse {
            r_plus,
            r_minus,
            n,
            replicas: s.replicas.unwrap_or(200),
            i0: s.i0.unwrap_or((10.0 * (n as f64).sqrt()).round() as i64),
            seed: s.seed.unwrap_or(DEFAULT_SEED),
        })
    }

    pub fn ou_check(s: &Settings) -> Result<Job> {
        let (r_plus, r_minus) = critical_only(s, "ou-check")?;
        Ok(Job::OuCheck {
            r_plus,
            r_minus,
            n: s.n.unwrap_or(100_000),
            replicas: s.replicas.unwrap_or(20),
            lattice_n: s.lattice_n.unwrap_or(10_000),
            lattice_replicas: s.lattice_replicas.unwrap_or(2000),
            seed: s.seed.unwrap_or(DEFAULT_SEED),
        })
    }

    pub fn extinction_scaling(s: &Settings) -> Result<Job> {
        let (r_plus, r_minus) = critical_only(s, "extinction-scaling")?;
        Ok(Job::ExtinctionScaling {
            r_plus,
            r_minus,
            ns: s.ns.clone().unwrap_or(vec![10_000, 40_000, 160_000]),
            replicas: s.replicas.unwrap_or(400),
            t_max: s.t_max.unwrap_or(15.0),
            seed: s.seed.unwrap_or(DEFAULT_SEED),
        })
    }

    pub fn diffusion_compare(s: &Settings) -> Result<Job> {
        let (r_plus, r_minus) = critical_only(s, "diffusion-compare")?;
        Ok(Job::DiffusionCompare {
            r_plus,
            r_minus,
            n: s.n.unwrap_or(100_000),
            replicas: s.replicas.unwrap_or(1000),
            paths: s.paths.unwrap_or(10_000),
            times: s.times.clone().unwrap_or(ON_RAY_TIMES.to_vec()),
            t_max: s.t_max.unwrap_or(15.0),
            seed: s.seed.unwrap_or(DEFAULT_SEED),
        })
    }

    pub fn mfcp(s: &Settings) -> Result<Job> {
        Ok(Job::Mfcp {
            n: s.n.unwrap_or(10_000),
            beta: s.beta.unwrap_or(1.0),
            replicas: s.replicas.unwrap_or(2000),
            paths: s.paths.unwrap_or(2000),
            t_max: s.t_max.unwrap_or(10.0),
            seed: s.seed.unwrap_or(DEFAULT_SEED),
        })
    }

    pub fn seed(&self) -> u64 {
        match self {
            Job::Simulate { config } | Job::Ensemble { config, .. } => config.seed,
            Job::Collapse { seed, .. }
            | Job::OuCheck { seed, .. }
            | Job::ExtinctionScaling { seed, .. }
            | Job::DiffusionCompare { seed, .. }
            | Job::Mfcp { seed, .. } => *seed,
        }
    }
}

/// Output directory that must be new or empty.
pub fn prepare_out(dir: &Path) -> Result<()> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
        if entries.next().is_some() {
            return Err(crate::OutputExists(dir.to_path_buf()).into());
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

struct Out<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Out<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path: PathBuf = self.dir.join(name);
        self.written.push(name.to_string());
        Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
    }

    fn csv<E>(&mut self, name: &str, f: impl FnOnce(BufWriter<File>) -> std::result::Result<(), E>) -> Result<()>
    where
        E: std::error::Error + Send + Sync + 'static,
    {
        let w = self.create(name)?;
        f(w).with_context(|| format!("writing {name}"))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let w = self.create(name)?;
        io::write_json(w, value).with_context(|| format!("writing {name}"))
    }
}

/// Runs `job`, writing its artifacts and `manifest.json` into `dir`, which
/// must be new or empty. Returns the manifest and any verdicts.
pub fn execute(job: &Job, dir: &Path, threads: Option<usize>) -> Result<(Manifest, Vec<Verdict>)> {
    prepare_out(dir)?;
    let started = Instant::now();
    let mut out = Out { dir, written: Vec::new() };
    let mut verdicts = Vec::new();
    let events = match job {
        Job::Simulate { config } => {
            let tr = run(config)?;
            out.csv("trajectory.csv", |w| io::write_trajectory_csv(w, &tr))?;
            Some(tr.terminal.events)
        }
        Job::Ensemble { config, replicas, times } => {
            let ens = run_ensemble(config, *replicas, times, threads)?;
            out.csv("ensemble.csv", |w| io::write_ensemble_csv(w, &ens))?;
            out.csv("replicas.csv", |w| io::write_replicas_csv(w, &ens))?;
            Some(ens.total_events())
        }
        Job::Collapse { r_plus, r_minus, n, replicas, i0, seed } => {
            let c = experiments::collapse(*r_plus, *r_minus, *n, *replicas, *i0, *seed, threads)?;
            out.csv("collapse.csv", |w| io::write_collapse_csv(w, &c.profiles))?;
            verdicts.extend([c.hit, c.stay]);
            Some(c.events)
        }
        Job::OuCheck { r_plus, r_minus, n, replicas, lattice_n, lattice_replicas, seed } => {
            let (v, events) = experiments::ou_variance(*r_plus, *r_minus, *n, *replicas, *seed, threads)?;
            verdicts.push(v);
            verdicts.push(experiments::ou_lattice(*r_plus, *r_minus, *lattice_n, *lattice_replicas, *seed)?);
            Some(events)
        }
        Job::ExtinctionScaling { r_plus, r_minus, ns, replicas, t_max, seed } => {
            let mut ensembles = Vec::new();
            for &n in ns {
                let e = experiments::on_ray_ensemble(*r_plus, *r_minus, n, *replicas, &[], *t_max, *seed, threads)?;
                out.csv(&format!("replicas_n{n}.csv"), |w| io::write_replicas_csv(w, &e))?;
                ensembles.push(e);
            }
            let refs: Vec<_> = ensembles.iter().collect();
            let sc = experiments::extinction_scaling(&refs)?;
            out.json("scaling.json", &sc)?;
            verdicts.push(sc.verdict);
            Some(ensembles.iter().map(|e| e.total_events()).sum())
        }
        Job::DiffusionCompare { r_plus, r_minus, n, replicas, paths, times, t_max, seed } => {
            let ens = experiments::on_ray_ensemble(*r_plus, *r_minus, *n, *replicas, times, *t_max, *seed, threads)?;
            let (v, em) = experiments::diffusion_compare(&ens, *paths)?;
            out.csv("ensemble.csv", |w| io::write_ensemble_csv(w, &ens))?;
            out.csv("replicas.csv", |w| io::write_replicas_csv(w, &ens))?;
            out.csv("paths.csv", |w| io::write_paths_csv(w, &em))?;
            verdicts.extend(v);
            Some(ens.total_events())
        }
        Job::Mfcp { n, beta, replicas, paths, t_max, seed } => {
            let m = experiments::mfcp_compare(*n, *beta, *replicas, *paths, *t_max, *seed)?;
            out.csv("chain.csv", |w| io::write_paths_csv(w, &m.chain))?;
            out.csv("paths.csv", |w| io::write_paths_csv(w, &m.reference))?;
            verdicts.extend(m.verdicts);
            None
        }
    };
    if !verdicts.is_empty() {
        out.json("verdicts.json", &verdicts)?;
    }
    let mut artifacts = out.written.clone();
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        master_seed: job.seed(),
        job: job.clone(),
        threads,
        wall_time_s: started.elapsed().as_secs_f64(),
        events,
        artifacts,
    };
    out.json("manifest.json", &manifest)?;
    Ok((manifest, verdicts))
}
