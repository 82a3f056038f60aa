//! Monte-Carlo experiments that turn simulations into [`Verdict`]s.
//!
//! Each function runs (or consumes) the ensembles for one property and
//! compares against the analytic prediction with a fixed tolerance. Times
//! named `*_fast` are in the model's own time units; everything else is slow
//! time, `t_fast / sqrt(N)`.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analytics::{critical_structure, singles_ode, CriticalStructure};
use crate::error::{Error, Result};
use crate::model::{ModelParams, PopulationState};
use crate::rng;
use crate::sde::{self, limit_diffusion_ensemble, mfcp_ensemble, DiffusionSpec, PathEnsemble, StartValue, X_BIG};
use crate::simulator::{run_ensemble, run_replicas, InitialCondition, SimConfig};
use crate::stats::{censored_median, collapse_profile, ks_one_sample, ks_two_sample, median, CollapseProfile, EnsembleSummary, Verdict};

/// Critical parameters at population `n`.
pub fn critical_params(r_plus: f64, r_minus: f64, n: u64) -> Result<(ModelParams, CriticalStructure)> {
    let crit = critical_structure(r_plus, r_minus)?;
    Ok((ModelParams::new(r_plus, r_minus, crit.lambda, n)?, crit))
}

fn fast_grid(from: f64, to: f64, step: f64) -> Vec<f64> {
    let count = ((to - from) / step * (1.0 + 1e-12)).floor() as usize;
    (0..=count).map(|q| from + q as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeTracking {
    pub times_fast: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub ode_y: Vec<f64>,
    pub verdict: Verdict,
}

/// Mean singles fraction from an all-single start with `ceil(sqrt N)` infected,
/// against the deterministic singles equation on fast time `[0, t_end_fast]`.
pub fn ode_tracking(
    r_plus: f64,
    r_minus: f64,
    n: u64,
    replicas: usize,
    t_end_fast: f64,
    seed: u64,
    threads: Option<usize>,
) -> Result<OdeTracking> {
    let (p, _) = critical_params(r_plus, r_minus, n)?;
    let sn = p.n_f64().sqrt();
    let i0 = sn.ceil() as i64;
    let times_fast = fast_grid(0.0, t_end_fast, 0.05);
    let slow: Vec<f64> = times_fast.iter().map(|t| t / sn).collect();
    let mut cfg = SimConfig::new(p, InitialCondition::all_susceptible_plus(i0), t_end_fast / sn, seed);
    cfg.stop_on_extinction = false;
    let ens = run_ensemble(&cfg, replicas, &slow, threads)?;
    let nf = p.n_f64();
    let mean_y: Vec<f64> =
        (0..slow.len()).map(|q| ens.marginals_at(q).map(|m| m.state.singles() as f64 / nf).sum::<f64>() / replicas as f64).collect();
    let ode_y: Vec<f64> = times_fast.iter().map(|&t| singles_ode(r_plus, r_minus, 1.0, t)).collect();
    let sup = mean_y.iter().zip(&ode_y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let verdict = Verdict::below("ode_tracking", json!({"n": n, "replicas": replicas, "t_end_fast": t_end_fast, "seed": seed}), sup, 0.02);
    Ok(OdeTracking { times_fast, mean_y, ode_y, verdict })
}

/// Pooled variance of `z` over fast times `[20, 200]` from an on-ray start,
/// relative to the stationary OU variance `sigma_z^2 / (2 mu_z)`.
pub fn ou_variance(r_plus: f64, r_minus: f64, n: u64, replicas: usize, seed: u64, threads: Option<usize>) -> Result<(Verdict, u64)> {
    let (p, crit) = critical_params(r_plus, r_minus, n)?;
    let sn = p.n_f64().sqrt();
    let slow: Vec<f64> = fast_grid(20.0, 200.0, 0.5).iter().map(|t| t / sn).collect();
    let mut cfg = SimConfig::new(p, InitialCondition::on_ray(1.0), 200.0 / sn, seed);
    cfg.stop_on_extinction = false;
    let ens = run_ensemble(&cfg, replicas, &slow, threads)?;
    let n_ystar = p.n_f64() * crit.y_star;
    let z: Vec<f64> = ens.replicas.iter().flat_map(|r| r.marginals.iter().map(|m| (m.state.singles() as f64 - n_ystar) / sn)).collect();
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64;
    let target = crit.sigma_z2 / (2.0 * crit.mu_z);
    let verdict = Verdict::below(
        "ou_variance",
        json!({"n": n, "replicas": replicas, "seed": seed, "empirical": var, "stationary": target}),
        (var / target - 1.0).abs(),
        0.10,
    );
    Ok((verdict, ens.total_events()))
}

/// Lattice OU chain at fast time `5 / mu_z` from `z0 = 1`, against the exact
/// OU law by one-sample KS.
pub fn ou_lattice(r_plus: f64, r_minus: f64, n: u64, replicas: usize, seed: u64) -> Result<Verdict> {
    let crit = critical_structure(r_plus, r_minus)?;
    let t = 5.0 / crit.mu_z;
    let step = 2.0 / (n as f64).sqrt();
    let z0 = (1.0 / step).floor() * step;
    let sample: Vec<f64> = rng::streams(seed, replicas)
        .into_iter()
        .map(|mut r| sde::simulate_discrete_ou_chain(n, crit.mu_z, crit.sigma_z2, z0, &[t], &mut r)[0])
        .collect();
    let d = ks_one_sample(&sample, sde::ou_cdf(crit.mu_z, crit.sigma_z2, z0, t))?;
    Ok(Verdict::below("ou_lattice_ks", json!({"n": n, "replicas": replicas, "seed": seed, "t_fast": t}), d, 0.05))
}

/// Infected singles only, with singles at equilibrium.
pub fn infected_singles_start(p: &ModelParams, crit: &CriticalStructure, i0: i64) -> Result<PopulationState> {
    let n = p.n as i64;
    let mut y = (p.n_f64() * crit.y_star).round() as i64;
    if (n - y) % 2 != 0 {
        y += 1;
    }
    if !(0..=y).contains(&i0) {
        return Err(Error::InfeasibleInitial(format!("I0 = {i0} exceeds the {y} singles at equilibrium")));
    }
    Ok(PopulationState::new(y - i0, i0, 0, 0, (n - y) / 2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collapse {
    pub profiles: Vec<CollapseProfile>,
    pub events: u64,
    pub hit: Verdict,
    pub stay: Verdict,
}

/// Off-ray start with `i0` infected singles. Replicas must reach `Q <= 0.05`
/// within fast time `50 log N`; after that, samples with `H > N^(1/5)`, pooled
/// over replicas, must have `Q <= 0.1`.
pub fn collapse(r_plus: f64, r_minus: f64, n: u64, replicas: usize, i0: i64, seed: u64, threads: Option<usize>) -> Result<Collapse> {
    let (p, crit) = critical_params(r_plus, r_minus, n)?;
    let sn = p.n_f64().sqrt();
    let horizon_fast = 50.0 * p.n_f64().ln();
    let mut cfg = SimConfig::new(p, InitialCondition::explicit(infected_singles_start(&p, &crit, i0)?), horizon_fast / sn, seed);
    cfg.record_grid_slow = 0.5 / sn;
    let trajectories = run_replicas(&cfg, replicas, threads)?;
    let profiles = collapse_profile(&trajectories, n, 0.05);
    let hits = profiles.iter().filter(|pr| pr.first_hit_fast.is_some_and(|t| t <= horizon_fast)).count();
    let (samples, close) = profiles.iter().fold((0, 0), |acc, pr| (acc.0 + pr.post_hit_samples, acc.1 + pr.post_hit_close));
    let inputs = json!({"n": n, "replicas": replicas, "i0": i0, "seed": seed, "horizon_fast": horizon_fast});
    let hit = Verdict::at_least("collapse_hit_fraction", inputs.clone(), hits as f64 / replicas as f64, 0.95);
    let stay_frac = if samples == 0 { 0.0 } else { close as f64 / samples as f64 };
    let stay = Verdict::at_least("collapse_stay_fraction", json!({"post_hit_samples": samples, "base": inputs}), stay_frac, 0.99);
    let events = trajectories.iter().map(|t| t.terminal.events).sum();
    Ok(Collapse { profiles, events, hit, stay })
}

/// Marginal times used for the diffusion and averaging checks.
pub const ON_RAY_TIMES: [f64; 2] = [0.5, 1.0];

/// On-ray `x = 1` ensemble run to extinction or slow time `t_max`.
#[allow(clippy::too_many_arguments)]
pub fn on_ray_ensemble(
    r_plus: f64,
    r_minus: f64,
    n: u64,
    replicas: usize,
    times: &[f64],
    t_max: f64,
    seed: u64,
    threads: Option<usize>,
) -> Result<EnsembleSummary> {
    let (p, _) = critical_params(r_plus, r_minus, n)?;
    let cfg = SimConfig::new(p, InitialCondition::on_ray(1.0), t_max, seed);
    run_ensemble(&cfg, replicas, times, threads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    /// `(N, slow-time median extinction time)`, increasing in `N`.
    pub medians: Vec<(u64, f64)>,
    pub fit: crate::stats::ScalingFit,
    pub verdict: Verdict,
}

/// Slow-time median extinction ratios between consecutive `N` must lie in
/// `[0.75, 1.33]`. The statistic is the worst `max(ratio / 1.33, 0.75 / ratio)`.
pub fn extinction_scaling(ensembles: &[&EnsembleSummary]) -> Result<Scaling> {
    let mut medians = Vec::with_capacity(ensembles.len());
    for e in ensembles {
        let n = e.config.params.n;
        let tau = e.tau0_values();
        medians.push((n, censored_median(&tau, n)?));
    }
    medians.sort_by_key(|m| m.0);
    let fit = crate::stats::extinction_scaling(&medians)?;
    let worst = fit.ratios.iter().map(|r| (r / 1.33).max(0.75 / r)).fold(0.0, f64::max);
    let verdict =
        Verdict::at_most("extinction_scaling", json!({"medians": medians, "ratios": fit.ratios, "fast_slope": fit.slope}), worst, 1.0);
    Ok(Scaling { medians, fit, verdict })
}

/// Median `|int_0^(1 ^ tau) z_N i_N ds|` over the first `replicas` replicas of
/// each ensemble must not grow from the smaller to the larger `N`.
pub fn averaging(small: &EnsembleSummary, large: &EnsembleSummary, replicas: usize) -> Result<Verdict> {
    let med = |e: &EnsembleSummary| -> Result<f64> {
        let q = e.time_index(1.0).ok_or(Error::InvalidConfig("ensemble lacks a marginal at slow time 1".into()))?;
        if e.replicas.len() < replicas {
            return Err(Error::InvalidConfig(format!("ensemble has {} replicas, need {replicas}", e.replicas.len())));
        }
        let v: Vec<f64> = e.replicas[..replicas].iter().map(|r| r.marginals[q].zi_integral.abs()).collect();
        median(&v)
    };
    let (m_small, m_large) = (med(small)?, med(large)?);
    Ok(Verdict::at_most(
        "averaging",
        json!({"n_small": small.config.params.n, "n_large": large.config.params.n, "replicas": replicas}),
        m_large,
        m_small,
    ))
}

/// Two-sample KS of `i_N` against the limit diffusion at the ensemble's
/// marginal times, and of the extinction times, using `paths` Euler-Maruyama
/// paths over the ensemble's horizon seeded from the ensemble's seed. Extinctions past the horizon count as
/// `+inf` on both sides.
pub fn diffusion_compare(ens: &EnsembleSummary, paths: usize) -> Result<(Vec<Verdict>, PathEnsemble)> {
    let seed = rng::reference_seed(ens.config.seed);
    let crit = &ens.structure;
    let sn = ens.config.params.n_f64().sqrt();
    let spec = DiffusionSpec::new(crit.mu_x, crit.sigma_x2, StartValue::Finite(crit.alpha), ens.config.t_max_slow);
    let em = limit_diffusion_ensemble(&spec, paths, seed, &ens.marginal_times_slow)?;
    let base = json!({"n": ens.config.params.n, "replicas": ens.replicas.len(), "paths": paths, "seed": seed});
    let mut out = Vec::new();
    for (q, &t) in ens.marginal_times_slow.iter().enumerate() {
        let i_n: Vec<f64> = ens.marginals_at(q).map(|m| m.state.i as f64 / sn).collect();
        let (d, _) = ks_two_sample(&i_n, &em.marginals[q])?;
        out.push(Verdict::below(&format!("diffusion_ks_t{t}"), base.clone(), d, 0.10));
    }
    let (d, _) = ks_two_sample(&ens.tau0_values(), &em.tau0_values())?;
    out.push(Verdict::below("diffusion_tau0_ecdf", base, d, 0.10));
    Ok((out, em))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mfcp {
    pub chain: PathEnsemble,
    pub reference: PathEnsemble,
    pub verdicts: Vec<Verdict>,
}

/// Mean-field contact process from `X0 = N` against the critical (`beta = 1`)
/// limit `dx = -x^2 dt + sqrt(2x) dB` started at a large value: KS of `x_N(1)`
/// and extinction-time ECDF distance up to slow time `t_max`.
pub fn mfcp_compare(n: u64, beta: f64, replicas: usize, paths: usize, t_max: f64, seed: u64) -> Result<Mfcp> {
    let chain = mfcp_ensemble(n, beta, n, replicas, seed, &[1.0], t_max)?;
    let spec = DiffusionSpec::new(1.0, 2.0, StartValue::Finite(X_BIG), t_max);
    let em = limit_diffusion_ensemble(&spec, paths, rng::reference_seed(seed), &[1.0])?;
    let inputs = json!({"n": n, "beta": beta, "replicas": replicas, "paths": paths, "t_max": t_max, "seed": seed});
    let (d_x, _) = ks_two_sample(&chain.marginals[0], &em.marginals[0])?;
    let (d_tau, _) = ks_two_sample(&chain.tau0_values(), &em.tau0_values())?;
    let verdicts = vec![Verdict::below("mfcp_ks_t1", inputs.clone(), d_x, 0.08), Verdict::below("mfcp_tau0_ecdf", inputs, d_tau, 0.10)];
    Ok(Mfcp { chain, reference: em, verdicts })
}
