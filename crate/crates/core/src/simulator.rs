//! Exact simulation of single trajectories and seeded ensembles.
//!
//! Time inside the event loop is the model's own (fast) time. Configuration
//! and outputs use slow time, `t_slow = t_fast / sqrt(N)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::CriticalStructure;
use crate::engine::{Engine, Halt, EVENT_LIMIT};
use crate::error::{Error, Result};
use crate::model::{observables, ModelParams, Observables, PopulationState};
use crate::rng;
use crate::stats::{EnsembleSummary, Marginal, ReplicaRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InitialMode {
    /// `(i, j, k) = x (alpha, beta, 1)`.
    OnRay {
        x: f64,
    },
    Explicit {
        state: PopulationState,
    },
    /// Everyone single, `i0` of them infected.
    AllSusceptiblePlus {
        i0: i64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    #[serde(flatten)]
    pub mode: InitialMode,
    /// Target `z` at time zero; used by `OnRay` only.
    #[serde(default)]
    pub z0: f64,
}

impl InitialCondition {
    pub fn on_ray(x: f64) -> Self {
        Self { mode: InitialMode::OnRay { x }, z0: 0.0 }
    }

    pub fn explicit(state: PopulationState) -> Self {
        Self { mode: InitialMode::Explicit { state }, z0: 0.0 }
    }

    pub fn all_susceptible_plus(i0: i64) -> Self {
        Self { mode: InitialMode::AllSusceptiblePlus { i0 }, z0: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub init: InitialCondition,
    pub t_max_slow: f64,
    pub record_grid_slow: f64,
    pub stop_on_extinction: bool,
    /// Stop once `H` is at or below this value.
    pub h_floor: Option<f64>,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(params: ModelParams, init: InitialCondition, t_max_slow: f64, seed: u64) -> Self {
        Self { params, init, t_max_slow, record_grid_slow: t_max_slow / 100.0, stop_on_extinction: true, h_floor: None, seed }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.t_max_slow.is_finite() && self.t_max_slow > 0.0) {
            return Err(Error::InvalidConfig(format!("t_max_slow must be positive, got {}", self.t_max_slow)));
        }
        if !(self.record_grid_slow.is_finite() && self.record_grid_slow > 0.0) {
            return Err(Error::InvalidConfig(format!("record_grid_slow must be positive, got {}", self.record_grid_slow)));
        }
        Ok(())
    }

    /// Constants at the configured `lambda`.
    pub fn structure(&self) -> Result<CriticalStructure> {
        CriticalStructure::at_lambda(self.params.r_plus, self.params.r_minus, self.params.lambda)
    }
}

/// `N^(1/5)`, the `H` level below which the infection is a branching process.
pub fn default_h_floor(n: u64) -> f64 {
    (n as f64).powf(0.2)
}

pub fn build_initial_state(init: &InitialCondition, params: &ModelParams, crit: &CriticalStructure) -> Result<PopulationState> {
    params.validate()?;
    let n = params.n as i64;
    let nf = params.n_f64();
    let infeasible = |what: String| Error::InfeasibleInitial(what);
    let st = match init.mode {
        InitialMode::Explicit { state } => {
            state.check(params.n).map_err(|e| infeasible(e.to_string()))?;
            state
        }
        InitialMode::AllSusceptiblePlus { i0 } => {
            if i0 < 0 || i0 > n {
                return Err(infeasible(format!("I0 = {i0} outside [0, {n}]")));
            }
            PopulationState::new(n - i0, i0, 0, 0, 0)
        }
        InitialMode::OnRay { x } => {
            if !(x.is_finite() && x >= 0.0) {
                return Err(infeasible(format!("ray coordinate must be non-negative, got {x}")));
            }
            let sn = nf.sqrt();
            let i = (crit.alpha * x * sn).round() as i64;
            let j = (crit.beta * x * sn).round() as i64;
            let k = (x * sn).round() as i64;
            let mut y = (nf * crit.y_star + init.z0 * sn).round() as i64;
            if (n - y - 2 * (j + k)).rem_euclid(2) == 1 {
                y += if y > i { -1 } else { 1 };
            }
            let rest = n - y - 2 * (j + k);
            let st = PopulationState::new(y - i, i, j, k, rest / 2);
            if st.as_array().iter().any(|&c| c < 0) || rest < 0 {
                return Err(infeasible(format!("ray point x = {x} needs I = {i}, J = {j}, K = {k} with Y = {y} singles out of N = {n}")));
            }
            st
        }
    };
    debug_assert_eq!(st.population(), n);
    Ok(st)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Extinction,
    Horizon,
    HFloor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalInfo {
    pub stop_reason: StopReason,
    /// First time `I + J + K = 0`, if observed.
    pub extinction_time_slow: Option<f64>,
    pub stop_time_slow: f64,
    pub events: u64,
    pub final_state: PopulationState,
    pub sup_abs_z: f64,
    pub sup_h: f64,
    /// `int z_N i_N ds` over slow time up to the stop.
    pub zi_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t_slow: f64,
    pub state: PopulationState,
    pub obs: Observables,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub terminal: TerminalInfo,
}

/// Drives one replica through the observation times `times_slow` (sorted),
/// calling `observe` with each time and the engine positioned there.
fn drive<F>(
    config: &SimConfig,
    crit: &CriticalStructure,
    stream: rng::StreamRng,
    times_slow: &[f64],
    mut observe: F,
) -> Result<TerminalInfo>
where
    F: FnMut(f64, &Engine, bool),
{
    let p = config.params;
    let sn = p.n_f64().sqrt();
    let state = build_initial_state(&config.init, &p, crit)?;
    let mut eng = Engine::new(p, crit, state, stream, config.stop_on_extinction, config.h_floor);
    let horizon = config.t_max_slow * sn;

    let mut halt = eng.halted_now();
    let mut next_obs = 0;
    while halt.is_none() && next_obs < times_slow.len() && times_slow[next_obs] * sn <= horizon {
        let target = times_slow[next_obs] * sn;
        halt = eng.advance(target);
        if halt.is_none() {
            observe(times_slow[next_obs], &eng, false);
            next_obs += 1;
        }
    }
    if halt.is_none() {
        halt = eng.advance(horizon);
    }
    if halt == Some(Halt::EventLimit) {
        return Err(Error::EventLimit(EVENT_LIMIT));
    }
    let stop_fast = if halt.is_some() { eng.time() } else { horizon };
    for &t in &times_slow[next_obs..] {
        observe(t, &eng, true);
    }

    let (y_lo, y_hi) = eng.singles_range();
    let n_ystar = p.n_f64() * crit.y_star;
    let stop_reason = match halt {
        Some(Halt::Extinct) => StopReason::Extinction,
        Some(Halt::HFloor) => StopReason::HFloor,
        _ => StopReason::Horizon,
    };
    Ok(TerminalInfo {
        stop_reason,
        extinction_time_slow: eng.extinct_at().map(|t| t / sn),
        stop_time_slow: stop_fast / sn,
        events: eng.events(),
        final_state: eng.state(),
        sup_abs_z: (y_hi - n_ystar).abs().max((y_lo - n_ystar).abs()) / sn,
        sup_h: eng.h_max() / sn,
        zi_integral: eng.zi_integral_at(stop_fast) / (p.n_f64() * sn),
    })
}

fn grid(config: &SimConfig) -> Vec<f64> {
    let count = (config.t_max_slow / config.record_grid_slow * (1.0 + 1e-12)).floor() as usize;
    (0..=count).map(|q| q as f64 * config.record_grid_slow).collect()
}

fn trajectory(config: &SimConfig, crit: &CriticalStructure, times: &[f64], stream: rng::StreamRng) -> Result<Trajectory> {
    let mut samples = Vec::with_capacity(times.len());
    let p = config.params;
    let terminal = drive(config, crit, stream, times, |t, eng, after_stop| {
        if !after_stop {
            let state = eng.state();
            samples.push(Sample { t_slow: t, state, obs: observables(&state, &p, crit) });
        }
    })?;
    if samples.last().is_none_or(|s| s.t_slow < terminal.stop_time_slow) {
        let state = terminal.final_state;
        samples.push(Sample { t_slow: terminal.stop_time_slow, state, obs: observables(&state, &p, crit) });
    }
    Ok(Trajectory { samples, terminal })
}

/// One trajectory on the stream `0` of `config.seed`, sampled on the recording
/// grid. A final sample is added at the stop time when it is off the grid.
pub fn run(config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    let crit = config.structure()?;
    trajectory(config, &crit, &grid(config), rng::stream(config.seed, 0))
}

/// Full trajectories on streams `0..replicas`; replica `0` equals [`run`].
pub fn run_replicas(config: &SimConfig, replicas: usize, threads: Option<usize>) -> Result<Vec<Trajectory>> {
    config.validate()?;
    let crit = config.structure()?;
    build_initial_state(&config.init, &config.params, &crit)?;
    let times = grid(config);
    let work: Vec<rng::StreamRng> = rng::streams(config.seed, replicas);
    in_pool(threads, || work.into_par_iter().map(|s| trajectory(config, &crit, &times, s)).collect())
}

fn in_pool<T: Send, F: FnOnce() -> Result<T> + Send>(threads: Option<usize>, f: F) -> Result<T> {
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

/// Independent replicas on streams `0..replicas` of `config.seed`. Output is
/// ordered by replica and does not depend on `threads`.
pub fn run_ensemble(config: &SimConfig, replicas: usize, marginal_times_slow: &[f64], threads: Option<usize>) -> Result<EnsembleSummary> {
    config.validate()?;
    if replicas == 0 {
        return Err(Error::InvalidConfig("replicas must be at least 1".into()));
    }
    let mut times = marginal_times_slow.to_vec();
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidConfig("marginal times must be finite and non-negative".into()));
    }
    times.sort_by(f64::total_cmp);
    let crit = config.structure()?;
    build_initial_state(&config.init, &config.params, &crit)?;
    let streams = rng::streams(config.seed, replicas);

    let one = |(r, stream): (usize, rng::StreamRng)| -> Result<ReplicaRecord> {
        let sn = config.params.n_f64().sqrt();
        let mut marginals = Vec::with_capacity(times.len());
        let terminal = drive(config, &crit, stream, &times, |t, eng, post_stop| {
            let zi_t = if post_stop { eng.zi_integral_at(eng.time()) } else { eng.zi_integral_at(t * sn) };
            marginals.push(Marginal { t_slow: t, post_stop, state: eng.state(), zi_integral: zi_t / (config.params.n_f64() * sn) });
        })?;
        Ok(ReplicaRecord {
            replica: r as u64,
            tau0_slow: terminal.extinction_time_slow,
            censored: terminal.extinction_time_slow.is_none(),
            stop_reason: terminal.stop_reason,
            stop_time_slow: terminal.stop_time_slow,
            events: terminal.events,
            sup_abs_z: terminal.sup_abs_z,
            sup_h: terminal.sup_h,
            zi_integral: terminal.zi_integral,
            marginals,
        })
    };

    let work: Vec<(usize, rng::StreamRng)> = streams.into_iter().enumerate().collect();
    let records: Vec<ReplicaRecord> = in_pool(threads, || work.into_par_iter().map(one).collect())?;
    Ok(EnsembleSummary { config: *config, structure: crit, marginal_times_slow: times, replicas: records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::critical_structure;

    fn critical(n: u64) -> (ModelParams, CriticalStructure) {
        let crit = critical_structure(4.0, 1.0).unwrap();
        (ModelParams::new(4.0, 1.0, crit.lambda, n).unwrap(), crit)
    }

    #[test]
    fn on_ray_start_is_close_to_target() {
        let (p, crit) = critical(10_000);
        let st = build_initial_state(&InitialCondition::on_ray(1.0), &p, &crit).unwrap();
        let o = observables(&st, &p, &crit);
        let tol = 2.0 / 100.0;
        assert!((o.i - crit.alpha).abs() <= tol && (o.j - crit.beta).abs() <= tol && (o.k - 1.0).abs() <= tol);
        assert!(o.z.abs() <= tol);
    }

    #[test]
    fn on_ray_parity_and_offset() {
        let (p, crit) = critical(10_001);
        for z0 in [-1.0, 0.0, 0.37, 2.0] {
            let init = InitialCondition { mode: InitialMode::OnRay { x: 0.5 }, z0 };
            let st = build_initial_state(&init, &p, &crit).unwrap();
            assert_eq!(st.population(), 10_001);
            assert!((observables(&st, &p, &crit).z - z0).abs() <= 2.0 / 100.0);
        }
        assert!(matches!(build_initial_state(&InitialCondition::on_ray(1e3), &p, &crit), Err(Error::InfeasibleInitial(_))));
    }

    #[test]
    fn explicit_and_plus_starts() {
        let (p, crit) = critical(100);
        assert!(build_initial_state(&InitialCondition::explicit(PopulationState::new(10, 0, 0, 0, 10)), &p, &crit).is_err());
        let st = build_initial_state(&InitialCondition::all_susceptible_plus(10), &p, &crit).unwrap();
        assert_eq!(st, PopulationState::new(90, 10, 0, 0, 0));
        assert!(build_initial_state(&InitialCondition::all_susceptible_plus(101), &p, &crit).is_err());
    }

    #[test]
    fn extinct_start_stops_at_zero() {
        let (p, _) = critical(1000);
        let cfg = SimConfig::new(p, InitialCondition::all_susceptible_plus(0), 1.0, 5);
        let tr = run(&cfg).unwrap();
        assert_eq!(tr.terminal.stop_reason, StopReason::Extinction);
        assert_eq!(tr.terminal.extinction_time_slow, Some(0.0));
        assert_eq!(tr.terminal.events, 0);
        assert_eq!(tr.samples.len(), 1);
    }

    #[test]
    fn no_transmission_means_no_new_infections() {
        for seed in 0..100 {
            // lambda cannot be zero, so use a rate so small no infection fires.
            let p = ModelParams::new(4.0, 1.0, 1e-300, 400).unwrap();
            let mut cfg = SimConfig::new(p, InitialCondition::all_susceptible_plus(20), 2.0, seed);
            cfg.record_grid_slow = 0.01;
            let tr = run(&cfg).unwrap();
            let infected: Vec<i64> = tr.samples.iter().map(|s| s.state.i + 2 * s.state.j + s.state.k).collect();
            assert!(infected.windows(2).all(|w| w[1] <= w[0]), "seed {seed}");
        }
    }

    #[test]
    fn run_is_deterministic_and_grid_independent() {
        let (p, _) = critical(2000);
        let mut cfg = SimConfig::new(p, InitialCondition::on_ray(1.0), 0.5, 11);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.record_grid_slow = 0.001;
        let c = run(&cfg).unwrap();
        assert_eq!(a.terminal, c.terminal);
        assert!(a.samples.windows(2).all(|w| w[0].t_slow < w[1].t_slow));
    }

    #[test]
    fn ensemble_of_one_matches_run() {
        let (p, _) = critical(2000);
        let cfg = SimConfig::new(p, InitialCondition::on_ray(1.0), 0.5, 21);
        let tr = run(&cfg).unwrap();
        let grid: Vec<f64> = tr.samples.iter().map(|s| s.t_slow).filter(|&t| t <= 0.5).collect();
        let ens = run_ensemble(&cfg, 1, &grid, Some(1)).unwrap();
        let rec = &ens.replicas[0];
        assert_eq!(rec.events, tr.terminal.events);
        assert_eq!(rec.tau0_slow, tr.terminal.extinction_time_slow);
        assert_eq!(rec.zi_integral, tr.terminal.zi_integral);
        for (m, s) in rec.marginals.iter().zip(&tr.samples) {
            if !m.post_stop {
                assert_eq!(m.state, s.state);
            }
        }
    }

    #[test]
    fn ensemble_marginal_at_zero_is_initial_state() {
        let (p, crit) = critical(3000);
        let cfg = SimConfig::new(p, InitialCondition::on_ray(1.0), 0.2, 2);
        let init = build_initial_state(&cfg.init, &p, &crit).unwrap();
        let ens = run_ensemble(&cfg, 6, &[0.1, 0.0], None).unwrap();
        assert_eq!(ens.marginal_times_slow, vec![0.0, 0.1]);
        for r in &ens.replicas {
            assert_eq!(r.marginals.len(), 2);
            assert_eq!(r.marginals[0].state, init);
            assert_eq!(r.marginals[0].zi_integral, 0.0);
        }
        assert_eq!(ens, run_ensemble(&cfg, 6, &[0.0, 0.1], Some(3)).unwrap());
    }

    #[test]
    fn replicas_match_run_and_ensemble() {
        let (p, _) = critical(2000);
        let cfg = SimConfig::new(p, InitialCondition::on_ray(1.0), 0.3, 8);
        let trs = run_replicas(&cfg, 4, Some(2)).unwrap();
        assert_eq!(trs[0], run(&cfg).unwrap());
        let ens = run_ensemble(&cfg, 4, &[0.1], None).unwrap();
        for (tr, rec) in trs.iter().zip(&ens.replicas) {
            assert_eq!(tr.terminal.events, rec.events);
        }
        assert_ne!(trs[1].terminal.events, trs[2].terminal.events);
    }
}
