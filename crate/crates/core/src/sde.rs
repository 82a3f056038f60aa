//! Reference processes: the limiting diffusion `dX = -mu X^2 dt + sigma sqrt(X) dB`,
//! the critical mean-field contact process, the Ornstein-Uhlenbeck limit of
//! the singles and its lattice approximation.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Finite stand-in for a start at infinity. From `x0` the mean after time `t`
/// is within `1/(mu x0)` of the value from an infinite start.
pub const X_BIG: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartValue {
    Finite(f64),
    Infinity,
}

impl StartValue {
    pub fn value(self) -> f64 {
        match self {
            StartValue::Finite(x) => x,
            StartValue::Infinity => X_BIG,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpec {
    pub mu: f64,
    pub sigma2: f64,
    pub x0: StartValue,
    pub dt: f64,
    pub t_max: f64,
}

impl DiffusionSpec {
    pub fn new(mu: f64, sigma2: f64, x0: StartValue, t_max: f64) -> Self {
        Self { mu, sigma2, x0, dt: 1e-4, t_max }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.mu.is_finite() && self.mu >= 0.0 && self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return bad(format!("mu and sigma2 must be non-negative, got {} and {}", self.mu, self.sigma2));
        }
        if !(self.x0.value().is_finite() && self.x0.value() >= 0.0) {
            return bad(format!("x0 must be non-negative, got {:?}", self.x0));
        }
        if !(self.t_max > 0.0 && self.dt > 0.0 && self.dt <= 1e-3 * self.t_max) {
            return bad(format!("need 0 < dt <= 1e-3 t_max, got dt = {} and t_max = {}", self.dt, self.t_max));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

/// Values at requested times and the absorption time, if reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub tau0: Option<f64>,
}

fn step_indices(times: &[f64], dt: f64) -> Vec<usize> {
    times.iter().map(|t| (t / dt).round() as usize).collect()
}

/// Full-truncation Euler-Maruyama path, recorded at `times` (sorted, within
/// `[0, t_max]`). The first step with `X <= 0` fixes `X = 0` from then on.
pub fn simulate_limit_diffusion(spec: &DiffusionSpec, times: &[f64], rng: &mut StreamRng) -> PathRecord {
    let steps = spec.steps();
    let marks = step_indices(times, spec.dt);
    let sigma = spec.sigma2.sqrt();
    let sdt = spec.dt.sqrt();
    let mut x = spec.x0.value();
    let mut out = PathRecord { t: times.to_vec(), x: Vec::with_capacity(times.len()), tau0: None };
    let mut next_mark = 0;
    if x <= 0.0 {
        out.tau0 = Some(0.0);
        out.x.resize(times.len(), 0.0);
        return out;
    }
    for n in 0..=steps {
        while next_mark < marks.len() && marks[next_mark] == n {
            out.x.push(x);
            next_mark += 1;
        }
        if n == steps {
            break;
        }
        let xp = x.max(0.0);
        let xi: f64 = StandardNormal.sample(rng);
        x = x - spec.mu * xp * xp * spec.dt + sigma * xp.sqrt() * sdt * xi;
        if x <= 0.0 {
            out.tau0 = Some((n + 1) as f64 * spec.dt);
            x = 0.0;
            while next_mark < marks.len() {
                out.x.push(0.0);
                next_mark += 1;
            }
            break;
        }
    }
    out.x.resize(times.len(), x);
    out
}

/// Absorption indicators by `t_max` for step `dt` and `dt / 2` driven by the same
/// Brownian path: the coarse increment is the sum of the two fine ones.
pub fn absorbed_coupled_pair(spec: &DiffusionSpec, rng: &mut StreamRng) -> (bool, bool) {
    let sigma = spec.sigma2.sqrt();
    let h = spec.dt / 2.0;
    let (mut xc, mut xf) = (spec.x0.value(), spec.x0.value());
    let (mut dead_c, mut dead_f) = (xc <= 0.0, xf <= 0.0);
    for _ in 0..spec.steps() {
        if dead_c && dead_f {
            break;
        }
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        for xi in [a, b] {
            if !dead_f {
                let xp = xf.max(0.0);
                xf = xf - spec.mu * xp * xp * h + sigma * (xp * h).sqrt() * xi;
                dead_f = xf <= 0.0;
            }
        }
        if !dead_c {
            let xp = xc.max(0.0);
            xc = xc - spec.mu * xp * xp * spec.dt + sigma * (xp * spec.dt).sqrt() * (a + b) / 2f64.sqrt();
            dead_c = xc <= 0.0;
        }
    }
    (dead_c, dead_f)
}

/// Marginals and absorption times over many independent paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    /// `marginals[q][p]` is path `p` at `times[q]`.
    pub marginals: Vec<Vec<f64>>,
    pub tau0: Vec<Option<f64>>,
}

impl PathEnsemble {
    fn from_records(times: &[f64], records: Vec<PathRecord>) -> Self {
        let marginals = (0..times.len()).map(|q| records.iter().map(|r| r.x[q]).collect()).collect();
        let tau0 = records.iter().map(|r| r.tau0).collect();
        Self { times: times.to_vec(), marginals, tau0 }
    }

    pub fn tau0_values(&self) -> Vec<f64> {
        self.tau0.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect()
    }
}

fn sorted_times(times: &[f64], t_max: f64) -> Result<Vec<f64>> {
    if times.iter().any(|&t| !(t >= 0.0 && t <= t_max)) {
        return Err(Error::InvalidConfig(format!("record times must lie in [0, {t_max}]")));
    }
    let mut t = times.to_vec();
    t.sort_by(f64::total_cmp);
    Ok(t)
}

pub fn limit_diffusion_ensemble(spec: &DiffusionSpec, paths: usize, seed: u64, times: &[f64]) -> Result<PathEnsemble> {
    spec.validate()?;
    let times = sorted_times(times, spec.t_max)?;
    let records = rng::streams(seed, paths).into_par_iter().map(|mut r| simulate_limit_diffusion(spec, &times, &mut r)).collect();
    Ok(PathEnsemble::from_records(&times, records))
}

/// Exact birth-death chain with `k -> k-1` at rate `k` and `k -> k+1` at rate
/// `beta k (1 - k/N)`, reported as `x_N(t) = X(sqrt(N) t) / sqrt(N)` at slow
/// `times`; runs until extinction or slow time `t_max`.
pub fn simulate_mfcp(n: u64, beta: f64, x0: u64, times: &[f64], t_max: f64, rng: &mut StreamRng) -> PathRecord {
    let nf = n as f64;
    let sn = nf.sqrt();
    let horizon = t_max * sn;
    let mut k = x0.min(n) as f64;
    let mut t = 0.0;
    let mut out = PathRecord { t: times.to_vec(), x: Vec::with_capacity(times.len()), tau0: None };
    let mut next_mark = 0;
    loop {
        if k == 0.0 {
            out.tau0 = Some(t / sn);
            break;
        }
        let death = k;
        let birth = beta * k * (1.0 - k / nf);
        let total = death + birth;
        let e: f64 = Exp1.sample(rng);
        let t_next = t + e / total;
        while next_mark < times.len() && times[next_mark] * sn < t_next {
            out.x.push(k / sn);
            next_mark += 1;
        }
        if t_next > horizon {
            break;
        }
        t = t_next;
        if rng.random::<f64>() * total < death {
            k -= 1.0;
        } else {
            k += 1.0;
        }
    }
    out.x.resize(times.len(), k / sn);
    out
}

pub fn mfcp_ensemble(n: u64, beta: f64, x0: u64, paths: usize, seed: u64, times: &[f64], t_max: f64) -> Result<PathEnsemble> {
    if n == 0 || x0 > n || !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidConfig(format!("need 0 <= X0 <= N and beta >= 0, got N = {n}, X0 = {x0}, beta = {beta}")));
    }
    let times = sorted_times(times, t_max)?;
    let records = rng::streams(seed, paths).into_par_iter().map(|mut r| simulate_mfcp(n, beta, x0, &times, t_max, &mut r)).collect();
    Ok(PathEnsemble::from_records(&times, records))
}

/// Ornstein-Uhlenbeck path `dz = -mu z dt + sigma dB` on the grid `0, dt, ..., t_max`,
/// sampled from the exact Gaussian transition.
pub fn simulate_ou(mu_z: f64, sigma_z2: f64, z0: f64, t_max: f64, dt: f64, rng: &mut StreamRng) -> Vec<f64> {
    let steps = (t_max / dt).round() as usize;
    let decay = (-mu_z * dt).exp();
    let sd = (sigma_z2 * (1.0 - decay * decay) / (2.0 * mu_z)).sqrt();
    let mut z = z0;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(z);
    for _ in 0..steps {
        let xi: f64 = StandardNormal.sample(rng);
        z = z * decay + sd * xi;
        out.push(z);
    }
    out
}

/// Mean and variance of the Ornstein-Uhlenbeck law at time `t` from `z0`.
pub fn ou_moments(mu_z: f64, sigma_z2: f64, z0: f64, t: f64) -> (f64, f64) {
    let decay = (-mu_z * t).exp();
    (z0 * decay, sigma_z2 * (1.0 - decay * decay) / (2.0 * mu_z))
}

/// Distribution function of the Ornstein-Uhlenbeck law at time `t` from `z0`.
pub fn ou_cdf(mu_z: f64, sigma_z2: f64, z0: f64, t: f64) -> impl Fn(f64) -> f64 {
    let (m, v) = ou_moments(mu_z, sigma_z2, z0, t);
    let law = Normal::new(m, v.sqrt()).expect("positive OU variance");
    move |x| law.cdf(x)
}

/// Rates `(q+, q-)` of the lattice chain at `z`.
pub fn discrete_ou_rates(n: u64, mu_z: f64, sigma_z2: f64, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let base = sigma_z2 * nf / 8.0;
    let tilt = mu_z * nf.sqrt() * z / 4.0;
    ((base - tilt).max(0.0), (base + tilt).max(0.0))
}

/// Lattice chain on `2 N^(-1/2) Z` jumping by `+-2 N^(-1/2)`, started from
/// `z0` rounded down onto the lattice, recorded at `times`.
pub fn simulate_discrete_ou_chain(n: u64, mu_z: f64, sigma_z2: f64, z0: f64, times: &[f64], rng: &mut StreamRng) -> Vec<f64> {
    let step = 2.0 / (n as f64).sqrt();
    let mut m = (z0 / step).floor();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        loop {
            let (up, down) = discrete_ou_rates(n, mu_z, sigma_z2, m * step);
            let total = up + down;
            let e: f64 = Exp1.sample(rng);
            let dt = e / total;
            if t + dt > target {
                // Memoryless: the unused part of the wait is discarded.
                t = target;
                break;
            }
            t += dt;
            m += if rng.random::<f64>() * total < up { 1.0 } else { -1.0 };
        }
        out.push(m * step);
    }
    out
}
