//! Ensemble records and the statistics that turn them into verdicts.

use serde::{Deserialize, Serialize};

use crate::analytics::CriticalStructure;
use crate::error::{Error, Result};
use crate::model::PopulationState;
use crate::simulator::{SimConfig, StopReason, Trajectory};

/// State of one replica at a requested time. When the replica stopped earlier,
/// `post_stop` is set and the state is the one it stopped in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub t_slow: f64,
    pub post_stop: bool,
    pub state: PopulationState,
    /// `int_0^{t ^ stop} z_N i_N ds`.
    pub zi_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    /// Replica index, which is also its random stream index.
    pub replica: u64,
    pub tau0_slow: Option<f64>,
    pub censored: bool,
    pub stop_reason: StopReason,
    pub stop_time_slow: f64,
    pub events: u64,
    pub sup_abs_z: f64,
    pub sup_h: f64,
    pub zi_integral: f64,
    pub marginals: Vec<Marginal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub config: SimConfig,
    pub structure: CriticalStructure,
    pub marginal_times_slow: Vec<f64>,
    pub replicas: Vec<ReplicaRecord>,
}

impl EnsembleSummary {
    /// Extinction times with censored replicas as `+inf`.
    pub fn tau0_values(&self) -> Vec<f64> {
        self.replicas.iter().map(|r| r.tau0_slow.unwrap_or(f64::INFINITY)).collect()
    }

    /// Marginals of every replica at the `q`-th requested time.
    pub fn marginals_at(&self, q: usize) -> impl Iterator<Item = &Marginal> {
        self.replicas.iter().map(move |r| &r.marginals[q])
    }

    /// Index of the requested time closest to `t`.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.marginal_times_slow.iter().enumerate().min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs())).map(|(q, _)| q)
    }

    pub fn total_events(&self) -> u64 {
        self.replicas.iter().map(|r| r.events).sum()
    }
}

fn sorted_sample(a: &[f64]) -> Result<Vec<f64>> {
    if a.is_empty() {
        return Err(Error::EmptySample);
    }
    if a.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidSample("NaN in sample".into()));
    }
    let mut v = a.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Empirical distribution function. Values may be `+inf` (censored).
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(sample: &[f64]) -> Result<Self> {
        Ok(Self { sorted: sorted_sample(sample)? })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Steps as `(x, F(x))`, one per distinct value.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (q, &x) in self.sorted.iter().enumerate() {
            match out.last_mut() {
                Some(last) if last.0 == x => last.1 = (q + 1) as f64 / n,
                _ => out.push((x, (q + 1) as f64 / n)),
            }
        }
        out
    }
}

/// Two-sample Kolmogorov-Smirnov distance and `n_eff = nm / (n + m)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    let a = sorted_sample(a)?;
    let b = sorted_sample(b)?;
    let (n, m) = (a.len(), b.len());
    let (mut p, mut q) = (0, 0);
    let mut d: f64 = 0.0;
    while p < n && q < m {
        let x = if a[p] <= b[q] { a[p] } else { b[q] };
        while p < n && a[p] == x {
            p += 1;
        }
        while q < m && b[q] == x {
            q += 1;
        }
        d = d.max((p as f64 / n as f64 - q as f64 / m as f64).abs());
    }
    let n_eff = (n * m) as f64 / (n + m) as f64;
    Ok((d, n_eff))
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(a: &[f64], cdf: F) -> Result<f64> {
    let a = sorted_sample(a)?;
    let n = a.len() as f64;
    let mut d: f64 = 0.0;
    for (q, &x) in a.iter().enumerate() {
        let f = cdf(x);
        d = d.max((q + 1) as f64 / n - f).max(f - q as f64 / n);
    }
    Ok(d)
}

/// Median of a sample whose `+inf` entries are censored observations.
pub fn censored_median(values: &[f64], n: u64) -> Result<f64> {
    let v = sorted_sample(values)?;
    let censored = v.iter().filter(|x| x.is_infinite()).count();
    if 2 * censored >= v.len() {
        return Err(Error::CensoredMedian { n, censored, total: v.len() });
    }
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

pub fn median(values: &[f64]) -> Result<f64> {
    censored_median(values, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// Least-squares slope of log(median fast-time extinction) against log N.
    pub slope: f64,
    /// Slow-time median ratios between consecutive N.
    pub ratios: Vec<f64>,
}

/// Fits the growth of the median extinction time with `N` from slow-time medians.
pub fn extinction_scaling(medians: &[(u64, f64)]) -> Result<ScalingFit> {
    let mut m = medians.to_vec();
    m.sort_by_key(|x| x.0);
    let mut distinct: Vec<u64> = m.iter().map(|x| x.0).collect();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidSample("need medians at three or more distinct N".into()));
    }
    if let Some(&(n, _)) = m.iter().find(|x| !x.1.is_finite()) {
        return Err(Error::CensoredMedian { n, censored: 0, total: 0 });
    }
    if m.iter().any(|x| x.1 <= 0.0) {
        return Err(Error::InvalidSample("medians must be positive".into()));
    }
    let pts: Vec<(f64, f64)> = m.iter().map(|&(n, t)| ((n as f64).ln(), (t * (n as f64).sqrt()).ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let ratios = m.windows(2).map(|w| w[1].1 / w[0].1).collect();
    Ok(ScalingFit { slope: sxy / sxx, ratios })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseProfile {
    /// First fast time with `Q <= threshold`, among samples with `H > N^(1/5)`.
    pub first_hit_fast: Option<f64>,
    /// Samples after the hit with `H > N^(1/5)`.
    pub post_hit_samples: usize,
    /// Of those, samples with `Q <= 2 threshold`.
    pub post_hit_close: usize,
}

impl CollapseProfile {
    pub fn post_hit_fraction(&self) -> Option<f64> {
        (self.post_hit_samples > 0).then(|| self.post_hit_close as f64 / self.post_hit_samples as f64)
    }
}

pub fn collapse_profile(trajectories: &[Trajectory], n: u64, threshold: f64) -> Vec<CollapseProfile> {
    let sn = (n as f64).sqrt();
    let floor = (n as f64).powf(0.2);
    trajectories
        .iter()
        .map(|tr| {
            let mut prof = CollapseProfile { first_hit_fast: None, post_hit_samples: 0, post_hit_close: 0 };
            for s in tr.samples.iter().filter(|s| s.obs.big_h > floor) {
                let Some(q) = s.obs.q else { continue };
                match prof.first_hit_fast {
                    None if q <= threshold => prof.first_hit_fast = Some(s.t_slow * sn),
                    None => {}
                    Some(_) => {
                        prof.post_hit_samples += 1;
                        prof.post_hit_close += usize::from(q <= 2.0 * threshold);
                    }
                }
            }
            prof
        })
        .collect()
}

/// Median of `|int_0^{T ^ tau} z_N i_N ds|` for each ensemble, with `T` the
/// requested time nearest `t_slow`.
pub fn averaging_check(summaries: &[&EnsembleSummary], t_slow: f64) -> Result<Vec<(u64, f64)>> {
    summaries
        .iter()
        .map(|s| {
            let q = s.time_index(t_slow).ok_or(Error::EmptySample)?;
            let vals: Vec<f64> = s.marginals_at(q).map(|m| m.zi_integral.abs()).collect();
            Ok((s.config.params.n, median(&vals)?))
        })
        .collect()
}

/// Machine-readable outcome of a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub inputs: serde_json::Value,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Verdict {
    /// Passing means `statistic < threshold`.
    pub fn below(check: &str, inputs: serde_json::Value, statistic: f64, threshold: f64) -> Self {
        Self { check: check.into(), inputs, statistic, threshold, pass: statistic < threshold }
    }

    /// Passing means `statistic <= threshold`.
    pub fn at_most(check: &str, inputs: serde_json::Value, statistic: f64, threshold: f64) -> Self {
        Self { check: check.into(), inputs, statistic, threshold, pass: statistic <= threshold }
    }

    /// Passing means `statistic >= threshold`.
    pub fn at_least(check: &str, inputs: serde_json::Value, statistic: f64, threshold: f64) -> Self {
        Self { check: check.into(), inputs, statistic, threshold, pass: statistic >= threshold }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
        let fa = Ecdf::new(a).unwrap();
        let fb = Ecdf::new(b).unwrap();
        a.iter().chain(b).map(|&x| (fa.eval(x) - fb.eval(x)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn ks_examples() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap().0, 0.0);
        assert_eq!(ks_two_sample(&[0.0; 4], &[1.0; 3]).unwrap().0, 1.0);
        let (d, n_eff) = ks_two_sample(&a, &[1.5, 2.5, 3.5]).unwrap();
        assert!((d - 1.0 / 3.0).abs() < 1e-15);
        assert!((n_eff - 1.5).abs() < 1e-15);
        assert_eq!(ks_two_sample(&[], &a), Err(Error::EmptySample));
        assert!(ks_two_sample(&[f64::NAN], &a).is_err());
    }

    #[test]
    fn ks_with_ties_and_censoring() {
        let a = [1.0, 1.0, 2.0, f64::INFINITY];
        let b = [1.0, 2.0, 2.0, 2.0, f64::INFINITY, f64::INFINITY];
        assert!((ks_two_sample(&a, &b).unwrap().0 - brute_ks(&a, &b)).abs() < 1e-15);
    }

    #[test]
    fn one_sample_against_uniform() {
        let a: Vec<f64> = (0..100).map(|q| (q as f64 + 0.5) / 100.0).collect();
        let d = ks_one_sample(&a, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((d - 0.005).abs() < 1e-12);
    }

    #[test]
    fn ecdf_steps() {
        let e = Ecdf::new(&[2.0, 1.0, 2.0, 5.0]).unwrap();
        assert_eq!(e.steps(), vec![(1.0, 0.25), (2.0, 0.75), (5.0, 1.0)]);
        assert_eq!(e.eval(0.5), 0.0);
        assert_eq!(e.eval(2.0), 0.75);
    }

    #[test]
    fn censored_medians() {
        assert_eq!(censored_median(&[3.0, 1.0, f64::INFINITY], 10).unwrap(), 3.0);
        assert_eq!(censored_median(&[4.0, 1.0, 2.0, 3.0], 10).unwrap(), 2.5);
        assert!(matches!(censored_median(&[1.0, f64::INFINITY], 10), Err(Error::CensoredMedian { n: 10, .. })));
    }

    #[test]
    fn scaling_examples() {
        let fit = extinction_scaling(&[(10_000, 2.0), (40_000, 2.0), (160_000, 2.0)]).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert_eq!(fit.ratios, vec![1.0, 1.0]);

        let noise = [0.01, -0.01, 0.005, -0.004];
        let pts: Vec<(u64, f64)> = [1e4, 4e4, 1.6e5, 6.4e5].iter().zip(noise).map(|(&n, e)| (n as u64, 1.0 + e)).collect();
        let s = extinction_scaling(&pts).unwrap().slope;
        assert!((0.45..=0.55).contains(&s));

        // Fast-time medians growing like log N.
        let pts: Vec<(u64, f64)> = [1e4, 4e4, 1.6e5].iter().map(|&n: &f64| (n as u64, n.ln() / n.sqrt())).collect();
        assert!(extinction_scaling(&pts).unwrap().slope < 0.2);

        assert!(extinction_scaling(&[(1, 1.0), (2, 1.0)]).is_err());
        assert!(matches!(extinction_scaling(&[(1, 1.0), (2, f64::INFINITY), (3, 1.0)]), Err(Error::CensoredMedian { n: 2, .. })));
    }

    #[test]
    fn verdict_json_has_stable_keys() {
        let v = Verdict::below("ks", serde_json::json!({"zeta": 1, "alpha": 2}), 0.05, 0.1);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"check":"ks","inputs":{"alpha":2,"zeta":1},"statistic":0.05,"threshold":0.1,"pass":true}"#);
    }
}
