//! State, transition table and scaled observables of the partner model.
//!
//! Individuals are single or paired. Singles pair up at rate `r_plus / N` per
//! pair of singles, pairs dissolve at rate `r_minus`, infecteds recover at rate
//! 1 and an infected partner infects a susceptible one at rate `lambda`.

use serde::{Deserialize, Serialize};

use crate::analytics::CriticalStructure;
use crate::error::{Error, Result};

/// Largest supported population size.
pub const MAX_N: u64 = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub r_plus: f64,
    pub r_minus: f64,
    pub lambda: f64,
    pub n: u64,
}

impl ModelParams {
    pub fn new(r_plus: f64, r_minus: f64, lambda: f64, n: u64) -> Result<Self> {
        let p = Self { r_plus, r_minus, lambda, n };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("r_plus", self.r_plus), ("r_minus", self.r_minus), ("lambda", self.lambda)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.n < 2 || self.n > MAX_N {
            return Err(Error::InvalidParams(format!("N must lie in [2, 2^31], got {}", self.n)));
        }
        Ok(())
    }

    pub fn n_f64(&self) -> f64 {
        self.n as f64
    }
}

/// Counts of single susceptibles `s`, single infecteds `i`, and of II, SI and
/// SS pairs (`j`, `k`, `l`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PopulationState {
    pub s: i64,
    pub i: i64,
    pub j: i64,
    pub k: i64,
    pub l: i64,
}

impl PopulationState {
    pub const fn new(s: i64, i: i64, j: i64, k: i64, l: i64) -> Self {
        Self { s, i, j, k, l }
    }

    /// Number of individuals, counting each pair twice.
    pub fn population(&self) -> i64 {
        self.s + self.i + 2 * (self.j + self.k + self.l)
    }

    /// Singles, `Y = S + I`.
    pub fn singles(&self) -> i64 {
        self.s + self.i
    }

    /// `I + J + K`; zero exactly when the infection is extinct.
    pub fn infected_units(&self) -> i64 {
        self.i + self.j + self.k
    }

    pub fn is_extinct(&self) -> bool {
        self.infected_units() == 0
    }

    pub fn as_array(&self) -> [i64; 5] {
        [self.s, self.i, self.j, self.k, self.l]
    }

    /// Checks non-negativity and conservation against `n`.
    pub fn check(&self, n: u64) -> Result<()> {
        let total = self.population();
        if self.as_array().iter().any(|&c| c < 0) || total != n as i64 {
            return Err(Error::InvalidState { state: format!("{self:?}"), total, n: n as i64 });
        }
        Ok(())
    }
}

pub const NUM_TRANSITIONS: usize = 10;

/// The event kinds, in the order used by [`transition_rates`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    /// `I -> S` at rate `I`.
    SingleRecovery,
    /// `J -> K` at rate `2J`.
    IiRecovery,
    /// `K -> J` at rate `lambda K`.
    SiInfection,
    /// `K -> L` at rate `K`.
    SiRecovery,
    /// `I + I -> J` at rate `r_plus I(I-1) / 2N`.
    FormIi,
    /// `S + I -> K` at rate `r_plus S I / N`.
    FormSi,
    /// `S + S -> L` at rate `r_plus S(S-1) / 2N`.
    FormSs,
    /// `J -> I + I` at rate `r_minus J`.
    SplitIi,
    /// `K -> S + I` at rate `r_minus K`.
    SplitSi,
    /// `L -> S + S` at rate `r_minus L`.
    SplitSs,
}

impl Transition {
    pub const ALL: [Transition; NUM_TRANSITIONS] = [
        Transition::SingleRecovery,
        Transition::IiRecovery,
        Transition::SiInfection,
        Transition::SiRecovery,
        Transition::FormIi,
        Transition::FormSi,
        Transition::FormSs,
        Transition::SplitIi,
        Transition::SplitSi,
        Transition::SplitSs,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Change applied to `(S, I, J, K, L)`.
    pub const fn delta(self) -> [i64; 5] {
        match self {
            Transition::SingleRecovery => [1, -1, 0, 0, 0],
            Transition::IiRecovery => [0, 0, -1, 1, 0],
            Transition::SiInfection => [0, 0, 1, -1, 0],
            Transition::SiRecovery => [0, 0, 0, -1, 1],
            Transition::FormIi => [0, -2, 1, 0, 0],
            Transition::FormSi => [-1, -1, 0, 1, 0],
            Transition::FormSs => [-2, 0, 0, 0, 1],
            Transition::SplitIi => [0, 2, -1, 0, 0],
            Transition::SplitSi => [1, 1, 0, -1, 0],
            Transition::SplitSs => [2, 0, 0, 0, -1],
        }
    }

    pub const fn label(self) -> &'static str {
        match self {
            Transition::SingleRecovery => "I->S",
            Transition::IiRecovery => "J->K",
            Transition::SiInfection => "K->J",
            Transition::SiRecovery => "K->L",
            Transition::FormIi => "I+I->J",
            Transition::FormSi => "S+I->K",
            Transition::FormSs => "S+S->L",
            Transition::SplitIi => "J->I+I",
            Transition::SplitSi => "K->S+I",
            Transition::SplitSs => "L->S+S",
        }
    }
}

/// A compartment of the state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Compartment {
    S,
    I,
    J,
    K,
    L,
}

impl Compartment {
    pub fn count(self, st: &PopulationState) -> i64 {
        match self {
            Compartment::S => st.s,
            Compartment::I => st.i,
            Compartment::J => st.j,
            Compartment::K => st.k,
            Compartment::L => st.l,
        }
    }

    /// Position within `(I, J, K)`, or `None` for S and L.
    pub fn infected_index(self) -> Option<usize> {
        match self {
            Compartment::I => Some(0),
            Compartment::J => Some(1),
            Compartment::K => Some(2),
            Compartment::S | Compartment::L => None,
        }
    }
}

/// Rate constant multiplying a linear rate law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coef {
    One,
    Two,
    Lambda,
    RMinus,
}

impl Coef {
    pub fn value(self, r_minus: f64, lambda: f64) -> f64 {
        match self {
            Coef::One => 1.0,
            Coef::Two => 2.0,
            Coef::Lambda => lambda,
            Coef::RMinus => r_minus,
        }
    }
}

/// How the rate of a transition depends on the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateLaw {
    /// `coef * X`.
    Linear { coef: Coef, of: Compartment },
    /// Pairing of two singles: `r_plus X Y / N`, or `r_plus X (X - 1) / 2N` when `X = Y`.
    Encounter(Compartment, Compartment),
}

impl RateLaw {
    pub fn evaluate(self, st: &PopulationState, p: &ModelParams) -> f64 {
        match self {
            RateLaw::Linear { coef, of } => coef.value(p.r_minus, p.lambda) * of.count(st) as f64,
            RateLaw::Encounter(x, y) => {
                let cx = x.count(st) as f64;
                if x == y {
                    0.5 * p.r_plus / p.n_f64() * cx * (cx - 1.0)
                } else {
                    p.r_plus * cx * y.count(st) as f64 / p.n_f64()
                }
            }
        }
    }
}

impl Transition {
    pub const fn rate_law(self) -> RateLaw {
        use Compartment::*;
        match self {
            Transition::SingleRecovery => RateLaw::Linear { coef: Coef::One, of: I },
            Transition::IiRecovery => RateLaw::Linear { coef: Coef::Two, of: J },
            Transition::SiInfection => RateLaw::Linear { coef: Coef::Lambda, of: K },
            Transition::SiRecovery => RateLaw::Linear { coef: Coef::One, of: K },
            Transition::FormIi => RateLaw::Encounter(I, I),
            Transition::FormSi => RateLaw::Encounter(S, I),
            Transition::FormSs => RateLaw::Encounter(S, S),
            Transition::SplitIi => RateLaw::Linear { coef: Coef::RMinus, of: J },
            Transition::SplitSi => RateLaw::Linear { coef: Coef::RMinus, of: K },
            Transition::SplitSs => RateLaw::Linear { coef: Coef::RMinus, of: L },
        }
    }
}

pub(crate) fn rates_unchecked(st: &PopulationState, p: &ModelParams) -> [f64; NUM_TRANSITIONS] {
    Transition::ALL.map(|t| t.rate_law().evaluate(st, p))
}

/// Rates of all transitions, indexed as [`Transition::ALL`].
pub fn transition_rates(state: &PopulationState, params: &ModelParams) -> Result<[f64; NUM_TRANSITIONS]> {
    state.check(params.n)?;
    Ok(rates_unchecked(state, params))
}

pub fn apply_transition(state: &PopulationState, t: Transition) -> Result<PopulationState> {
    let d = t.delta();
    let a = state.as_array();
    let next: Vec<i64> = a.iter().zip(d).map(|(x, dx)| x + dx).collect();
    if next.iter().any(|&c| c < 0) {
        return Err(Error::InfeasibleTransition(t.label()));
    }
    Ok(PopulationState::new(next[0], next[1], next[2], next[3], next[4]))
}

/// Scaled observables of a state. `u`, `v`, `w` and `q` are `None` when `H = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub singles: i64,
    pub y: f64,
    pub z: f64,
    pub i: f64,
    pub j: f64,
    pub k: f64,
    pub big_h: f64,
    pub h: f64,
    pub u: Option<f64>,
    pub v: Option<f64>,
    pub w: Option<f64>,
    pub q: Option<f64>,
}

pub fn observables(state: &PopulationState, params: &ModelParams, crit: &CriticalStructure) -> Observables {
    let n = params.n_f64();
    let sqrt_n = n.sqrt();
    let singles = state.singles();
    let (i, j, k) = (state.i as f64, state.j as f64, state.k as f64);
    let big_h = i + crit.gamma * j + crit.eta * k;
    let (u, v, w, q) = if big_h > 0.0 {
        let u = i / big_h;
        let v = crit.gamma * j / big_h;
        let w = crit.eta * k / big_h;
        let q = crit.theta2 * (u - crit.u_star).powi(2) + crit.theta1 * (v - crit.v_star).powi(2);
        (Some(u), Some(v), Some(w), Some(q))
    } else {
        (None, None, None, None)
    };
    Observables {
        singles,
        y: singles as f64 / n,
        z: (singles as f64 - n * crit.y_star) / sqrt_n,
        i: i / sqrt_n,
        j: j / sqrt_n,
        k: k / sqrt_n,
        big_h,
        h: big_h / sqrt_n,
        u,
        v,
        w,
        q,
    }
}

/// Drift `sum q_m (f(x + d_m) - f(x))` and diffusivity `sum q_m (f(x + d_m) - f(x))^2`
/// of an observable `f` at `state`. Transitions with zero rate are skipped, so `f`
/// is never evaluated outside the state space.
pub fn drift_and_diffusivity<F>(f: F, state: &PopulationState, params: &ModelParams) -> (f64, f64)
where
    F: Fn(&PopulationState) -> f64,
{
    let rates = rates_unchecked(state, params);
    let f0 = f(state);
    let mut drift = 0.0;
    let mut diff = 0.0;
    for (t, q) in Transition::ALL.iter().zip(rates) {
        if q == 0.0 {
            continue;
        }
        let Ok(next) = apply_transition(state, *t) else { continue };
        let df = f(&next) - f0;
        drift += q * df;
        diff += q * df * df;
    }
    (drift, diff)
}
