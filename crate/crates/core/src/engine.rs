//! Event loop of the direct-method simulation.
//!
//! Counts are held as `f64`, which is exact below 2^53. The next event time is
//! drawn as soon as the state changes, so stopping at arbitrary observation
//! times never changes the sequence of events.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::analytics::CriticalStructure;
use crate::model::{rates_unchecked, ModelParams, PopulationState, Transition, NUM_TRANSITIONS};
use crate::rng::StreamRng;

const FORM_SI: usize = Transition::FormSi as usize;
const FORM_SS: usize = Transition::FormSs as usize;
const SPLIT_SS: usize = Transition::SplitSs as usize;
const CHECK_MASK: u64 = (1 << 20) - 1;
pub(crate) const EVENT_LIMIT: u64 = 1 << 40;

/// Channels other than the susceptible-pairing ones, in scan order.
const COLD: [usize; 8] = [FORM_SI, 0, 1, 2, 3, 4, 7, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Halt {
    Extinct,
    HFloor,
    EventLimit,
}

pub(crate) struct Engine {
    params: ModelParams,
    rng: StreamRng,
    n_ystar: f64,
    half: f64,
    pair: f64,
    gamma: f64,
    eta: f64,
    stop_on_extinction: bool,
    h_floor: f64,

    s: f64,
    i: f64,
    j: f64,
    k: f64,
    l: f64,
    rates: [f64; NUM_TRANSITIONS],
    cold_sum: f64,
    total: f64,

    t: f64,
    next: f64,
    events: u64,
    zi_rate: f64,
    zi_acc: f64,
    y_min: f64,
    y_max: f64,
    h_max: f64,
    extinct_at: Option<f64>,
}

impl Engine {
    pub(crate) fn new(
        params: ModelParams,
        crit: &CriticalStructure,
        state: PopulationState,
        rng: StreamRng,
        stop_on_extinction: bool,
        h_floor: Option<f64>,
    ) -> Self {
        let n = params.n_f64();
        let mut e = Self {
            params,
            rng,
            n_ystar: n * crit.y_star,
            half: 0.5 * params.r_plus / n,
            pair: params.r_plus / n,
            gamma: crit.gamma,
            eta: crit.eta,
            stop_on_extinction,
            h_floor: h_floor.unwrap_or(f64::NEG_INFINITY),
            s: state.s as f64,
            i: state.i as f64,
            j: state.j as f64,
            k: state.k as f64,
            l: state.l as f64,
            rates: [0.0; NUM_TRANSITIONS],
            cold_sum: 0.0,
            total: 0.0,
            t: 0.0,
            next: 0.0,
            events: 0,
            zi_rate: 0.0,
            zi_acc: 0.0,
            y_min: 0.0,
            y_max: 0.0,
            h_max: 0.0,
            extinct_at: None,
        };
        e.refresh();
        let y = e.s + e.i;
        e.y_min = y;
        e.y_max = y;
        e.h_max = e.big_h();
        if e.i + e.j + e.k == 0.0 {
            e.extinct_at = Some(0.0);
        }
        e.draw_next();
        e
    }

    /// Recomputes every rate from the state.
    #[inline(always)]
    fn refresh(&mut self) {
        let (s, i, j, k, l) = (self.s, self.i, self.j, self.k, self.l);
        let p = &self.params;
        let r = &mut self.rates;
        r[0] = i;
        r[1] = 2.0 * j;
        r[2] = p.lambda * k;
        r[3] = k;
        r[4] = self.half * i * (i - 1.0);
        r[5] = self.pair * s * i;
        r[6] = self.half * s * (s - 1.0);
        r[7] = p.r_minus * j;
        r[8] = p.r_minus * k;
        r[9] = p.r_minus * l;
        self.cold_sum = r[0] + r[1] + r[2] + r[3] + r[4] + r[7] + r[8];
        self.total = self.cold_sum + r[FORM_SI] + r[FORM_SS] + r[SPLIT_SS];
        self.zi_rate = (s + i - self.n_ystar) * i;
    }

    #[inline(always)]
    fn draw_next(&mut self) {
        let e: f64 = Exp1.sample(&mut self.rng);
        self.next = if self.total > 0.0 { self.t + e / self.total } else { f64::INFINITY };
    }

    pub(crate) fn big_h(&self) -> f64 {
        self.i + self.gamma * self.j + self.eta * self.k
    }

    pub(crate) fn time(&self) -> f64 {
        self.t
    }

    pub(crate) fn events(&self) -> u64 {
        self.events
    }

    pub(crate) fn state(&self) -> PopulationState {
        PopulationState::new(self.s as i64, self.i as i64, self.j as i64, self.k as i64, self.l as i64)
    }

    /// `int (Y - N y*) I dt` over fast time up to `t >= time()`.
    pub(crate) fn zi_integral_at(&self, t: f64) -> f64 {
        self.zi_acc + self.zi_rate * (t - self.t)
    }

    pub(crate) fn singles_range(&self) -> (f64, f64) {
        (self.y_min, self.y_max)
    }

    /// Fast time at which `I + J + K` first hit zero.
    pub(crate) fn extinct_at(&self) -> Option<f64> {
        self.extinct_at
    }

    pub(crate) fn h_max(&self) -> f64 {
        self.h_max
    }

    pub(crate) fn halted_now(&self) -> Option<Halt> {
        if self.stop_on_extinction && self.i + self.j + self.k == 0.0 {
            Some(Halt::Extinct)
        } else if self.big_h() <= self.h_floor {
            Some(Halt::HFloor)
        } else {
            None
        }
    }

    /// Applies every event with time at most `target`. Returns early at the
    /// event that triggers a stop rule; the engine then sits at that event.
    pub(crate) fn advance(&mut self, target: f64) -> Option<Halt> {
        while self.next <= target {
            let dt = self.next - self.t;
            self.zi_acc += self.zi_rate * dt;
            self.t = self.next;
            self.events += 1;

            let u = self.rng.random::<f64>() * self.total;
            let sl = self.rates[FORM_SS] + self.rates[SPLIT_SS];
            if u < sl {
                self.apply_pairing_ss(if u < self.rates[FORM_SS] { -2.0 } else { 2.0 });
            } else if self.apply_cold(u - sl) {
                if let Some(h) = self.after_cold() {
                    self.draw_next();
                    return Some(h);
                }
            } else {
                // Rounding left `u` past every live infection channel.
                self.apply_pairing_ss(if self.rates[SPLIT_SS] > 0.0 { 2.0 } else { -2.0 });
            }
            self.draw_next();

            #[cfg(debug_assertions)]
            self.check_conservation();
            if self.events & CHECK_MASK == 0 {
                self.audit();
                if self.events >= EVENT_LIMIT {
                    return Some(Halt::EventLimit);
                }
            }
        }
        None
    }

    #[inline(always)]
    fn apply_pairing_ss(&mut self, ds: f64) {
        self.s += ds;
        self.l -= 0.5 * ds;
        let s = self.s;
        let y = s + self.i;
        self.rates[FORM_SS] = self.half * s * (s - 1.0);
        self.rates[FORM_SI] = self.pair * s * self.i;
        self.rates[SPLIT_SS] = self.params.r_minus * self.l;
        self.total = self.cold_sum + self.rates[FORM_SI] + self.rates[FORM_SS] + self.rates[SPLIT_SS];
        self.zi_rate = (y - self.n_ystar) * self.i;
        self.y_min = self.y_min.min(y);
        self.y_max = self.y_max.max(y);
    }

    /// Applies the infection-side channel selected by `u`; false if none is live.
    #[inline(always)]
    fn apply_cold(&mut self, mut u: f64) -> bool {
        let mut chosen = usize::MAX;
        for m in COLD {
            if u < self.rates[m] {
                chosen = m;
                break;
            }
            u -= self.rates[m];
        }
        if chosen == usize::MAX {
            match COLD.iter().rev().find(|&&m| self.rates[m] > 0.0) {
                Some(&m) => chosen = m,
                None => return false,
            }
        }
        match chosen {
            0 => {
                self.i -= 1.0;
                self.s += 1.0;
            }
            1 => {
                self.j -= 1.0;
                self.k += 1.0;
            }
            2 => {
                self.k -= 1.0;
                self.j += 1.0;
            }
            3 => {
                self.k -= 1.0;
                self.l += 1.0;
            }
            4 => {
                self.i -= 2.0;
                self.j += 1.0;
            }
            FORM_SI => {
                self.s -= 1.0;
                self.i -= 1.0;
                self.k += 1.0;
            }
            7 => {
                self.j -= 1.0;
                self.i += 2.0;
            }
            8 => {
                self.k -= 1.0;
                self.s += 1.0;
                self.i += 1.0;
            }
            _ => unreachable!("susceptible pairing handled on the fast path"),
        }
        self.refresh();
        true
    }

    #[inline(always)]
    fn after_cold(&mut self) -> Option<Halt> {
        let y = self.s + self.i;
        self.y_min = self.y_min.min(y);
        self.y_max = self.y_max.max(y);
        let h = self.big_h();
        self.h_max = self.h_max.max(h);
        if self.extinct_at.is_none() && self.i + self.j + self.k == 0.0 {
            self.extinct_at = Some(self.t);
        }
        self.halted_now()
    }

    #[cfg(debug_assertions)]
    fn check_conservation(&self) {
        let total = self.s + self.i + 2.0 * (self.j + self.k + self.l);
        debug_assert_eq!(total, self.params.n_f64(), "conservation broken at event {}", self.events);
    }

    /// Full recomputation must agree with the incremental rates.
    fn audit(&self) {
        let st = self.state();
        assert_eq!(st.population(), self.params.n as i64, "conservation broken at event {}", self.events);
        let full = rates_unchecked(&st, &self.params);
        for (m, (a, b)) in full.iter().zip(&self.rates).enumerate() {
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "rate {m} drifted: {a} vs {b}");
        }
    }
}
