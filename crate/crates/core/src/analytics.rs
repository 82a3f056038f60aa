//! Closed-form constants of the model: the singles equilibrium, the partnership
//! hitting probabilities and `R0`, the critical infection rate, the linearised
//! infection dynamics `A`, and the constants of the fluctuation limits.

use nalgebra::{Complex, DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RateLaw, Transition};

/// Equilibrium fraction of singles, the root in (0, 1) of `r_minus (1 - y) = r_plus y^2`.
pub fn solve_y_star(r_plus: f64, r_minus: f64) -> f64 {
    // Rationalised form of (-r_minus + sqrt(r_minus^2 + 4 r_plus r_minus)) / (2 r_plus),
    // free of cancellation when r_plus is small.
    2.0 * r_minus / (r_minus + (r_minus * r_minus + 4.0 * r_plus * r_minus).sqrt())
}

/// `f(x) = P_x(end at F) + 2 P_x(end at G)` for the partnership chain started
/// from a lone infected single (A), an SI pair (B) or an II pair (C).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingProbs {
    pub fa: f64,
    pub fb: f64,
    pub fc: f64,
}

pub fn hitting_probs(r_plus: f64, r_minus: f64, lambda: f64, y_star: f64) -> HittingProbs {
    let a = r_plus * y_star;
    let fb = r_minus * (r_minus + 2.0 + 2.0 * lambda) / (2.0 + (3.0 + lambda) * r_minus + r_minus * r_minus);
    let fc = (2.0 * fb + 2.0 * r_minus) / (2.0 + r_minus);
    let fa = a / (1.0 + a) * fb;
    HittingProbs { fa, fb, fc }
}

/// Same quantities by solving the absorbing seven-state chain directly.
///
/// States: A (infected single), B (SI pair), C (II pair) and the absorbing
/// outcomes D (A recovered), E (B recovered), F (B split, one infected single),
/// G (C split, two infected singles) with payoffs 0, 0, 1, 2.
pub fn hitting_probs_linear_solve(r_plus: f64, r_minus: f64, lambda: f64) -> HittingProbs {
    let a = r_plus * solve_y_star(r_plus, r_minus);
    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;
    const D: usize = 3;
    const E: usize = 4;
    const F: usize = 5;
    const G: usize = 6;
    let edges = [(A, B, a), (A, D, 1.0), (B, C, lambda), (B, E, 1.0), (B, F, r_minus), (C, B, 2.0), (C, G, r_minus)];
    let mut q = DMatrix::<f64>::zeros(7, 7);
    for (from, to, rate) in edges {
        q[(from, to)] += rate;
        q[(from, from)] -= rate;
    }
    let payoff = [0.0, 0.0, 1.0, 2.0];
    // Q_TT f_T = -Q_TA f_A on the transient block.
    let q_tt = q.view((0, 0), (3, 3)).into_owned();
    let q_ta = q.view((0, 3), (3, 4)).into_owned();
    let rhs = -(q_ta * DVector::from_row_slice(&payoff));
    let f = q_tt.lu().solve(&rhs).expect("transient block of an absorbing chain is invertible");
    HittingProbs { fa: f[0], fb: f[1], fc: f[2] }
}

/// Mean number of infected singles produced by one infected single.
pub fn r0(r_plus: f64, r_minus: f64, lambda: f64) -> f64 {
    hitting_probs(r_plus, r_minus, lambda, solve_y_star(r_plus, r_minus)).fa
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaC {
    Finite(f64),
    Infinite,
}

impl LambdaC {
    pub fn finite(self) -> Option<f64> {
        match self {
            LambdaC::Finite(v) => Some(v),
            LambdaC::Infinite => None,
        }
    }
}

/// Critical infection rate, the root of `R0(lambda) = 1`, found by bisection.
pub fn lambda_c(r_plus: f64, r_minus: f64) -> LambdaC {
    if r_plus <= 1.0 + 1.0 / r_minus {
        return LambdaC::Infinite;
    }
    let f = |lam: f64| r0(r_plus, r_minus, lam) - 1.0;
    let mut lo = 1e-9;
    let mut hi = 1.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return LambdaC::Infinite;
        }
    }
    if f(lo) > 0.0 {
        return LambdaC::Finite(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    LambdaC::Finite(0.5 * (lo + hi))
}

/// `lambda_c` from the determinant condition, which is linear in `lambda`.
pub fn lambda_c_explicit(r_plus: f64, r_minus: f64) -> Option<f64> {
    let a = r_plus * solve_y_star(r_plus, r_minus);
    (a > 1.0).then(|| (r_minus + 2.0) * (a + r_minus + 1.0) / (r_minus * (a - 1.0)))
}

/// Both sides of the determinant condition `(a+1)[2 + (3+lambda) r_minus + r_minus^2] = a r_minus (r_minus + 2 + 2 lambda)`.
pub fn det_condition_sides(r_plus: f64, r_minus: f64, lambda: f64) -> (f64, f64) {
    let a = r_plus * solve_y_star(r_plus, r_minus);
    let lhs = (a + 1.0) * (2.0 + (3.0 + lambda) * r_minus + r_minus * r_minus);
    let rhs = a * r_minus * (r_minus + 2.0 + 2.0 * lambda);
    (lhs, rhs)
}

/// Linearised drift of `(i, j, k)` at the singles equilibrium.
pub fn build_matrix_a(r_plus: f64, r_minus: f64, lambda: f64, y_star: f64) -> Matrix3<f64> {
    let a = r_plus * y_star;
    Matrix3::new(-(a + 1.0), 2.0 * r_minus, r_minus, 0.0, -(r_minus + 2.0), lambda, a, 2.0, -(r_minus + lambda + 1.0))
}

/// `(b1, b2, b3)` with `det(theta I - A) = theta^3 + b1 theta^2 + b2 theta + b3`.
pub fn characteristic_coefficients(a: &Matrix3<f64>) -> [f64; 3] {
    let m = -a;
    let b1 = m.trace();
    let minor = |p: usize, q: usize| m[(p, p)] * m[(q, q)] - m[(p, q)] * m[(q, p)];
    let b2 = minor(0, 1) + minor(0, 2) + minor(1, 2);
    let b3 = m.determinant();
    [b1, b2, b3]
}

/// Roots of `theta^2 + b1 theta + b2`, the non-zero eigenvalues of `A` when `b3 = 0`.
pub fn nonzero_eigenvalues(b1: f64, b2: f64) -> [Complex<f64>; 2] {
    let disc = Complex::new(b1 * b1 - 4.0 * b2, 0.0).sqrt();
    let m = Complex::new(-b1, 0.0);
    [(m + disc) / 2.0, (m - disc) / 2.0]
}

/// Eigenvalues from a general solver, ordered by decreasing real part.
pub fn eigenvalues(a: &Matrix3<f64>) -> [Complex<f64>; 3] {
    let ev = a.complex_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2]];
    out.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    out
}

/// Net change in infected singles per partnership started by an infected single
/// when a fraction `i` of the population is infected and single.
pub fn delta_of_i(r_plus: f64, r_minus: f64, lambda: f64, i: f64) -> f64 {
    let y_star = solve_y_star(r_plus, r_minus);
    let hp = hitting_probs(r_plus, r_minus, lambda, y_star);
    let (p_s, p_ii, p_si) = partner_probabilities(r_plus, y_star, i);
    -p_s + p_ii * (-2.0 + hp.fc) + p_si * (-1.0 + hp.fb)
}

/// Probabilities that an infected single's next event is recovery, pairing with
/// an infected single, or pairing with a susceptible single.
pub fn partner_probabilities(r_plus: f64, y_star: f64, i: f64) -> (f64, f64, f64) {
    let z = 1.0 + r_plus * (y_star - i / 2.0);
    (1.0 / z, r_plus * i / (2.0 * z), r_plus * (y_star - i) / z)
}

/// Every derived constant of the model at a given `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalStructure {
    pub r_plus: f64,
    pub r_minus: f64,
    pub lambda: f64,
    pub y_star: f64,
    pub eta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub d: f64,
    pub u_star: f64,
    pub v_star: f64,
    pub w_star: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub matrix_a: [[f64; 3]; 3],
    pub mu_z: f64,
    pub sigma_z2: f64,
    pub mu_star: f64,
    pub sigma_star2: f64,
    pub mu_x: f64,
    pub sigma_x2: f64,
}

impl CriticalStructure {
    /// Constants evaluated at an arbitrary `lambda`. Away from `lambda_c` the
    /// ray, `Q` and the limit constants are formal.
    pub fn at_lambda(r_plus: f64, r_minus: f64, lambda: f64) -> Result<Self> {
        for (name, v) in [("r_plus", r_plus), ("r_minus", r_minus), ("lambda", lambda)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let y_star = solve_y_star(r_plus, r_minus);
        let a = r_plus * y_star;
        let eta = (a + 1.0) / a;
        let gamma = (2.0 * r_minus + 2.0 * eta) / (r_minus + 2.0);
        let alpha = r_minus / (a + 1.0) * (2.0 * lambda / (r_minus + 2.0) + 1.0);
        let beta = lambda / (r_minus + 2.0);
        let d = alpha + beta * gamma + eta;
        let (u_star, v_star, w_star) = (alpha / d, beta * gamma / d, eta / d);
        let theta1 = 2.0 * r_minus / gamma - r_minus / eta;
        let theta2 = gamma * lambda / eta;
        let mu_z = r_minus + 2.0 * a;
        let sigma_z2 = 2.0 * (r_minus * (1.0 - y_star) + r_plus * y_star * y_star);
        let mu_star = (eta - gamma / 2.0) * r_plus * u_star * u_star;
        let sigma_star2 = on_ray_h_diffusivity(r_plus, r_minus, lambda, y_star, gamma, eta, [u_star, v_star, w_star]);
        let m = build_matrix_a(r_plus, r_minus, lambda, y_star);
        let matrix_a = [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]];
        Ok(Self {
            r_plus,
            r_minus,
            lambda,
            y_star,
            eta,
            gamma,
            alpha,
            beta,
            d,
            u_star,
            v_star,
            w_star,
            theta1,
            theta2,
            matrix_a,
            mu_z,
            sigma_z2,
            mu_star,
            sigma_star2,
            mu_x: mu_star / u_star,
            sigma_x2: u_star * sigma_star2,
        })
    }

    pub fn a(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.matrix_a[r][c])
    }
}

pub fn critical_structure(r_plus: f64, r_minus: f64) -> Result<CriticalStructure> {
    match lambda_c(r_plus, r_minus) {
        LambdaC::Finite(lc) => CriticalStructure::at_lambda(r_plus, r_minus, lc),
        LambdaC::Infinite => Err(Error::LambdaCInfinite { r_plus, bound: 1.0 + 1.0 / r_minus }),
    }
}

/// Solution of `y' = r_minus (1 - y) - r_plus y^2` from `y0` at fast time `t`.
pub fn singles_ode(r_plus: f64, r_minus: f64, y0: f64, t: f64) -> f64 {
    // Factor as -r_plus (y - y_star)(y - y_neg) and integrate in closed form.
    let y_star = solve_y_star(r_plus, r_minus);
    let y_neg = -r_minus / (r_plus * y_star);
    let c = (y0 - y_star) / (y0 - y_neg);
    let e = c * (-r_plus * (y_star - y_neg) * t).exp();
    (y_star - e * y_neg) / (1.0 - e)
}

/// `sum_m d_m (Delta_m H)^2`, where `d_m` is the rate of transition `m` per unit
/// of `H` on the ray with singles at equilibrium, to leading order in `N`.
fn on_ray_h_diffusivity(r_plus: f64, r_minus: f64, lambda: f64, y_star: f64, gamma: f64, eta: f64, uvw: [f64; 3]) -> f64 {
    // Per unit H the ray has I = u*, J = v*/gamma, K = w*/eta.
    let per_h = [uvw[0], uvw[1] / gamma, uvw[2] / eta];
    let weight = [1.0, gamma, eta];
    Transition::ALL
        .iter()
        .map(|t| {
            let dx = t.delta();
            let dh: f64 = (0..3).map(|c| dx[c + 1] as f64 * weight[c]).sum();
            if dh == 0.0 {
                return 0.0;
            }
            let rate = match t.rate_law() {
                RateLaw::Linear { coef, of } => match of.infected_index() {
                    Some(c) => coef.value(r_minus, lambda) * per_h[c],
                    None => 0.0,
                },
                // Pairing of an infected with a susceptible single: S is N y* to leading order.
                RateLaw::Encounter(x, y) => match (x.infected_index(), y.infected_index()) {
                    (Some(c), None) | (None, Some(c)) => r_plus * y_star * per_h[c],
                    _ => 0.0,
                },
            };
            rate * dh * dh
        })
        .sum()
}
