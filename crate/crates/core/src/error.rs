use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid state {state}: S + I + 2(J + K + L) = {total}, expected {n}")]
    InvalidState { state: String, total: i64, n: i64 },

    #[error("transition {0} would make a count negative")]
    InfeasibleTransition(&'static str),

    #[error("lambda_c infinite: r_plus = {r_plus} <= 1 + 1/r_minus = {bound}")]
    LambdaCInfinite { r_plus: f64, bound: f64 },

    #[error("infeasible initial condition: {0}")]
    InfeasibleInitial(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("median censored at N = {n}: {censored} of {total} replicas did not go extinct; raise the horizon")]
    CensoredMedian { n: u64, censored: usize, total: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("event limit of {0} exceeded")]
    EventLimit(u64),
}

pub type Result<T> = std::result::Result<T, Error>;
