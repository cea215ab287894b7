use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("controller `{controller}`: non-finite measurement {value}")]
    NonFiniteMeasurement { controller: String, value: f64 },

    #[error("controller `{controller}`: commit called without a preceding propose")]
    CommitWithoutPropose { controller: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("selector `{label}`: expected {expected} inputs, got {got}")]
    SelectorArity {
        label: String,
        expected: &'static str,
        got: usize,
    },

    #[error("selector `{label}`: non-finite input at position {index}")]
    NonFiniteInput { label: String, index: usize },

    #[error("graph: {0}")]
    Graph(String),

    #[error("input `{name}` = {value} outside [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("no feasible active-constraint pair at T_out = {t_out} °C")]
    Infeasible { t_out: f64 },

    #[error("simulation diverged at t = {t} s: {what}")]
    NonFiniteState { t: f64, what: String },

    #[error("scenario `{path}`: {message}")]
    Scenario { path: String, message: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("flowsheet: {0}")]
    Flowsheet(String),
}
