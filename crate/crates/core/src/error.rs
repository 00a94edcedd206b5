use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("layer spec is not chainable: layer {layer} has input {input_dim}, previous output {prev_output}")]
    NotChainable {
        layer: usize,
        input_dim: usize,
        prev_output: usize,
    },

    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("forward model returned non-finite output at xi = {xi:?}")]
    Evaluation { xi: Vec<f64> },

    #[error("non-finite {what} at iteration {iteration} (observation {obs}, latent {latent:?})")]
    NonFinite {
        what: &'static str,
        iteration: usize,
        obs: usize,
        latent: Option<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown problem {0:?}")]
    UnknownProblem(String),

    #[error("MCMC initialization failed: log density at {xi:?} is not finite")]
    McmcInit { xi: Vec<f64> },

    #[error("chain too short: {0} samples, need at least 10")]
    ChainTooShort(usize),

    #[error("empty sample")]
    EmptySample,
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Shape {
            context,
            expected,
            actual,
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::shape(context, expected, actual))
    }
}
