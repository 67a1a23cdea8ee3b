use thiserror::Error;

use crate::mdp::Diagnostic;

/// Errors raised by the laboratory's constructors and solvers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid MDP: {}", format_diagnostics(.0))]
    InvalidMdp(Vec<Diagnostic>),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("row {row} is not a probability vector (sum {sum}, min entry {min})")]
    NotStochastic { row: usize, sum: f64, min: f64 },
    #[error("chain is reducible: {} strongly connected components {:?}", .components.len(), .components)]
    Reducible { components: Vec<Vec<usize>> },
    #[error("chain is not reversible (max detailed-balance violation {violation:e}, structural pairs {structural})")]
    NotReversible { violation: f64, structural: usize },
    #[error("linear system is singular: {0}")]
    Singular(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A structured input file failed to parse; `field` is the path of the
    /// offending value, e.g. `states[2].actions[0].kernel`.
    #[error("{field}: {message}")]
    Format { field: String, message: String },
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::Dimension {
            context,
            expected,
            found,
        });
    }
    Ok(())
}
