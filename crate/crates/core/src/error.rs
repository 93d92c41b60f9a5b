use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("singular design (condition number {condition:.3e}){}", component_suffix(*.component))]
    SingularDesign {
        condition: f64,
        component: Option<usize>,
    },

    #[error("component {component} is empty (n_k = {n_k:.3e})")]
    EmptyComponent { component: usize, n_k: f64 },

    #[error("gating update diverged: {0}")]
    GatingDivergence(String),

    #[error("no kernel mass at local point {u}")]
    NoKernelMass { u: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("fit failed after {attempts} attempts: {}", diagnostics.join("; "))]
    FitFailure {
        attempts: usize,
        diagnostics: Vec<String>,
    },
}

fn component_suffix(component: Option<usize>) -> String {
    match component {
        Some(k) => format!(" in component {k}"),
        None => String::new(),
    }
}

impl Error {
    /// Attaches a component index to a singular-design error.
    pub(crate) fn in_component(self, k: usize) -> Self {
        match self {
            Error::SingularDesign { condition, .. } => Error::SingularDesign {
                condition,
                component: Some(k),
            },
            other => other,
        }
    }
}
