//! Command-line driver for netmorph: scenario files, artifact export and the
//! reproduction suite.

pub mod reproduce;
pub mod run;
pub mod scenario;

pub use run::{content_hash, run_scenario, Manifest, RunReport};
pub use scenario::{GridSpec, Kind, MethodName, NetworkInput, Params, PointSource, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 0 ok, 1 numerical or i/o failure, 2 configuration error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<netmorph_core::Error> for CliError {
    fn from(e: netmorph_core::Error) -> Self {
        use netmorph_core::Error as E;
        match e {
            E::InvalidNetwork(_) | E::InvalidParameter(_) | E::UnbalancedComponent { .. } | E::InfeasibleSources(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

/// Caps the global rayon pool at `NETMORPH_THREADS` when set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("NETMORPH_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("NETMORPH_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))
}
