use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_PROPERTY: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("{module}: {source}")]
    Core {
        module: &'static str,
        #[source]
        source: lfunc_core::Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("output: {0}")]
    Output(String),
    #[error("sweep aborted at {axis} = {value}: {source}")]
    Sweep {
        axis: String,
        value: f64,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_ERROR,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

/// Tags a core error with the module it came from.
pub trait InModule<T> {
    fn within(self, module: &'static str) -> Result<T>;
}

impl<T> InModule<T> for lfunc_core::Result<T> {
    fn within(self, module: &'static str) -> Result<T> {
        self.map_err(|source| CliError::Core { module, source })
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
