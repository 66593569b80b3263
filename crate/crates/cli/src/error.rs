use regmeta::DataError;

use crate::report::{ErrorBody, ErrorReport, SCHEMA};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(DataError),
    Io(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Io(_) => "io",
            CliError::Numerical(_) => "numerical",
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Numerical(m) => m.clone(),
            CliError::Data(e) => e.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorReport {
            schema: SCHEMA,
            error: ErrorBody {
                kind: self.kind(),
                message: self.message(),
            },
        })
        .expect("error serializes")
    }
}
