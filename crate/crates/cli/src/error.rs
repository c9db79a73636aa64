use std::path::Path;

use prefbo::bench::BenchError;
use prefbo::bo::BoError;
use prefbo::domain::DomainError;
use prefbo::oracle::OracleError;
use prefbo::pref::PrefError;
use prefbo::survey::SurveyError;

pub const EX_USAGE: i32 = 64;
pub const EX_DATAERR: i32 = 65;
pub const EX_NOINPUT: i32 = 66;
pub const EX_SOFTWARE: i32 = 70;
pub const EX_CANTCREAT: i32 = 73;
pub const EX_TEMPFAIL: i32 = 75;
pub const EX_INVARIANT: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("cannot read {path}: {source}")]
    Input { path: String, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
    #[error("{0}")]
    Internal(String),
    #[error("oracle transport failure: {0}")]
    Transport(String),
    #[error("trace invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EX_USAGE,
            Self::Data(_) => EX_DATAERR,
            Self::Input { .. } => EX_NOINPUT,
            Self::Output { .. } => EX_CANTCREAT,
            Self::Internal(_) => EX_SOFTWARE,
            Self::Transport(_) => EX_TEMPFAIL,
            Self::Invariant(_) => EX_INVARIANT,
        }
    }

    pub fn input(path: &Path, source: std::io::Error) -> Self {
        Self::Input { path: path.display().to_string(), source }
    }

    pub fn output(path: &Path, source: std::io::Error) -> Self {
        Self::Output { path: path.display().to_string(), source }
    }
}

impl From<DomainError> for CliError {
    fn from(e: DomainError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<SurveyError> for CliError {
    fn from(e: SurveyError) -> Self {
        match e {
            SurveyError::InvalidRepeats => Self::Usage(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<PrefError> for CliError {
    fn from(e: PrefError) -> Self {
        match e {
            PrefError::InvalidConfig(_) => Self::Usage(e.to_string()),
            PrefError::NewtonDiverged(_) | PrefError::Factorization | PrefError::NonFiniteObjective => {
                Self::Internal(e.to_string())
            }
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        if e.is_transport() {
            return Self::Transport(e.to_string());
        }
        match e {
            OracleError::InvalidConfig(_) | OracleError::MissingCredentials(_) | OracleError::UnknownTemplate(_) => {
                Self::Usage(e.to_string())
            }
            OracleError::MissingDataset => Self::Usage(e.to_string()),
            OracleError::TooManyUnanswered { .. } | OracleError::Unparseable(_) | OracleError::OutOfRange(_) => {
                Self::Transport(e.to_string())
            }
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<BoError> for CliError {
    fn from(e: BoError) -> Self {
        match e {
            BoError::Invariant(_) => Self::Invariant(e.to_string()),
            BoError::BudgetTooLarge { .. } | BoError::ZeroBudget | BoError::MissingUtility => {
                Self::Usage(e.to_string())
            }
            BoError::Gp(_) | BoError::Acq(_) => Self::Internal(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Bo(e) => e.into(),
            BenchError::InvalidOptions(_) => Self::Usage(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}
