use trust_pomdp::learning::LearningError;
use trust_pomdp::pomdp::PomdpError;
use trust_pomdp::sim::SimError;
use trust_pomdp::task::TaskError;
use trust_pomdp::trust::TrustError;
use trust_session_server::ApiError;

/// Validation failures exit 2, runtime failures exit 3.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{message}")]
    Validation { code: &'static str, message: String },
    #[error("{message}")]
    Runtime { code: &'static str, message: String },
}

impl CliError {
    pub fn validation(code: &'static str, message: String) -> Self {
        CliError::Validation { code, message }
    }

    pub fn runtime(code: &'static str, message: String) -> Self {
        CliError::Runtime { code, message }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Validation { code, .. } | CliError::Runtime { code, .. } => code,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation { .. } => 2,
            CliError::Runtime { .. } => 3,
        }
    }
}

impl From<PomdpError> for CliError {
    fn from(e: PomdpError) -> Self {
        let code = match e {
            PomdpError::BudgetExceeded(_) => "SOLVER_BUDGET",
            PomdpError::ZeroLikelihood => "ZERO_LIKELIHOOD",
            _ => "SOLVER_ERROR",
        };
        CliError::runtime(code, e.to_string())
    }
}

impl From<TrustError> for CliError {
    fn from(e: TrustError) -> Self {
        CliError::validation("INVALID_PARAMS", e.to_string())
    }
}

impl From<TaskError> for CliError {
    fn from(e: TaskError) -> Self {
        match e {
            TaskError::Pomdp(e) => e.into(),
            TaskError::UnknownPreset(_) => CliError::validation("UNKNOWN_PRESET", e.to_string()),
            TaskError::Params(_) | TaskError::Trust(_) => CliError::validation("INVALID_PARAMS", e.to_string()),
            TaskError::Io(_) => CliError::validation("UNREADABLE_INPUT", e.to_string()),
            TaskError::Config(_) | TaskError::IllegalTarget(_) | TaskError::UnknownWorldState => {
                CliError::validation("INVALID_CONFIG", e.to_string())
            }
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Task(e) => e.into(),
            SimError::Pomdp(e) => e.into(),
            SimError::Trust(e) => e.into(),
            SimError::HorizonTooLarge(_) | SimError::InvalidArgument(_) => {
                CliError::validation("INVALID_ARGUMENTS", e.to_string())
            }
            SimError::Csv(_) => CliError::runtime("WRITE_FAILED", e.to_string()),
        }
    }
}

impl From<LearningError> for CliError {
    fn from(e: LearningError) -> Self {
        let code = match e {
            LearningError::Parse { .. } | LearningError::InvalidLog(_) => "INVALID_LOG",
            LearningError::MissingCategory(_) | LearningError::MissingReward(_) => "INVALID_LOG",
            LearningError::InvalidArgument(_) => "INVALID_ARGUMENTS",
            LearningError::InsufficientData { .. } => return CliError::runtime("INSUFFICIENT_DATA", e.to_string()),
        };
        CliError::validation(code, e.to_string())
    }
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        match e {
            ApiError::Task(e) => e.into(),
            ApiError::Pomdp(e) => e.into(),
            other => CliError::validation("INVALID_CONFIG", other.to_string()),
        }
    }
}
