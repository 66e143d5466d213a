use tooldse_core::dse::DseError;
use tooldse_core::evaluator::EvalError;
use tooldse_core::BdError;

pub const USAGE: u8 = 2;
pub const RUNTIME: u8 = 3;
pub const NON_CONVERGENCE: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: USAGE,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: RUNTIME,
            message: message.into(),
        }
    }

    pub fn io(what: &std::path::Path, e: std::io::Error) -> Self {
        Failure::runtime(format!("{}: {e}", what.display()))
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let code = match &e {
            EvalError::NonConverged { .. } => NON_CONVERGENCE,
            EvalError::Config(_) | EvalError::Profile(_) | EvalError::InvalidRequest(_) => USAGE,
            _ => RUNTIME,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<DseError> for Failure {
    fn from(e: DseError) -> Self {
        match e {
            DseError::Eval(e) => e.into(),
            DseError::Aborted { source, .. } => {
                let mut f = Failure::from(source);
                if f.code == USAGE {
                    f.code = RUNTIME;
                }
                f
            }
            DseError::Profile(_) | DseError::SubsetTooLarge { .. } | DseError::NoTools | DseError::Trace(_) => {
                Failure::usage(e.to_string())
            }
            DseError::MissingRecord(_) | DseError::NoValue(_) => Failure::usage(e.to_string()),
            DseError::Empty | DseError::EmptyShortlist { .. } => Failure::runtime(e.to_string()),
        }
    }
}

impl From<BdError> for Failure {
    fn from(e: BdError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<tooldse_core::ProfileError> for Failure {
    fn from(e: tooldse_core::ProfileError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<tooldse_core::measurement::MeasureError> for Failure {
    fn from(e: tooldse_core::measurement::MeasureError) -> Self {
        use tooldse_core::measurement::MeasureError;
        match e {
            MeasureError::InvalidParams(_) => Failure::usage(e.to_string()),
            _ => Failure::runtime(e.to_string()),
        }
    }
}
