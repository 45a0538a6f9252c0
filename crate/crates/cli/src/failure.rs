//! Exit codes and the machine-readable error document written to stderr.

use fpp::FppError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// Bad flags, configuration or input files; nothing was computed.
    Validation,
    /// The computation itself failed.
    Runtime,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Validation => 1,
            FailureKind::Runtime => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Failure {
            kind: FailureKind::Validation,
            message: message.into(),
            hint: None,
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Failure {
            kind: FailureKind::Runtime,
            message: message.into(),
            hint: None,
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            error: &'a Failure,
            exit_code: i32,
        }
        serde_json::to_string(&Doc {
            error: self,
            exit_code: self.kind.exit_code(),
        })
        .expect("error document serializes")
    }
}

impl From<FppError> for Failure {
    fn from(e: FppError) -> Self {
        let kind = match &e {
            FppError::Io { .. }
            | FppError::ZeroVariance
            | FppError::RankDeficient { .. }
            | FppError::NonFiniteLoss { .. }
            | FppError::Diverged { .. }
            | FppError::Trial { .. } => FailureKind::Runtime,
            _ => FailureKind::Validation,
        };
        let hint = match &e {
            FppError::Diverged { .. } | FppError::NonFiniteLoss { .. } => Some(
                "lower --lr (about 0.01 when the dimension exceeds the sample count) or reduce the dimension with --pre-dim"
                    .to_string(),
            ),
            _ => None,
        };
        Failure {
            kind,
            message: e.to_string(),
            hint,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime(e.to_string())
    }
}
