use std::fmt;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 2,
    Data = 3,
    Assumption = 4,
    Solver = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn usage(m: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Usage,
            message: m.into(),
        }
    }

    pub fn data(m: impl Into<String>) -> Self {
        Self {
            kind: ExitKind::Data,
            message: m.into(),
        }
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<sdiq::Error> for CliError {
    fn from(e: sdiq::Error) -> Self {
        use sdiq::Error as E;
        let kind = match &e {
            E::InvalidParameter(_) => ExitKind::Usage,
            E::Format(_) | E::Io(_) | E::InsufficientData(_) => ExitKind::Data,
            E::AssumptionViolated(_) | E::Infeasible(_) => ExitKind::Assumption,
            E::Solver(_) => ExitKind::Solver,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(format!("JSON: {e}"))
    }
}
