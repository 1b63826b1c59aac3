use std::fmt;

/// Process exit codes. These values are part of the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Status {
    Ok = 0,
    Validation = 1,
    Input = 2,
    Internal = 3,
}

/// Attaches an explicit status to an error.
#[derive(Debug)]
pub struct Fail(pub Status, pub String);

impl fmt::Display for Fail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Fail {}

pub fn input(msg: impl Into<String>) -> anyhow::Error {
    Fail(Status::Input, msg.into()).into()
}

fn of_core(e: &sceneseg::Error) -> Status {
    use sceneseg::Error as E;
    match e {
        E::InvalidAnnotation { .. } | E::InvalidPrediction { .. } | E::InvalidInterval { .. } => {
            Status::Validation
        }
        E::OracleTooLarge(_) => Status::Internal,
        _ => Status::Input,
    }
}

/// First recognised cause wins; anything unrecognised is internal.
pub fn classify(e: &anyhow::Error) -> Status {
    for cause in e.chain() {
        if let Some(f) = cause.downcast_ref::<Fail>() {
            return f.0;
        }
        if let Some(c) = cause.downcast_ref::<sceneseg::Error>() {
            return of_core(c);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return Status::Input;
        }
    }
    Status::Internal
}
