//! Exit codes and the one-line error report.

use std::fmt;
use std::io::ErrorKind;

use ecfnet_core::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Internal,
    MissingFile,
    Config,
    Shape,
    Corrupt,
    Diverged,
    Io,
}

impl Kind {
    pub fn code(self) -> i32 {
        match self {
            Kind::Internal => 1,
            Kind::MissingFile => 3,
            Kind::Config => 4,
            Kind::Shape => 5,
            Kind::Corrupt => 6,
            Kind::Diverged => 7,
            Kind::Io => 8,
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Kind::Internal => "internal",
            Kind::MissingFile => "missing-file",
            Kind::Config => "config",
            Kind::Shape => "shape",
            Kind::Corrupt => "corrupt",
            Kind::Diverged => "diverged",
            Kind::Io => "io",
        }
    }
}

pub const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  internal error
  2  bad command line (unknown flag, missing argument)
  3  missing file or directory
  4  bad config (unknown key, invalid value, malformed JSON)
  5  shape mismatch (image size, channel count, checkpoint vs config)
  6  corrupt checkpoint or image file
  7  training diverged (non-finite loss)
  8  other I/O failure

Errors are reported on stderr as a single line: error[<kind>]: <message>

Set ECFNET_THREADS to cap worker threads; results do not depend on it.";

/// A failure the CLI detected itself, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub msg: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for Failure {}

pub fn fail(kind: Kind, msg: impl Into<String>) -> anyhow::Error {
    Failure {
        kind,
        msg: msg.into(),
    }
    .into()
}

fn io_kind(e: &std::io::Error) -> Kind {
    if e.kind() == ErrorKind::NotFound {
        Kind::MissingFile
    } else {
        Kind::Io
    }
}

fn core_kind(e: &Error) -> Kind {
    match e {
        Error::Io { source, .. } => io_kind(source),
        Error::Config(_) => Kind::Config,
        Error::AxisMismatch { .. }
        | Error::ShapeMismatch { .. }
        | Error::InvalidArgument { .. }
        | Error::ParamShape { .. }
        | Error::MissingParam(_)
        | Error::UnexpectedParam(_) => Kind::Shape,
        Error::BadMagic
        | Error::UnsupportedVersion(_)
        | Error::Checksum { .. }
        | Error::MalformedCheckpoint(_)
        | Error::PpmHeader(_)
        | Error::PpmTruncated { .. } => Kind::Corrupt,
        Error::NonFinite { .. } | Error::NonFiniteLoss { .. } => Kind::Diverged,
        _ => Kind::Internal,
    }
}

/// The first recognizable cause decides the exit code.
pub fn classify(err: &anyhow::Error) -> Kind {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.kind;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return core_kind(e);
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return Kind::Config;
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return io_kind(e);
        }
    }
    Kind::Internal
}

/// `error[kind]: outer context: ...: root cause`, newlines flattened. Causes
/// already quoted by their parent's message are skipped.
pub fn report(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string().replace(['\n', '\r'], " ");
        if !parts.last().is_some_and(|p| p.ends_with(&text)) {
            parts.push(text);
        }
    }
    format!("error[{}]: {}", classify(err).slug(), parts.join(": "))
}
