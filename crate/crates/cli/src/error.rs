use eigedge::classic::ClassicError;
use eigedge::dictedge::DictError;
use eigedge::houghcells::HoughError;
use eigedge::imgcore::ImageError;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Usage(String),
    Algorithm(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Algorithm(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(m) | CliError::Usage(m) | CliError::Algorithm(m) => f.write_str(m),
        }
    }
}

impl From<ImageError> for CliError {
    fn from(e: ImageError) -> Self {
        match e {
            ImageError::Io { .. }
            | ImageError::UnsupportedFormat(_)
            | ImageError::CorruptHeader(_)
            | ImageError::CorruptData(_)
            | ImageError::Png(_) => CliError::Io(e.to_string()),
            ImageError::Percentile(_) => CliError::Usage(e.to_string()),
            _ => CliError::Algorithm(e.to_string()),
        }
    }
}

impl From<DictError> for CliError {
    fn from(e: DictError) -> Self {
        match e {
            DictError::PatchSize(_) | DictError::Percentile(_) => CliError::Usage(e.to_string()),
            DictError::Image(inner) => inner.into(),
            _ => CliError::Algorithm(e.to_string()),
        }
    }
}

impl From<ClassicError> for CliError {
    fn from(e: ClassicError) -> Self {
        match e {
            ClassicError::Sigma(_)
            | ClassicError::Thresholds { .. }
            | ClassicError::EvenSize(_) => CliError::Usage(e.to_string()),
            ClassicError::Image(inner) => inner.into(),
            ClassicError::TooSmall { .. } => CliError::Algorithm(e.to_string()),
        }
    }
}

impl From<HoughError> for CliError {
    fn from(e: HoughError) -> Self {
        match e {
            HoughError::Image(inner) => inner.into(),
            HoughError::RadiusTooLarge { .. } => CliError::Algorithm(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}
