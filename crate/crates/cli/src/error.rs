use std::fmt;
use std::path::Path;

use scenereg_core::alignment::AlignmentError;
use scenereg_core::decoder::DecoderError;
use scenereg_core::geometry::GeometryError;
use scenereg_core::manifest::ManifestError;
use scenereg_core::metrics::MetricError;
use scenereg_core::scenegen::SceneGenError;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// Some objects failed; the rest of the output is valid.
    pub const PARTIAL: u8 = 2;
    /// A metric could not be evaluated on this input.
    pub const METRIC: u8 = 3;
    pub const USAGE: u8 = 64;
    pub const DATA: u8 = 65;
    pub const IO: u8 = 66;
    /// Scene generation gave up.
    pub const GENERATION: u8 = 70;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(exit::USAGE, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(exit::DATA, message)
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self::new(exit::IO, format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn geometry_code(e: &GeometryError) -> u8 {
    match e {
        GeometryError::Io(_) => exit::IO,
        _ => exit::DATA,
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        let code = match &e {
            ManifestError::Io { .. } => exit::IO,
            ManifestError::Mesh { source, .. } => geometry_code(source),
            ManifestError::MissingField { .. } | ManifestError::MissingScanOrCameras(_) => exit::USAGE,
            ManifestError::Json { .. } | ManifestError::Invalid(_) => exit::DATA,
        };
        Self::new(code, e.to_string())
    }
}

impl From<DecoderError> for CliError {
    fn from(e: DecoderError) -> Self {
        let code = match &e {
            DecoderError::Io(_) => exit::IO,
            _ => exit::DATA,
        };
        Self::new(code, e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        let code = match &e {
            MetricError::NoCameras | MetricError::InvalidParameter(_) => exit::USAGE,
            MetricError::Geometry(g) => geometry_code(g),
            MetricError::LengthMismatch { .. } => exit::DATA,
            MetricError::NoValidPixels | MetricError::EmptySet | MetricError::Alignment(_) => exit::METRIC,
        };
        Self::new(code, e.to_string())
    }
}

impl From<AlignmentError> for CliError {
    fn from(e: AlignmentError) -> Self {
        let code = match &e {
            AlignmentError::InvalidConfig(_) => exit::USAGE,
            AlignmentError::Geometry(g) => geometry_code(g),
            AlignmentError::DegenerateConfiguration(_) => exit::DATA,
        };
        Self::new(code, e.to_string())
    }
}

impl From<SceneGenError> for CliError {
    fn from(e: SceneGenError) -> Self {
        let code = match &e {
            SceneGenError::Io { .. } => exit::IO,
            SceneGenError::InvalidParameter(_) | SceneGenError::UnknownComposer(_) => exit::USAGE,
            SceneGenError::InvalidCatalog(_) | SceneGenError::Manifest(_) | SceneGenError::Geometry(_) => exit::DATA,
            SceneGenError::NoCompatiblePair(_)
            | SceneGenError::PlacementExhausted(_)
            | SceneGenError::GenerationFailed { .. }
            | SceneGenError::Metric(_) => exit::GENERATION,
        };
        Self::new(code, e.to_string())
    }
}
