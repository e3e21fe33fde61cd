//! Scene evaluation: physical plausibility (contact and penetration areas),
//! registration depth error, reconstruction quality, and the pose/shape
//! training objective.

mod depth;
mod loss;
mod physical;
mod recon;

use thiserror::Error;

use crate::alignment::AlignmentError;
use crate::geometry::GeometryError;

pub use depth::{depth_error, depth_residuals, DepthErrorStats};
pub use loss::{combined_loss, combined_loss_gradient, LossBreakdown, LossWeights, ObjectGradient, ObjectState};
pub use physical::{
    contact_area, contact_report, penetration_area, AreaTotals, ContactConfig, ContactReport, PairArea,
};
pub use recon::{chamfer, chamfer_gradient, scene_score, voxel_iou, ObjectScore, ReconConfig, ReconScore};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("no pixel has both a registered object and scan depth")]
    NoValidPixels,
    #[error("point set is empty")]
    EmptySet,
    #[error("{pred} predicted objects vs {gt} ground-truth objects")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("at least one camera is required")]
    NoCameras,
    #[error("invalid metric parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
}
