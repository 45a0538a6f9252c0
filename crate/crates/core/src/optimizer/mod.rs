//! Projections on the manifold of orthonormal `D × 2` matrices and the
//! training loop that fits them jointly with the heads.
//!
//! Every step moves both the heads and the raw projection along the negative
//! gradient of the averaged loss and then retracts the projection back to
//! orthonormal columns through its thin SVD.

mod fit;
mod projection;

pub use fit::{
    batch_objective, evaluate_objective, fit, fit_with_observer, score_heads, FitResult, HyperParams,
    LrSchedule, Metric, ObjectiveGradients, OptimizerKind, ResponseScore, StepInfo, DEFAULT_LEARNING_RATE, DEFAULT_RESTARTS, DIVERGENCE_FACTOR,
    MAX_HALVINGS,
};
pub use projection::{
    compose, principal_angles, random_orthonormal, random_orthonormal_with, random_projection_preprocess,
    retract_with, rotate_embedding, rotation_matrix, ProjectionMatrix, Retraction, RetractionMode,
    ORTHONORMALITY_TOLERANCE, RANK_TOLERANCE,
};

/// Retract with a fixed recovery stream; see [`retract_with`].
pub fn retract(p: ndarray::ArrayView2<f64>, mode: RetractionMode) -> crate::Result<Retraction> {
    retract_with(p, mode, &mut crate::rng::seeded(crate::rng::streams::RECOVERY))
}
