use thiserror::Error;

pub type Result<T, E = MattingError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MattingError {
    /// Two rasters that must agree in one spatial dimension do not.
    #[error("contract violation: {what} {dimension} mismatch (expected {expected}, found {found})")]
    SizeMismatch {
        what: &'static str,
        dimension: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("subject not found: probability map has no pixel above 0.5")]
    SubjectNotFound,

    #[error("alignment failed: {0}")]
    AlignmentFailed(String),

    #[error("asset {id} skipped: {reason}")]
    AssetSkipped { id: String, reason: String },

    #[error("non-finite loss at step {step} (batch: {batch})")]
    NonFiniteLoss { step: u64, batch: String },

    #[error("discriminator saturated at step {step}: mean |score| = {mean_abs_score}")]
    DiscriminatorSaturated { step: u64, mean_abs_score: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MattingError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        MattingError::Contract(msg.into())
    }
}

/// Checks that two `(height, width)` pairs agree, naming the first
/// mismatched dimension.
pub(crate) fn check_same_size(
    what: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<()> {
    if expected.0 != found.0 {
        return Err(MattingError::SizeMismatch {
            what,
            dimension: "height",
            expected: expected.0,
            found: found.0,
        });
    }
    if expected.1 != found.1 {
        return Err(MattingError::SizeMismatch {
            what,
            dimension: "width",
            expected: expected.1,
            found: found.1,
        });
    }
    Ok(())
}
