//! Array-shaped entry points for embedding in training pipelines.
//!
//! Boxes are rows `[x_c, y_c, w, h, theta_degrees]`. The noise stream for a
//! batch is `RngStream::new(seed).substream(label)`, the same derivation the
//! command-line augmenter uses per file, so both paths agree bit for bit.

use thiserror::Error;

use crate::geometry::{rotated_iou, GeometryError, OrientedBox};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::transform::{nbbox_apply, AnnotationRecord, NoiseConfig, TransformError};

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("{boxes} boxes but {categories} categories")]
    LengthMismatch { boxes: usize, categories: usize },
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn to_box<T: Scalar>(row: &[T; 5]) -> OrientedBox<T> {
    OrientedBox { x_c: row[0], y_c: row[1], w: row[2], h: row[3], theta: row[4] }
}

fn to_row<T: Scalar>(b: &OrientedBox<T>) -> [T; 5] {
    [b.x_c, b.y_c, b.w, b.h, b.theta]
}

/// Noise-injects a batch of boxes; `categories` must be parallel to `boxes`.
pub fn apply_batch<T: Scalar>(
    boxes: &[[T; 5]],
    categories: &[String],
    cfg: &NoiseConfig,
    seed: u64,
    label: &str,
) -> Result<Vec<[T; 5]>, BatchError> {
    if boxes.len() != categories.len() {
        return Err(BatchError::LengthMismatch { boxes: boxes.len(), categories: categories.len() });
    }
    let records: Vec<AnnotationRecord<T>> =
        boxes.iter().zip(categories).map(|(row, c)| AnnotationRecord::new(to_box(row), c.clone(), 0)).collect();
    let mut rng = RngStream::new(seed).substream(label);
    let out = nbbox_apply(&records, cfg, &mut rng)?;
    Ok(out.iter().map(|r| to_row(&r.bbox)).collect())
}

pub fn iou<T: Scalar>(a: &[T; 5], b: &[T; 5]) -> Result<T, BatchError> {
    let (a, b) = (to_box(a), to_box(b));
    a.validate()?;
    b.validate()?;
    Ok(rotated_iou(&a, &b))
}
