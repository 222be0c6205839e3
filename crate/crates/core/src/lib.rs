//! Noise injection into oriented bounding boxes, with the rotated-box
//! geometry, DOTA annotation I/O and mAP evaluation needed to use it on
//! aerial-image datasets.
//!
//! Geometry and the noise transform are generic over [`Scalar`] (`f32` or
//! `f64`); the aliases below fix the `f64` instantiation used by the file
//! formats, evaluation and analyses.

pub mod analysis;
pub mod annotations;
pub mod batch;
pub mod eval;
pub mod geometry;
pub mod rng;
pub mod scalar;
pub mod transform;

pub use analysis::{discrepancy_report, noise_sweep, DiscrepancyStats, SweepResult};
pub use annotations::{read_dota_annotations, read_dota_detections, write_dota_annotations, AnnotationFile, DetectionRecord, ParseError};
pub use eval::{average_precision, evaluate, match_detections, ApMode, EvalReport};
pub use geometry::{convex_intersection, min_area_rect, obb_to_polygon, rotated_iou, GeometryError};
pub use rng::{RngError, RngStream};
pub use scalar::Scalar;
pub use transform::{nbbox_apply, noisy_rotate, noisy_scale, noisy_translate, NoiseConfig, TransformError};

pub type Point2 = geometry::Point2<f64>;
pub type OrientedBox = geometry::OrientedBox<f64>;
pub type ConvexPolygon = geometry::ConvexPolygon<f64>;
pub type AnnotationRecord = transform::AnnotationRecord<f64>;

pub type Point2F32 = geometry::Point2<f32>;
pub type OrientedBoxF32 = geometry::OrientedBox<f32>;
pub type ConvexPolygonF32 = geometry::ConvexPolygon<f32>;
pub type AnnotationRecordF32 = transform::AnnotationRecord<f32>;
