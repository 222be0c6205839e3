//! Detector-free analyses: how far annotations sit from their minimum
//! enclosing rectangles, and how much a noise configuration degrades
//! ground-truth boxes (self-IoU before vs. after noise).

use serde::Serialize;
use thiserror::Error;

use crate::annotations::AnnotationFile;
use crate::geometry::{clip_polygon, min_area_rect, obb_to_polygon, rotated_iou, signed_area, ConvexPolygon, Point2};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::transform::{nbbox_apply_traced, NoiseConfig, TransformError};

pub const HISTOGRAM_BUCKET_WIDTH: f64 = 0.05;
pub const HISTOGRAM_BUCKETS: usize = 20;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no annotation records to analyze")]
    NoRecords,
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("{image_id}: {source}")]
    Transform {
        image_id: String,
        #[source]
        source: TransformError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordDiscrepancy {
    pub image_id: String,
    pub category: String,
    pub iou_ann_vs_minrect: f64,
    /// `area(min rect) / area(quad)`, clamped to at least 1; `None` for zero-area quads.
    pub area_ratio: Option<f64>,
    /// Set for degenerate, non-convex or self-intersecting quads.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancyStats {
    pub per_record: Vec<RecordDiscrepancy>,
    pub bucket_width: f64,
    /// Counts of `iou_ann_vs_minrect` per bucket `[k*w, (k+1)*w)`; 1.0 lands in the last one.
    pub histogram: Vec<usize>,
    pub mean_iou: f64,
}

fn segments_cross(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>, d: Point2<f64>) -> bool {
    let orient = |p: Point2<f64>, q: Point2<f64>, r: Point2<f64>| (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    let (d1, d2) = (orient(a, b, c), orient(a, b, d));
    let (d3, d4) = (orient(c, d, a), orient(c, d, b));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Compares one annotated quadrilateral with its minimum enclosing rectangle.
pub fn quad_discrepancy(quad: &[Point2<f64>; 4]) -> (f64, Option<f64>, Option<String>) {
    let quad_area = signed_area(quad).abs();
    if quad_area <= f64::EPS_GEOM {
        return (0.0, None, Some("degenerate".into()));
    }
    let rect = min_area_rect(quad).expect("four finite points");
    let rect_poly = obb_to_polygon(&rect).expect("min rect is a valid box");
    let rect_area = rect.area();
    let inter = signed_area(&clip_polygon(quad, &rect_poly)).abs();
    let iou = (inter / (quad_area + rect_area - inter)).clamp(0.0, 1.0);

    let self_intersecting = segments_cross(quad[0], quad[1], quad[2], quad[3]) || segments_cross(quad[1], quad[2], quad[3], quad[0]);
    let mut flag = if self_intersecting {
        Some("self-intersecting".to_string())
    } else if ConvexPolygon::new(quad.to_vec()).is_err() {
        Some("non-convex".to_string())
    } else {
        None
    };
    let mut ratio = rect_area / quad_area;
    if ratio < 1.0 {
        log::warn!("quad area exceeds its enclosing rectangle (ratio {ratio}); clamping to 1");
        ratio = 1.0;
        flag.get_or_insert_with(|| "area-clamped".into());
    }
    (iou, Some(ratio), flag)
}

pub fn discrepancy_report(files: &[AnnotationFile]) -> Result<DiscrepancyStats, AnalysisError> {
    let mut per_record = Vec::new();
    for f in files {
        for obj in &f.objects {
            let (iou, area_ratio, flag) = quad_discrepancy(&obj.quad_points());
            per_record.push(RecordDiscrepancy {
                image_id: f.image_id.clone(),
                category: obj.record.category.clone(),
                iou_ann_vs_minrect: iou,
                area_ratio,
                flag,
            });
        }
    }
    if per_record.is_empty() {
        return Err(AnalysisError::NoRecords);
    }
    let mut histogram = vec![0usize; HISTOGRAM_BUCKETS];
    for r in &per_record {
        let k = ((r.iou_ann_vs_minrect / HISTOGRAM_BUCKET_WIDTH).floor() as usize).min(HISTOGRAM_BUCKETS - 1);
        histogram[k] += 1;
    }
    let mean_iou = per_record.iter().map(|r| r.iou_ann_vs_minrect).sum::<f64>() / per_record.len() as f64;
    Ok(DiscrepancyStats { per_record, bucket_width: HISTOGRAM_BUCKET_WIDTH, histogram, mean_iou })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub config: NoiseConfig,
    pub mean_self_iou: f64,
    pub p05_self_iou: f64,
    pub frac_gated: f64,
    /// Number of self-IoU samples (eligible records × trials).
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub grid: Vec<SweepPoint>,
    pub seed: u64,
    pub trials: usize,
}

/// Substream label used for `trial` of the file with `image_id`.
///
/// Shared by every grid point, so configurations are compared on paired draws.
pub fn sweep_label(image_id: &str, trial: usize) -> String {
    format!("{image_id}#trial{trial}")
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Applies each configuration `trials` times and summarizes self-IoU of the
/// eligible (non-gated) records. With no eligible records the mean and
/// percentile are 1, since every box is left unchanged.
pub fn noise_sweep(files: &[AnnotationFile], grid: &[NoiseConfig], seed: u64, trials: usize) -> Result<SweepResult, AnalysisError> {
    if trials == 0 {
        return Err(AnalysisError::NoTrials);
    }
    let root = RngStream::new(seed);
    let total_records: usize = files.iter().map(|f| f.objects.len()).sum();
    let mut points = Vec::with_capacity(grid.len());
    for cfg in grid {
        let mut ious = Vec::new();
        let mut gated = 0usize;
        for trial in 0..trials {
            for f in files {
                let records = f.records();
                let mut rng = root.substream(sweep_label(&f.image_id, trial));
                let out = nbbox_apply_traced(&records, cfg, &mut rng)
                    .map_err(|source| AnalysisError::Transform { image_id: f.image_id.clone(), source })?;
                if trial == 0 {
                    gated += out.gated_count();
                }
                for ((before, after), g) in records.iter().zip(&out.records).zip(&out.gated) {
                    if !g {
                        ious.push(rotated_iou(&before.bbox, &after.bbox));
                    }
                }
            }
        }
        ious.sort_by(f64::total_cmp);
        let (mean, p05) = if ious.is_empty() {
            (1.0, 1.0)
        } else {
            (ious.iter().sum::<f64>() / ious.len() as f64, percentile(&ious, 0.05))
        };
        let frac_gated = if total_records == 0 { 0.0 } else { gated as f64 / total_records as f64 };
        points.push(SweepPoint { config: cfg.clone(), mean_self_iou: mean, p05_self_iou: p05, frac_gated, samples: ious.len() });
    }
    Ok(SweepResult { grid: points, seed, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotations::read_dota_annotations;

    fn pts(c: [(f64, f64); 4]) -> [Point2<f64>; 4] {
        c.map(|(x, y)| Point2::new(x, y))
    }

    #[test]
    fn rectangle_has_no_discrepancy() {
        let (iou, ratio, flag) = quad_discrepancy(&pts([(0., 0.), (4., 0.), (4., 2.), (0., 2.)]));
        assert!((iou - 1.0).abs() < 1e-12);
        assert!((ratio.unwrap() - 1.0).abs() < 1e-12);
        assert!(flag.is_none());
    }

    #[test]
    fn trapezoid_ratio() {
        let (iou, ratio, _) = quad_discrepancy(&pts([(0., 0.), (4., 0.), (4., 2.), (1., 2.)]));
        assert!((ratio.unwrap() - 8.0 / 7.0).abs() < 1e-12);
        assert!((iou - 7.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_bowtie_quads_flagged() {
        let (iou, ratio, flag) = quad_discrepancy(&pts([(0., 0.), (1., 1.), (2., 2.), (3., 3.)]));
        assert_eq!((iou, ratio, flag.as_deref()), (0.0, None, Some("degenerate")));
        let (_, ratio, flag) = quad_discrepancy(&pts([(0., 0.), (4., 2.), (4., 0.), (0., 3.)]));
        assert_eq!(flag.as_deref(), Some("self-intersecting"));
        assert!(ratio.unwrap() >= 1.0);
        let (_, _, flag) = quad_discrepancy(&pts([(0., 0.), (4., 0.), (2., 1.), (2., 4.)]));
        assert_eq!(flag.as_deref(), Some("non-convex"));
    }

    #[test]
    fn report_histogram_and_empty_input() {
        let f = read_dota_annotations("0 0 4 0 4 2 0 2 a 0\n0 0 4 0 4 2 1 2 b 0\n", "img").unwrap();
        let stats = discrepancy_report(&[f]).unwrap();
        assert_eq!(stats.histogram.iter().sum::<usize>(), 2);
        assert_eq!(stats.histogram[19], 1);
        assert_eq!(stats.histogram[17], 1);
        assert!(matches!(discrepancy_report(&[]), Err(AnalysisError::NoRecords)));
    }

    #[test]
    fn sweep_identity_and_gating_fraction() {
        let f = read_dota_annotations("0 0 40 0 40 20 0 20 a 0\n0 0 10 0 10 10 0 10 b 0\n", "img").unwrap();
        let res = noise_sweep(std::slice::from_ref(&f), &[NoiseConfig::disabled(), NoiseConfig::default()], 3, 4).unwrap();
        assert_eq!(res.grid[0].mean_self_iou, 1.0);
        assert_eq!(res.grid[0].frac_gated, 0.5);
        assert!(res.grid[1].mean_self_iou < 1.0);
        assert_eq!(res.grid[1].samples, 4);
        assert!(matches!(noise_sweep(&[f], &[NoiseConfig::default()], 0, 0), Err(AnalysisError::NoTrials)));
    }

    #[test]
    fn nearest_rank_percentile() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.05), 5.0);
        assert_eq!(percentile(&[0.3], 0.05), 0.3);
    }
}
