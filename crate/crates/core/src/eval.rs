//! Greedy rotated-IoU matching, per-class average precision and mAP.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotations::DetectionRecord;
use crate::geometry::{rotated_iou, OrientedBox};
use crate::transform::AnnotationRecord;

/// Precision-recall integration rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ApMode {
    /// Mean of the interpolated precision at recall 0, 0.1, ..., 1.
    #[default]
    #[serde(rename = "11pt")]
    ElevenPoint,
    /// Area under the monotone precision envelope.
    #[serde(rename = "all")]
    AllPoint,
}

impl FromStr for ApMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "11pt" | "11" | "eleven_point" => Ok(Self::ElevenPoint),
            "all" | "all_point" => Ok(Self::AllPoint),
            other => Err(format!("unknown AP mode {other:?} (expected 11pt or all)")),
        }
    }
}

impl fmt::Display for ApMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ElevenPoint => "11pt",
            Self::AllPoint => "all",
        })
    }
}

/// Outcome for one detection. `matched` = true positive, `ignored` = hit a
/// difficult ground truth; neither = false positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchResult {
    pub det_index: usize,
    pub score: f64,
    pub matched: bool,
    pub ignored: bool,
    /// Index of the ground truth it was assigned to, if any.
    pub gt_index: Option<usize>,
}

/// Greedy one-to-one matching for one image and one class.
///
/// `dets` are `(box, score)`; `gts` are `(box, difficult)`. Results come back
/// in descending score order (ties keep input order). Each detection takes the
/// highest-IoU ground truth among the still-unmatched normal ones and all
/// difficult ones (ties: lowest index); a difficult hit is ignored and
/// consumes nothing.
pub fn match_boxes(dets: &[(OrientedBox<f64>, f64)], gts: &[(OrientedBox<f64>, bool)], iou_threshold: f64) -> Vec<MatchResult> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].1.total_cmp(&dets[a].1));
    let mut taken = vec![false; gts.len()];
    order
        .into_iter()
        .map(|di| {
            let (dbox, score) = dets[di];
            let mut best: Option<(usize, f64)> = None;
            for (gi, (gbox, difficult)) in gts.iter().enumerate() {
                if taken[gi] && !difficult {
                    continue;
                }
                let iou = rotated_iou(&dbox, gbox);
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((gi, iou));
                }
            }
            match best {
                Some((gi, iou)) if iou >= iou_threshold => {
                    let difficult = gts[gi].1;
                    if !difficult {
                        taken[gi] = true;
                    }
                    MatchResult { det_index: di, score, matched: !difficult, ignored: difficult, gt_index: Some(gi) }
                }
                _ => MatchResult { det_index: di, score, matched: false, ignored: false, gt_index: None },
            }
        })
        .collect()
}

/// [`match_boxes`] over parsed records (all assumed to share image and class).
pub fn match_detections(dets: &[DetectionRecord], gts: &[AnnotationRecord<f64>], iou_threshold: f64) -> Vec<MatchResult> {
    let d: Vec<_> = dets.iter().map(|d| (d.bbox(), d.score)).collect();
    let g: Vec<_> = gts.iter().map(|g| (g.bbox, g.difficulty > 0)).collect();
    match_boxes(&d, &g, iou_threshold)
}

/// AP for one class from pooled match results; `None` when `num_gt == 0`.
///
/// Results are ranked by descending score, ties by ascending `det_index`.
pub fn average_precision(matches: &[MatchResult], num_gt: usize, mode: ApMode) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let mut ranked: Vec<&MatchResult> = matches.iter().filter(|m| !m.ignored).collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.det_index.cmp(&b.det_index)));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(ranked.len());
    for m in ranked {
        if m.matched {
            tp += 1;
        } else {
            fp += 1;
        }
        curve.push((tp as f64 / num_gt as f64, tp as f64 / (tp + fp) as f64));
    }
    Some(match mode {
        ApMode::ElevenPoint => {
            let total: f64 = (0..=10)
                .map(|t| {
                    let thr = t as f64 / 10.0;
                    curve.iter().filter(|(r, _)| *r >= thr).map(|(_, p)| *p).fold(0.0, f64::max)
                })
                .sum();
            total / 11.0
        }
        ApMode::AllPoint => {
            let mut rec = vec![0.0];
            let mut prec = vec![0.0];
            rec.extend(curve.iter().map(|c| c.0));
            prec.extend(curve.iter().map(|c| c.1));
            rec.push(1.0);
            prec.push(0.0);
            for i in (0..prec.len() - 1).rev() {
                prec[i] = prec[i].max(prec[i + 1]);
            }
            (0..rec.len() - 1).filter(|&i| rec[i + 1] != rec[i]).map(|i| (rec[i + 1] - rec[i]) * prec[i + 1]).sum()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    /// `None` when the class has no non-difficult ground truth.
    pub ap: Option<f64>,
    pub num_gt: usize,
    pub num_det: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub ignored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_class: BTreeMap<String, ClassReport>,
    #[serde(rename = "map")]
    pub map_score: f64,
    pub iou_threshold: f64,
    pub mode: ApMode,
}

/// Evaluates detections against ground truth keyed by image id.
///
/// mAP is the unweighted mean AP over classes with at least one
/// non-difficult ground truth (0 when there are none).
pub fn evaluate(
    dets: &[DetectionRecord],
    gts: &BTreeMap<String, Vec<AnnotationRecord<f64>>>,
    iou_threshold: f64,
    mode: ApMode,
) -> EvalReport {
    let mut classes: BTreeSet<&str> = dets.iter().map(|d| d.category.as_str()).collect();
    classes.extend(gts.values().flatten().map(|g| g.category.as_str()));
    let det_boxes: Vec<OrientedBox<f64>> = dets.iter().map(DetectionRecord::bbox).collect();

    let mut per_class = BTreeMap::new();
    for class in classes {
        let mut by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, d) in dets.iter().enumerate().filter(|(_, d)| d.category == class) {
            by_image.entry(d.image_id.as_str()).or_default().push(i);
        }
        for image in gts.keys() {
            by_image.entry(image.as_str()).or_default();
        }
        let mut pooled = Vec::new();
        let mut num_gt = 0;
        for (image, det_ids) in &by_image {
            let image_gts: Vec<(OrientedBox<f64>, bool)> = gts
                .get(*image)
                .map(|v| v.iter().filter(|g| g.category == class).map(|g| (g.bbox, g.difficulty > 0)).collect())
                .unwrap_or_default();
            num_gt += image_gts.iter().filter(|g| !g.1).count();
            let local: Vec<_> = det_ids.iter().map(|&i| (det_boxes[i], dets[i].score)).collect();
            pooled.extend(match_boxes(&local, &image_gts, iou_threshold).into_iter().map(|m| MatchResult { det_index: det_ids[m.det_index], ..m }));
        }
        let ap = average_precision(&pooled, num_gt, mode);
        per_class.insert(
            class.to_string(),
            ClassReport {
                ap,
                num_gt,
                num_det: pooled.len(),
                true_positives: pooled.iter().filter(|m| m.matched).count(),
                false_positives: pooled.iter().filter(|m| !m.matched && !m.ignored).count(),
                ignored: pooled.iter().filter(|m| m.ignored).count(),
            },
        );
    }
    let scored: Vec<f64> = per_class.values().filter_map(|c: &ClassReport| c.ap).collect();
    let map_score = if scored.is_empty() { 0.0 } else { scored.iter().sum::<f64>() / scored.len() as f64 };
    EvalReport { per_class, map_score, iou_threshold, mode }
}
