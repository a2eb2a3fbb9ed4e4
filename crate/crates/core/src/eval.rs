//! Detection matching and metrics: output tiles are true positives iff they
//! contain ground-truth pixels, ground-truth polygons with no overlapping
//! detection are false negatives, and recall/precision/F-measure follow from
//! the counts per scene and pooled.

use serde::{Deserialize, Serialize};

use crate::cascade::DetectionSet;
use crate::error::{Error, Result};
use crate::raster::{rasterize, PixelMask, PolygonSet, ValidityMask};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub precision: f64,
    pub f_measure: f64,
}

/// recall = tp/(tp+fn), precision = tp/(tp+fp), f = 2pr/(p+r); any metric
/// with a zero denominator is 0.
pub fn metrics(counts: &MetricsCounts) -> Metrics {
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    Metrics {
        recall,
        precision,
        f_measure: f_measure(precision, recall),
    }
}

pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: usize, denom: usize) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

/// Matches detections against ground truth on one scene.
///
/// A detection whose bbox (clipped to the scene) touches an invalid pixel is
/// excluded before counting. A remaining detection is TP iff its bbox
/// contains at least one ground-truth pixel, else FP. A polygon is FN iff no
/// remaining detection's bbox contains any of its own rasterized pixels;
/// polygons whose pixels are all invalid are excluded from FN accounting.
pub fn match_detections(
    detections: &DetectionSet,
    polys: &PolygonSet,
    gt_mask: &PixelMask,
    validity: Option<&ValidityMask>,
) -> Result<MetricsCounts> {
    let (h, w) = (gt_mask.height(), gt_mask.width());
    if let Some(v) = validity {
        if v.height() != h || v.width() != w {
            return Err(Error::Validation(format!(
                "validity mask {}x{} does not match ground truth {h}x{w}",
                v.height(),
                v.width()
            )));
        }
    }

    // detections surviving the validity filter, as clipped pixel rectangles
    let mut kept: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut counts = MetricsCounts::default();
    'dets: for det in &detections.detections {
        let r0 = det.bbox[0].max(0) as usize;
        let c0 = det.bbox[1].max(0) as usize;
        let r1 = det.bbox[2].clamp(0, h as i64) as usize;
        let c1 = det.bbox[3].clamp(0, w as i64) as usize;
        if let Some(v) = validity {
            for r in r0..r1 {
                for c in c0..c1 {
                    if !v.is_valid(r, c) {
                        continue 'dets;
                    }
                }
            }
        }
        kept.push((r0, c0, r1, c1));
    }

    for &(r0, c0, r1, c1) in &kept {
        let mut hit = false;
        'scan: for r in r0..r1 {
            for c in c0..c1 {
                if gt_mask.is_inside(r, c) {
                    hit = true;
                    break 'scan;
                }
            }
        }
        if hit {
            counts.tp += 1;
        } else {
            counts.fp += 1;
        }
    }

    for poly in &polys.polygons {
        let single = PolygonSet {
            polygons: vec![poly.clone()],
        };
        let mask = rasterize(&single, h, w)?;
        let mut any_valid_pixel = false;
        let mut covered = false;
        'pixels: for r in 0..h {
            for c in 0..w {
                if !mask.is_inside(r, c) {
                    continue;
                }
                if validity.map_or(true, |v| v.is_valid(r, c)) {
                    any_valid_pixel = true;
                }
                for &(r0, c0, r1, c1) in &kept {
                    if r >= r0 && r < r1 && c >= c0 && c < c1 {
                        covered = true;
                        break 'pixels;
                    }
                }
            }
        }
        let entirely_invalid = validity.is_some() && !any_valid_pixel && mask.count_inside() > 0;
        if !covered && !entirely_invalid {
            counts.fn_ += 1;
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetrics {
    pub scene_id: String,
    pub counts: MetricsCounts,
    pub recall: f64,
    pub precision: f64,
    pub f_measure: f64,
}

/// Per-scene metrics plus pooled (micro) and unweighted-mean (macro) totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenes: Vec<SceneMetrics>,
    pub micro_counts: MetricsCounts,
    pub micro: Metrics,
    #[serde(rename = "macro")]
    pub macro_: Metrics,
}

pub fn report(per_scene: &[(String, MetricsCounts)]) -> Result<MetricsReport> {
    if per_scene.is_empty() {
        return Err(Error::Validation("report needs at least one scene".into()));
    }
    let mut scenes = Vec::with_capacity(per_scene.len());
    let mut pooled = MetricsCounts::default();
    let mut macro_sum = (0.0f64, 0.0f64, 0.0f64);
    for (scene_id, counts) in per_scene {
        let m = metrics(counts);
        pooled.tp += counts.tp;
        pooled.fp += counts.fp;
        pooled.fn_ += counts.fn_;
        macro_sum.0 += m.recall;
        macro_sum.1 += m.precision;
        macro_sum.2 += m.f_measure;
        scenes.push(SceneMetrics {
            scene_id: scene_id.clone(),
            counts: *counts,
            recall: m.recall,
            precision: m.precision,
            f_measure: m.f_measure,
        });
    }
    let n = per_scene.len() as f64;
    Ok(MetricsReport {
        scenes,
        micro_counts: pooled,
        micro: metrics(&pooled),
        macro_: Metrics {
            recall: macro_sum.0 / n,
            precision: macro_sum.1 / n,
            f_measure: macro_sum.2 / n,
        },
    })
}

/// Plain-text table: one column per scene plus micro/macro totals, with
/// recall, precision and F-measure blocks as rows.
pub fn render_table(report: &MetricsReport) -> String {
    let mut cols = vec!["".to_string()];
    cols.extend(report.scenes.iter().map(|s| s.scene_id.clone()));
    cols.push("micro".into());
    cols.push("macro".into());

    let row = |name: &str, f: &dyn Fn(&SceneMetrics) -> f64, micro: f64, macro_: f64| {
        let mut cells = vec![name.to_string()];
        cells.extend(report.scenes.iter().map(|s| format!("{:.3}", f(s))));
        cells.push(format!("{micro:.3}"));
        cells.push(format!("{macro_:.3}"));
        cells
    };

    let rows = vec![
        cols,
        row("Recall", &|s| s.recall, report.micro.recall, report.macro_.recall),
        row(
            "Precision",
            &|s| s.precision,
            report.micro.precision,
            report.macro_.precision,
        ),
        row(
            "F-measure",
            &|s| s.f_measure,
            report.micro.f_measure,
            report.macro_.f_measure,
        ),
    ];
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &rows {
        for (i, cell) in r.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            out.push_str(&format!("{:>width$}", cell, width = widths[i]));
        }
        out.push('\n');
    }
    out
}
