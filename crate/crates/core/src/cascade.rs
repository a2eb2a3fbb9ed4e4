//! End-to-end detection: dense first-stage inference, candidate regions,
//! centroid crops, second-stage acceptance.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hpn::{classify_batch, HpnConfig};
use crate::hrn::{infer_dense, ScoreGrid};
use crate::nn::Network;
use crate::raster::{Scene, ValidityMask};
use crate::regions::{positive_regions, Region, REGION_THRESHOLD};
use crate::tiling::{extract_crop, Crop, HRN_TILE_SIZE};

/// Second-stage scorer. The production implementation wraps the HPN; tests
/// substitute constant stubs to isolate first-stage behavior.
pub trait CropClassifier {
    fn prob(&self, crops: &[&Crop]) -> Result<Vec<f32>>;
}

/// HPN-backed classifier.
pub struct HpnClassifier<'a> {
    pub net: &'a Network,
}

impl CropClassifier for HpnClassifier<'_> {
    fn prob(&self, crops: &[&Crop]) -> Result<Vec<f32>> {
        // threshold is applied by the cascade; 0.0 keeps all probabilities
        Ok(classify_batch(self.net, crops, 0.0)?
            .into_iter()
            .map(|c| c.prob)
            .collect())
    }
}

/// Accepts everything; turns the cascade into the first stage alone.
pub struct AcceptAll;

impl CropClassifier for AcceptAll {
    fn prob(&self, crops: &[&Crop]) -> Result<Vec<f32>> {
        Ok(vec![1.0; crops.len()])
    }
}

/// Rejects everything.
pub struct RejectAll;

impl CropClassifier for RejectAll {
    fn prob(&self, crops: &[&Crop]) -> Result<Vec<f32>> {
        Ok(vec![0.0; crops.len()])
    }
}

/// One accepted candidate region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Center pixel (row, col) of the 64x64 output tile.
    pub center: [i64; 2],
    /// [r0, c0, r1, c1], end-exclusive, derived from the center by the crop
    /// anchoring rule; may extend beyond the scene.
    pub bbox: [i64; 4],
    #[serde(rename = "region_tiles")]
    pub hrn_region_tiles: usize,
    pub hpn_prob: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub scene_id: String,
    /// Fingerprint of the run configuration that produced this set.
    pub config: String,
    pub detections: Vec<Detection>,
}

/// All candidate regions of a score grid, in scan order. This is the same
/// region extraction negative mining uses.
pub fn candidates(grid: &ScoreGrid) -> Vec<Region> {
    positive_regions(grid, REGION_THRESHOLD, HRN_TILE_SIZE)
}

/// Runs the two-stage pipeline on one scene: dense HRN scores, thresholded
/// into 4-connected candidate regions, one crop per region centroid, kept
/// iff the second stage's probability reaches the accept threshold.
pub fn detect(
    scene: &Scene,
    validity: Option<&ValidityMask>,
    hrn: &Network,
    classifier: &dyn CropClassifier,
    cfg: &HpnConfig,
    config_fingerprint: &str,
) -> Result<DetectionSet> {
    let grid = infer_dense(hrn, scene, validity)?;
    let regions = candidates(&grid);
    let crops: Vec<Crop> = regions
        .iter()
        .map(|r| extract_crop(scene, r.centroid, cfg.crop_size))
        .collect::<Result<_>>()?;
    let crop_refs: Vec<&Crop> = crops.iter().collect();
    let probs = if crop_refs.is_empty() {
        Vec::new()
    } else {
        classifier.prob(&crop_refs)?
    };

    let half = (cfg.crop_size / 2) as i64;
    let size = cfg.crop_size as i64;
    let mut detections: Vec<Detection> = Vec::new();
    for (region, prob) in regions.iter().zip(probs) {
        if prob < cfg.accept_threshold {
            continue;
        }
        let (r, c) = region.centroid;
        let det = Detection {
            center: [r, c],
            bbox: [r - half, c - half, r - half + size, c - half + size],
            hrn_region_tiles: region.tiles.len(),
            hpn_prob: prob,
        };
        // distinct regions can in principle share a rounded centroid; keep
        // the higher-probability detection so centers stay unique
        match detections.iter_mut().find(|d| d.center == det.center) {
            Some(existing) => {
                if det.hpn_prob > existing.hpn_prob {
                    *existing = det;
                }
            }
            None => detections.push(det),
        }
    }
    Ok(DetectionSet {
        scene_id: scene.scene_id.clone(),
        config: config_fingerprint.to_string(),
        detections,
    })
}
