//! High Recall Network: a small fully-convolutional classifier over 16x16
//! tiles, trained with negative-ratio control, snapshotted every few epochs,
//! and selected for maximum validation recall above a precision floor.
//!
//! The stack is four convolutions (3x3/3x3/3x3 then a 1x1 classifier) with a
//! maxpool after each of the first three and one more before the classifier,
//! so the net downsampling is x16 and a dense application to an HxW scene
//! yields one two-logit cell per 16x16 tile of the tile grid.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    prob_positive, save_checkpoint, softmax_xent, CheckpointMeta, LayerSpec, Network,
    SgdOptimizer, Tensor,
};
use crate::raster::{Scene, ValidityMask};
use crate::seeds;
use crate::tiling::{extract_crop, TileLabel, TileLabelKind, HRN_TILE_SIZE};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HrnConfig {
    /// Negatives kept per positive when sampling the training set.
    pub neg_pos_ratio: f64,
    pub epochs: u32,
    pub snapshot_interval: u32,
    pub batch_size: usize,
    pub lr: f32,
    pub momentum: f32,
    pub seed: u64,
    /// Snapshot selection considers only records at or above this precision.
    pub precision_floor: f64,
}

impl Default for HrnConfig {
    fn default() -> Self {
        HrnConfig {
            neg_pos_ratio: 18.0,
            epochs: 100,
            snapshot_interval: 10,
            batch_size: 64,
            lr: 0.01,
            momentum: 0.9,
            seed: 0,
            precision_floor: 0.5,
        }
    }
}

impl HrnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neg_pos_ratio <= 0.0 {
            return Err(Error::Validation("neg_pos_ratio must be positive".into()));
        }
        if self.snapshot_interval == 0 || self.epochs % self.snapshot_interval != 0 {
            return Err(Error::Validation(format!(
                "snapshot interval {} must divide epochs {}",
                self.snapshot_interval, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-tile positive-class probabilities over a scene's tile grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid {
    pub rows: usize,
    pub cols: usize,
    prob_positive: Vec<f32>,
}

impl ScoreGrid {
    pub fn new(rows: usize, cols: usize, prob_positive: Vec<f32>) -> Result<ScoreGrid> {
        if prob_positive.len() != rows * cols {
            return Err(Error::Validation(format!(
                "score grid has {} cells for {rows}x{cols}",
                prob_positive.len()
            )));
        }
        Ok(ScoreGrid {
            rows,
            cols,
            prob_positive,
        })
    }

    pub fn prob(&self, row: usize, col: usize) -> f32 {
        self.prob_positive[row * self.cols + col]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.prob_positive
    }

    /// Single-band scene at grid resolution, for SCNR dumps.
    pub fn to_scene(&self, scene_id: &str) -> Result<Scene> {
        Scene::new(scene_id, 1, self.rows, self.cols, self.prob_positive.clone())
    }
}

/// One training snapshot with its validation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub epoch: u32,
    pub path: PathBuf,
    pub recall: f64,
    pub precision: f64,
}

/// Builds the high-recall FCN for the given band count.
pub fn build_hrn(bands: usize, seed: u64) -> Result<Network> {
    if bands == 0 {
        return Err(Error::Validation("bands must be at least 1".into()));
    }
    Network::new(
        vec![
            LayerSpec::conv(bands, 16, 3, 1),
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::conv(16, 32, 3, 1),
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::conv(32, 32, 3, 1),
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::MaxPool2,
            LayerSpec::conv(32, 2, 1, 0),
        ],
        seed,
    )
}

/// A tile drawn into the balanced training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampledTile {
    pub scene_idx: usize,
    pub row: usize,
    pub col: usize,
    pub positive: bool,
}

/// Keeps every positive tile and subsamples negatives uniformly without
/// replacement down to floor(ratio * positives); ignored and invalid tiles
/// are excluded. Deterministic for a given seed.
pub fn sample_training_set(
    tiles: &[(usize, TileLabel)],
    ratio: f64,
    seed: u64,
) -> Result<Vec<SampledTile>> {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (scene_idx, label) in tiles {
        let sample = SampledTile {
            scene_idx: *scene_idx,
            row: label.row,
            col: label.col,
            positive: label.label == TileLabelKind::Positive,
        };
        match label.label {
            TileLabelKind::Positive => positives.push(sample),
            TileLabelKind::Negative => negatives.push(sample),
            TileLabelKind::Ignored | TileLabelKind::Invalid => {}
        }
    }
    if positives.is_empty() {
        return Err(Error::Config(
            "training set has no positive tiles; cannot balance".into(),
        ));
    }
    let budget = ((ratio * positives.len() as f64).floor() as usize).min(negatives.len());
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    negatives.shuffle(&mut rng);
    negatives.truncate(budget);
    positives.extend(negatives);
    Ok(positives)
}

/// A scene paired with its tile labels and optional validity mask; the unit
/// the training and inference entry points consume.
#[derive(Debug, Clone)]
pub struct LabeledScene {
    pub scene: Scene,
    pub labels: Vec<TileLabel>,
    pub validity: Option<ValidityMask>,
}

/// Outcome of an HRN training run.
#[derive(Debug, Clone)]
pub struct HrnTraining {
    pub snapshots: Vec<SnapshotRecord>,
    /// Mean minibatch loss per epoch, for convergence diagnostics.
    pub epoch_losses: Vec<f64>,
}

/// Trains the HRN on balanced 16x16 tile crops with minibatch SGD and
/// two-class cross-entropy, saving a checkpoint plus validation recall and
/// precision (dense inference, decision threshold 0.5) every
/// `snapshot_interval` epochs. On a non-finite loss the run aborts with a
/// numeric error; snapshots already on disk are retained.
pub fn train_hrn(
    train: &[LabeledScene],
    validation: &[LabeledScene],
    cfg: &HrnConfig,
    out_dir: &Path,
) -> Result<HrnTraining> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Config(
            "training and validation scene sets must be nonempty".into(),
        ));
    }
    let bands = train[0].scene.bands();
    let tiles: Vec<(usize, TileLabel)> = train
        .iter()
        .enumerate()
        .flat_map(|(i, ls)| ls.labels.iter().map(move |l| (i, l.clone())))
        .collect();
    let sampled = sample_training_set(&tiles, cfg.neg_pos_ratio, seeds::mix(cfg.seed, 1))?;

    // materialize the tile crops once
    let t = HRN_TILE_SIZE;
    let tile_values = t * t * bands;
    let mut crops = vec![0.0f32; sampled.len() * tile_values];
    let mut labels = vec![0usize; sampled.len()];
    for (i, s) in sampled.iter().enumerate() {
        let center = ((s.row * t + t / 2) as i64, (s.col * t + t / 2) as i64);
        let crop = extract_crop(&train[s.scene_idx].scene, center, t)?;
        crops[i * tile_values..(i + 1) * tile_values].copy_from_slice(&crop.data);
        labels[i] = usize::from(s.positive);
    }

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut net = build_hrn(bands, seeds::mix(cfg.seed, 2))?;
    let mut opt = SgdOptimizer::new(&net, cfg.lr, cfg.momentum);
    let mut shuffle_rng = Xoshiro256PlusPlus::seed_from_u64(seeds::mix(cfg.seed, 3));
    let cfg_hash = seeds::hex_hash(&serde_json::to_string(cfg).expect("config serializes"));

    let mut order: Vec<usize> = (0..sampled.len()).collect();
    let mut snapshots = Vec::new();
    let mut epoch_losses = Vec::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = Tensor::zeros(&[chunk.len(), bands, t, t]);
            let mut batch_labels = Vec::with_capacity(chunk.len());
            for (j, &idx) in chunk.iter().enumerate() {
                batch.data_mut()[j * tile_values..(j + 1) * tile_values]
                    .copy_from_slice(&crops[idx * tile_values..(idx + 1) * tile_values]);
                batch_labels.push(labels[idx]);
            }
            let (logits, tape) = net.forward_with_tape(&batch)?;
            let logits2 = logits.reshape(&[chunk.len(), 2])?;
            let (loss, grad) = softmax_xent(&logits2, &batch_labels)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}; {} snapshot(s) retained",
                    snapshots.len()
                )));
            }
            let grad4 = grad.reshape(logits.shape())?;
            let (grads, _) = net.backward(&tape, &grad4)?;
            opt.step(&mut net, &grads)?;
            loss_sum += f64::from(loss);
            batches += 1;
        }
        epoch_losses.push(loss_sum / batches.max(1) as f64);

        if epoch % cfg.snapshot_interval == 0 {
            let path = out_dir.join(format!("snap_epoch{epoch:04}.cnnc"));
            save_checkpoint(
                &net,
                &CheckpointMeta {
                    epoch,
                    train_config_hash: cfg_hash.clone(),
                },
                &path,
            )?;
            let (recall, precision) = validate_tile_metrics(&net, validation)?;
            snapshots.push(SnapshotRecord {
                epoch,
                path,
                recall,
                precision,
            });
        }
    }
    Ok(HrnTraining {
        snapshots,
        epoch_losses,
    })
}

/// Tile-level recall/precision of dense inference at threshold 0.5 against
/// positive/negative tile labels (ignored and invalid tiles excluded).
pub fn validate_tile_metrics(net: &Network, scenes: &[LabeledScene]) -> Result<(f64, f64)> {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for ls in scenes {
        let grid = infer_dense(net, &ls.scene, ls.validity.as_ref())?;
        for label in &ls.labels {
            let predicted = grid.prob(label.row, label.col) >= 0.5;
            match label.label {
                TileLabelKind::Positive => {
                    if predicted {
                        tp += 1;
                    } else {
                        fn_ += 1;
                    }
                }
                TileLabelKind::Negative => {
                    if predicted {
                        fp += 1;
                    }
                }
                TileLabelKind::Ignored | TileLabelKind::Invalid => {}
            }
        }
    }
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    Ok((recall, precision))
}

/// The snapshot chosen by `select_snapshot`, with a flag for the fallback
/// case where no record met the precision floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSnapshot {
    pub record: SnapshotRecord,
    pub degraded: bool,
}

/// Among records meeting the precision floor, picks the one with maximum
/// recall (ties: higher precision, then later epoch). If none qualifies,
/// falls back to maximum precision (ties: higher recall, then later epoch)
/// and flags the result as degraded.
pub fn select_snapshot(
    records: &[SnapshotRecord],
    precision_floor: f64,
) -> Result<SelectedSnapshot> {
    if records.is_empty() {
        return Err(Error::Validation("no snapshot records to select from".into()));
    }
    let eligible: Vec<&SnapshotRecord> = records
        .iter()
        .filter(|r| r.precision >= precision_floor)
        .collect();
    if eligible.is_empty() {
        let best = records
            .iter()
            .max_by(|a, b| {
                (a.precision, a.recall, a.epoch)
                    .partial_cmp(&(b.precision, b.recall, b.epoch))
                    .expect("finite metrics")
            })
            .expect("nonempty");
        return Ok(SelectedSnapshot {
            record: best.clone(),
            degraded: true,
        });
    }
    let best = eligible
        .into_iter()
        .max_by(|a, b| {
            (a.recall, a.precision, a.epoch)
                .partial_cmp(&(b.recall, b.precision, b.epoch))
                .expect("finite metrics")
        })
        .expect("nonempty");
    Ok(SelectedSnapshot {
        record: best.clone(),
        degraded: false,
    })
}

/// Applies the FCN to the whole scene in one forward pass. Cells of tiles
/// touching invalid pixels are forced to probability 0. A scene smaller than
/// one tile yields an empty grid.
pub fn infer_dense(
    net: &Network,
    scene: &Scene,
    validity: Option<&ValidityMask>,
) -> Result<ScoreGrid> {
    let t = HRN_TILE_SIZE;
    let rows = scene.height() / t;
    let cols = scene.width() / t;
    if rows == 0 || cols == 0 {
        return ScoreGrid::new(0, 0, Vec::new());
    }
    // the network must collapse one tile to one logit cell
    let probe = net.output_shape(&[1, scene.bands(), t, t])?;
    if probe != [1, 2, 1, 1] {
        return Err(Error::Validation(format!(
            "network maps a {t}x{t} tile to {probe:?}, expected [1, 2, 1, 1]"
        )));
    }

    let input = Tensor::from_vec(
        &[1, scene.bands(), scene.height(), scene.width()],
        scene.data().to_vec(),
    )?;
    let logits = net.forward(&input)?;
    let (_, ch, gh, gw) = logits.dims4()?;
    if ch != 2 || gh != rows || gw != cols {
        return Err(Error::Validation(format!(
            "dense output {:?} does not match {rows}x{cols} tile grid",
            logits.shape()
        )));
    }
    let ldat = logits.data();
    let mut probs = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            probs.push(prob_positive(
                ldat[r * cols + c],
                ldat[rows * cols + r * cols + c],
            ));
        }
    }
    if let Some(v) = validity {
        if v.height() != scene.height() || v.width() != scene.width() {
            return Err(Error::Validation(format!(
                "validity mask is {}x{}, scene is {}x{}",
                v.height(),
                v.width(),
                scene.height(),
                scene.width()
            )));
        }
        for r in 0..rows {
            for c in 0..cols {
                'tile: for y in r * t..(r + 1) * t {
                    for x in c * t..(c + 1) * t {
                        if !v.is_valid(y, x) {
                            probs[r * cols + c] = 0.0;
                            break 'tile;
                        }
                    }
                }
            }
        }
    }
    ScoreGrid::new(rows, cols, probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hrn_shapes_collapse_tiles() {
        let net = build_hrn(3, 0).unwrap();
        assert_eq!(net.output_shape(&[1, 3, 16, 16]).unwrap(), vec![1, 2, 1, 1]);
        assert_eq!(net.output_shape(&[1, 3, 64, 64]).unwrap(), vec![1, 2, 4, 4]);
    }

    #[test]
    fn hrn_has_four_convolutions_and_expected_parameters() {
        let net = build_hrn(3, 0).unwrap();
        let convs = net
            .layers()
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv2d { .. }))
            .count();
        assert_eq!(convs, 4);
        // hand-computed: conv3x3(3->16)+b = 448; conv3x3(16->32)+b = 4640;
        // conv3x3(32->32)+b = 9248; conv1x1(32->2)+b = 66
        assert_eq!(net.param_count(), 448 + 4640 + 9248 + 66);
    }

    fn tile(row: usize, col: usize, label: TileLabelKind) -> TileLabel {
        TileLabel {
            row,
            col,
            coverage: match label {
                TileLabelKind::Positive => 0.5,
                TileLabelKind::Ignored => 0.1,
                _ => 0.0,
            },
            label,
        }
    }

    #[test]
    fn sampling_keeps_positives_and_caps_negatives() {
        let mut tiles = Vec::new();
        for i in 0..100 {
            tiles.push((0, tile(i, 0, TileLabelKind::Positive)));
        }
        for i in 0..10_000 {
            tiles.push((0, tile(i / 64, 1 + i % 64, TileLabelKind::Negative)));
        }
        let sampled = sample_training_set(&tiles, 18.0, 7).unwrap();
        let pos = sampled.iter().filter(|s| s.positive).count();
        assert_eq!(pos, 100);
        assert_eq!(sampled.len(), 100 + 1800);
        // no duplicate negatives
        let mut negs: Vec<_> = sampled
            .iter()
            .filter(|s| !s.positive)
            .map(|s| (s.row, s.col))
            .collect();
        negs.sort_unstable();
        negs.dedup();
        assert_eq!(negs.len(), 1800);
    }

    #[test]
    fn sampling_clamps_at_available_negatives() {
        let mut tiles = Vec::new();
        for i in 0..100 {
            tiles.push((0, tile(i, 0, TileLabelKind::Positive)));
        }
        for i in 0..500 {
            tiles.push((0, tile(i, 1, TileLabelKind::Negative)));
        }
        let sampled = sample_training_set(&tiles, 18.0, 7).unwrap();
        assert_eq!(sampled.len(), 600);
    }

    #[test]
    fn sampling_is_deterministic_and_needs_positives() {
        let mut tiles = Vec::new();
        for i in 0..10 {
            tiles.push((0, tile(i, 0, TileLabelKind::Positive)));
        }
        for i in 0..100 {
            tiles.push((0, tile(i, 1, TileLabelKind::Negative)));
        }
        let a = sample_training_set(&tiles, 2.0, 42).unwrap();
        let b = sample_training_set(&tiles, 2.0, 42).unwrap();
        assert_eq!(a, b);

        let no_pos: Vec<_> = tiles
            .iter()
            .filter(|(_, l)| l.label == TileLabelKind::Negative)
            .cloned()
            .collect();
        match sample_training_set(&no_pos, 2.0, 42) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn selection_rule_and_tie_breaks() {
        let rec = |epoch, recall, precision| SnapshotRecord {
            epoch,
            path: PathBuf::from(format!("snap{epoch}")),
            recall,
            precision,
        };
        let records = vec![rec(10, 0.95, 0.40), rec(20, 0.90, 0.55), rec(30, 0.85, 0.70)];
        let sel = select_snapshot(&records, 0.5).unwrap();
        assert!(!sel.degraded);
        assert_eq!(sel.record.epoch, 20);

        // all below the floor: max precision, degraded
        let sel = select_snapshot(&records, 0.8).unwrap();
        assert!(sel.degraded);
        assert_eq!(sel.record.epoch, 30);

        // equal metrics: later epoch wins
        let records = vec![rec(10, 0.9, 0.6), rec(20, 0.9, 0.6)];
        let sel = select_snapshot(&records, 0.5).unwrap();
        assert_eq!(sel.record.epoch, 20);

        assert!(select_snapshot(&[], 0.5).is_err());
    }

    #[test]
    fn selection_is_order_invariant() {
        let rec = |epoch, recall, precision| SnapshotRecord {
            epoch,
            path: PathBuf::from(format!("snap{epoch}")),
            recall,
            precision,
        };
        let mut records = vec![
            rec(10, 0.95, 0.40),
            rec(20, 0.90, 0.55),
            rec(30, 0.92, 0.61),
            rec(40, 0.92, 0.58),
        ];
        let baseline = select_snapshot(&records, 0.5).unwrap();
        records.reverse();
        assert_eq!(select_snapshot(&records, 0.5).unwrap(), baseline);
        records.swap(0, 2);
        assert_eq!(select_snapshot(&records, 0.5).unwrap(), baseline);
    }

    #[test]
    fn dense_inference_shapes_and_masking() {
        let net = build_hrn(2, 5).unwrap();
        let scene = Scene::new(
            "s",
            2,
            64,
            64,
            (0..2 * 64 * 64).map(|i| (i as f32 * 0.01).sin()).collect(),
        )
        .unwrap();
        let grid = infer_dense(&net, &scene, None).unwrap();
        assert_eq!((grid.rows, grid.cols), (4, 4));

        // all-invalid mask forces all probabilities to zero
        let invalid = ValidityMask::new(64, 64, vec![false; 64 * 64]).unwrap();
        let grid = infer_dense(&net, &scene, Some(&invalid)).unwrap();
        assert!(grid.as_slice().iter().all(|&p| p == 0.0));

        // scene smaller than one tile: empty grid
        let tiny = Scene::new("t", 2, 8, 8, vec![0.1; 2 * 64]).unwrap();
        let grid = infer_dense(&net, &tiny, None).unwrap();
        assert!(grid.as_slice().is_empty());
    }

    /// Per-tile oracle: run the FCN on the tile plus its receptive-field
    /// halo (a 48x48 window, whose 3x3 output's center cell covers the tile)
    /// and compare with the dense full-scene value. For tiles whose halo
    /// lies inside the scene the window padding falls outside the center
    /// cell's input cone, so agreement is exact.
    #[test]
    fn dense_matches_halo_window_per_tile_forward_on_interior_tiles() {
        let net = build_hrn(2, 9).unwrap();
        let scene = Scene::new(
            "s",
            2,
            80,
            96,
            (0..2 * 80 * 96)
                .map(|i| ((i as f32 * 0.173).sin() + (i as f32 * 0.031).cos()) * 0.4 + 0.5)
                .collect(),
        )
        .unwrap();
        let grid = infer_dense(&net, &scene, None).unwrap();
        let t = HRN_TILE_SIZE;
        for row in 1..grid.rows - 1 {
            for col in 1..grid.cols - 1 {
                let center = ((row * t + t / 2) as i64, (col * t + t / 2) as i64);
                let window = extract_crop(&scene, center, 3 * t).unwrap();
                let input =
                    Tensor::from_vec(&[1, 2, 3 * t, 3 * t], window.data).unwrap();
                let logits = net.forward(&input).unwrap();
                // logits shape (1, 2, 3, 3): center cell index (1, 1)
                let p = prob_positive(logits.data()[4], logits.data()[9 + 4]);
                assert!(
                    (grid.prob(row, col) - p).abs() < 1e-5,
                    "tile ({row},{col}): dense {} vs per-tile {p}",
                    grid.prob(row, col)
                );
            }
        }
    }
}
