//! The eight pipeline stages and their file protocol.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::cascade::{detect, DetectionSet, HpnClassifier};
use crate::error::{Error, Result};
use crate::eval::{match_detections, render_table, report, MetricsCounts, MetricsReport};
use crate::hpn::{
    self, cap_negatives, d4_augment, mine_negatives, positives_from_gt, HpnExample,
    MinedNegative, MinedNegativeRecord,
};
use crate::hrn::{
    self, infer_dense, select_snapshot, LabeledScene, SelectedSnapshot, SnapshotRecord,
};
use crate::nn::load_checkpoint;
use crate::pipeline::RunConfig;
use crate::raster::{rasterize, read_mask, read_polygons, read_scene, write_polygons,
    write_scene, Scene, ValidityMask};
use crate::seeds;
use crate::synth;
use crate::tiling::{grid_scene, label_tiles, TileLabel, TileLabelRecord, HRN_TILE_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Label,
    TrainHrn,
    Select,
    Mine,
    TrainHpn,
    Detect,
    Evaluate,
}

pub const STAGES: [Stage; 8] = [
    Stage::Synth,
    Stage::Label,
    Stage::TrainHrn,
    Stage::Select,
    Stage::Mine,
    Stage::TrainHpn,
    Stage::Detect,
    Stage::Evaluate,
];

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Label => "label",
            Stage::TrainHrn => "train-hrn",
            Stage::Select => "select",
            Stage::Mine => "mine",
            Stage::TrainHpn => "train-hpn",
            Stage::Detect => "detect",
            Stage::Evaluate => "evaluate",
        }
    }

    /// True when the stage's primary outputs already exist.
    pub fn done(self, cfg: &RunConfig) -> bool {
        let out = &cfg.paths.out;
        match self {
            Stage::Synth => cfg.splits.all_ids().iter().all(|id| {
                cfg.paths.scenes.join(format!("{id}.scnr")).exists()
                    && cfg.paths.polygons.join(format!("{id}.json")).exists()
            }),
            Stage::Label => cfg
                .splits
                .all_ids()
                .iter()
                .all(|id| out.join("labels").join(format!("{id}.jsonl")).exists()),
            Stage::TrainHrn => out.join("hrn/snapshots.jsonl").exists(),
            Stage::Select => out.join("hrn/selected.json").exists(),
            Stage::Mine => out.join("mine/negatives.jsonl").exists(),
            Stage::TrainHpn => out.join("hpn/best.cnnc").exists(),
            Stage::Detect => cfg
                .splits
                .test
                .iter()
                .all(|id| out.join("detections").join(format!("{id}.json")).exists()),
            Stage::Evaluate => out.join("report.json").exists(),
        }
    }

    pub fn run(self, cfg: &RunConfig) -> Result<()> {
        match self {
            Stage::Synth => run_synth(cfg),
            Stage::Label => run_label(cfg),
            Stage::TrainHrn => run_train_hrn(cfg),
            Stage::Select => run_select(cfg),
            Stage::Mine => run_mine(cfg),
            Stage::TrainHpn => run_train_hpn(cfg),
            Stage::Detect => run_detect_all(cfg),
            Stage::Evaluate => run_evaluate(cfg),
        }
    }
}

/// Runs all stages in order, skipping stages whose outputs exist unless
/// `force`. Returns the names of the stages that actually ran.
pub fn run_pipeline(cfg: &RunConfig, force: bool) -> Result<Vec<&'static str>> {
    let mut ran = Vec::new();
    for stage in STAGES {
        if !force && stage.done(cfg) {
            log::info!("stage {} up to date, skipping", stage.name());
            continue;
        }
        log::info!("running stage {}", stage.name());
        stage.run(cfg)?;
        ran.push(stage.name());
    }
    Ok(ran)
}

// ---------------------------------------------------------------------------
// file protocol helpers
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    config: String,
}

fn write_jsonl<T: Serialize>(path: &Path, fingerprint: &str, records: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    serde_json::to_writer(
        &mut w,
        &JsonlHeader {
            config: fingerprint.to_string(),
        },
    )
    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(io)?;
    for r in records {
        serde_json::to_writer(&mut w, r)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, fingerprint: &str) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Corrupt(format!("{}: empty file", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let header: JsonlHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Corrupt(format!("{}: header: {e}", path.display())))?;
    if header.config != fingerprint {
        return Err(Error::Validation(format!(
            "{}: config fingerprint {} does not match current {fingerprint}",
            path.display(),
            header.config
        )));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))?,
        );
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))
}

fn scene_path(cfg: &RunConfig, id: &str) -> PathBuf {
    cfg.paths.scenes.join(format!("{id}.scnr"))
}

fn polygons_path(cfg: &RunConfig, id: &str) -> PathBuf {
    cfg.paths.polygons.join(format!("{id}.json"))
}

fn load_validity(cfg: &RunConfig, id: &str) -> Result<Option<ValidityMask>> {
    match &cfg.paths.masks {
        Some(dir) => {
            let path = dir.join(format!("{id}.scnr"));
            if path.exists() {
                Ok(Some(read_mask(&path)?))
            } else {
                Ok(None)
            }
        }
        None => Ok(None),
    }
}

fn load_labeled_scene(cfg: &RunConfig, id: &str) -> Result<LabeledScene> {
    let scene = read_scene(&scene_path(cfg, id))?;
    let records: Vec<TileLabelRecord> = read_jsonl(
        &cfg.paths.out.join("labels").join(format!("{id}.jsonl")),
        &cfg.fingerprint(),
    )?;
    let labels = records
        .into_iter()
        .map(|r| TileLabel {
            row: r.row,
            col: r.col,
            coverage: r.coverage,
            label: r.label,
        })
        .collect();
    let validity = load_validity(cfg, id)?;
    Ok(LabeledScene {
        scene,
        labels,
        validity,
    })
}

// ---------------------------------------------------------------------------
// stages
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SynthManifest {
    config: String,
    seed: u64,
    scene_ids: Vec<String>,
}

fn run_synth(cfg: &RunConfig) -> Result<()> {
    let ids: Vec<String> = cfg.splits.all_ids().iter().map(|s| s.to_string()).collect();
    let synth_cfg = cfg.synth_effective();
    let generated = synth::generate(&synth_cfg, ids.len())?;
    std::fs::create_dir_all(&cfg.paths.scenes).map_err(|e| Error::io(&cfg.paths.scenes, e))?;
    std::fs::create_dir_all(&cfg.paths.polygons)
        .map_err(|e| Error::io(&cfg.paths.polygons, e))?;
    for (id, mut s) in ids.iter().zip(generated) {
        s.scene.scene_id = id.clone();
        write_scene(&s.scene, &scene_path(cfg, id))?;
        write_polygons(&s.polygons, &polygons_path(cfg, id))?;
    }
    write_json(
        &cfg.paths.out.join("synth_manifest.json"),
        &SynthManifest {
            config: cfg.fingerprint(),
            seed: synth_cfg.seed,
            scene_ids: ids,
        },
    )
}

fn run_label(cfg: &RunConfig) -> Result<()> {
    let fp = cfg.fingerprint();
    for id in cfg.splits.all_ids() {
        let scene = read_scene(&scene_path(cfg, id))?;
        let polys = read_polygons(&polygons_path(cfg, id))?;
        let gt = rasterize(&polys, scene.height(), scene.width())?;
        let grid = grid_scene(&scene, HRN_TILE_SIZE)?;
        let validity = load_validity(cfg, id)?;
        let labels = label_tiles(&grid, &gt, validity.as_ref())?;
        let records: Vec<TileLabelRecord> = labels
            .into_iter()
            .map(|l| TileLabelRecord {
                scene_id: id.to_string(),
                row: l.row,
                col: l.col,
                coverage: l.coverage,
                label: l.label,
            })
            .collect();
        write_jsonl(
            &cfg.paths.out.join("labels").join(format!("{id}.jsonl")),
            &fp,
            &records,
        )?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TrainingSummary {
    config: String,
    epoch_losses: Vec<f64>,
}

fn run_train_hrn(cfg: &RunConfig) -> Result<()> {
    let train: Vec<LabeledScene> = cfg
        .splits
        .train
        .iter()
        .map(|id| load_labeled_scene(cfg, id))
        .collect::<Result<_>>()?;
    let val: Vec<LabeledScene> = cfg
        .splits
        .validation
        .iter()
        .map(|id| load_labeled_scene(cfg, id))
        .collect::<Result<_>>()?;
    let hrn_dir = cfg.paths.out.join("hrn");
    let outcome = hrn::train_hrn(&train, &val, &cfg.hrn_effective(), &hrn_dir)?;
    let fp = cfg.fingerprint();
    // snapshot paths are stored relative to the output dir so identical runs
    // in different directories produce identical artifacts
    let records: Vec<SnapshotRecord> = outcome
        .snapshots
        .iter()
        .map(|r| SnapshotRecord {
            epoch: r.epoch,
            path: r
                .path
                .strip_prefix(&cfg.paths.out)
                .unwrap_or(&r.path)
                .to_path_buf(),
            recall: r.recall,
            precision: r.precision,
        })
        .collect();
    write_jsonl(&hrn_dir.join("snapshots.jsonl"), &fp, &records)?;
    write_json(
        &hrn_dir.join("training.json"),
        &TrainingSummary {
            config: fp,
            epoch_losses: outcome.epoch_losses,
        },
    )
}

#[derive(Serialize, Deserialize)]
struct SelectedFile {
    config: String,
    #[serde(flatten)]
    selected: SelectedSnapshot,
}

fn run_select(cfg: &RunConfig) -> Result<()> {
    let fp = cfg.fingerprint();
    let records: Vec<SnapshotRecord> =
        read_jsonl(&cfg.paths.out.join("hrn/snapshots.jsonl"), &fp)?;
    let selected = select_snapshot(&records, cfg.hrn.precision_floor)?;
    if selected.degraded {
        log::warn!(
            "no snapshot met the precision floor {}; selected epoch {} by precision",
            cfg.hrn.precision_floor,
            selected.record.epoch
        );
    }
    write_json(
        &cfg.paths.out.join("hrn/selected.json"),
        &SelectedFile {
            config: fp,
            selected,
        },
    )
}

fn load_selected_hrn(cfg: &RunConfig) -> Result<crate::nn::Network> {
    let sel: SelectedFile = read_json(&cfg.paths.out.join("hrn/selected.json"))?;
    if sel.config != cfg.fingerprint() {
        return Err(Error::Validation(format!(
            "selected.json fingerprint {} does not match current config",
            sel.config
        )));
    }
    let path = cfg.paths.out.join(&sel.selected.record.path);
    let (net, _) = load_checkpoint(&path)?;
    Ok(net)
}

/// Mines false-positive crops for one split, writing score dumps, crop files
/// and a manifest. Returns the manifest records.
fn mine_split(
    cfg: &RunConfig,
    net: &crate::nn::Network,
    ids: &[String],
    crops_dir: &str,
) -> Result<Vec<MinedNegativeRecord>> {
    let out = &cfg.paths.out;
    let mut records = Vec::new();
    for id in ids {
        let ls = load_labeled_scene(cfg, id)?;
        let grid = infer_dense(net, &ls.scene, ls.validity.as_ref())?;
        let score_scene = grid.to_scene(id)?;
        let scores_path = out.join("hrn/scores").join(format!("{id}.scnr"));
        if let Some(parent) = scores_path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_scene(&score_scene, &scores_path)?;

        let mined = mine_negatives(&grid, &ls.labels, &ls.scene, cfg.hpn.crop_size)?;
        let dir = out.join(crops_dir);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (k, neg) in mined.iter().enumerate() {
            let crop_scene = Scene::new(
                format!("{id}__{k:03}"),
                neg.crop.bands,
                neg.crop.size,
                neg.crop.size,
                neg.crop.data.clone(),
            )?;
            write_scene(&crop_scene, &dir.join(format!("{id}__{k:03}.scnr")))?;
            records.push(MinedNegativeRecord {
                scene_id: id.clone(),
                center_r: neg.crop.center.0,
                center_c: neg.crop.center.1,
                region_tile_count: neg.region_tiles,
            });
        }
    }
    Ok(records)
}

fn run_mine(cfg: &RunConfig) -> Result<()> {
    let net = load_selected_hrn(cfg)?;
    let fp = cfg.fingerprint();
    let train_records = mine_split(cfg, &net, &cfg.splits.train, "mine/crops")?;
    write_jsonl(&cfg.paths.out.join("mine/negatives.jsonl"), &fp, &train_records)?;
    // validation-scene false positives feed HPN validation only
    let val_records = mine_split(cfg, &net, &cfg.splits.validation, "mine/val_crops")?;
    write_jsonl(
        &cfg.paths.out.join("mine/val_negatives.jsonl"),
        &fp,
        &val_records,
    )?;
    Ok(())
}

fn load_mined(
    cfg: &RunConfig,
    manifest: &str,
    crops_dir: &str,
) -> Result<Vec<MinedNegative>> {
    let records: Vec<MinedNegativeRecord> =
        read_jsonl(&cfg.paths.out.join(manifest), &cfg.fingerprint())?;
    let mut counters: std::collections::BTreeMap<String, usize> = Default::default();
    let mut out = Vec::new();
    for r in &records {
        let k = counters.entry(r.scene_id.clone()).or_insert(0);
        let path = cfg
            .paths
            .out
            .join(crops_dir)
            .join(format!("{}__{k:03}.scnr", r.scene_id));
        *k += 1;
        let scene = read_scene(&path)?;
        out.push(MinedNegative {
            crop: crate::tiling::Crop {
                center: (r.center_r, r.center_c),
                size: scene.height(),
                bands: scene.bands(),
                data: scene.data().to_vec(),
            },
            region_tiles: r.region_tile_count,
        });
    }
    Ok(out)
}

/// Builds the HPN training or validation example list for a split:
/// GT-centroid positives (augmented for training) plus mined negatives
/// capped relative to the positive count.
fn hpn_examples(
    cfg: &RunConfig,
    ids: &[String],
    mined: Vec<MinedNegative>,
    augment: bool,
    cap_seed: u64,
) -> Result<Vec<HpnExample>> {
    let mut examples = Vec::new();
    for id in ids {
        let scene = read_scene(&scene_path(cfg, id))?;
        let polys = read_polygons(&polygons_path(cfg, id))?;
        for crop in positives_from_gt(&scene, &polys, cfg.hpn.crop_size)? {
            if augment {
                for aug in d4_augment(&crop, id) {
                    examples.push(HpnExample {
                        crop: aug.crop,
                        positive: true,
                    });
                }
            } else {
                examples.push(HpnExample {
                    crop,
                    positive: true,
                });
            }
        }
    }
    let n_pos = examples.len();
    let capped = cap_negatives(mined, n_pos, cfg.hpn.neg_cap_ratio, cap_seed);
    examples.extend(capped.into_iter().map(|n| HpnExample {
        crop: n.crop,
        positive: false,
    }));
    Ok(examples)
}

#[derive(Serialize, Deserialize)]
struct HpnSummary {
    config: String,
    best_epoch: u32,
    best_val_accuracy: f64,
    epoch_losses: Vec<f64>,
    epoch_val_accuracies: Vec<f64>,
}

fn run_train_hpn(cfg: &RunConfig) -> Result<()> {
    let mined_train = load_mined(cfg, "mine/negatives.jsonl", "mine/crops")?;
    let mined_val = load_mined(cfg, "mine/val_negatives.jsonl", "mine/val_crops")?;
    let train = hpn_examples(
        cfg,
        &cfg.splits.train,
        mined_train,
        true,
        seeds::for_stage(cfg.seed, "mine-cap"),
    )?;
    let val = hpn_examples(
        cfg,
        &cfg.splits.validation,
        mined_val,
        false,
        seeds::for_stage(cfg.seed, "mine-cap-val"),
    )?;
    let outcome = hpn::train_hpn(&train, &val, &cfg.hpn_effective(), &cfg.paths.out.join("hpn"))?;
    write_json(
        &cfg.paths.out.join("hpn/training.json"),
        &HpnSummary {
            config: cfg.fingerprint(),
            best_epoch: outcome.best_epoch,
            best_val_accuracy: outcome.best_val_accuracy,
            epoch_losses: outcome.epoch_losses,
            epoch_val_accuracies: outcome.epoch_val_accuracies,
        },
    )
}

/// Detects on one scene and writes its DetectionSet JSON.
pub fn run_detect_scene(cfg: &RunConfig, id: &str) -> Result<()> {
    if cfg.split_of(id).is_none() {
        return Err(Error::Validation(format!(
            "scene {id} is not in any configured split"
        )));
    }
    let hrn = load_selected_hrn(cfg)?;
    let (hpn_net, _) = load_checkpoint(&cfg.paths.out.join("hpn/best.cnnc"))?;
    detect_one(cfg, &hrn, &hpn_net, id)
}

fn detect_one(
    cfg: &RunConfig,
    hrn: &crate::nn::Network,
    hpn_net: &crate::nn::Network,
    id: &str,
) -> Result<()> {
    let scene = read_scene(&scene_path(cfg, id))?;
    let validity = load_validity(cfg, id)?;
    let set = detect(
        &scene,
        validity.as_ref(),
        hrn,
        &HpnClassifier { net: hpn_net },
        &cfg.hpn,
        &cfg.fingerprint(),
    )?;
    write_json(
        &cfg.paths.out.join("detections").join(format!("{id}.json")),
        &set,
    )
}

fn run_detect_all(cfg: &RunConfig) -> Result<()> {
    let hrn = load_selected_hrn(cfg)?;
    let (hpn_net, _) = load_checkpoint(&cfg.paths.out.join("hpn/best.cnnc"))?;
    for id in &cfg.splits.test {
        detect_one(cfg, &hrn, &hpn_net, id)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    config: String,
    #[serde(flatten)]
    report: MetricsReport,
}

fn run_evaluate(cfg: &RunConfig) -> Result<()> {
    let fp = cfg.fingerprint();
    let mut per_scene: Vec<(String, MetricsCounts)> = Vec::new();
    for id in &cfg.splits.test {
        let det_path = cfg.paths.out.join("detections").join(format!("{id}.json"));
        if !det_path.exists() {
            return Err(Error::State(format!(
                "missing detections for scene {id}: {} (run detect first)",
                det_path.display()
            )));
        }
        let set: DetectionSet = read_json(&det_path)?;
        if set.config != fp {
            return Err(Error::Validation(format!(
                "{}: config fingerprint {} does not match current {fp}",
                det_path.display(),
                set.config
            )));
        }
        let scene = read_scene(&scene_path(cfg, id))?;
        let polys = read_polygons(&polygons_path(cfg, id))?;
        let gt = rasterize(&polys, scene.height(), scene.width())?;
        let validity = load_validity(cfg, id)?;
        let counts = match_detections(&set, &polys, &gt, validity.as_ref())?;
        per_scene.push((id.clone(), counts));
    }
    let rep = report(&per_scene)?;
    write_json(
        &cfg.paths.out.join("report.json"),
        &ReportFile {
            config: fp,
            report: rep.clone(),
        },
    )?;
    std::fs::write(cfg.paths.out.join("report.txt"), render_table(&rep))
        .map_err(|e| Error::io(cfg.paths.out.join("report.txt"), e))
}

/// Reads the metrics report back, verifying the fingerprint.
pub fn load_report(cfg: &RunConfig) -> Result<MetricsReport> {
    let file: ReportFile = read_json(&cfg.paths.out.join("report.json"))?;
    if file.config != cfg.fingerprint() {
        return Err(Error::Validation(
            "report fingerprint does not match current config".into(),
        ));
    }
    Ok(file.report)
}
