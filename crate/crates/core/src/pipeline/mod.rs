//! Run configuration and the file-based stage pipeline.
//!
//! Stages communicate only through files under the configured directories,
//! so each step of the workflow is independently runnable and inspectable.
//! Every JSON/JSONL output embeds a fingerprint of the semantic run
//! configuration (everything except paths); readers refuse mismatches.

pub mod stages;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hpn::HpnConfig;
use crate::hrn::HrnConfig;
use crate::seeds;
use crate::synth::SynthConfig;

pub use stages::{run_pipeline, Stage, STAGES};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Paths {
    /// Directory of SCNR scene files, one per scene id.
    pub scenes: PathBuf,
    /// Directory of polygon JSON files, one per scene id.
    pub polygons: PathBuf,
    /// Optional directory of validity masks (SCNR, single band).
    #[serde(default)]
    pub masks: Option<PathBuf>,
    /// Output directory for all stage artifacts.
    pub out: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn all_ids(&self) -> Vec<&str> {
        self.train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .map(String::as_str)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub paths: Paths,
    /// Global seed; per-stage seeds are derived by stable stage-name hashing.
    pub seed: u64,
    pub splits: Splits,
    #[serde(default)]
    pub hrn: HrnConfig,
    #[serde(default)]
    pub hpn: HpnConfig,
    #[serde(default)]
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (a, b, names) in [
            (&self.splits.train, &self.splits.validation, "train/validation"),
            (&self.splits.train, &self.splits.test, "train/test"),
            (&self.splits.validation, &self.splits.test, "validation/test"),
        ] {
            if let Some(id) = a.iter().find(|id| b.contains(id)) {
                return Err(Error::Config(format!(
                    "scene {id} appears in both {names} splits"
                )));
            }
        }
        if self.splits.train.is_empty()
            || self.splits.validation.is_empty()
            || self.splits.test.is_empty()
        {
            return Err(Error::Config(
                "train, validation and test splits must all be nonempty".into(),
            ));
        }
        self.hrn.validate()?;
        self.hpn.validate()?;
        self.synth.validate()
    }

    /// Fingerprint of the semantic configuration: everything except paths,
    /// hashed over canonical (key-sorted) JSON. Artifacts embed this and
    /// readers refuse mismatches; leaving paths out lets the same logical
    /// run live in different directories.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Semantic<'a> {
            seed: u64,
            splits: &'a Splits,
            hrn: &'a HrnConfig,
            hpn: &'a HpnConfig,
            synth: &'a SynthConfig,
        }
        let value = serde_json::to_value(Semantic {
            seed: self.seed,
            splits: &self.splits,
            hrn: &self.hrn,
            hpn: &self.hpn,
            synth: &self.synth,
        })
        .expect("config serializes");
        let mut canon = String::new();
        canonical_json(&value, &mut canon);
        let digest = Sha256::digest(canon.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Stage configs with seeds derived from the global seed.
    pub fn hrn_effective(&self) -> HrnConfig {
        HrnConfig {
            seed: seeds::for_stage(self.seed, "train-hrn"),
            ..self.hrn.clone()
        }
    }

    pub fn hpn_effective(&self) -> HpnConfig {
        HpnConfig {
            seed: seeds::for_stage(self.seed, "train-hpn"),
            ..self.hpn.clone()
        }
    }

    pub fn synth_effective(&self) -> SynthConfig {
        SynthConfig {
            seed: seeds::for_stage(self.seed, "synth"),
            ..self.synth.clone()
        }
    }

    pub fn split_of(&self, id: &str) -> Option<&'static str> {
        if self.splits.train.iter().any(|s| s == id) {
            Some("train")
        } else if self.splits.validation.iter().any(|s| s == id) {
            Some("validation")
        } else if self.splits.test.iter().any(|s| s == id) {
            Some("test")
        } else {
            None
        }
    }
}

/// Writes a JSON value with object keys sorted, independent of any map
/// implementation details.
fn canonical_json(value: &serde_json::Value, out: &mut String) {
    match value {
        serde_json::Value::Object(map) => {
            out.push('{');
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::Value::String((*k).clone()).to_string());
                out.push(':');
                canonical_json(&map[*k], out);
            }
            out.push('}');
        }
        serde_json::Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonical_json(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_config(out: &Path) -> RunConfig {
        RunConfig {
            paths: Paths {
                scenes: out.join("scenes"),
                polygons: out.join("polys"),
                masks: None,
                out: out.join("out"),
            },
            seed: 7,
            splits: Splits {
                train: vec!["scene-000".into()],
                validation: vec!["scene-001".into()],
                test: vec!["scene-002".into()],
            },
            hrn: HrnConfig::default(),
            hpn: HpnConfig::default(),
            synth: SynthConfig::default(),
        }
    }

    #[test]
    fn fingerprint_ignores_paths_but_not_seed() {
        let dir = tempfile::tempdir().unwrap();
        let a = demo_config(dir.path());
        let mut b = a.clone();
        b.paths.out = dir.path().join("elsewhere");
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut c = a.clone();
        c.seed = 8;
        assert_ne!(a.fingerprint(), c.fingerprint());
        let mut d = a.clone();
        d.hrn.neg_pos_ratio = 6.0;
        assert_ne!(a.fingerprint(), d.fingerprint());
    }

    #[test]
    fn overlapping_splits_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = demo_config(dir.path());
        cfg.splits.test.push("scene-000".into());
        match cfg.validate() {
            Err(Error::Config(msg)) => assert!(msg.contains("scene-000")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn missing_field_names_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"seed": 1}"#).unwrap();
        match RunConfig::load(&path) {
            Err(Error::Config(msg)) => assert!(msg.contains("paths"), "message: {msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn stage_seeds_are_stable_and_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = demo_config(dir.path());
        assert_eq!(cfg.hrn_effective().seed, cfg.hrn_effective().seed);
        assert_ne!(cfg.hrn_effective().seed, cfg.hpn_effective().seed);
        assert_ne!(cfg.hpn_effective().seed, cfg.synth_effective().seed);
    }
}
