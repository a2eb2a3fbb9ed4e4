//! Ground-truth polygon sets and their JSON file format:
//! {"polygons": [{"id": str, "rings": [[[x, y], ...], ...]}]}
//!
//! Coordinates are in pixel space of the paired scene (x right, y down).
//! The first ring of a polygon is its outer boundary; later rings are holes.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub id: String,
    pub rings: Vec<Vec<[f64; 2]>>,
}

impl Polygon {
    pub fn outer_ring(&self) -> &[[f64; 2]] {
        &self.rings[0]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolygonSet {
    pub polygons: Vec<Polygon>,
}

impl PolygonSet {
    pub fn new(polygons: Vec<Polygon>) -> Result<PolygonSet> {
        let set = PolygonSet { polygons };
        set.validate()?;
        Ok(set)
    }

    pub fn empty() -> PolygonSet {
        PolygonSet::default()
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for poly in &self.polygons {
            if poly.rings.is_empty() {
                return Err(Error::Validation(format!(
                    "polygon {} has no rings",
                    poly.id
                )));
            }
            for ring in &poly.rings {
                if ring.len() < 3 {
                    return Err(Error::Validation(format!(
                        "polygon {} has a ring with {} vertices, need at least 3",
                        poly.id,
                        ring.len()
                    )));
                }
            }
            if !ids.insert(poly.id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate polygon id {}",
                    poly.id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.polygons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }
}

pub fn write_polygons(set: &PolygonSet, path: &Path) -> Result<()> {
    set.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, set)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    use std::io::Write;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_polygons(path: &Path) -> Result<PolygonSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let set: PolygonSet = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    set.validate()?;
    Ok(set)
}

/// Convenience constructor for an axis-aligned rectangle (corners inclusive
/// of (x0, y0), exclusive of nothing; plain polygon corners).
pub fn rect_polygon(id: impl Into<String>, x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
    Polygon {
        id: id.into(),
        rings: vec![vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]],
    }
}
