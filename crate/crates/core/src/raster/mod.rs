//! Scene/mask/polygon types and their on-disk formats.

pub mod polygon;
pub mod rasterize;
pub mod scnr;

pub use polygon::{read_polygons, write_polygons, Polygon, PolygonSet};
pub use rasterize::rasterize;
pub use scnr::{read_mask, read_scene, write_mask, write_scene};

use crate::error::{Error, Result};

/// Multi-band float raster; the unit of training and inference.
///
/// Values are stored band-major, then row-major within a band.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    bands: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Scene {
    pub fn new(
        scene_id: impl Into<String>,
        bands: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Scene> {
        if bands == 0 {
            return Err(Error::Validation("scene needs at least one band".into()));
        }
        if data.len() != bands * height * width {
            return Err(Error::Validation(format!(
                "scene data has {} values, expected {}x{}x{} = {}",
                data.len(),
                bands,
                height,
                width,
                bands * height * width
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Validation("scene contains non-finite values".into()));
        }
        Ok(Scene {
            scene_id: scene_id.into(),
            bands,
            height,
            width,
            data,
        })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, band: usize, row: usize, col: usize) -> f32 {
        self.data[(band * self.height + row) * self.width + col]
    }

    /// One band's rows as a contiguous slice.
    pub fn band(&self, band: usize) -> &[f32] {
        &self.data[band * self.height * self.width..(band + 1) * self.height * self.width]
    }
}

/// Per-pixel validity; invalid pixels are excluded from training and scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityMask {
    height: usize,
    width: usize,
    valid: Vec<bool>,
}

impl ValidityMask {
    pub fn new(height: usize, width: usize, valid: Vec<bool>) -> Result<ValidityMask> {
        if valid.len() != height * width {
            return Err(Error::Validation(format!(
                "validity mask has {} entries, expected {height}x{width}",
                valid.len()
            )));
        }
        Ok(ValidityMask { height, width, valid })
    }

    pub fn all_valid(height: usize, width: usize) -> ValidityMask {
        ValidityMask {
            height,
            width,
            valid: vec![true; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, valid: bool) {
        self.valid[row * self.width + col] = valid;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.valid
    }
}

/// Boolean raster produced by polygon rasterization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    height: usize,
    width: usize,
    inside: Vec<bool>,
}

impl PixelMask {
    pub(crate) fn from_raw(height: usize, width: usize, inside: Vec<bool>) -> PixelMask {
        debug_assert_eq!(inside.len(), height * width);
        PixelMask { height, width, inside }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_inside(&self, row: usize, col: usize) -> bool {
        self.inside[row * self.width + col]
    }

    pub fn count_inside(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.inside
    }
}
