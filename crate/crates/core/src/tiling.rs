//! Gridding scenes into tiles, coverage-based labeling, and crop extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{PixelMask, Scene, ValidityMask};

/// Coverage strictly above this fraction makes a tile positive; exactly zero
/// makes it negative; anything between is ignored for training.
pub const POSITIVE_COVERAGE_THRESHOLD: f64 = 0.20;

/// Tile edge length used by the first-stage network.
pub const HRN_TILE_SIZE: usize = 16;

/// Crop edge length used by the second-stage network.
pub const HPN_CROP_SIZE: usize = 64;

/// A scene gridded into square tiles; partial edge tiles are discarded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileGrid {
    pub scene_id: String,
    pub tile_size: usize,
    pub rows: usize,
    pub cols: usize,
    /// Dimensions of the source scene, kept for mask validation.
    pub scene_height: usize,
    pub scene_width: usize,
}

impl TileGrid {
    /// Pixel at the center of a tile: (row*t + t/2, col*t + t/2).
    pub fn tile_center(&self, row: usize, col: usize) -> (i64, i64) {
        (
            (row * self.tile_size + self.tile_size / 2) as i64,
            (col * self.tile_size + self.tile_size / 2) as i64,
        )
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TileLabelKind {
    Positive,
    Negative,
    Ignored,
    Invalid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileLabel {
    pub row: usize,
    pub col: usize,
    pub coverage: f64,
    pub label: TileLabelKind,
}

/// JSON-lines record for tile label dumps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileLabelRecord {
    pub scene_id: String,
    pub row: usize,
    pub col: usize,
    pub coverage: f64,
    pub label: TileLabelKind,
}

/// A square multi-band pixel window; out-of-scene pixels are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub center: (i64, i64),
    pub size: usize,
    pub bands: usize,
    /// band-major, then row-major, size*size per band
    pub data: Vec<f32>,
}

impl Crop {
    pub fn pixel(&self, band: usize, row: usize, col: usize) -> f32 {
        self.data[(band * self.size + row) * self.size + col]
    }
}

/// Grids a scene into tiles of `tile_size`; a scene smaller than one tile
/// yields an empty grid.
pub fn grid_scene(scene: &Scene, tile_size: usize) -> Result<TileGrid> {
    if tile_size == 0 {
        return Err(Error::Validation("tile_size must be at least 1".into()));
    }
    Ok(TileGrid {
        scene_id: scene.scene_id.clone(),
        tile_size,
        rows: scene.height() / tile_size,
        cols: scene.width() / tile_size,
        scene_height: scene.height(),
        scene_width: scene.width(),
    })
}

/// Labels every tile of the grid from ground-truth coverage and validity.
///
/// coverage = (ground-truth pixels in the tile) / tile_size^2. A tile
/// touching any invalid pixel is `Invalid` regardless of coverage. A missing
/// validity mask means every pixel is valid.
pub fn label_tiles(
    grid: &TileGrid,
    gt_mask: &PixelMask,
    validity: Option<&ValidityMask>,
) -> Result<Vec<TileLabel>> {
    if gt_mask.height() != grid.scene_height || gt_mask.width() != grid.scene_width {
        return Err(Error::Validation(format!(
            "ground-truth mask is {}x{}, scene is {}x{}",
            gt_mask.height(),
            gt_mask.width(),
            grid.scene_height,
            grid.scene_width
        )));
    }
    if let Some(v) = validity {
        if v.height() != grid.scene_height || v.width() != grid.scene_width {
            return Err(Error::Validation(format!(
                "validity mask is {}x{}, scene is {}x{}",
                v.height(),
                v.width(),
                grid.scene_height,
                grid.scene_width
            )));
        }
    }

    let t = grid.tile_size;
    let area = (t * t) as f64;
    let mut labels = Vec::with_capacity(grid.len());
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let mut count = 0usize;
            let mut all_valid = true;
            for y in row * t..(row + 1) * t {
                for x in col * t..(col + 1) * t {
                    if gt_mask.is_inside(y, x) {
                        count += 1;
                    }
                    if let Some(v) = validity {
                        if !v.is_valid(y, x) {
                            all_valid = false;
                        }
                    }
                }
            }
            let coverage = count as f64 / area;
            let label = if !all_valid {
                TileLabelKind::Invalid
            } else if coverage > POSITIVE_COVERAGE_THRESHOLD {
                TileLabelKind::Positive
            } else if count == 0 {
                TileLabelKind::Negative
            } else {
                TileLabelKind::Ignored
            };
            labels.push(TileLabel {
                row,
                col,
                coverage,
                label,
            });
        }
    }
    Ok(labels)
}

/// Extracts a `size`-square crop whose top-left corner is
/// (center.0 - size/2, center.1 - size/2); pixels outside the scene are 0.
pub fn extract_crop(scene: &Scene, center: (i64, i64), size: usize) -> Result<Crop> {
    if size == 0 {
        return Err(Error::Validation("crop size must be at least 1".into()));
    }
    let bands = scene.bands();
    let half = (size / 2) as i64;
    let top = center.0 - half;
    let left = center.1 - half;
    let mut data = vec![0.0f32; bands * size * size];
    let (h, w) = (scene.height() as i64, scene.width() as i64);
    for b in 0..bands {
        let plane = scene.band(b);
        for y in 0..size as i64 {
            let sy = top + y;
            if sy < 0 || sy >= h {
                continue;
            }
            let x0 = left.max(0);
            let x1 = (left + size as i64).min(w);
            if x0 >= x1 {
                continue;
            }
            let src = &plane[(sy * w + x0) as usize..(sy * w + x1) as usize];
            let dst_off = (b * size + y as usize) * size + (x0 - left) as usize;
            data[dst_off..dst_off + src.len()].copy_from_slice(src);
        }
    }
    Ok(Crop {
        center,
        size,
        bands,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::polygon::{rect_polygon, PolygonSet};
    use crate::raster::rasterize;

    fn scene(h: usize, w: usize) -> Scene {
        let data: Vec<f32> = (0..h * w).map(|i| (i % 97) as f32 * 0.01).collect();
        Scene::new("t", 1, h, w, data).unwrap()
    }

    #[test]
    fn grid_dimensions() {
        assert_eq!(
            (2, 3),
            grid_scene(&scene(32, 48), 16).map(|g| (g.rows, g.cols)).unwrap()
        );
        assert_eq!(
            (2, 2),
            grid_scene(&scene(40, 40), 16).map(|g| (g.rows, g.cols)).unwrap()
        );
        let empty = grid_scene(&scene(8, 8), 16).unwrap();
        assert_eq!((empty.rows, empty.cols), (0, 0));
        assert!(empty.is_empty());
    }

    fn mask_with_count(h: usize, w: usize, tile: (usize, usize), t: usize, n: usize) -> PixelMask {
        let mut inside = vec![false; h * w];
        let mut placed = 0;
        'outer: for y in tile.0 * t..(tile.0 + 1) * t {
            for x in tile.1 * t..(tile.1 + 1) * t {
                if placed == n {
                    break 'outer;
                }
                inside[y * w + x] = true;
                placed += 1;
            }
        }
        PixelMask::from_raw(h, w, inside)
    }

    #[test]
    fn coverage_threshold_boundary() {
        let s = scene(32, 32);
        let grid = grid_scene(&s, 16).unwrap();
        // 51/256 <= 0.20 -> ignored; 52/256 > 0.20 -> positive
        let labels = label_tiles(&grid, &mask_with_count(32, 32, (0, 0), 16, 51), None).unwrap();
        assert_eq!(labels[0].label, TileLabelKind::Ignored);
        assert!((labels[0].coverage - 51.0 / 256.0).abs() < 1e-12);
        let labels = label_tiles(&grid, &mask_with_count(32, 32, (0, 0), 16, 52), None).unwrap();
        assert_eq!(labels[0].label, TileLabelKind::Positive);
        // untouched tile is negative
        assert_eq!(labels[3].label, TileLabelKind::Negative);
    }

    #[test]
    fn full_coverage_is_positive() {
        let s = scene(32, 32);
        let grid = grid_scene(&s, 16).unwrap();
        let labels = label_tiles(&grid, &mask_with_count(32, 32, (1, 1), 16, 256), None).unwrap();
        let l = &labels[3];
        assert_eq!(l.coverage, 1.0);
        assert_eq!(l.label, TileLabelKind::Positive);
    }

    #[test]
    fn exact_twenty_percent_is_ignored() {
        // a 10-px tile has area 100, so exactly 20 pixels hits the threshold
        let s = scene(10, 10);
        let grid = grid_scene(&s, 10).unwrap();
        let labels = label_tiles(&grid, &mask_with_count(10, 10, (0, 0), 10, 20), None).unwrap();
        assert_eq!(labels[0].label, TileLabelKind::Ignored);
        let labels = label_tiles(&grid, &mask_with_count(10, 10, (0, 0), 10, 21), None).unwrap();
        assert_eq!(labels[0].label, TileLabelKind::Positive);
    }

    #[test]
    fn any_invalid_pixel_invalidates_tile() {
        let s = scene(16, 16);
        let grid = grid_scene(&s, 16).unwrap();
        let gt = mask_with_count(16, 16, (0, 0), 16, 0);
        let mut validity = ValidityMask::all_valid(16, 16);
        validity.set(7, 9, false);
        let labels = label_tiles(&grid, &gt, Some(&validity)).unwrap();
        assert_eq!(labels[0].label, TileLabelKind::Invalid);
    }

    #[test]
    fn mask_dimension_mismatch_is_rejected() {
        let s = scene(32, 32);
        let grid = grid_scene(&s, 16).unwrap();
        let gt = mask_with_count(16, 16, (0, 0), 16, 0);
        assert!(label_tiles(&grid, &gt, None).is_err());
    }

    #[test]
    fn labels_partition_fully_valid_tiles() {
        let s = scene(64, 64);
        let grid = grid_scene(&s, 16).unwrap();
        let polys = PolygonSet::new(vec![rect_polygon("a", 3.0, 5.0, 37.0, 29.0)]).unwrap();
        let gt = rasterize(&polys, 64, 64).unwrap();
        let labels = label_tiles(&grid, &gt, None).unwrap();
        assert_eq!(labels.len(), grid.len());
        for l in &labels {
            let classes = [
                TileLabelKind::Positive,
                TileLabelKind::Negative,
                TileLabelKind::Ignored,
            ];
            assert_eq!(classes.iter().filter(|&&k| k == l.label).count(), 1);
        }
    }

    #[test]
    fn growing_gt_never_demotes_positive() {
        let s = scene(64, 64);
        let grid = grid_scene(&s, 16).unwrap();
        let small = PolygonSet::new(vec![rect_polygon("a", 3.0, 5.0, 37.0, 29.0)]).unwrap();
        let big = PolygonSet::new(vec![
            rect_polygon("a", 3.0, 5.0, 37.0, 29.0),
            rect_polygon("b", 40.0, 40.0, 60.0, 60.0),
        ])
        .unwrap();
        let l_small = label_tiles(&grid, &rasterize(&small, 64, 64).unwrap(), None).unwrap();
        let l_big = label_tiles(&grid, &rasterize(&big, 64, 64).unwrap(), None).unwrap();
        for (a, b) in l_small.iter().zip(&l_big) {
            if a.label == TileLabelKind::Positive {
                assert_eq!(b.label, TileLabelKind::Positive);
            }
            assert!(b.coverage >= a.coverage);
        }
    }

    #[test]
    fn crop_in_bounds_equals_subraster() {
        let s = scene(16, 16);
        let crop = extract_crop(&s, (8, 8), 4).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(crop.pixel(0, y, x), s.pixel(0, 6 + y, 6 + x));
            }
        }
    }

    #[test]
    fn crop_at_origin_pads_with_zeros() {
        let s = scene(16, 16);
        let crop = extract_crop(&s, (0, 0), 4).unwrap();
        for y in 0..2 {
            for x in 0..2 {
                assert_eq!(crop.pixel(0, y, x), 0.0, "padded quadrant at ({y},{x})");
            }
        }
        assert_eq!(crop.pixel(0, 2, 2), s.pixel(0, 0, 0));
    }

    #[test]
    fn crop_matches_per_pixel_gather() {
        let s = Scene::new(
            "t",
            2,
            12,
            9,
            (0..2 * 12 * 9).map(|i| (i as f32 * 0.37).sin()).collect(),
        )
        .unwrap();
        for &center in &[(0i64, 0i64), (11, 8), (-3, 4), (6, 4), (14, -2)] {
            let crop = extract_crop(&s, center, 5).unwrap();
            for b in 0..2 {
                for y in 0..5i64 {
                    for x in 0..5i64 {
                        let sy = center.0 - 2 + y;
                        let sx = center.1 - 2 + x;
                        let expected = if sy >= 0 && sy < 12 && sx >= 0 && sx < 9 {
                            s.pixel(b, sy as usize, sx as usize)
                        } else {
                            0.0
                        };
                        assert_eq!(crop.pixel(b, y as usize, x as usize), expected);
                    }
                }
            }
        }
    }
}
