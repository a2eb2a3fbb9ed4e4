//! Candidate-region extraction shared by the cascade and by negative mining:
//! 4-connected components of predicted-positive tiles with their pixel
//! centroids.

use crate::hrn::ScoreGrid;

/// Probability threshold that makes a tile predicted-positive.
pub const REGION_THRESHOLD: f32 = 0.5;

/// One connected component of predicted-positive tiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    /// (row, col) tile indices in scan order.
    pub tiles: Vec<(usize, usize)>,
    /// Mean of the member tiles' center pixels, rounded to the nearest pixel.
    pub centroid: (i64, i64),
}

/// Thresholds the grid and labels 4-connected components, scanning row-major
/// so the result is deterministic.
pub fn positive_regions(grid: &ScoreGrid, threshold: f32, tile_size: usize) -> Vec<Region> {
    let (rows, cols) = (grid.rows, grid.cols);
    let mut visited = vec![false; rows * cols];
    let mut regions = Vec::new();
    let mut queue = Vec::new();
    for start in 0..rows * cols {
        if visited[start] || grid.as_slice()[start] < threshold {
            continue;
        }
        visited[start] = true;
        queue.clear();
        queue.push(start);
        let mut tiles = Vec::new();
        while let Some(idx) = queue.pop() {
            let (r, c) = (idx / cols, idx % cols);
            tiles.push((r, c));
            let mut push = |nr: usize, nc: usize| {
                let nidx = nr * cols + nc;
                if !visited[nidx] && grid.as_slice()[nidx] >= threshold {
                    visited[nidx] = true;
                    queue.push(nidx);
                }
            };
            if r > 0 {
                push(r - 1, c);
            }
            if r + 1 < rows {
                push(r + 1, c);
            }
            if c > 0 {
                push(r, c - 1);
            }
            if c + 1 < cols {
                push(r, c + 1);
            }
        }
        tiles.sort_unstable();
        let half = (tile_size / 2) as f64;
        let (mut sy, mut sx) = (0.0f64, 0.0f64);
        for &(r, c) in &tiles {
            sy += r as f64 * tile_size as f64 + half;
            sx += c as f64 * tile_size as f64 + half;
        }
        let n = tiles.len() as f64;
        regions.push(Region {
            tiles,
            centroid: ((sy / n).round() as i64, (sx / n).round() as i64),
        });
    }
    regions
}
