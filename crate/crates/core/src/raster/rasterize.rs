//! Even-odd polygon rasterization at pixel centers.
//!
//! Pixel (r, c) is inside iff its center (c + 0.5, r + 0.5) lies within any
//! polygon of the set under the even-odd rule over that polygon's rings, so
//! holes subtract and overlapping polygons union. Implemented as a per-row
//! scanline fill whose crossing formula is the one a point-in-polygon ray
//! cast uses, making the two routes agree exactly.

use crate::error::{Error, Result};
use crate::raster::{PixelMask, PolygonSet};

pub fn rasterize(polys: &PolygonSet, height: usize, width: usize) -> Result<PixelMask> {
    if height == 0 || width == 0 {
        return Err(Error::Validation("rasterize needs positive dimensions".into()));
    }
    polys.validate()?;

    let mut inside = vec![false; height * width];
    let mut crossings: Vec<f64> = Vec::new();
    for poly in &polys.polygons {
        for r in 0..height {
            let py = r as f64 + 0.5;
            crossings.clear();
            for ring in &poly.rings {
                let n = ring.len();
                for i in 0..n {
                    let [x1, y1] = ring[i];
                    let [x2, y2] = ring[(i + 1) % n];
                    if (y1 > py) != (y2 > py) {
                        crossings.push(crossing_x(x1, y1, x2, y2, py));
                    }
                }
            }
            if crossings.is_empty() {
                continue;
            }
            crossings.sort_by(|a, b| a.partial_cmp(b).expect("finite crossings"));
            // between crossings 2k and 2k+1 the parity of "crossings to the
            // right" is odd: fill pixel centers in [a, b)
            let row = &mut inside[r * width..(r + 1) * width];
            for pair in crossings.chunks_exact(2) {
                let (a, b) = (pair[0], pair[1]);
                let c0 = (a - 0.5).ceil().max(0.0) as usize;
                let c1 = ((b - 0.5).ceil() as isize).min(width as isize);
                for v in row.iter_mut().take(c1.max(0) as usize).skip(c0.min(width)) {
                    *v = true;
                }
            }
        }
    }
    Ok(PixelMask::from_raw(height, width, inside))
}

/// X coordinate where the edge (x1,y1)-(x2,y2) crosses the horizontal line
/// y = py. Shared between the scanline fill and the ray-cast test.
pub fn crossing_x(x1: f64, y1: f64, x2: f64, y2: f64, py: f64) -> f64 {
    x1 + (py - y1) * (x2 - x1) / (y2 - y1)
}

/// Ray-cast even-odd test of a single point against one polygon's rings.
/// This is the reference predicate the scanline fill is derived from.
pub fn point_in_rings(rings: &[Vec<[f64; 2]>], px: f64, py: f64) -> bool {
    let mut odd = false;
    for ring in rings {
        let n = ring.len();
        for i in 0..n {
            let [x1, y1] = ring[i];
            let [x2, y2] = ring[(i + 1) % n];
            if (y1 > py) != (y2 > py) && px < crossing_x(x1, y1, x2, y2, py) {
                odd = !odd;
            }
        }
    }
    odd
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::polygon::{rect_polygon, Polygon, PolygonSet};

    fn brute_force(polys: &PolygonSet, height: usize, width: usize) -> Vec<bool> {
        let mut out = vec![false; height * width];
        for r in 0..height {
            for c in 0..width {
                let (px, py) = (c as f64 + 0.5, r as f64 + 0.5);
                out[r * width + c] = polys
                    .polygons
                    .iter()
                    .any(|p| point_in_rings(&p.rings, px, py));
            }
        }
        out
    }

    #[test]
    fn empty_set_is_all_false() {
        let mask = rasterize(&PolygonSet::empty(), 4, 4).unwrap();
        assert_eq!(mask.count_inside(), 0);
    }

    #[test]
    fn unit_square_on_8x8() {
        let polys = PolygonSet::new(vec![rect_polygon("s", 0.0, 0.0, 4.0, 4.0)]).unwrap();
        let mask = rasterize(&polys, 8, 8).unwrap();
        assert_eq!(mask.as_slice(), brute_force(&polys, 8, 8).as_slice());
        assert_eq!(mask.count_inside(), 16);
        for r in 0..8 {
            for c in 0..8 {
                assert_eq!(mask.is_inside(r, c), r < 4 && c < 4, "pixel ({r},{c})");
            }
        }
    }

    #[test]
    fn covering_square_is_all_true() {
        let polys = PolygonSet::new(vec![rect_polygon("s", -1.0, -1.0, 9.0, 9.0)]).unwrap();
        let mask = rasterize(&polys, 8, 8).unwrap();
        assert_eq!(mask.count_inside(), 64);
    }

    #[test]
    fn hole_subtracts() {
        let poly = Polygon {
            id: "donut".into(),
            rings: vec![
                vec![[0.0, 0.0], [8.0, 0.0], [8.0, 8.0], [0.0, 8.0]],
                vec![[2.0, 2.0], [6.0, 2.0], [6.0, 6.0], [2.0, 6.0]],
            ],
        };
        let polys = PolygonSet::new(vec![poly]).unwrap();
        let mask = rasterize(&polys, 8, 8).unwrap();
        assert!(!mask.is_inside(4, 4));
        assert!(mask.is_inside(0, 0));
        assert_eq!(mask.count_inside(), 64 - 16);
        assert_eq!(mask.as_slice(), brute_force(&polys, 8, 8).as_slice());
    }

    #[test]
    fn short_ring_is_rejected() {
        let poly = Polygon {
            id: "bad".into(),
            rings: vec![vec![[0.0, 0.0], [1.0, 0.0]]],
        };
        let polys = PolygonSet { polygons: vec![poly] };
        assert!(rasterize(&polys, 4, 4).is_err());
    }

    #[test]
    fn concave_polygon_matches_brute_force() {
        // an L-shape
        let poly = Polygon {
            id: "l".into(),
            rings: vec![vec![
                [1.0, 1.0],
                [7.0, 1.0],
                [7.0, 3.0],
                [3.0, 3.0],
                [3.0, 7.0],
                [1.0, 7.0],
            ]],
        };
        let polys = PolygonSet::new(vec![poly]).unwrap();
        let mask = rasterize(&polys, 8, 8).unwrap();
        assert_eq!(mask.as_slice(), brute_force(&polys, 8, 8).as_slice());
        assert!(mask.is_inside(1, 1));
        assert!(!mask.is_inside(5, 5));
    }

    #[test]
    fn translation_equivariance_integer_shift() {
        let poly = Polygon {
            id: "t".into(),
            rings: vec![vec![[1.2, 1.7], [6.3, 2.1], [4.9, 6.8]]],
        };
        let polys = PolygonSet::new(vec![poly.clone()]).unwrap();
        let mask = rasterize(&polys, 16, 16).unwrap();
        let shifted = Polygon {
            id: "t".into(),
            rings: vec![poly.rings[0].iter().map(|[x, y]| [x + 3.0, y + 2.0]).collect()],
        };
        let smask = rasterize(&PolygonSet::new(vec![shifted]).unwrap(), 16, 16).unwrap();
        for r in 0..14 {
            for c in 0..13 {
                assert_eq!(mask.is_inside(r, c), smask.is_inside(r + 2, c + 3));
            }
        }
    }
}
