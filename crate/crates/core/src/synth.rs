//! Deterministic synthetic scenes with planted star-convex objects, decoy
//! shapes, and matching ground-truth polygons.
//!
//! Objects carry the configured spectral mean shift plus a fine-grained
//! texture. Decoys carry the same mean shift and the same fine texture plus
//! an additional coarse blotch field whose structure only shows at scales
//! beyond one 16x16 tile — locally they are nearly indistinguishable from
//! object interiors, which is what makes them first-stage false positives
//! and gives the hard-negative mining stage something real to harvest.
//! Decoys are excluded from the ground truth.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{rasterize, Polygon, PolygonSet, Scene};
use crate::seeds;

const VERTICES: usize = 12;
/// Radial jitter: vertex radius is uniform in [R, R*(1+JITTER)], keeping the
/// nominal disk inscribed so rasterized area stays >= 80% of pi*R^2.
const RADIAL_JITTER: f64 = 0.35;
/// Decoys are drawn from the lower end of the object radius range (capped at
/// 1.5x radius_min). Each decoy then spans only a few tiles, so a scene's
/// decoy tiles stay below its object tiles and the first stage's tile-level
/// precision can clear the snapshot-selection floor, while the decoy count
/// keeps the mined-negative supply usable.
const DECOY_RADIUS_SPREAD: f64 = 1.5;
/// Fine texture: amplitude (in noise sigmas) and box-blur radius.
const FINE_AMP: f64 = 0.6;
const FINE_BLUR: usize = 1;
/// Decoy blotch field: amplitude (in noise sigmas) and box-blur radius.
const BLOTCH_AMP: f64 = 2.2;
const BLOTCH_BLUR: usize = 8;
/// Clearance added between shapes beyond their maximum radii.
const PLACEMENT_MARGIN: f64 = 24.0;
const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub bands: usize,
    pub height: usize,
    pub width: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Object mean offset above background, in units of noise_sigma.
    pub contrast: f64,
    pub noise_sigma: f64,
    /// Background mean; zero keeps activations centered and matches the
    /// zero padding used by crops and convolutions.
    pub base_level: f64,
    /// Shapes with the object mean shift but decoy texture, excluded from GT.
    pub decoys: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            bands: 3,
            height: 512,
            width: 512,
            objects_min: 2,
            objects_max: 5,
            radius_min: 12.0,
            radius_max: 40.0,
            contrast: 1.5,
            noise_sigma: 0.25,
            base_level: 0.0,
            decoys: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 {
            return Err(Error::Validation("bands must be at least 1".into()));
        }
        if self.radius_min < 8.0 {
            return Err(Error::Validation(
                "radius_min must be at least 8 so objects span a full tile".into(),
            ));
        }
        if self.radius_min > self.radius_max {
            return Err(Error::Validation("radius_min exceeds radius_max".into()));
        }
        if self.objects_min > self.objects_max {
            return Err(Error::Validation("objects_min exceeds objects_max".into()));
        }
        if self.noise_sigma <= 0.0 {
            return Err(Error::Validation("noise_sigma must be positive".into()));
        }
        Ok(())
    }
}

/// A placed shape with its nominal disk geometry.
#[derive(Debug, Clone)]
pub struct PlantedShape {
    pub center: (f64, f64),
    pub radius: f64,
    pub polygon: Polygon,
}

/// One generated scene: the raster, its ground truth, and the geometry of
/// everything that was planted (decoys included, for diagnostics and tests).
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub scene: Scene,
    pub polygons: PolygonSet,
    pub objects: Vec<PlantedShape>,
    pub decoys: Vec<PlantedShape>,
}

/// Generates `n_scenes` scenes deterministically; scene i uses a substream
/// seed derived from cfg.seed, so any prefix of the list is stable.
pub fn generate(cfg: &SynthConfig, n_scenes: usize) -> Result<Vec<SynthScene>> {
    cfg.validate()?;
    (0..n_scenes)
        .map(|i| generate_scene(cfg, format!("scene-{i:03}"), seeds::mix(cfg.seed, 1000 + i as u64)))
        .collect()
}

fn generate_scene(cfg: &SynthConfig, scene_id: String, seed: u64) -> Result<SynthScene> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let n_objects = rng.random_range(cfg.objects_min..=cfg.objects_max);

    // place objects, then decoys, with non-overlap guaranteed by center
    // distance > both maximum radii plus a margin
    let mut placed: Vec<(f64, f64, f64)> = Vec::new(); // (cx, cy, radius)
    let mut shapes: Vec<PlantedShape> = Vec::new();
    let decoy_radius_max = (cfg.radius_min * DECOY_RADIUS_SPREAD).min(cfg.radius_max);
    for shape_idx in 0..n_objects + cfg.decoys {
        let mut ok = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let radius = if shape_idx < n_objects {
                rng.random_range(cfg.radius_min..=cfg.radius_max)
            } else {
                rng.random_range(cfg.radius_min..=decoy_radius_max)
            };
            let extent = radius * (1.0 + RADIAL_JITTER) + 2.0;
            if 2.0 * extent >= cfg.width as f64 || 2.0 * extent >= cfg.height as f64 {
                continue;
            }
            let cx = rng.random_range(extent..cfg.width as f64 - extent);
            let cy = rng.random_range(extent..cfg.height as f64 - extent);
            let clear = placed.iter().all(|&(px, py, pr)| {
                let d = ((cx - px).powi(2) + (cy - py).powi(2)).sqrt();
                d > (radius + pr) * (1.0 + RADIAL_JITTER) + PLACEMENT_MARGIN
            });
            if !clear {
                continue;
            }
            let polygon = star_polygon(&mut rng, format!("shape-{shape_idx}"), cx, cy, radius);
            placed.push((cx, cy, radius));
            shapes.push(PlantedShape {
                center: (cx, cy),
                radius,
                polygon,
            });
            ok = true;
            break;
        }
        if !ok {
            return Err(Error::Generation(format!(
                "could not place shape {shape_idx} after {PLACEMENT_ATTEMPTS} attempts"
            )));
        }
    }
    let (objects, decoys) = {
        let mut shapes = shapes;
        let decoys = shapes.split_off(n_objects);
        (shapes, decoys)
    };

    // background: per-band gaussian noise around a slightly band-shifted base
    let (h, w) = (cfg.height, cfg.width);
    let mut data = vec![0.0f32; cfg.bands * h * w];
    let normal = StandardNormal;
    for b in 0..cfg.bands {
        let base = cfg.base_level + 0.03 * b as f64;
        let plane = &mut data[b * h * w..(b + 1) * h * w];
        for v in plane.iter_mut() {
            let n: f64 = normal.sample(&mut rng);
            *v = (base + cfg.noise_sigma * n) as f32;
        }
    }

    for shape in &objects {
        paint_shape(cfg, shape, false, &mut data, &mut rng)?;
    }
    for shape in &decoys {
        paint_shape(cfg, shape, true, &mut data, &mut rng)?;
    }

    let polygons = PolygonSet::new(
        objects
            .iter()
            .enumerate()
            .map(|(i, s)| Polygon {
                id: format!("obj-{i}"),
                rings: s.polygon.rings.clone(),
            })
            .collect(),
    )?;
    let scene = Scene::new(scene_id, cfg.bands, h, w, data)?;
    Ok(SynthScene {
        scene,
        polygons,
        objects,
        decoys,
    })
}

fn star_polygon(
    rng: &mut Xoshiro256PlusPlus,
    id: String,
    cx: f64,
    cy: f64,
    radius: f64,
) -> Polygon {
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let ring = (0..VERTICES)
        .map(|k| {
            let theta = phase + k as f64 * std::f64::consts::TAU / VERTICES as f64;
            let r = radius * (1.0 + rng.random_range(0.0..RADIAL_JITTER));
            [cx + r * theta.cos(), cy + r * theta.sin()]
        })
        .collect();
    Polygon {
        id,
        rings: vec![ring],
    }
}

/// Adds the mean shift and texture to one shape's pixels. Textures are
/// normalized to zero mean and unit variance over the shape's pixels before
/// scaling, so the realized mean shift is exactly contrast * sigma.
fn paint_shape(
    cfg: &SynthConfig,
    shape: &PlantedShape,
    is_decoy: bool,
    data: &mut [f32],
    rng: &mut Xoshiro256PlusPlus,
) -> Result<()> {
    let (h, w) = (cfg.height, cfg.width);
    let mask = rasterize(
        &PolygonSet {
            polygons: vec![shape.polygon.clone()],
        },
        h,
        w,
    )?;
    let ring = &shape.polygon.rings[0];
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for [x, y] in ring {
        x0 = x0.min(*x);
        y0 = y0.min(*y);
        x1 = x1.max(*x);
        y1 = y1.max(*y);
    }
    let bx0 = (x0.floor().max(0.0)) as usize;
    let by0 = (y0.floor().max(0.0)) as usize;
    let bx1 = (x1.ceil() as usize).min(w);
    let by1 = (y1.ceil() as usize).min(h);
    let pixels: Vec<(usize, usize)> = (by0..by1)
        .flat_map(|y| (bx0..bx1).map(move |x| (y, x)))
        .filter(|&(y, x)| mask.is_inside(y, x))
        .collect();
    if pixels.is_empty() {
        return Ok(());
    }

    let shift = (cfg.contrast * cfg.noise_sigma) as f32;
    for b in 0..cfg.bands {
        let fine = smooth_field(rng, bx0, by0, bx1, by1, FINE_BLUR);
        let blotch = if is_decoy {
            Some(smooth_field(rng, bx0, by0, bx1, by1, BLOTCH_BLUR))
        } else {
            None
        };
        let fine = normalized_at(&fine, &pixels, bx0, by0, bx1 - bx0);
        let blotch = blotch.map(|f| normalized_at(&f, &pixels, bx0, by0, bx1 - bx0));
        let plane = &mut data[b * h * w..(b + 1) * h * w];
        for (i, &(y, x)) in pixels.iter().enumerate() {
            let mut v = shift + (FINE_AMP * cfg.noise_sigma) as f32 * fine[i];
            if let Some(bl) = &blotch {
                v += (BLOTCH_AMP * cfg.noise_sigma) as f32 * bl[i];
            }
            plane[y * w + x] += v;
        }
    }
    Ok(())
}

/// White noise over the bbox expanded by the blur radius, box-blurred
/// separably; returned at bbox resolution.
fn smooth_field(
    rng: &mut Xoshiro256PlusPlus,
    bx0: usize,
    by0: usize,
    bx1: usize,
    by1: usize,
    blur: usize,
) -> Vec<f32> {
    let bw = bx1 - bx0;
    let bh = by1 - by0;
    let ew = bw + 2 * blur;
    let eh = bh + 2 * blur;
    let mut field = vec![0.0f32; eh * ew];
    let normal = StandardNormal;
    for v in field.iter_mut() {
        let n: f64 = normal.sample(rng);
        *v = n as f32;
    }
    if blur > 0 {
        let k = (2 * blur + 1) as f32;
        // horizontal pass
        let mut tmp = vec![0.0f32; eh * ew];
        for y in 0..eh {
            let row = &field[y * ew..(y + 1) * ew];
            let mut acc: f32 = row[..2 * blur + 1].iter().sum();
            tmp[y * ew + blur] = acc / k;
            for x in blur + 1..ew - blur {
                acc += row[x + blur] - row[x - blur - 1];
                tmp[y * ew + x] = acc / k;
            }
        }
        // vertical pass
        for x in blur..ew - blur {
            let mut acc = 0.0f32;
            for y in 0..2 * blur + 1 {
                acc += tmp[y * ew + x];
            }
            field[blur * ew + x] = acc / k;
            for y in blur + 1..eh - blur {
                acc += tmp[(y + blur) * ew + x] - tmp[(y - blur - 1) * ew + x];
                field[y * ew + x] = acc / k;
            }
        }
    }
    // crop expanded field back to the bbox
    let mut out = vec![0.0f32; bh * bw];
    for y in 0..bh {
        for x in 0..bw {
            out[y * bw + x] = field[(y + blur) * ew + x + blur];
        }
    }
    out
}

/// Samples a bbox field at the given pixels, normalized to zero mean and
/// unit standard deviation over exactly those pixels.
fn normalized_at(
    field: &[f32],
    pixels: &[(usize, usize)],
    bx0: usize,
    by0: usize,
    bw: usize,
) -> Vec<f32> {
    let vals: Vec<f32> = pixels
        .iter()
        .map(|&(y, x)| field[(y - by0) * bw + (x - bx0)])
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = vals
        .iter()
        .map(|&v| (f64::from(v) - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt().max(1e-9);
    vals.iter()
        .map(|&v| ((f64::from(v) - mean) / std) as f32)
        .collect()
}
