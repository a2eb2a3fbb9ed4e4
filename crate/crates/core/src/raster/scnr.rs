//! SCNR raster files.
//!
//! Layout (little-endian): magic "SCNR", version u32 = 1, bands u32,
//! height u32, width u32, then bands*height*width float32 values, band-major
//! then row-major. A validity mask uses the same container with bands = 1 and
//! values restricted to {0.0, 1.0}.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{Scene, ValidityMask};

const MAGIC: &[u8; 4] = b"SCNR";
pub const FORMAT_VERSION: u32 = 1;

/// Writes a scene in SCNR format. The scene's invariants are re-checked
/// before any byte is emitted.
pub fn write_scene(scene: &Scene, path: &Path) -> Result<()> {
    if !scene.data().iter().all(|v| v.is_finite()) {
        return Err(Error::Validation(
            "refusing to write scene with non-finite values".into(),
        ));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    for v in [
        FORMAT_VERSION,
        scene.bands() as u32,
        scene.height() as u32,
        scene.width() as u32,
    ] {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for &v in scene.data() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads an SCNR file. The scene id is taken from the file stem, which is
/// how `write_scene` callers name scene files.
pub fn read_scene(path: &Path) -> Result<Scene> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, path)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:?}, expected \"SCNR\"",
            path.display()
        )));
    }
    let version = read_u32(&mut r, path)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported SCNR version {version}",
            path.display()
        )));
    }
    let bands = read_u32(&mut r, path)? as usize;
    let height = read_u32(&mut r, path)? as usize;
    let width = read_u32(&mut r, path)? as usize;
    if bands == 0 {
        return Err(Error::Format(format!(
            "{}: zero bands in header",
            path.display()
        )));
    }
    let n = bands * height * width;
    let mut buf = vec![0u8; n * 4];
    read_exact(&mut r, &mut buf, path)?;
    let data: Vec<f32> = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if !data.iter().all(|v| v.is_finite()) {
        return Err(Error::Validation(format!(
            "{}: payload contains non-finite values",
            path.display()
        )));
    }
    let scene_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Scene::new(scene_id, bands, height, width, data)
}

/// Writes a validity mask as a single-band SCNR raster of 0.0/1.0 values.
pub fn write_mask(mask: &ValidityMask, path: &Path) -> Result<()> {
    let data: Vec<f32> = mask.as_slice().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let scene = Scene::new("mask", 1, mask.height(), mask.width(), data)?;
    write_scene(&scene, path)
}

pub fn read_mask(path: &Path) -> Result<ValidityMask> {
    let scene = read_scene(path)?;
    if scene.bands() != 1 {
        return Err(Error::Validation(format!(
            "{}: validity mask must have 1 band, got {}",
            path.display(),
            scene.bands()
        )));
    }
    let valid: Vec<bool> = scene
        .data()
        .iter()
        .map(|&v| {
            if v == 1.0 {
                Ok(true)
            } else if v == 0.0 {
                Ok(false)
            } else {
                Err(Error::Validation(format!(
                    "{}: mask value {v} is not 0.0 or 1.0",
                    path.display()
                )))
            }
        })
        .collect::<Result<_>>()?;
    ValidityMask::new(scene.height(), scene.width(), valid)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Corrupt(format!("{}: truncated payload", path.display()))
        } else {
            Error::io(path, e)
        }
    })
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, path)?;
    Ok(u32::from_le_bytes(buf))
}
