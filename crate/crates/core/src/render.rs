//! RGB overlays of instance maps.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::reconstruct::Connectivity;
use crate::tensorio::{ClassMap, DirectionMap, InstanceMap, DIRECTION_SENTINEL};

/// Display colors for classes 1..=6.
pub const CLASS_COLORS: [[u8; 3]; 6] = [
    [255, 255, 0],
    [255, 0, 0],
    [0, 160, 255],
    [0, 255, 0],
    [255, 0, 255],
    [255, 128, 0],
];

/// Colors for direction classes, cycled when there are more than eight.
pub const DIRECTION_COLORS: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [255, 225, 25],
    [145, 30, 180],
    [70, 240, 240],
    [245, 130, 48],
    [240, 50, 230],
];

/// Distinct non-black color for every index in `1..=65535`.
///
/// Multiplication by an odd constant is a bijection modulo 2^24.
pub fn instance_color(id: u16) -> [u8; 3] {
    if id == 0 {
        return [0, 0, 0];
    }
    let v = (id as u32).wrapping_mul(0x9E_37_79) & 0xFF_FF_FF;
    [(v >> 16) as u8, (v >> 8) as u8, v as u8]
}

/// Row-major RGB bytes: instances filled with [`instance_color`], background
/// black. With a class map, instance boundary pixels take their class color.
pub fn overlay_rgb(instances: &InstanceMap, classes: Option<&ClassMap>) -> Result<Vec<u8>> {
    if let Some(cls) = classes {
        if cls.dims() != instances.dims() {
            return Err(Error::ShapeMismatch(format!(
                "instance map {:?} vs class map {:?}",
                instances.dims(),
                cls.dims()
            )));
        }
    }
    let (h, w) = instances.dims();
    let mut out = Vec::with_capacity(h * w * 3);
    for ((r, c), id) in instances.grid().iter() {
        let mut color = instance_color(id);
        if let Some(cls) = classes {
            let edge = id != 0
                && (r == 0
                    || c == 0
                    || r + 1 == h
                    || c + 1 == w
                    || Connectivity::Four
                        .neighbors((r, c), h, w)
                        .any(|q| instances.get(q.0, q.1) != id));
            let k = cls.get(r, c);
            if edge && k != 0 {
                color = CLASS_COLORS[k as usize - 1];
            }
        }
        out.extend_from_slice(&color);
    }
    Ok(out)
}

/// Row-major RGB bytes of a direction map, background black.
pub fn direction_rgb(directions: &DirectionMap) -> Vec<u8> {
    directions
        .labels()
        .iter()
        .flat_map(|&d| match d {
            DIRECTION_SENTINEL => [0, 0, 0],
            _ => DIRECTION_COLORS[d as usize % DIRECTION_COLORS.len()],
        })
        .collect()
}

/// Writes 8-bit RGB bytes as PNG.
pub fn write_rgb_png(
    path: impl AsRef<Path>,
    height: usize,
    width: usize,
    rgb: &[u8],
) -> Result<()> {
    let path = path.as_ref();
    let err = |e: png::EncodingError| Error::PngEncode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(err)?;
    writer.write_image_data(rgb).map_err(err)?;
    writer.finish().map_err(err)
}
