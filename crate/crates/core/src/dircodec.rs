//! Direction-map encoding of instance maps.
//!
//! Every foreground pixel is labelled with the quantized angle of the vector
//! from its instance's centroid to the pixel. Angles are measured
//! counter-clockwise from the +x (column) axis in a y-up frame, so with the
//! default four directions class 0 is the right-upper quadrant, class 1 the
//! left-upper, class 2 the left-lower and class 3 the right-lower. Sectors are
//! half-open: `[start + k*w, start + (k+1)*w)` with `w = 360 / N` degrees.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::{DirectionMap, InstanceMap, Pixel};

/// Sector positions within this many sector widths of a boundary snap onto it.
/// Pixel-grid angles never come closer to a boundary than ~1e-5 rad without lying on it.
const BOUNDARY_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectionConfig {
    pub n_directions: u8,
    /// Start of the class-0 sector in degrees.
    pub class0_sector_start: f64,
}

impl Default for DirectionConfig {
    fn default() -> Self {
        DirectionConfig {
            n_directions: 4,
            class0_sector_start: 0.0,
        }
    }
}

impl DirectionConfig {
    pub fn new(n_directions: u8) -> Result<Self> {
        let cfg = DirectionConfig {
            n_directions,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_directions;
        if !(2..=254).contains(&n) || 360 % n as u32 != 0 {
            return Err(Error::InvalidConfig(format!(
                "number of directions must divide 360 and lie in 2..=254, got {n}"
            )));
        }
        if !self.class0_sector_start.is_finite() {
            return Err(Error::InvalidConfig(
                "class-0 sector start must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn sector_width(&self) -> f64 {
        360.0 / self.n_directions as f64
    }
}

/// Mean of pixel-center coordinates as `(row, col)`.
pub fn centroid(pixels: &[Pixel]) -> Result<(f64, f64)> {
    if pixels.is_empty() {
        return Err(Error::EmptyPixelSet);
    }
    let (sr, sc) = pixels.iter().fold((0.0, 0.0), |(sr, sc), &(r, c)| {
        (sr + r as f64, sc + c as f64)
    });
    let n = pixels.len() as f64;
    Ok((sr / n, sc / n))
}

/// Direction class of `pixel` relative to `centroid`.
///
/// A pixel that coincides with the centroid is class 0.
pub fn direction_class(pixel: Pixel, centroid: (f64, f64), config: &DirectionConfig) -> u8 {
    let dx = pixel.1 as f64 - centroid.1;
    let dy = centroid.0 - pixel.0 as f64;
    if dx == 0.0 && dy == 0.0 {
        return 0;
    }
    let theta = dy.atan2(dx).to_degrees();
    let rel = (theta - config.class0_sector_start).rem_euclid(360.0);
    let mut pos = rel / config.sector_width();
    let nearest = pos.round();
    if (pos - nearest).abs() < BOUNDARY_SNAP {
        pos = nearest;
    }
    (pos.floor() as u32 % config.n_directions as u32) as u8
}

/// Encodes every instance pixel by its direction towards the instance centroid.
pub fn encode_direction_map(
    instances: &InstanceMap,
    config: &DirectionConfig,
) -> Result<DirectionMap> {
    config.validate()?;
    let (h, w) = instances.dims();
    let mut out = DirectionMap::new(h, w, config.n_directions)?;
    for pixels in instances.pixel_sets().values() {
        let c = centroid(pixels)?;
        for &p in pixels {
            out.set(p.0, p.1, Some(direction_class(p, c, config)));
        }
    }
    Ok(out)
}

/// Whether the direction sectors of one instance form a chain the merge
/// sweep can follow: every sector non-empty and 4-connected, and sector `k`
/// 4-adjacent to sector `k - 1`.
///
/// Holds for ordinary digital ellipses; fails for very small or very thin
/// shapes whose quadrants degenerate.
pub fn sectors_form_chain(pixels: &[Pixel], config: &DirectionConfig) -> bool {
    use crate::reconstruct::{connected_components, Connectivity};
    use crate::tensorio::Grid;

    let Ok(c) = centroid(pixels) else {
        return false;
    };
    let r0 = pixels.iter().map(|p| p.0).min().unwrap();
    let c0 = pixels.iter().map(|p| p.1).min().unwrap();
    let h = pixels.iter().map(|p| p.0).max().unwrap() - r0 + 1;
    let w = pixels.iter().map(|p| p.1).max().unwrap() - c0 + 1;
    let mut sectors = Grid::new(h, w, u8::MAX);
    for &p in pixels {
        sectors.set(p.0 - r0, p.1 - c0, direction_class(p, c, config));
    }
    (0..config.n_directions).all(|k| {
        let comps = connected_components(&sectors.map(|d| d == k), Connectivity::Four);
        comps.len() == 1
            && (k == 0
                || comps[0].iter().any(|&p| {
                    Connectivity::Four
                        .neighbors(p, h, w)
                        .any(|q| sectors.get(q.0, q.1) == k - 1)
                }))
    })
}
