//! Seeded synthetic nuclei: filled ellipses with random centers, radii,
//! eccentricities, orientations and classes.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. Uniform reals are `(next_u64() >> 11) * 2^-53`
//! scaled into the target interval, and draws happen in a fixed order, so a
//! seed reproduces the same bundle on every platform.
//!
//! An ellipse with nominal radius `r` and eccentricity `e` has semi-axes
//! `r / (1 - e²)^¼` and `r · (1 - e²)^¼` (area `π r²`). A pixel belongs to it
//! when its center lies inside. Shapes whose digital direction sectors do not
//! form a chain (see [`sectors_form_chain`]) are rejected and redrawn.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::dircodec::{encode_direction_map, sectors_form_chain, DirectionConfig};
use crate::error::{Error, Result};
use crate::reconstruct::{connected_components, Connectivity};
use crate::tensorio::{ClassMap, CountVector, DirectionMap, Grid, InstanceMap, Pixel, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub n_nuclei: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub eccentricity_min: f64,
    pub eccentricity_max: f64,
    pub allow_touching: bool,
    /// Relative frequency of classes 1..=6.
    pub class_weights: [f64; NUM_CLASSES],
    pub seed: u64,
    pub n_directions: u8,
    /// Rejection-sampling budget per nucleus.
    pub max_attempts: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 96,
            width: 96,
            n_nuclei: 12,
            radius_min: 3.0,
            radius_max: 7.0,
            eccentricity_min: 0.0,
            eccentricity_max: 0.8,
            allow_touching: false,
            class_weights: [1.0; NUM_CLASSES],
            seed: 0,
            n_directions: 4,
            max_attempts: 1000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.radius_min >= 2.0
            && self.radius_max >= self.radius_min
            && self.radius_max.is_finite())
        {
            return bad(format!(
                "radius range [{}, {}] must satisfy 2 <= min <= max",
                self.radius_min, self.radius_max
            ));
        }
        let ecc_ok = |e: f64| (0.0..1.0).contains(&e);
        if !(ecc_ok(self.eccentricity_min)
            && ecc_ok(self.eccentricity_max)
            && self.eccentricity_min <= self.eccentricity_max)
        {
            return bad(format!(
                "eccentricity range [{}, {}] must lie in [0, 1)",
                self.eccentricity_min, self.eccentricity_max
            ));
        }
        if self
            .class_weights
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0)
            || self.class_weights.iter().sum::<f64>() <= 0.0
        {
            return bad(format!(
                "class weights {:?} must be >= 0, not all zero",
                self.class_weights
            ));
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive".into());
        }
        DirectionConfig::new(self.n_directions)?;
        // the largest possible ellipse must fit
        let (a, _) = semi_axes(self.radius_max, self.eccentricity_max);
        let span = 2.0 * a.ceil() + 1.0;
        if self.n_nuclei > 0 && (span > self.height as f64 || span > self.width as f64) {
            return bad(format!(
                "a nucleus of radius {} does not fit in {}x{}",
                self.radius_max, self.height, self.width
            ));
        }
        Ok(())
    }
}

/// Ground truth for one synthetic image.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthBundle {
    pub instances: InstanceMap,
    pub classes: ClassMap,
    pub directions: DirectionMap,
    pub counts: CountVector,
}

/// A bundle with exactly two touching instances.
#[derive(Debug, Clone, PartialEq)]
pub struct TouchingPair {
    pub bundle: SynthBundle,
    /// The direction-class-0 pixels form exactly two connected components
    /// (4-connectivity), one inside each instance.
    pub class0_separated: bool,
}

struct Sampler(ChaCha8Rng);

impl Sampler {
    fn new(seed: u64) -> Self {
        Sampler(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)`.
    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Class ID in `1..=6` drawn from the weights.
    fn class(&mut self, weights: &[f64; NUM_CLASSES]) -> u8 {
        let total: f64 = weights.iter().sum();
        let x = self.unit() * total;
        let mut acc = 0.0;
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if x < acc && *w > 0.0 {
                return k as u8 + 1;
            }
        }
        // rounding at the top end: last class with positive weight
        weights.iter().rposition(|w| *w > 0.0).unwrap() as u8 + 1
    }
}

fn semi_axes(radius: f64, eccentricity: f64) -> (f64, f64) {
    let s = (1.0 - eccentricity * eccentricity).sqrt().sqrt();
    (radius / s, radius * s)
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    center_row: f64,
    center_col: f64,
    a: f64,
    b: f64,
    theta: f64,
}

impl Ellipse {
    /// Half extents of the axis-aligned bounding box, `(rows, cols)`.
    fn extents(&self) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let ex = ((self.a * c).powi(2) + (self.b * s).powi(2)).sqrt();
        let ey = ((self.a * s).powi(2) + (self.b * c).powi(2)).sqrt();
        (ey, ex)
    }

    fn contains(&self, row: f64, col: f64) -> bool {
        let (s, c) = self.theta.sin_cos();
        let dx = col - self.center_col;
        let dy = row - self.center_row;
        let u = (dx * c + dy * s) / self.a;
        let v = (-dx * s + dy * c) / self.b;
        u * u + v * v <= 1.0
    }

    /// Pixels with centers inside, raster order, clipped to the image.
    fn rasterize(&self, height: usize, width: usize) -> Vec<Pixel> {
        let (ey, ex) = self.extents();
        let r0 = (self.center_row - ey).floor().max(0.0) as usize;
        let r1 = ((self.center_row + ey).ceil().max(0.0) as usize).min(height.saturating_sub(1));
        let c0 = (self.center_col - ex).floor().max(0.0) as usize;
        let c1 = ((self.center_col + ex).ceil().max(0.0) as usize).min(width.saturating_sub(1));
        let mut out = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                if self.contains(r as f64, c as f64) {
                    out.push((r, c));
                }
            }
        }
        out
    }
}

fn sample_shape(rng: &mut Sampler, cfg: &SynthConfig) -> (f64, f64, f64) {
    let r = rng.range(cfg.radius_min, cfg.radius_max);
    let e = rng.range(cfg.eccentricity_min, cfg.eccentricity_max);
    let theta = rng.range(0.0, std::f64::consts::PI);
    let (a, b) = semi_axes(r, e);
    (a, b, theta)
}

/// Random ellipse fully inside the image, or `None` if it cannot fit.
fn sample_ellipse(rng: &mut Sampler, cfg: &SynthConfig) -> Option<Ellipse> {
    let (a, b, theta) = sample_shape(rng, cfg);
    let mut e = Ellipse {
        center_row: 0.0,
        center_col: 0.0,
        a,
        b,
        theta,
    };
    let (ey, ex) = e.extents();
    let (hmax, wmax) = (cfg.height as f64 - 1.0 - ey, cfg.width as f64 - 1.0 - ex);
    if hmax < ey || wmax < ex {
        return None;
    }
    e.center_row = rng.range(ey, hmax);
    e.center_col = rng.range(ex, wmax);
    Some(e)
}

fn is_connected(pixels: &[Pixel], height: usize, width: usize) -> bool {
    if pixels.is_empty() {
        return false;
    }
    let mut mask = Grid::new(height, width, false);
    for &(r, c) in pixels {
        mask.set(r, c, true);
    }
    connected_components(&mask, Connectivity::Four).len() == 1
}

/// True when any pixel of `pixels` is on or 8-adjacent to a labelled pixel.
fn touches_any(inst: &InstanceMap, pixels: &[Pixel]) -> bool {
    let (h, w) = inst.dims();
    pixels.iter().any(|&p| {
        inst.get(p.0, p.1) != 0
            || Connectivity::Eight
                .neighbors(p, h, w)
                .any(|q| inst.get(q.0, q.1) != 0)
    })
}

/// Pixels of `pixels` with a 4-neighbor outside the set (or outside the image).
fn rim(pixels: &[Pixel], height: usize, width: usize) -> std::collections::HashSet<Pixel> {
    let set: std::collections::HashSet<Pixel> = pixels.iter().copied().collect();
    pixels
        .iter()
        .copied()
        .filter(|&(r, c)| {
            r == 0
                || c == 0
                || r + 1 == height
                || c + 1 == width
                || Connectivity::Four
                    .neighbors((r, c), height, width)
                    .any(|q| !set.contains(&q))
        })
        .collect()
}

/// Candidate pixels minus already-labelled ones, if the overlap is confined
/// to the candidate's rim and what remains is connected.
fn yield_to_existing(inst: &InstanceMap, pixels: &[Pixel]) -> Option<Vec<Pixel>> {
    let (h, w) = inst.dims();
    let rim = rim(pixels, h, w);
    let mut kept = Vec::with_capacity(pixels.len());
    for &p in pixels {
        if inst.get(p.0, p.1) == 0 {
            kept.push(p);
        } else if !rim.contains(&p) {
            return None;
        }
    }
    is_connected(&kept, h, w).then_some(kept)
}

fn finish(inst: InstanceMap, classes_of: &[u8], n_directions: u8) -> Result<SynthBundle> {
    let (h, w) = inst.dims();
    let mut classes = ClassMap::new(h, w);
    let mut counts = [0.0; NUM_CLASSES];
    for &cls in classes_of {
        counts[cls as usize - 1] += 1.0;
    }
    for ((r, c), id) in inst.grid().iter() {
        if id != 0 {
            classes.set(r, c, classes_of[id as usize - 1]);
        }
    }
    let directions = encode_direction_map(&inst, &DirectionConfig::new(n_directions)?)?;
    Ok(SynthBundle {
        instances: inst,
        classes,
        directions,
        counts: CountVector(counts),
    })
}

/// Generates one bundle. Instances are numbered 1.. in placement order.
pub fn generate(cfg: &SynthConfig) -> Result<SynthBundle> {
    cfg.validate()?;
    if cfg.n_nuclei > u16::MAX as usize {
        return Err(Error::TooManyInstances);
    }
    let dir_cfg = DirectionConfig::new(cfg.n_directions)?;
    let mut rng = Sampler::new(cfg.seed);
    let (h, w) = (cfg.height, cfg.width);
    let mut inst = InstanceMap::new(h, w);
    let mut classes_of = Vec::with_capacity(cfg.n_nuclei);
    for i in 0..cfg.n_nuclei {
        let id = i as u16 + 1;
        let mut placed = None;
        for _ in 0..cfg.max_attempts {
            let Some(e) = sample_ellipse(&mut rng, cfg) else {
                continue;
            };
            let pixels = e.rasterize(h, w);
            if !is_connected(&pixels, h, w) {
                continue;
            }
            let kept = if cfg.allow_touching {
                yield_to_existing(&inst, &pixels)
            } else {
                (!touches_any(&inst, &pixels)).then_some(pixels)
            };
            if kept
                .as_deref()
                .is_some_and(|k| sectors_form_chain(k, &dir_cfg))
            {
                placed = kept;
                break;
            }
        }
        let pixels = placed.ok_or_else(|| {
            Error::PackingFailed(format!(
                "nucleus {} of {} not placed after {} attempts",
                i + 1,
                cfg.n_nuclei,
                cfg.max_attempts
            ))
        })?;
        for (r, c) in pixels {
            inst.set(r, c, id);
        }
        classes_of.push(rng.class(&cfg.class_weights));
    }
    finish(inst, &classes_of, cfg.n_directions)
}

fn four_adjacent(inst: &InstanceMap, a: u16, b: u16) -> bool {
    let (h, w) = inst.dims();
    inst.grid().iter().any(|(p, v)| {
        v == a
            && Connectivity::Four
                .neighbors(p, h, w)
                .any(|q| inst.get(q.0, q.1) == b)
    })
}

fn class0_separated(bundle: &SynthBundle) -> bool {
    let mask = bundle.directions.grid().map(|d| d == 0);
    let comps = connected_components(&mask, Connectivity::Four);
    if comps.len() != 2 {
        return false;
    }
    let owners: Vec<Option<u16>> = comps
        .iter()
        .map(|comp| {
            let id = bundle.instances.get(comp[0].0, comp[0].1);
            comp.iter()
                .all(|p| bundle.instances.get(p.0, p.1) == id)
                .then_some(id)
        })
        .collect();
    matches!(owners[..], [Some(x), Some(y)] if x != y)
}

/// Two ellipses pushed together until they share a 4-adjacent boundary.
///
/// Uses the image size, radius, eccentricity, class weights, direction count,
/// seed and attempt budget of `cfg`.
pub fn generate_touching_pair(cfg: &SynthConfig) -> Result<TouchingPair> {
    let cfg = SynthConfig {
        n_nuclei: 2,
        allow_touching: true,
        ..cfg.clone()
    };
    cfg.validate()?;
    let dir_cfg = DirectionConfig::new(cfg.n_directions)?;
    let mut rng = Sampler::new(cfg.seed);
    let (h, w) = (cfg.height, cfg.width);
    for _ in 0..cfg.max_attempts {
        let (a1, b1, t1) = sample_shape(&mut rng, &cfg);
        let (a2, b2, t2) = sample_shape(&mut rng, &cfg);
        let phi = rng.range(0.0, 2.0 * std::f64::consts::PI);
        let first = Ellipse {
            center_row: (h as f64 - 1.0) / 2.0 + rng.range(-0.5, 0.5),
            center_col: (w as f64 - 1.0) / 2.0 + rng.range(-0.5, 0.5),
            a: a1,
            b: b1,
            theta: t1,
        };
        let first_px = first.rasterize(h, w);
        if !is_connected(&first_px, h, w) || !sectors_form_chain(&first_px, &dir_cfg) {
            continue;
        }
        let mut inst = InstanceMap::new(h, w);
        for &(r, c) in &first_px {
            inst.set(r, c, 1);
        }
        // slide the second ellipse in from a distance until it touches
        let (dr, dc) = (-phi.sin(), phi.cos());
        let mut dist = a1 + a2 + 2.0;
        let mut second_px = None;
        while dist > 0.0 {
            let e = Ellipse {
                center_row: first.center_row + dist * dr,
                center_col: first.center_col + dist * dc,
                a: a2,
                b: b2,
                theta: t2,
            };
            let (ey, ex) = e.extents();
            if e.center_row - ey < 0.0
                || e.center_col - ex < 0.0
                || e.center_row + ey > h as f64 - 1.0
                || e.center_col + ex > w as f64 - 1.0
            {
                break;
            }
            let px = e.rasterize(h, w);
            if touches_any(&inst, &px) {
                second_px = Some(px);
                break;
            }
            dist -= 0.25;
        }
        let Some(px) = second_px else { continue };
        if !is_connected(&px, h, w) {
            continue;
        }
        let Some(kept) = yield_to_existing(&inst, &px) else {
            continue;
        };
        if !sectors_form_chain(&kept, &dir_cfg) {
            continue;
        }
        for &(r, c) in &kept {
            inst.set(r, c, 2);
        }
        if !four_adjacent(&inst, 1, 2) {
            continue;
        }
        let classes_of = [rng.class(&cfg.class_weights), rng.class(&cfg.class_weights)];
        let bundle = finish(inst, &classes_of, cfg.n_directions)?;
        let class0_separated = class0_separated(&bundle);
        return Ok(TouchingPair {
            bundle,
            class0_separated,
        });
    }
    Err(Error::PackingFailed(format!(
        "no touching pair after {} attempts",
        cfg.max_attempts
    )))
}
