//! Instance reconstruction from segmentation and direction maps.
//!
//! The sweep runs over direction classes `0..N`. Connected regions of class 0
//! seed new instances. Each connected region of class `k > 0` joins the
//! instance owning the most 4- (or 8-) adjacent pixel pairs of class `k - 1`,
//! ties going to the smaller index, or seeds a new instance when it touches
//! no class `k - 1` pixel. Regions are visited in raster order of their first
//! pixel and fresh indices are handed out in that order starting at 1.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::{
    ClassMap, CountVector, DirectionMap, Grid, InstanceMap, Pixel, ProbTensor, MAX_CLASS_ID,
    NUM_CLASSES,
};

/// Number of channels of the segmentation/classification output.
pub const SEG_CHANNELS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[default]
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }

    /// In-bounds neighbors of `p` in a `height x width` grid.
    pub fn neighbors(self, p: Pixel, height: usize, width: usize) -> impl Iterator<Item = Pixel> {
        self.offsets().iter().filter_map(move |&(dr, dc)| {
            let r = p.0.checked_add_signed(dr)?;
            let c = p.1.checked_add_signed(dc)?;
            (r < height && c < width).then_some((r, c))
        })
    }
}

impl std::str::FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            other => Err(Error::InvalidConfig(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    pub connectivity: Connectivity,
    pub n_directions: u8,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            connectivity: Connectivity::Four,
            n_directions: 4,
        }
    }
}

/// Instance map plus per-instance nucleus classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanopticResult {
    pub instances: InstanceMap,
    /// Every instance painted uniformly with its class.
    pub classes: ClassMap,
    pub per_instance_class: BTreeMap<u16, u8>,
}

impl PanopticResult {
    pub fn dims(&self) -> (usize, usize) {
        self.instances.dims()
    }
}

/// Per-pixel index of the largest channel; ties go to the smallest index.
pub fn argmax_channels(tensor: &ProbTensor) -> Grid<usize> {
    let (h, w) = tensor.dims();
    let mut out = Grid::new(h, w, 0usize);
    for r in 0..h {
        for c in 0..w {
            let px = tensor.pixel(r, c);
            let mut best = 0;
            for (k, &v) in px.iter().enumerate().skip(1) {
                if v > px[best] {
                    best = k;
                }
            }
            out.set(r, c, best);
        }
    }
    out
}

/// Hard class and direction maps from the two network outputs.
///
/// Direction channels are only read where the class map is foreground.
pub fn maps_from_outputs(seg: &ProbTensor, dir: &ProbTensor) -> Result<(ClassMap, DirectionMap)> {
    if seg.channels() != SEG_CHANNELS {
        return Err(Error::ShapeMismatch(format!(
            "segmentation output has {} channels, expected {SEG_CHANNELS}",
            seg.channels()
        )));
    }
    if seg.dims() != dir.dims() {
        return Err(Error::ShapeMismatch(format!(
            "segmentation output is {:?}, direction output is {:?}",
            seg.dims(),
            dir.dims()
        )));
    }
    let n = u8::try_from(dir.channels())
        .ok()
        .filter(|n| (2..=254).contains(n))
        .ok_or_else(|| {
            Error::ShapeMismatch(format!("direction output has {} channels", dir.channels()))
        })?;
    let (h, w) = seg.dims();
    let seg_arg = argmax_channels(seg);
    let dir_arg = argmax_channels(dir);
    let classes = ClassMap::from_vec(h, w, seg_arg.as_slice().iter().map(|&k| k as u8).collect())?;
    let mut directions = DirectionMap::new(h, w, n)?;
    for ((r, c), k) in seg_arg.iter() {
        if k != 0 {
            directions.set(r, c, Some(dir_arg.get(r, c) as u8));
        }
    }
    Ok((classes, directions))
}

/// Labels connected `true` regions 1.. in raster order of their first pixel.
fn label_components(mask: &Grid<bool>, connectivity: Connectivity) -> (Grid<u32>, u32) {
    let (h, w) = mask.dims();
    let mut labels = Grid::new(h, w, 0u32);
    let mut next = 0;
    let mut stack = Vec::new();
    for (start, on) in mask.iter() {
        if !on || labels.get(start.0, start.1) != 0 {
            continue;
        }
        next += 1;
        labels.set(start.0, start.1, next);
        stack.push(start);
        while let Some(p) = stack.pop() {
            for q in connectivity.neighbors(p, h, w) {
                if mask.get(q.0, q.1) && labels.get(q.0, q.1) == 0 {
                    labels.set(q.0, q.1, next);
                    stack.push(q);
                }
            }
        }
    }
    (labels, next)
}

/// Maximal connected sets of `true` pixels, ordered by their first pixel in
/// raster order. Each set is itself in raster order.
pub fn connected_components(mask: &Grid<bool>, connectivity: Connectivity) -> Vec<Vec<Pixel>> {
    let (labels, count) = label_components(mask, connectivity);
    let mut out = vec![Vec::new(); count as usize];
    for (p, l) in labels.iter() {
        if l != 0 {
            out[l as usize - 1].push(p);
        }
    }
    out
}

fn check_same_dims(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("{what}: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// Runs the direction-class sweep and returns the instance map.
pub fn reconstruct_instances(
    classes: &ClassMap,
    directions: &DirectionMap,
    config: &ReconstructionConfig,
) -> Result<InstanceMap> {
    check_same_dims(
        classes.dims(),
        directions.dims(),
        "class map vs direction map",
    )?;
    if config.n_directions != directions.n_directions() {
        return Err(Error::InvalidConfig(format!(
            "configured for {} directions, direction map has {}",
            config.n_directions,
            directions.n_directions()
        )));
    }
    let (h, w) = classes.dims();
    for r in 0..h {
        for c in 0..w {
            if (classes.get(r, c) == 0) != directions.get(r, c).is_none() {
                return Err(Error::InconsistentBackground { row: r, col: c });
            }
        }
    }

    let mut instances = InstanceMap::new(h, w);
    let mut next_index: u32 = 1;
    let mut adjacency: BTreeMap<u16, usize> = BTreeMap::new();
    for k in 0..config.n_directions {
        let mask = directions.grid().map(|d| d == k);
        for component in connected_components(&mask, config.connectivity) {
            let mut target = None;
            if k > 0 {
                adjacency.clear();
                for &p in &component {
                    for q in config.connectivity.neighbors(p, h, w) {
                        let owner = instances.get(q.0, q.1);
                        if owner != 0 && directions.get(q.0, q.1) == Some(k - 1) {
                            *adjacency.entry(owner).or_default() += 1;
                        }
                    }
                }
                // max pair count, smallest index on ties (BTreeMap iterates ascending)
                target = adjacency
                    .iter()
                    .fold(None, |best: Option<(u16, usize)>, (&id, &n)| match best {
                        Some((_, m)) if m >= n => best,
                        _ => Some((id, n)),
                    })
                    .map(|(id, _)| id);
            }
            let id = match target {
                Some(id) => id,
                None => {
                    let id = u16::try_from(next_index).map_err(|_| Error::TooManyInstances)?;
                    next_index += 1;
                    id
                }
            };
            for &(r, c) in &component {
                instances.set(r, c, id);
            }
        }
    }
    Ok(instances)
}

/// Majority-vote class per instance; ties go to the smallest class ID.
pub fn assign_classes(instances: &InstanceMap, classes: &ClassMap) -> Result<PanopticResult> {
    check_same_dims(
        instances.dims(),
        classes.dims(),
        "instance map vs class map",
    )?;
    let mut votes: BTreeMap<u16, [usize; MAX_CLASS_ID as usize + 1]> = BTreeMap::new();
    for ((r, c), id) in instances.grid().iter() {
        if id == 0 {
            continue;
        }
        let cls = classes.get(r, c);
        if cls == 0 {
            return Err(Error::InstanceOnBackground {
                instance: id,
                row: r,
                col: c,
            });
        }
        votes.entry(id).or_insert([0; MAX_CLASS_ID as usize + 1])[cls as usize] += 1;
    }
    let per_instance_class: BTreeMap<u16, u8> = votes
        .into_iter()
        .map(|(id, v)| {
            let mut best = 1;
            for cls in 2..=MAX_CLASS_ID as usize {
                if v[cls] > v[best] {
                    best = cls;
                }
            }
            (id, best as u8)
        })
        .collect();
    let (h, w) = instances.dims();
    let mut painted = ClassMap::new(h, w);
    for ((r, c), id) in instances.grid().iter() {
        if id != 0 {
            painted.set(r, c, per_instance_class[&id]);
        }
    }
    Ok(PanopticResult {
        instances: instances.clone(),
        classes: painted,
        per_instance_class,
    })
}

/// Full decode of hard maps: sweep, then class assignment.
pub fn decode_maps(
    classes: &ClassMap,
    directions: &DirectionMap,
    config: &ReconstructionConfig,
) -> Result<PanopticResult> {
    let instances = reconstruct_instances(classes, directions, config)?;
    assign_classes(&instances, classes)
}

/// Negative counts become 0; the rest round to the nearest integer, halves away from zero.
pub fn postprocess_counts(raw: &CountVector) -> Result<CountVector> {
    raw.check_finite()?;
    Ok(CountVector(raw.0.map(|v| {
        if v < 0.0 {
            0.0
        } else {
            v.round() + 0.0
        }
    })))
}

/// Number of instances of each class.
pub fn counts_from_instances(result: &PanopticResult) -> CountVector {
    let mut counts = [0.0; NUM_CLASSES];
    for &cls in result.per_instance_class.values() {
        counts[cls as usize - 1] += 1.0;
    }
    CountVector(counts)
}
