//! Shared data model and on-disk formats.
//!
//! * Label maps ([`InstanceMap`], [`ClassMap`], [`DirectionMap`]) are stored as
//!   single-channel grayscale PNG: 16-bit for instance maps, 8-bit for class and
//!   direction maps.
//! * Probability tensors ([`ProbTensor`]) are stored as a raw little-endian
//!   `f32` payload in channel-last, row-major order, with a JSON sidecar
//!   header `{"height": .., "width": .., "channels": ..}` at `<payload>.json`.
//! * Count vectors are stored as CSV with the header
//!   `image,neutrophil,epithelial,lymphocyte,plasma,eosinophil,connective`.
//!
//! Class IDs: 0 background, 1 neutrophil, 2 epithelial, 3 lymphocyte,
//! 4 plasma, 5 eosinophil, 6 connective.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(row, col)` pixel coordinate.
pub type Pixel = (usize, usize);

/// Number of nucleus classes, background excluded.
pub const NUM_CLASSES: usize = 6;

/// Largest valid class ID.
pub const MAX_CLASS_ID: u8 = 6;

/// Nucleus class names indexed by `class_id - 1`.
pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "neutrophil",
    "epithelial",
    "lymphocyte",
    "plasma",
    "eosinophil",
    "connective",
];

/// Background value of a [`DirectionMap`].
pub const DIRECTION_SENTINEL: u8 = 255;

/// Per-pixel tolerance on channel sums for normalized tensors.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-5;

/// Dense row-major 2-D grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(height: usize, width: usize, fill: T) -> Self {
        Grid {
            height,
            width,
            data: vec![fill; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width} grid",
                data.len()
            )));
        }
        Ok(Grid {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Iterates `((row, col), value)` in raster order.
    pub fn iter(&self) -> impl Iterator<Item = (Pixel, T)> + '_ {
        let w = self.width.max(1);
        self.data
            .iter()
            .enumerate()
            .map(move |(i, &v)| ((i / w, i % w), v))
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Instance segmentation: 0 is background, 1..=65535 index instances.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InstanceMap(Grid<u16>);

impl InstanceMap {
    pub fn new(height: usize, width: usize) -> Self {
        InstanceMap(Grid::new(height, width, 0))
    }

    pub fn from_vec(height: usize, width: usize, labels: Vec<u16>) -> Result<Self> {
        Grid::from_vec(height, width, labels).map(InstanceMap)
    }

    pub fn grid(&self) -> &Grid<u16> {
        &self.0
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.0.get(row, col)
    }

    pub fn set(&mut self, row: usize, col: usize, id: u16) {
        self.0.set(row, col, id)
    }

    pub fn labels(&self) -> &[u16] {
        self.0.as_slice()
    }

    /// Sorted, deduplicated nonzero instance indices.
    pub fn instance_ids(&self) -> Vec<u16> {
        let mut seen = vec![false; u16::MAX as usize + 1];
        for &v in self.labels() {
            seen[v as usize] = true;
        }
        (1..=u16::MAX).filter(|&i| seen[i as usize]).collect()
    }

    /// Pixel set of every instance, each in raster order, keyed by index.
    pub fn pixel_sets(&self) -> std::collections::BTreeMap<u16, Vec<Pixel>> {
        let mut sets = std::collections::BTreeMap::<u16, Vec<Pixel>>::new();
        for (p, v) in self.0.iter() {
            if v != 0 {
                sets.entry(v).or_default().push(p);
            }
        }
        sets
    }

    pub fn foreground(&self) -> Grid<bool> {
        self.0.map(|v| v != 0)
    }
}

/// Semantic classification, values in `0..=6`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassMap(Grid<u8>);

impl ClassMap {
    pub fn new(height: usize, width: usize) -> Self {
        ClassMap(Grid::new(height, width, 0))
    }

    pub fn from_vec(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        let grid = Grid::from_vec(height, width, labels)?;
        if let Some(((row, col), v)) = grid.iter().find(|&(_, v)| v > MAX_CLASS_ID) {
            return Err(Error::LabelOutOfRange {
                what: "class ID",
                value: v as u32,
                row,
                col,
            });
        }
        Ok(ClassMap(grid))
    }

    pub fn grid(&self) -> &Grid<u8> {
        &self.0
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.0.get(row, col)
    }

    /// Panics if `class_id > 6`.
    pub fn set(&mut self, row: usize, col: usize, class_id: u8) {
        assert!(class_id <= MAX_CLASS_ID, "class ID {class_id} out of range");
        self.0.set(row, col, class_id)
    }

    pub fn labels(&self) -> &[u8] {
        self.0.as_slice()
    }

    pub fn foreground(&self) -> Grid<bool> {
        self.0.map(|v| v != 0)
    }
}

/// Quantized direction classes on foreground, [`DIRECTION_SENTINEL`] on background.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DirectionMap {
    grid: Grid<u8>,
    n_directions: u8,
}

impl DirectionMap {
    /// All-background map.
    pub fn new(height: usize, width: usize, n_directions: u8) -> Result<Self> {
        check_n_directions(n_directions)?;
        Ok(DirectionMap {
            grid: Grid::new(height, width, DIRECTION_SENTINEL),
            n_directions,
        })
    }

    pub fn from_vec(
        height: usize,
        width: usize,
        n_directions: u8,
        labels: Vec<u8>,
    ) -> Result<Self> {
        check_n_directions(n_directions)?;
        let grid = Grid::from_vec(height, width, labels)?;
        if let Some(((row, col), v)) = grid
            .iter()
            .find(|&(_, v)| v != DIRECTION_SENTINEL && v >= n_directions)
        {
            return Err(Error::LabelOutOfRange {
                what: "direction class",
                value: v as u32,
                row,
                col,
            });
        }
        Ok(DirectionMap { grid, n_directions })
    }

    pub fn grid(&self) -> &Grid<u8> {
        &self.grid
    }

    pub fn n_directions(&self) -> u8 {
        self.n_directions
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    /// `None` on background.
    pub fn get(&self, row: usize, col: usize) -> Option<u8> {
        match self.grid.get(row, col) {
            DIRECTION_SENTINEL => None,
            d => Some(d),
        }
    }

    /// Panics if `direction >= n_directions`.
    pub fn set(&mut self, row: usize, col: usize, direction: Option<u8>) {
        let v = match direction {
            Some(d) => {
                assert!(d < self.n_directions, "direction {d} out of range");
                d
            }
            None => DIRECTION_SENTINEL,
        };
        self.grid.set(row, col, v)
    }

    pub fn labels(&self) -> &[u8] {
        self.grid.as_slice()
    }

    pub fn foreground(&self) -> Grid<bool> {
        self.grid.map(|v| v != DIRECTION_SENTINEL)
    }
}

fn check_n_directions(n: u8) -> Result<()> {
    if n < 2 || n == DIRECTION_SENTINEL {
        return Err(Error::InvalidConfig(format!(
            "number of directions must be in 2..=254, got {n}"
        )));
    }
    Ok(())
}

/// `height x width x channels` stack of real values, channel-last.
///
/// Values are held as `f64` in memory and stored as `f32` on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbTensor {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

impl ProbTensor {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        ProbTensor {
            height,
            width,
            channels,
            values: vec![0.0; height * width * channels],
        }
    }

    pub fn from_vec(
        height: usize,
        width: usize,
        channels: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width}x{channels} tensor",
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(ProbTensor {
            height,
            width,
            channels,
            values,
        })
    }

    /// Same value in every channel of every pixel.
    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        ProbTensor {
            height,
            width,
            channels,
            values: vec![value; height * width * channels],
        }
    }

    /// One-hot encoding of per-pixel channel indices.
    pub fn one_hot(
        height: usize,
        width: usize,
        channels: usize,
        index: impl Fn(usize, usize) -> usize,
    ) -> Self {
        let mut t = ProbTensor::zeros(height, width, channels);
        for r in 0..height {
            for c in 0..width {
                let k = index(r, c);
                t.set(r, c, k, 1.0);
            }
        }
        t
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[(row * self.width + col) * self.channels + channel]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        self.values[(row * self.width + col) * self.channels + channel] = value;
    }

    /// Channel values of one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.values[start..start + self.channels]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Checks that every pixel is a probability distribution over channels.
    pub fn check_normalized(&self) -> Result<()> {
        for r in 0..self.height {
            for c in 0..self.width {
                let px = self.pixel(r, c);
                if let Some(v) = px.iter().find(|v| **v < 0.0) {
                    return Err(Error::NotNormalized {
                        row: r,
                        col: c,
                        reason: format!("negative value {v}"),
                    });
                }
                let sum: f64 = px.iter().sum();
                if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                    return Err(Error::NotNormalized {
                        row: r,
                        col: c,
                        reason: format!("channel sum {sum}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Per-class nucleus counts, ordered by class ID 1..=6.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CountVector(pub [f64; NUM_CLASSES]);

impl CountVector {
    pub fn zeros() -> Self {
        CountVector([0.0; NUM_CLASSES])
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.0.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    /// Count for a class ID in `1..=6`.
    pub fn class(&self, class_id: u8) -> f64 {
        self.0[class_id as usize - 1]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Which label map a PNG holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Instance,
    Class,
    /// Direction map with the given number of direction classes.
    Direction(u8),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelMap {
    Instance(InstanceMap),
    Class(ClassMap),
    Direction(DirectionMap),
}

impl From<InstanceMap> for LabelMap {
    fn from(m: InstanceMap) -> Self {
        LabelMap::Instance(m)
    }
}

impl From<ClassMap> for LabelMap {
    fn from(m: ClassMap) -> Self {
        LabelMap::Class(m)
    }
}

impl From<DirectionMap> for LabelMap {
    fn from(m: DirectionMap) -> Self {
        LabelMap::Direction(m)
    }
}

struct RawGray {
    height: usize,
    width: usize,
    bit_depth: u8,
    samples: Vec<u16>,
}

fn read_gray_png(path: &Path) -> Result<RawGray> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decode_err = |e: png::DecodingError| Error::PngDecode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(decode_err)?;
    let info = reader.info();
    let (color, depth) = (info.color_type, info.bit_depth);
    let (width, height) = (info.width as usize, info.height as usize);
    let bit_depth = match (color, depth) {
        (png::ColorType::Grayscale, png::BitDepth::Eight) => 8,
        (png::ColorType::Grayscale, png::BitDepth::Sixteen) => 16,
        _ => {
            return Err(Error::WrongPixelFormat {
                path: path.to_path_buf(),
                expected: 0,
                found: format!("{color:?} {depth:?}"),
            })
        }
    };
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader.next_frame(&mut buf).map_err(decode_err)?;
    let line = frame.line_size;
    let mut samples = Vec::with_capacity(width * height);
    for r in 0..height {
        let row = &buf[r * line..(r + 1) * line];
        if bit_depth == 8 {
            samples.extend(row[..width].iter().map(|&b| b as u16));
        } else {
            samples.extend(
                row[..2 * width]
                    .chunks_exact(2)
                    .map(|b| u16::from_be_bytes([b[0], b[1]])),
            );
        }
    }
    Ok(RawGray {
        height,
        width,
        bit_depth,
        samples,
    })
}

fn write_gray_png(
    path: &Path,
    height: usize,
    width: usize,
    bit_depth: u8,
    bytes: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let encode_err = |e: png::EncodingError| Error::PngEncode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(if bit_depth == 16 {
        png::BitDepth::Sixteen
    } else {
        png::BitDepth::Eight
    });
    let mut writer = encoder.write_header().map_err(encode_err)?;
    writer.write_image_data(bytes).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}

/// Reads a label map PNG and validates it against `kind`.
pub fn read_label_map(path: impl AsRef<Path>, kind: LabelKind) -> Result<LabelMap> {
    let path = path.as_ref();
    let raw = read_gray_png(path)?;
    let expected = if kind == LabelKind::Instance { 16 } else { 8 };
    if raw.bit_depth != expected {
        return Err(Error::WrongPixelFormat {
            path: path.to_path_buf(),
            expected,
            found: format!("{}-bit grayscale", raw.bit_depth),
        });
    }
    let RawGray {
        height,
        width,
        samples,
        ..
    } = raw;
    Ok(match kind {
        LabelKind::Instance => LabelMap::Instance(InstanceMap::from_vec(height, width, samples)?),
        LabelKind::Class => LabelMap::Class(ClassMap::from_vec(
            height,
            width,
            samples.into_iter().map(|v| v as u8).collect(),
        )?),
        LabelKind::Direction(n) => LabelMap::Direction(DirectionMap::from_vec(
            height,
            width,
            n,
            samples.into_iter().map(|v| v as u8).collect(),
        )?),
    })
}

pub fn read_instance_map(path: impl AsRef<Path>) -> Result<InstanceMap> {
    match read_label_map(path, LabelKind::Instance)? {
        LabelMap::Instance(m) => Ok(m),
        _ => unreachable!(),
    }
}

pub fn read_class_map(path: impl AsRef<Path>) -> Result<ClassMap> {
    match read_label_map(path, LabelKind::Class)? {
        LabelMap::Class(m) => Ok(m),
        _ => unreachable!(),
    }
}

pub fn read_direction_map(path: impl AsRef<Path>, n_directions: u8) -> Result<DirectionMap> {
    match read_label_map(path, LabelKind::Direction(n_directions))? {
        LabelMap::Direction(m) => Ok(m),
        _ => unreachable!(),
    }
}

/// Writes a label map as grayscale PNG (16-bit for instances, 8-bit otherwise).
pub fn write_label_map(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match map {
        LabelMap::Instance(m) => {
            let bytes: Vec<u8> = m.labels().iter().flat_map(|v| v.to_be_bytes()).collect();
            write_gray_png(path, m.height(), m.width(), 16, &bytes)
        }
        LabelMap::Class(m) => write_gray_png(path, m.height(), m.width(), 8, m.labels()),
        LabelMap::Direction(m) => write_gray_png(path, m.height(), m.width(), 8, m.labels()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorHeader {
    height: usize,
    width: usize,
    channels: usize,
}

/// Path of the JSON header that accompanies a tensor payload.
pub fn tensor_header_path(payload: impl AsRef<Path>) -> PathBuf {
    let mut s = payload.as_ref().as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Reads a tensor payload and its `<path>.json` header.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<ProbTensor> {
    let path = path.as_ref();
    let header_path = tensor_header_path(path);
    let header_text =
        std::fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: TensorHeader =
        serde_json::from_str(&header_text).map_err(|e| Error::TensorHeader {
            path: header_path.clone(),
            message: e.to_string(),
        })?;
    let expected = (header.height * header.width * header.channels * 4) as u64;
    let mut payload = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut payload))
        .map_err(|e| Error::io(path, e))?;
    if payload.len() as u64 != expected {
        return Err(Error::PayloadSize {
            path: path.to_path_buf(),
            expected,
            found: payload.len() as u64,
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    ProbTensor::from_vec(header.height, header.width, header.channels, values)
}

/// Writes the `f32` payload to `path` and the header to `<path>.json`.
///
/// Values are rounded to the nearest `f32`.
pub fn write_tensor(tensor: &ProbTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(index) = tensor.values.iter().position(|v| !(*v as f32).is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let header = TensorHeader {
        height: tensor.height,
        width: tensor.width,
        channels: tensor.channels,
    };
    let header_path = tensor_header_path(path);
    let json = serde_json::to_string(&header).expect("header serializes");
    std::fs::write(&header_path, json).map_err(|e| Error::io(&header_path, e))?;
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for v in &tensor.values {
        out.write_all(&(*v as f32).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Header line of every counts CSV.
pub const COUNTS_HEADER: [&str; 7] = [
    "image",
    "neutrophil",
    "epithelial",
    "lymphocyte",
    "plasma",
    "eosinophil",
    "connective",
];

/// Reads `(image id, counts)` rows in file order.
pub fn read_counts(path: impl AsRef<Path>) -> Result<Vec<(String, CountVector)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_counts(file, path)
}

fn parse_counts(source: impl Read, path: &Path) -> Result<Vec<(String, CountVector)>> {
    let err = |row: usize, message: String| Error::CountsCsv {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = reader.records();
    match records.next() {
        None => return Err(err(1, "missing header".into())),
        Some(Err(e)) => return Err(err(1, e.to_string())),
        Some(Ok(h)) => {
            let fields: Vec<&str> = h.iter().map(str::trim).collect();
            if fields != COUNTS_HEADER {
                return Err(err(
                    1,
                    format!("expected header `{}`", COUNTS_HEADER.join(",")),
                ));
            }
        }
    }
    let mut out = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| err(row, e.to_string()))?;
        if rec.len() != COUNTS_HEADER.len() {
            return Err(err(
                row,
                format!(
                    "expected {} columns, found {}",
                    COUNTS_HEADER.len(),
                    rec.len()
                ),
            ));
        }
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(err(row, "empty image id".into()));
        }
        let mut counts = [0.0; NUM_CLASSES];
        for (k, slot) in counts.iter_mut().enumerate() {
            let field = rec[k + 1].trim();
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    err(
                        row,
                        format!("bad value `{field}` in column {}", COUNTS_HEADER[k + 1]),
                    )
                })?;
        }
        out.push((id, CountVector(counts)));
    }
    Ok(out)
}

/// Writes rows in the given order. Whole numbers are written without a fraction.
pub fn write_counts(rows: &[(String, CountVector)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_counts_to(rows, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// CSV serialization of counts rows.
pub fn write_counts_to(rows: &[(String, CountVector)], out: impl Write) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COUNTS_HEADER)?;
    for (id, counts) in rows {
        let mut rec = vec![id.clone()];
        // +0.0 folds -0.0 into 0
        rec.extend(counts.0.iter().map(|v| format!("{}", v + 0.0)));
        w.write_record(&rec)?;
    }
    w.flush()
}
