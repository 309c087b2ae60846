//! Binary layouts and the defect-free base-layout library.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pnm;
use crate::seed::{derive_seed, rng_from_seed};
use crate::topology::count_components;

/// Edge length of every library layout.
pub const GRID_SIZE: u32 = 128;

const COMPOSITE_ATTEMPTS: u64 = 100;

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("invalid layout spec `{id}`: {reason}")]
    InvalidSpec { id: String, reason: String },
    #[error("composite `{id}` did not reach two components in {attempts} attempts")]
    GenerationFailure { id: String, attempts: u64 },
    #[error("pixel buffer has {got} values, expected {expected}")]
    BadBuffer { got: usize, expected: usize },
    #[error("pixel value {0} is not binary")]
    NonBinary(u8),
    #[error("duplicate layout id `{0}`")]
    DuplicateId(String),
    #[error("layout io at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A binary raster. `1` is foreground (resist), `0` is background.
///
/// Used both for 128x128 design layouts and for full-resolution masks.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryLayout {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl fmt::Debug for BinaryLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryLayout({}x{}, area {})", self.width, self.height, self.area())
    }
}

impl BinaryLayout {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![1; width * height],
        }
    }

    /// Wrap a row-major buffer, rejecting anything that is not strictly 0/1.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, LayoutError> {
        if pixels.len() != width * height {
            return Err(LayoutError::BadBuffer {
                got: pixels.len(),
                expected: width * height,
            });
        }
        if let Some(&bad) = pixels.iter().find(|&&p| p > 1) {
            return Err(LayoutError::NonBinary(bad));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut out = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                out.pixels[y * width + x] = f(x, y) as u8;
            }
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.pixels[y * self.width + x] != 0
    }

    /// Out-of-grid reads are background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            false
        } else {
            self.get(x as usize, y as usize)
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.pixels[y * self.width + x] = value as u8;
    }

    pub fn area(&self) -> usize {
        self.pixels.iter().map(|&p| p as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.iter().all(|&p| p == 0)
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.dims() == other.dims()
    }

    pub fn complement(&self) -> Self {
        self.map(|p| p ^ 1)
    }

    pub fn union(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a & b)
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a & !b & 1)
    }

    pub fn xor(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a ^ b)
    }

    /// Number of pixels where the two layouts disagree.
    pub fn symmetric_difference_area(&self, other: &Self) -> usize {
        assert!(self.same_dims(other), "dimension mismatch");
        self.pixels
            .iter()
            .zip(&other.pixels)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        assert!(self.same_dims(other), "dimension mismatch");
        self.pixels.iter().zip(&other.pixels).all(|(&a, &b)| a <= b)
    }

    /// Foreground coordinates in raster order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0)
            .map(move |(i, _)| (i % w, i / w))
    }

    /// Set every pixel of `rect` that falls inside the grid.
    pub fn fill_rect(&mut self, rect: PixelRect, value: bool) {
        let rect = rect.clip(self.width, self.height);
        for y in rect.y0..rect.y1 {
            let row = y * self.width;
            self.pixels[row + rect.x0..row + rect.x1].fill(value as u8);
        }
    }

    /// True iff the layouts agree everywhere outside `rect`.
    pub fn equal_outside(&self, other: &Self, rect: PixelRect) -> bool {
        assert!(self.same_dims(other), "dimension mismatch");
        (0..self.height).all(|y| {
            (0..self.width).all(|x| rect.contains(x, y) || self.get(x, y) == other.get(x, y))
        })
    }

    /// Copy into a grid grown by `margin` background pixels on every side.
    pub fn padded(&self, margin: usize) -> Self {
        let mut out = Self::new(self.width + 2 * margin, self.height + 2 * margin);
        for y in 0..self.height {
            let dst = (y + margin) * out.width + margin;
            out.pixels[dst..dst + self.width].copy_from_slice(&self.pixels[y * self.width..(y + 1) * self.width]);
        }
        out
    }

    /// Sub-grid covered by `rect` (clipped).
    pub fn cropped(&self, rect: PixelRect) -> Self {
        let rect = rect.clip(self.width, self.height);
        Self::from_fn(rect.width(), rect.height(), |x, y| self.get(x + rect.x0, y + rect.y0))
    }

    /// Hex SHA-256 of the row-major pixel bytes.
    pub fn sha256_hex(&self) -> String {
        hex::encode(Sha256::digest(&self.pixels))
    }

    fn map(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }

    fn zip(&self, other: &Self, f: impl Fn(u8, u8) -> u8) -> Self {
        assert!(self.same_dims(other), "dimension mismatch");
        Self {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .zip(&other.pixels)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(0, 0, width, height)
    }

    /// Rectangle from signed, inclusive bounds, clipped to the grid.
    pub fn from_inclusive_clipped(
        x0: i64,
        y0: i64,
        x1: i64,
        y1: i64,
        width: usize,
        height: usize,
    ) -> Self {
        let clamp = |v: i64, hi: usize| v.clamp(0, hi as i64) as usize;
        Self {
            x0: clamp(x0, width),
            y0: clamp(y0, height),
            x1: clamp(x1 + 1, width),
            y1: clamp(y1 + 1, height),
        }
    }

    pub fn clip(self, width: usize, height: usize) -> Self {
        Self {
            x0: self.x0.min(width),
            y0: self.y0.min(height),
            x1: self.x1.min(width),
            y1: self.y1.min(height),
        }
    }

    pub fn width(&self) -> usize {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> usize {
        self.y1.saturating_sub(self.y0)
    }

    pub fn is_empty(&self) -> bool {
        self.width() == 0 || self.height() == 0
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutKind {
    HorizontalLines,
    VerticalLines,
    Composite,
}

impl LayoutKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LayoutKind::HorizontalLines => "horizontal-lines",
            LayoutKind::VerticalLines => "vertical-lines",
            LayoutKind::Composite => "composite",
        }
    }
}

fn default_grid() -> u32 {
    GRID_SIZE
}

/// Parameters that fully determine one base layout.
///
/// `line_width`, `pitch` and `offset` only apply to line arrays; a composite
/// is determined by `seed` alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutSpec {
    pub id: String,
    pub kind: LayoutKind,
    #[serde(default)]
    pub line_width: u32,
    #[serde(default)]
    pub pitch: u32,
    /// Phase of the first line. `None` means `pitch / 2`.
    #[serde(default)]
    pub offset: Option<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid")]
    pub size: u32,
}

impl LayoutSpec {
    pub fn lines(id: impl Into<String>, kind: LayoutKind, line_width: u32, pitch: u32) -> Self {
        Self {
            id: id.into(),
            kind,
            line_width,
            pitch,
            offset: None,
            seed: 0,
            size: GRID_SIZE,
        }
    }

    pub fn composite(id: impl Into<String>, seed: u64) -> Self {
        Self {
            id: id.into(),
            kind: LayoutKind::Composite,
            line_width: 0,
            pitch: 0,
            offset: None,
            seed,
            size: GRID_SIZE,
        }
    }

    pub fn with_offset(mut self, offset: u32) -> Self {
        self.offset = Some(offset);
        self
    }

    pub fn with_size(mut self, size: u32) -> Self {
        self.size = size;
        self
    }

    pub fn effective_offset(&self) -> u32 {
        self.offset.unwrap_or(self.pitch / 2)
    }

    fn invalid(&self, reason: impl Into<String>) -> LayoutError {
        LayoutError::InvalidSpec {
            id: self.id.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.size == 0 {
            return Err(self.invalid("grid size must be positive"));
        }
        if self.kind != LayoutKind::Composite {
            if self.line_width < 1 {
                return Err(self.invalid("line_width must be >= 1"));
            }
            if self.pitch <= self.line_width {
                return Err(self.invalid("pitch must exceed line_width"));
            }
        }
        Ok(())
    }

    /// Foreground row (or column) indices of a line array.
    fn line_hit(&self, i: u32) -> bool {
        let phase = (i as i64 - self.effective_offset() as i64).rem_euclid(self.pitch as i64);
        phase < self.line_width as i64
    }

    /// Number of maximal runs of foreground rows/columns, i.e. the line count.
    pub fn analytic_line_count(&self) -> usize {
        let mut count = 0;
        let mut prev = false;
        for i in 0..self.size {
            let hit = self.line_hit(i);
            if hit && !prev {
                count += 1;
            }
            prev = hit;
        }
        count
    }
}

/// Parallel full-length lines across the grid.
pub fn make_line_array(spec: &LayoutSpec) -> Result<BinaryLayout, LayoutError> {
    spec.validate()?;
    let n = spec.size as usize;
    match spec.kind {
        LayoutKind::HorizontalLines => Ok(BinaryLayout::from_fn(n, n, |_, y| spec.line_hit(y as u32))),
        LayoutKind::VerticalLines => Ok(BinaryLayout::from_fn(n, n, |x, _| spec.line_hit(x as u32))),
        LayoutKind::Composite => Err(spec.invalid("make_line_array needs a line-array kind")),
    }
}

const COMPOSITE_MARGIN: i64 = 2;
const STROKE_WIDTH: (u32, u32) = (3, 10);

/// Seeded composite of 4-12 axis-aligned bars plus 0-4 diagonal bars.
///
/// Every stroke stays at least two pixels away from the grid border. Draws are
/// repeated with derived seeds until the result has two or more components.
pub fn make_composite(spec: &LayoutSpec) -> Result<BinaryLayout, LayoutError> {
    spec.validate()?;
    if spec.kind != LayoutKind::Composite {
        return Err(spec.invalid("make_composite needs kind = composite"));
    }
    let n = spec.size as i64;
    if n < 2 * COMPOSITE_MARGIN + 2 * STROKE_WIDTH.1 as i64 + 16 {
        return Err(spec.invalid("grid too small for composite strokes"));
    }
    for attempt in 0..COMPOSITE_ATTEMPTS {
        let seed = derive_seed(&[&spec.seed.to_le_bytes(), &attempt.to_le_bytes()]);
        let layout = draw_composite(seed, n);
        if count_components(&layout) >= 2 {
            return Ok(layout);
        }
    }
    Err(LayoutError::GenerationFailure {
        id: spec.id.clone(),
        attempts: COMPOSITE_ATTEMPTS,
    })
}

fn draw_composite(seed: u64, n: i64) -> BinaryLayout {
    let mut rng = rng_from_seed(seed);
    let mut layout = BinaryLayout::new(n as usize, n as usize);
    let lo = COMPOSITE_MARGIN;
    let hi = n - 1 - COMPOSITE_MARGIN; // inclusive

    let rects = rng.gen_range(4..=12);
    let diagonals = rng.gen_range(0..=4);

    for _ in 0..rects {
        let width = rng.gen_range(STROKE_WIDTH.0..=STROKE_WIDTH.1) as i64;
        let max_len = (hi - lo + 1).min(96);
        let length = rng.gen_range(12..=max_len);
        let horizontal = rng.gen_bool(0.5);
        let (w, h) = if horizontal { (length, width) } else { (width, length) };
        let x0 = rng.gen_range(lo..=hi + 1 - w);
        let y0 = rng.gen_range(lo..=hi + 1 - h);
        layout.fill_rect(
            PixelRect::new(x0 as usize, y0 as usize, (x0 + w) as usize, (y0 + h) as usize),
            true,
        );
    }

    for _ in 0..diagonals {
        let width = rng.gen_range(STROKE_WIDTH.0..=STROKE_WIDTH.1) as f64;
        let pad = width.ceil() as i64;
        let span = rng.gen_range(16..=64i64).min(hi - lo - 2 * pad);
        let rising = rng.gen_bool(0.5);
        let x0 = rng.gen_range(lo + pad..=hi - pad - span);
        let y0 = if rising {
            rng.gen_range(lo + pad + span..=hi - pad)
        } else {
            rng.gen_range(lo + pad..=hi - pad - span)
        };
        let dir_y = if rising { -1.0 } else { 1.0 };
        let len = span as f64 * std::f64::consts::SQRT_2;
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        for y in (y0 - span - pad).max(lo)..=(y0 + span + pad).min(hi) {
            for x in (x0 - pad).max(lo)..=(x0 + span + pad).min(hi) {
                let dx = (x - x0) as f64;
                let dy = (y - y0) as f64;
                let along = (dx + dir_y * dy) * inv;
                let across = (dy - dir_y * dx).abs() * inv;
                if (0.0..=len).contains(&along) && across <= width / 2.0 {
                    layout.set(x as usize, y as usize, true);
                }
            }
        }
    }
    layout
}

/// Build any spec, dispatching on its kind.
pub fn make_layout(spec: &LayoutSpec) -> Result<BinaryLayout, LayoutError> {
    match spec.kind {
        LayoutKind::Composite => make_composite(spec),
        _ => make_line_array(spec),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LibraryConfig {
    pub composite: u32,
    pub horizontal: u32,
    pub vertical: u32,
    pub master_seed: u64,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self {
            composite: 15,
            horizontal: 5,
            vertical: 5,
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LibraryEntry {
    pub spec: LayoutSpec,
    pub layout: BinaryLayout,
}

/// (line width, pitch) pairs cycled through by line-array layouts. Gaps of
/// 6-8 px stay bridgeable by a square(6) footprint.
const LINE_PARAMS: [(u32, u32); 5] = [(4, 10), (4, 12), (5, 13), (6, 14), (8, 16)];

fn line_spec(kind: LayoutKind, prefix: &str, index: u32, master_seed: u64) -> LayoutSpec {
    let (width, pitch) = LINE_PARAMS[index as usize % LINE_PARAMS.len()];
    let id = format!("{prefix}-{:02}", index + 1);
    let mut spec = LayoutSpec::lines(id, kind, width, pitch);
    spec.seed = derive_seed(&[&master_seed.to_le_bytes(), spec.id.as_bytes()]);
    // later cycles shift phase so repeated parameter pairs stay distinct
    let cycle = index / LINE_PARAMS.len() as u32;
    if cycle > 0 {
        spec.offset = Some((pitch / 2 + cycle) % pitch);
    }
    spec
}

/// Library specs in a fixed order: horizontal, vertical, then composite.
pub fn library_specs(config: &LibraryConfig) -> Vec<LayoutSpec> {
    let mut specs = Vec::new();
    for i in 0..config.horizontal {
        specs.push(line_spec(LayoutKind::HorizontalLines, "hline", i, config.master_seed));
    }
    for i in 0..config.vertical {
        specs.push(line_spec(LayoutKind::VerticalLines, "vline", i, config.master_seed));
    }
    for i in 0..config.composite {
        let id = format!("comp-{:02}", i + 1);
        let seed = derive_seed(&[&config.master_seed.to_le_bytes(), id.as_bytes()]);
        specs.push(LayoutSpec::composite(id, seed));
    }
    specs
}

pub fn build_library(config: &LibraryConfig) -> Result<Vec<LibraryEntry>, LayoutError> {
    let specs = library_specs(config);
    let mut seen = std::collections::HashSet::new();
    for spec in &specs {
        if !seen.insert(spec.id.clone()) {
            return Err(LayoutError::DuplicateId(spec.id.clone()));
        }
    }
    specs
        .into_iter()
        .map(|spec| {
            let layout = make_layout(&spec)?;
            Ok(LibraryEntry { spec, layout })
        })
        .collect()
}

/// One row of `library.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub spec: LayoutSpec,
    pub file_name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryManifest {
    pub format_version: u32,
    pub layouts: Vec<ManifestEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LayoutError + '_ {
    move |source| LayoutError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write `<id>.pgm` and `<id>.spec.json` per layout plus `library.json`.
pub fn write_library(dir: &Path, entries: &[LibraryEntry]) -> Result<LibraryManifest, LayoutError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut layouts = Vec::with_capacity(entries.len());
    for entry in entries {
        let file_name = format!("{}.pgm", entry.spec.id);
        let path = dir.join(&file_name);
        fs::write(&path, pnm::encode_layout_pgm(&entry.layout)).map_err(io_err(&path))?;
        let sidecar = dir.join(format!("{}.spec.json", entry.spec.id));
        let text = serde_json::to_string_pretty(&entry.spec).expect("spec serializes");
        fs::write(&sidecar, text + "\n").map_err(io_err(&sidecar))?;
        layouts.push(ManifestEntry {
            spec: entry.spec.clone(),
            file_name,
            sha256: entry.layout.sha256_hex(),
        });
    }
    let manifest = LibraryManifest {
        format_version: crate::FORMAT_VERSION,
        layouts,
    };
    let path = dir.join("library.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    /// Independent 8-connected BFS count.
    fn flood_count(a: &BinaryLayout) -> usize {
        let (w, h) = a.dims();
        let mut seen = vec![false; w * h];
        let mut count = 0;
        for start in 0..w * h {
            if a.pixels()[start] == 0 || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                let (x, y) = ((i % w) as i64, (i / w) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if a.get_signed(nx, ny) {
                            let j = ny as usize * w + nx as usize;
                            if !seen[j] {
                                seen[j] = true;
                                queue.push_back(j);
                            }
                        }
                    }
                }
            }
        }
        count
    }

    #[test]
    fn horizontal_width4_pitch16_offset0_has_eight_lines() {
        let spec = LayoutSpec::lines("h", LayoutKind::HorizontalLines, 4, 16).with_offset(0);
        let a = make_line_array(&spec).unwrap();
        let rows = (0..128).filter(|r| r % 16 < 4).count();
        assert_eq!(rows, 32);
        assert_eq!(flood_count(&a), 8);
        assert_eq!(count_components(&a), 8);
        assert_eq!(spec.analytic_line_count(), 8);
        assert_eq!(a.dims(), (128, 128));
    }

    #[test]
    fn vertical_full_cover_is_one_component() {
        let spec = LayoutSpec::lines("v", LayoutKind::VerticalLines, 128, 129).with_offset(0);
        let a = make_line_array(&spec).unwrap();
        assert_eq!(a.area(), 128 * 128);
        assert_eq!(count_components(&a), 1);
    }

    #[test]
    fn one_pixel_lines_at_pitch_two() {
        let spec = LayoutSpec::lines("h", LayoutKind::HorizontalLines, 1, 2);
        let a = make_line_array(&spec).unwrap();
        assert_eq!(flood_count(&a), 64);
        assert_eq!(count_components(&a), 64);
    }

    #[test]
    fn default_offset_keeps_lines_off_the_border() {
        let spec = LayoutSpec::lines("h", LayoutKind::HorizontalLines, 4, 16);
        let a = make_line_array(&spec).unwrap();
        assert!(!a.get(0, 0));
        assert!(a.get(0, 8));
        assert_eq!(count_components(&a), spec.analytic_line_count());
    }

    #[test]
    fn invalid_line_specs_are_rejected() {
        let bad = LayoutSpec::lines("x", LayoutKind::HorizontalLines, 0, 4);
        assert!(matches!(make_line_array(&bad), Err(LayoutError::InvalidSpec { .. })));
        let bad = LayoutSpec::lines("x", LayoutKind::VerticalLines, 6, 6);
        assert!(matches!(make_line_array(&bad), Err(LayoutError::InvalidSpec { .. })));
        let composite = LayoutSpec::composite("c", 1);
        assert!(make_line_array(&composite).is_err());
    }

    #[test]
    fn composite_is_deterministic_binary_and_multi_component() {
        let spec = LayoutSpec::composite("c", 0);
        let a = make_composite(&spec).unwrap();
        let b = make_composite(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.pixels().iter().all(|&p| p <= 1));
        assert!(flood_count(&a) >= 2);
    }

    #[test]
    fn composite_strokes_stay_inside_the_grid() {
        for seed in 0..50 {
            let a = make_composite(&LayoutSpec::composite("c", seed)).unwrap();
            for (x, y) in a.foreground() {
                assert!((2..126).contains(&x) && (2..126).contains(&y), "seed {seed} at ({x},{y})");
            }
        }
    }

    #[test]
    fn composite_seeds_differ() {
        let differing = (0..100u64)
            .filter(|&i| {
                let a = make_composite(&LayoutSpec::composite("c", 2 * i + 1)).unwrap();
                let b = make_composite(&LayoutSpec::composite("c", 2 * i + 2)).unwrap();
                a != b
            })
            .count();
        assert!(differing >= 99, "{differing} of 100 pairs differ");
    }

    #[test]
    fn default_library_has_25_layouts() {
        let lib = build_library(&LibraryConfig::default()).unwrap();
        assert_eq!(lib.len(), 25);
        let count = |k: LayoutKind| lib.iter().filter(|e| e.spec.kind == k).count();
        assert_eq!(count(LayoutKind::Composite), 15);
        assert_eq!(count(LayoutKind::HorizontalLines), 5);
        assert_eq!(count(LayoutKind::VerticalLines), 5);
        for e in &lib {
            assert_eq!(e.layout.dims(), (128, 128));
            if e.spec.kind != LayoutKind::Composite {
                assert_eq!(count_components(&e.layout), e.spec.analytic_line_count());
            }
        }
        let again = build_library(&LibraryConfig::default()).unwrap();
        assert_eq!(lib, again);
    }

    #[test]
    fn single_horizontal_library() {
        let cfg = LibraryConfig {
            composite: 0,
            horizontal: 1,
            vertical: 0,
            master_seed: 3,
        };
        let lib = build_library(&cfg).unwrap();
        assert_eq!(lib.len(), 1);
        assert_eq!(lib[0].spec.kind, LayoutKind::HorizontalLines);
    }

    #[test]
    fn write_library_emits_manifest_with_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = LibraryConfig {
            composite: 1,
            horizontal: 1,
            vertical: 1,
            master_seed: 0,
        };
        let lib = build_library(&cfg).unwrap();
        let manifest = write_library(dir.path(), &lib).unwrap();
        assert_eq!(manifest.layouts.len(), 3);
        let text = fs::read_to_string(dir.path().join("library.json")).unwrap();
        let parsed: LibraryManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, manifest);
        let bytes = fs::read(dir.path().join(&manifest.layouts[0].file_name)).unwrap();
        let back = pnm::decode_layout_pgm(&bytes).unwrap();
        assert_eq!(back, lib[0].layout);
        assert_eq!(back.sha256_hex(), manifest.layouts[0].sha256);
    }
}
