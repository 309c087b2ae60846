//! Design-exclusive splits, COCO-style export and dataset statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{AnnotationInstance, Category, Rle};
use crate::injection::DefectRecord;
use crate::seed::{derive_seed, rng_from_seed};
use crate::FORMAT_VERSION;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("no layouts available for a split with positive ratio")]
    InsufficientLayouts,
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("io at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

pub fn validate_ratios(ratios: [f64; 3]) -> Result<(), ExportError> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(ExportError::InvalidRatios(format!("{ratios:?} must be finite and non-negative")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(ExportError::InvalidRatios(format!("{ratios:?} sums to {sum}")));
    }
    Ok(())
}

/// Assign whole layouts to splits.
///
/// Layouts are shuffled by `seed`, stably ordered by image count (largest
/// first) and each handed to the positive-ratio split with the largest
/// remaining image deficit. Afterwards any empty positive-ratio split takes
/// the smallest layout of the most populated split, when one can be spared.
pub fn split_layouts(
    counts: &[(String, usize)],
    ratios: [f64; 3],
    seed: u64,
) -> Result<BTreeMap<String, Split>, ExportError> {
    validate_ratios(ratios)?;
    if counts.is_empty() {
        return if ratios.iter().any(|&r| r > 0.0) {
            Err(ExportError::InsufficientLayouts)
        } else {
            Ok(BTreeMap::new())
        };
    }
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(&[b"split", &seed.to_le_bytes()])));
    order.sort_by(|&a, &b| counts[b].1.cmp(&counts[a].1));

    let total: usize = counts.iter().map(|c| c.1).sum();
    let targets: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut filled = [0usize; 3];
    let mut members: [Vec<usize>; 3] = Default::default();
    for &i in &order {
        let s = (0..3)
            .filter(|&s| ratios[s] > 0.0)
            .max_by(|&a, &b| {
                let (da, db) = (targets[a] - filled[a] as f64, targets[b] - filled[b] as f64);
                // ties go to the earlier split
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("some ratio is positive");
        filled[s] += counts[i].1;
        members[s].push(i);
    }
    for s in 0..3 {
        if ratios[s] == 0.0 || !members[s].is_empty() {
            continue;
        }
        let donor = (0..3).filter(|&d| members[d].len() > 1).max_by_key(|&d| (members[d].len(), 3 - d));
        if let Some(d) = donor {
            let moved = members[d].pop().expect("donor has members");
            members[s].push(moved);
        }
    }
    let mut out = BTreeMap::new();
    for (s, list) in members.iter().enumerate() {
        for &i in list {
            out.insert(counts[i].0.clone(), Split::ALL[s]);
        }
    }
    Ok(out)
}

/// [`split_layouts`] weighted by the number of records per base layout.
pub fn split_dataset(
    records: &[DefectRecord],
    ratios: [f64; 3],
    seed: u64,
) -> Result<BTreeMap<String, Split>, ExportError> {
    let mut counts: Vec<(String, usize)> = Vec::new();
    let mut pos = HashMap::new();
    for r in records {
        let i = *pos.entry(r.base_layout_id.clone()).or_insert_with(|| {
            counts.push((r.base_layout_id.clone(), 0));
            counts.len() - 1
        });
        counts[i].1 += 1;
    }
    split_layouts(&counts, ratios, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    /// Path relative to the dataset root.
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    pub base_layout_id: String,
    /// Provenance record id; `None` for defect-free images.
    pub defect_id: Option<String>,
    pub split: Split,
    /// Reserved for exposure-session tags.
    pub session: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEntry {
    pub id: u64,
    pub image_id: String,
    pub category_id: u32,
    pub segmentation: Rle,
    pub bbox: [u32; 4],
    pub area: u64,
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub id: u32,
    pub name: String,
    pub supercategory: String,
}

pub fn categories() -> Vec<CategoryEntry> {
    Category::ALL
        .iter()
        .map(|c| CategoryEntry {
            id: c.id(),
            name: c.name().to_string(),
            supercategory: "defect".to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub split_ratios: [f64; 3],
    pub images: Vec<ImageEntry>,
    pub annotations: Vec<AnnotationEntry>,
    pub categories: Vec<CategoryEntry>,
}

impl DatasetManifest {
    pub fn new(split_ratios: [f64; 3]) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            split_ratios,
            images: Vec::new(),
            annotations: Vec::new(),
            categories: categories(),
        }
    }

    /// Append instances with consecutive annotation ids.
    pub fn add_instances(&mut self, instances: &[AnnotationInstance]) {
        for inst in instances {
            let id = self.annotations.len() as u64 + 1;
            self.annotations.push(AnnotationEntry {
                id,
                image_id: inst.image_id.clone(),
                category_id: inst.category.id(),
                segmentation: inst.mask.clone(),
                bbox: inst.bbox,
                area: inst.area,
                iscrowd: 0,
            });
        }
    }

    /// Stable-order images by split and annotations by image position, then
    /// renumber annotations. This is the order a parse-back reproduces.
    pub fn canonicalize(&mut self) {
        self.images.sort_by_key(|im| im.split);
        let pos: HashMap<&str, usize> = self.images.iter().enumerate().map(|(i, im)| (im.id.as_str(), i)).collect();
        let mut keyed: Vec<(usize, AnnotationEntry)> = self
            .annotations
            .drain(..)
            .map(|a| (pos.get(a.image_id.as_str()).copied().unwrap_or(usize::MAX), a))
            .collect();
        keyed.sort_by_key(|(p, _)| *p);
        self.annotations = keyed
            .into_iter()
            .enumerate()
            .map(|(i, (_, mut a))| {
                a.id = i as u64 + 1;
                a
            })
            .collect();
    }

    pub fn images_in(&self, split: Split) -> impl Iterator<Item = &ImageEntry> {
        self.images.iter().filter(move |im| im.split == split)
    }

    pub fn validate(&self) -> Result<(), ExportError> {
        let bad = |m: String| Err(ExportError::SchemaViolation(m));
        if self.categories != categories() {
            return bad("category list differs from the fixed 1-4 list".into());
        }
        let mut images = HashMap::new();
        let mut layout_split: HashMap<&str, Split> = HashMap::new();
        for im in &self.images {
            if images.insert(im.id.as_str(), im).is_some() {
                return bad(format!("duplicate image id `{}`", im.id));
            }
            match layout_split.get(im.base_layout_id.as_str()) {
                Some(&s) if s != im.split => {
                    return bad(format!(
                        "layout `{}` appears in both {} and {}",
                        im.base_layout_id,
                        s.as_str(),
                        im.split.as_str()
                    ))
                }
                _ => {
                    layout_split.insert(&im.base_layout_id, im.split);
                }
            }
        }
        let mut ids = BTreeSet::new();
        for a in &self.annotations {
            if !ids.insert(a.id) {
                return bad(format!("duplicate annotation id {}", a.id));
            }
            let Some(im) = images.get(a.image_id.as_str()) else {
                return bad(format!("annotation {} references unknown image `{}`", a.id, a.image_id));
            };
            if Category::from_id(a.category_id).is_none() {
                return bad(format!("annotation {} has unknown category {}", a.id, a.category_id));
            }
            if a.segmentation.size != [im.height as usize, im.width as usize] {
                return bad(format!("annotation {} mask size differs from its image", a.id));
            }
            let [x, y, w, h] = a.bbox;
            if a.area == 0 || w == 0 || h == 0 || x + w > im.width || y + h > im.height {
                return bad(format!("annotation {} has an empty or out-of-image extent", a.id));
            }
            if a.iscrowd != 0 {
                return bad(format!("annotation {} is marked crowd", a.id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub format_version: u32,
    pub split: Split,
    pub split_ratios: [f64; 3],
    pub categories: Vec<CategoryEntry>,
    pub images: Vec<ImageEntry>,
    pub annotations: Vec<AnnotationEntry>,
}

pub fn split_file_path(out_dir: &Path, split: Split) -> PathBuf {
    out_dir.join("annotations").join(format!("{}.json", split.as_str()))
}

/// Serialize with object keys in sorted order.
pub fn to_sorted_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable");
    serde_json::to_string(&v).expect("value serializes")
}

/// Write `annotations/{train,val,test}.json` under `out_dir`. Image files are
/// expected at `out_dir/<file_name>`; see [`copy_images`].
pub fn export_coco(manifest: &DatasetManifest, out_dir: &Path) -> Result<Vec<PathBuf>, ExportError> {
    manifest.validate()?;
    let dir = out_dir.join("annotations");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut written = Vec::new();
    for split in Split::ALL {
        let images: Vec<ImageEntry> = manifest.images_in(split).cloned().collect();
        let ids: BTreeSet<&str> = images.iter().map(|im| im.id.as_str()).collect();
        let annotations = manifest
            .annotations
            .iter()
            .filter(|a| ids.contains(a.image_id.as_str()))
            .cloned()
            .collect();
        let file = SplitFile {
            format_version: manifest.format_version,
            split,
            split_ratios: manifest.split_ratios,
            categories: manifest.categories.clone(),
            images,
            annotations,
        };
        let path = split_file_path(out_dir, split);
        fs::write(&path, to_sorted_json(&file) + "\n").map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// Copy every image of the manifest from `src_root` into `out_dir`.
pub fn copy_images(manifest: &DatasetManifest, src_root: &Path, out_dir: &Path) -> Result<(), ExportError> {
    if src_root == out_dir {
        return Ok(());
    }
    for im in &manifest.images {
        let (src, dst) = (src_root.join(&im.file_name), out_dir.join(&im.file_name));
        if let Some(parent) = dst.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::copy(&src, &dst).map_err(io_err(&src))?;
    }
    Ok(())
}

pub fn read_split_file(path: &Path) -> Result<SplitFile, ExportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: SplitFile = serde_json::from_str(&text).map_err(|e| ExportError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.format_version != FORMAT_VERSION {
        return Err(ExportError::SchemaViolation(format!(
            "{}: unsupported format_version {}",
            path.display(),
            file.format_version
        )));
    }
    Ok(file)
}

/// Companion parser: reassemble the manifest from the three split files.
pub fn read_coco(out_dir: &Path) -> Result<DatasetManifest, ExportError> {
    let mut manifest: Option<DatasetManifest> = None;
    for split in Split::ALL {
        let path = split_file_path(out_dir, split);
        let file = read_split_file(&path)?;
        if file.split != split || file.images.iter().any(|im| im.split != split) {
            return Err(ExportError::SchemaViolation(format!("{} holds images of another split", path.display())));
        }
        let m = manifest.get_or_insert_with(|| DatasetManifest {
            format_version: file.format_version,
            split_ratios: file.split_ratios,
            images: Vec::new(),
            annotations: Vec::new(),
            categories: file.categories.clone(),
        });
        if m.split_ratios != file.split_ratios || m.categories != file.categories {
            return Err(ExportError::SchemaViolation(format!("{} disagrees with the other splits", path.display())));
        }
        m.images.extend(file.images);
        m.annotations.extend(file.annotations);
    }
    let m = manifest.expect("three splits read");
    m.validate()?;
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatsConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub bins: usize,
    /// Histogram range as percent of image area.
    pub min_pct: f64,
    pub max_pct: f64,
    /// Split whose instances are counted; `None` counts every split.
    pub split: Option<Split>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            grid_rows: 70,
            grid_cols: 70,
            bins: 50,
            min_pct: 0.001,
            max_pct: 10.0,
            split: Some(Split::Train),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Row-major instance-pixel counts.
    pub density: Vec<u64>,
    /// `bins + 1` log-spaced edges in percent of image area.
    pub bin_edges: Vec<f64>,
    pub histogram: Vec<u64>,
    /// Instances below `min_pct` / above `max_pct`.
    pub underflow: u64,
    pub overflow: u64,
    pub instances: u64,
    pub instance_pixels: u64,
}

impl StatsReport {
    pub fn density_total(&self) -> u64 {
        self.density.iter().sum()
    }

    pub fn density_csv(&self) -> String {
        let mut out = String::new();
        for row in self.density.chunks(self.grid_cols) {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("kind,lo_pct,hi_pct,count\n");
        let (lo, hi) = (self.bin_edges[0], self.bin_edges[self.bin_edges.len() - 1]);
        writeln!(out, "under,0,{lo},{}", self.underflow).unwrap();
        for (i, c) in self.histogram.iter().enumerate() {
            writeln!(out, "bin,{},{},{c}", self.bin_edges[i], self.bin_edges[i + 1]).unwrap();
        }
        writeln!(out, "over,{hi},inf,{}", self.overflow).unwrap();
        out
    }

    /// Write `density.csv` and `size_histogram.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<(), ExportError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (name, body) in [("density.csv", self.density_csv()), ("size_histogram.csv", self.histogram_csv())] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(io_err(&path))?;
        }
        Ok(())
    }
}

/// Log-spaced histogram bin for `pct`: `Err(false)` below range, `Err(true)` above.
fn bin_of(pct: f64, cfg: &StatsConfig) -> Result<usize, bool> {
    if pct < cfg.min_pct {
        return Err(false);
    }
    if pct > cfg.max_pct {
        return Err(true);
    }
    let (lo, hi) = (cfg.min_pct.log10(), cfg.max_pct.log10());
    let t = (pct.log10() - lo) / (hi - lo) * cfg.bins as f64;
    Ok((t.floor() as usize).min(cfg.bins - 1))
}

/// Spatial density grid and instance-size histogram over the masks of the
/// selected split.
pub fn dataset_stats(manifest: &DatasetManifest, cfg: &StatsConfig) -> StatsReport {
    let (rows, cols) = (cfg.grid_rows.max(1), cfg.grid_cols.max(1));
    let bins = cfg.bins.max(1);
    let (lo, hi) = (cfg.min_pct.log10(), cfg.max_pct.log10());
    let bin_edges = (0..=bins)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / bins as f64))
        .collect();
    let mut report = StatsReport {
        grid_rows: rows,
        grid_cols: cols,
        density: vec![0; rows * cols],
        bin_edges,
        histogram: vec![0; bins],
        underflow: 0,
        overflow: 0,
        instances: 0,
        instance_pixels: 0,
    };
    let images: HashMap<&str, &ImageEntry> = manifest
        .images
        .iter()
        .filter(|im| cfg.split.map_or(true, |s| im.split == s))
        .map(|im| (im.id.as_str(), im))
        .collect();
    let cfg = StatsConfig { bins, ..*cfg };
    for a in &manifest.annotations {
        let Some(im) = images.get(a.image_id.as_str()) else {
            continue;
        };
        let (w, h) = (im.width as usize, im.height as usize);
        a.segmentation.for_each_pixel(|x, y| {
            report.density[(y * rows / h) * cols + x * cols / w] += 1;
        });
        let area = a.segmentation.area();
        report.instances += 1;
        report.instance_pixels += area;
        match bin_of(100.0 * area as f64 / (w * h) as f64, &cfg) {
            Ok(b) => report.histogram[b] += 1,
            Err(false) => report.underflow += 1,
            Err(true) => report.overflow += 1,
        }
    }
    report
}
