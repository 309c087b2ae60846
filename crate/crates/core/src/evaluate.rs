//! Box IoU, greedy matching, AP@0.5 and mAP@0.5 for external detector output.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::annotate::{AnnotationInstance, Category, Rle};
use crate::export::{read_split_file, ExportError, SplitFile};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("degenerate box (w = {w}, h = {h})")]
    DegenerateBox { w: f64, h: f64 },
    #[error("empty mask")]
    EmptyMask,
    #[error("io at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: malformed json: {message}")]
    MalformedJson {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}:{line}: unknown image id `{image_id}`")]
    UnknownImageId {
        path: PathBuf,
        line: usize,
        image_id: String,
    },
    #[error("{path}:{line}: unknown category id {category_id}")]
    UnknownCategory {
        path: PathBuf,
        line: usize,
        category_id: u32,
    },
    #[error("{path}:{line}: invalid detection: {reason}")]
    InvalidDetection {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("ground truth {path}: {message}")]
    GroundTruth { path: PathBuf, message: String },
    #[error("invalid eval config: {0}")]
    InvalidConfig(String),
}

/// Axis-aligned `(x, y, w, h)` box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_pixels(b: [u32; 4]) -> Self {
        Self::new(b[0] as f64, b[1] as f64, b[2] as f64, b[3] as f64)
    }

    fn check(&self) -> Result<(), EvalError> {
        if !(self.w > 0.0 && self.h > 0.0) || ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(EvalError::DegenerateBox { w: self.w, h: self.h });
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

pub fn iou(a: &BBox, b: &BBox) -> Result<f64, EvalError> {
    a.check()?;
    b.check()?;
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return Ok(0.0);
    }
    Ok(inter / (a.area() + b.area() - inter))
}

/// Tightest enclosing pixel box of a mask.
pub fn mask_box(mask: &Rle) -> Result<BBox, EvalError> {
    mask.bbox().map(BBox::from_pixels).ok_or(EvalError::EmptyMask)
}

pub fn boxes_from_masks(instances: &[AnnotationInstance]) -> Result<Vec<BBox>, EvalError> {
    instances.iter().map(|i| mask_box(&i.mask)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// Per detection, in input order.
    pub tp: Vec<bool>,
    pub matched_gt: Vec<Option<usize>>,
    pub false_negatives: usize,
}

/// Detection indices by descending score, ties in input order.
fn score_order(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Greedy matching within one image and class: each detection, by
/// descending score, takes the unmatched ground truth of highest IoU (lowest
/// index among equals) provided that IoU reaches `iou_thr`.
pub fn match_detections(gts: &[BBox], dets: &[(BBox, f64)], iou_thr: f64) -> Result<Matching, EvalError> {
    let mut taken = vec![false; gts.len()];
    let mut tp = vec![false; dets.len()];
    let mut matched_gt = vec![None; dets.len()];
    for d in score_order(dets.iter().map(|d| d.1)) {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&dets[d].0, gt)?;
            if v >= iou_thr && best.map_or(true, |(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            tp[d] = true;
            matched_gt[d] = Some(g);
        }
    }
    Ok(Matching {
        tp,
        matched_gt,
        false_negatives: taken.iter().filter(|t| !**t).count(),
    })
}

/// Cumulative `(recall, precision)` along the score-sorted stream.
pub fn pr_curve(stream: &[(f64, bool)], n_gt: usize) -> Vec<(f64, f64)> {
    let mut tp = 0usize;
    score_order(stream.iter().map(|s| s.0))
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            tp += stream[d].1 as usize;
            (tp as f64 / n_gt as f64, tp as f64 / (i + 1) as f64)
        })
        .collect()
}

/// 101-point interpolated AP over `(score, is_tp)` for one class; `None`
/// when the class has no ground truth.
pub fn average_precision(stream: &[(f64, bool)], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let order = score_order(stream.iter().map(|s| s.0));
    let mut tps = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    let mut tp = 0usize;
    for (i, &d) in order.iter().enumerate() {
        tp += stream[d].1 as usize;
        tps.push(tp);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    let mut i = 0;
    for k in 0..=100usize {
        // recall >= k / 100, compared exactly in integers
        while i < tps.len() && 100 * tps[i] < k * n_gt {
            i += 1;
        }
        if i == tps.len() {
            break;
        }
        sum += precision[i];
    }
    Some(sum / 101.0)
}

/// Detector output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub category_id: u32,
    #[serde(default)]
    pub bbox: Option<[f64; 4]>,
    pub score: f64,
    #[serde(default)]
    pub segmentation: Option<Rle>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Detections scoring below this are left out of the TP/FP/FN counts.
    /// AP always uses the full stream.
    pub score_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            score_threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub ground_truth: usize,
    pub detections: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub score_threshold: f64,
    pub images: usize,
    /// AP@0.5 of every class present in the ground truth.
    pub per_class_ap: BTreeMap<Category, f64>,
    pub absent_classes: Vec<Category>,
    /// Mean of `per_class_ap`; `None` when no class is present.
    pub map_50: Option<f64>,
    pub counts: BTreeMap<Category, ClassCounts>,
    pub pr_curves: BTreeMap<Category, Vec<(f64, f64)>>,
}

impl EvalReport {
    /// Fixed-width per-class AP@0.5 table.
    pub fn table(&self, label: &str) -> String {
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut out = String::new();
        writeln!(out, "{:<24}{:>10}{:>10}{:>10}{:>15}{:>10}", "source", "Bridge", "Burr", "Pinch", "Contamination", "mAP@0.5").unwrap();
        write!(out, "{:<24}", label).unwrap();
        for (c, width) in Category::ALL.iter().zip([10, 10, 10, 15]) {
            write!(out, "{:>width$}", cell(self.per_class_ap.get(c).copied())).unwrap();
        }
        writeln!(out, "{:>10}", cell(self.map_50)).unwrap();
        out
    }

    pub fn write(&self, json_path: &Path, table_path: &Path, label: &str) -> Result<(), EvalError> {
        let json = serde_json::to_string_pretty(&serde_json::to_value(self).expect("report serializes")).expect("value serializes");
        for (path, body) in [(json_path, json + "\n"), (table_path, self.table(label))] {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|source| EvalError::Io {
                    path: parent.to_path_buf(),
                    source,
                })?;
            }
            fs::write(path, body).map_err(|source| EvalError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
        Ok(())
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parse a JSON array of detections, keeping each entry's starting line.
pub fn read_detections(path: &Path) -> Result<Vec<(usize, Detection)>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |line, column, message: String| EvalError::MalformedJson {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let raws: Vec<&RawValue> =
        serde_json::from_str(&text).map_err(|e| malformed(e.line(), e.column(), e.to_string()))?;
    raws.into_iter()
        .map(|raw| {
            let offset = raw.get().as_ptr() as usize - text.as_ptr() as usize;
            let line = line_of(&text, offset);
            serde_json::from_str::<Detection>(raw.get())
                .map(|d| (line, d))
                .map_err(|e| malformed(line + e.line() - 1, e.column(), e.to_string()))
        })
        .collect()
}

/// Score detections against one ground-truth split.
pub fn evaluate_split(
    gt: &SplitFile,
    dets: &[(usize, Detection)],
    pred_path: &Path,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if !(cfg.iou_threshold > 0.0 && cfg.iou_threshold <= 1.0) {
        return Err(EvalError::InvalidConfig(format!("iou_threshold {} outside (0, 1]", cfg.iou_threshold)));
    }
    let images: HashMap<&str, (u32, u32)> = gt.images.iter().map(|im| (im.id.as_str(), (im.width, im.height))).collect();
    let invalid = |line, reason: String| EvalError::InvalidDetection {
        path: pred_path.to_path_buf(),
        line,
        reason,
    };

    let mut gt_boxes: HashMap<(Category, &str), Vec<BBox>> = HashMap::new();
    let mut counts: BTreeMap<Category, ClassCounts> = Category::ALL.iter().map(|&c| (c, ClassCounts::default())).collect();
    for a in &gt.annotations {
        let c = Category::from_id(a.category_id).ok_or_else(|| EvalError::GroundTruth {
            path: PathBuf::from(format!("{}.json", gt.split.as_str())),
            message: format!("annotation {} has unknown category {}", a.id, a.category_id),
        })?;
        gt_boxes.entry((c, a.image_id.as_str())).or_default().push(BBox::from_pixels(a.bbox));
        counts.get_mut(&c).unwrap().ground_truth += 1;
    }

    // (category, image) -> detections as (input index, box, score)
    let mut by_key: BTreeMap<(Category, &str), Vec<(usize, BBox, f64)>> = BTreeMap::new();
    for (idx, (line, d)) in dets.iter().enumerate() {
        let Some(&(w, h)) = images.get(d.image_id.as_str()) else {
            return Err(EvalError::UnknownImageId {
                path: pred_path.to_path_buf(),
                line: *line,
                image_id: d.image_id.clone(),
            });
        };
        let Some(c) = Category::from_id(d.category_id) else {
            return Err(EvalError::UnknownCategory {
                path: pred_path.to_path_buf(),
                line: *line,
                category_id: d.category_id,
            });
        };
        if !(d.score.is_finite() && (0.0..=1.0).contains(&d.score)) {
            return Err(invalid(*line, format!("score {} outside [0, 1]", d.score)));
        }
        let b = match (&d.segmentation, d.bbox) {
            (Some(mask), _) => {
                if mask.size != [h as usize, w as usize] {
                    return Err(invalid(*line, "segmentation size differs from the image".into()));
                }
                mask_box(mask).map_err(|e| invalid(*line, e.to_string()))?
            }
            (None, Some([x, y, bw, bh])) => BBox::new(x, y, bw, bh),
            (None, None) => return Err(invalid(*line, "needs a bbox or a segmentation".into())),
        };
        b.check().map_err(|e| invalid(*line, e.to_string()))?;
        by_key.entry((c, d.image_id.as_str())).or_default().push((idx, b, d.score));
        counts.get_mut(&c).unwrap().detections += 1;
    }

    // per class: (input index, score, tp) for every detection
    let mut streams: BTreeMap<Category, Vec<(usize, f64, bool)>> = BTreeMap::new();
    for (&(c, image), list) in &by_key {
        let gts = gt_boxes.get(&(c, image)).map(Vec::as_slice).unwrap_or(&[]);
        let pairs: Vec<(BBox, f64)> = list.iter().map(|&(_, b, s)| (b, s)).collect();
        let m = match_detections(gts, &pairs, cfg.iou_threshold)?;
        let entry = counts.get_mut(&c).unwrap();
        for (k, &(idx, _, s)) in list.iter().enumerate() {
            streams.entry(c).or_default().push((idx, s, m.tp[k]));
            if s >= cfg.score_threshold {
                if m.tp[k] {
                    entry.tp += 1;
                } else {
                    entry.fp += 1;
                }
            }
        }
    }

    let mut per_class_ap = BTreeMap::new();
    let mut absent_classes = Vec::new();
    let mut pr_curves = BTreeMap::new();
    for c in Category::ALL {
        let entry = counts.get_mut(&c).unwrap();
        entry.fn_ = entry.ground_truth - entry.tp;
        let mut stream = streams.remove(&c).unwrap_or_default();
        stream.sort_by_key(|s| s.0);
        let stream: Vec<(f64, bool)> = stream.into_iter().map(|(_, s, t)| (s, t)).collect();
        match average_precision(&stream, entry.ground_truth) {
            Some(ap) => {
                per_class_ap.insert(c, ap);
                pr_curves.insert(c, pr_curve(&stream, entry.ground_truth));
            }
            None => absent_classes.push(c),
        }
    }
    let map_50 = (!per_class_ap.is_empty()).then(|| per_class_ap.values().sum::<f64>() / per_class_ap.len() as f64);
    Ok(EvalReport {
        iou_threshold: cfg.iou_threshold,
        score_threshold: cfg.score_threshold,
        images: gt.images.len(),
        per_class_ap,
        absent_classes,
        map_50,
        counts,
        pr_curves,
    })
}

/// Score a prediction file against an exported split file.
pub fn evaluate(gt_file: &Path, pred_file: &Path, cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    let gt = read_split_file(gt_file).map_err(|e| match e {
        ExportError::Parse {
            path,
            line,
            column,
            message,
        } => EvalError::MalformedJson {
            path,
            line,
            column,
            message,
        },
        ExportError::Io { path, source } => EvalError::Io { path, source },
        other => EvalError::GroundTruth {
            path: gt_file.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let dets = read_detections(pred_file)?;
    evaluate_split(&gt, &dets, pred_file, cfg)
}
