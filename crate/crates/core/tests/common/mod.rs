//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use defectsynth::annotate::encode_rle;
use defectsynth::evaluate::Detection;
use defectsynth::export::{categories, AnnotationEntry, ImageEntry, Split, SplitFile};
use defectsynth::{BinaryLayout, StructuringElement, FORMAT_VERSION};
use rand::Rng;

pub fn random_layout(rng: &mut impl Rng, w: usize, h: usize, p: f64) -> BinaryLayout {
    BinaryLayout::from_fn(w, h, |_, _| rng.gen_bool(p))
}

fn read(a: &BinaryLayout, x: i64, y: i64) -> bool {
    x >= 0 && y >= 0 && (x as usize) < a.width() && (y as usize) < a.height() && a.get(x as usize, y as usize)
}

/// Pixel-by-pixel dilation: any `a(p - d)` over the offsets.
pub fn naive_dilate(a: &BinaryLayout, se: &StructuringElement) -> BinaryLayout {
    BinaryLayout::from_fn(a.width(), a.height(), |x, y| {
        se.offsets()
            .iter()
            .any(|&(dx, dy)| read(a, x as i64 - dx as i64, y as i64 - dy as i64))
    })
}

/// Pixel-by-pixel erosion: every `a(p + d)` over the offsets, off-grid = 0.
pub fn naive_erode(a: &BinaryLayout, se: &StructuringElement) -> BinaryLayout {
    BinaryLayout::from_fn(a.width(), a.height(), |x, y| {
        se.offsets()
            .iter()
            .all(|&(dx, dy)| read(a, x as i64 + dx as i64, y as i64 + dy as i64))
    })
}

/// Breadth-first 8-connected labeling; seeds are taken in raster order so
/// component ids follow first touch.
pub fn flood_fill_labels(a: &BinaryLayout) -> (Vec<u32>, usize) {
    let (w, h) = a.dims();
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    for sy in 0..h {
        for sx in 0..w {
            if !a.get(sx, sy) || labels[sy * w + sx] != 0 {
                continue;
            }
            next += 1;
            labels[sy * w + sx] = next;
            let mut queue = VecDeque::from([(sx, sy)]);
            while let Some((x, y)) = queue.pop_front() {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if read(a, nx, ny) && labels[ny as usize * w + nx as usize] == 0 {
                            labels[ny as usize * w + nx as usize] = next;
                            queue.push_back((nx as usize, ny as usize));
                        }
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Brute-force extent scan of a mask.
pub fn scan_bbox(m: &BinaryLayout) -> Option<[u32; 4]> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    let mut any = false;
    for y in 0..m.height() {
        for x in 0..m.width() {
            if m.get(x, y) {
                any = true;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    any.then(|| [x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32])
}

/// Box overlap from explicit corner arithmetic.
fn oracle_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let (ax1, ay1, bx1, by1) = (a[0] + a[2], a[1] + a[3], b[0] + b[2], b[1] + b[3]);
    let left = if a[0] > b[0] { a[0] } else { b[0] };
    let right = if ax1 < bx1 { ax1 } else { bx1 };
    let top = if a[1] > b[1] { a[1] } else { b[1] };
    let bottom = if ay1 < by1 { ay1 } else { by1 };
    if right <= left || bottom <= top {
        return 0.0;
    }
    let inter = (right - left) * (bottom - top);
    inter / (a[2] * a[3] + b[2] * b[3] - inter)
}

/// Second evaluator: selection-order greedy matching over all ground truths
/// of the same image and class, then AP as the mean over 101 recall levels
/// of the best precision at any rank reaching that recall.
pub fn brute_force_eval(gt: &SplitFile, dets: &[Detection], iou_thr: f64) -> (HashMap<u32, f64>, Option<f64>) {
    let mut per_class = HashMap::new();
    for c in 1..=4u32 {
        let gts: Vec<(&str, [f64; 4])> = gt
            .annotations
            .iter()
            .filter(|a| a.category_id == c)
            .map(|a| (a.image_id.as_str(), a.bbox.map(|v| v as f64)))
            .collect();
        if gts.is_empty() {
            continue;
        }
        let mut remaining: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].category_id == c).collect();
        let mut used = vec![false; gts.len()];
        let mut outcomes = Vec::new();
        while !remaining.is_empty() {
            // highest score, earliest index
            let mut pick = 0;
            for k in 1..remaining.len() {
                if dets[remaining[k]].score > dets[remaining[pick]].score {
                    pick = k;
                }
            }
            let d = &dets[remaining.remove(pick)];
            let b = d.bbox.unwrap();
            let mut best: Option<(usize, f64)> = None;
            for (g, (img, gb)) in gts.iter().enumerate() {
                if used[g] || *img != d.image_id {
                    continue;
                }
                let v = oracle_iou(b, *gb);
                if v >= iou_thr && best.map_or(true, |(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                used[g] = true;
            }
            outcomes.push(best.is_some());
        }
        let n = gts.len();
        let mut tp = 0;
        let mut points = Vec::new();
        for (rank, &hit) in outcomes.iter().enumerate() {
            tp += hit as usize;
            points.push((tp, tp as f64 / (rank + 1) as f64));
        }
        let mut sum = 0.0;
        for k in 0..=100usize {
            let best = points
                .iter()
                .filter(|(t, _)| 100 * t >= k * n)
                .map(|p| p.1)
                .fold(0.0, f64::max);
            sum += best;
        }
        per_class.insert(c, sum / 101.0);
    }
    let map = (!per_class.is_empty()).then(|| per_class.values().sum::<f64>() / per_class.len() as f64);
    (per_class, map)
}

/// Ground-truth split file with rectangular masks on `size`² images.
pub fn gt_fixture(size: u32, boxes: &[(String, u32, [u32; 4])]) -> SplitFile {
    let mut images: Vec<ImageEntry> = Vec::new();
    let mut annotations = Vec::new();
    for (i, (img, cat, b)) in boxes.iter().enumerate() {
        if !images.iter().any(|im| &im.id == img) {
            images.push(image_entry(img, size));
        }
        let mut m = BinaryLayout::new(size as usize, size as usize);
        for y in b[1]..b[1] + b[3] {
            for x in b[0]..b[0] + b[2] {
                m.set(x as usize, y as usize, true);
            }
        }
        annotations.push(AnnotationEntry {
            id: i as u64 + 1,
            image_id: img.clone(),
            category_id: *cat,
            segmentation: encode_rle(&m),
            bbox: *b,
            area: (b[2] * b[3]) as u64,
            iscrowd: 0,
        });
    }
    SplitFile {
        format_version: FORMAT_VERSION,
        split: Split::Test,
        split_ratios: [0.8, 0.1, 0.1],
        categories: categories(),
        images,
        annotations,
    }
}

pub fn image_entry(id: &str, size: u32) -> ImageEntry {
    ImageEntry {
        id: id.to_string(),
        file_name: format!("images/{id}.pbm"),
        width: size,
        height: size,
        base_layout_id: "fixture".into(),
        defect_id: None,
        split: Split::Test,
        session: None,
    }
}

/// Random 20-image fixture: ground truth over classes 1-4 and detections made
/// of jittered copies, duplicates and clutter, with distinct scores.
pub fn random_eval_fixture(rng: &mut impl Rng, images: usize) -> (SplitFile, Vec<Detection>) {
    let size = 128u32;
    let mut boxes = Vec::new();
    for i in 0..images {
        if rng.gen_bool(0.1) {
            // negative image: keep it listed through a placeholder removed below
            boxes.push((format!("img{i:02}"), 0, [0, 0, 1, 1]));
            continue;
        }
        for _ in 0..rng.gen_range(1..5) {
            let (w, h) = (rng.gen_range(4..40), rng.gen_range(4..40));
            let (x, y) = (rng.gen_range(0..size - w), rng.gen_range(0..size - h));
            let cat = if rng.gen_bool(0.05) { 4 } else { rng.gen_range(1..=3) };
            boxes.push((format!("img{i:02}"), cat, [x, y, w, h]));
        }
    }
    let mut gt = gt_fixture(size, &boxes);
    gt.annotations.retain(|a| a.category_id != 0);
    for (i, a) in gt.annotations.iter_mut().enumerate() {
        a.id = i as u64 + 1;
    }
    let mut dets = Vec::new();
    for a in &gt.annotations {
        let copies = match rng.gen_range(0..10) {
            0 | 1 => 0,
            2 => 2,
            _ => 1,
        };
        for _ in 0..copies {
            let j = |v: u32, r: &mut dyn rand::RngCore| v as f64 + r.gen_range(-4.0..4.0);
            let b = a.bbox;
            let cat = if rng.gen_bool(0.1) { rng.gen_range(1..=4) } else { a.category_id };
            dets.push(Detection {
                image_id: a.image_id.clone(),
                category_id: cat,
                bbox: Some([j(b[0], rng), j(b[1], rng), (b[2] as f64 + rng.gen_range(-3.0..3.0)).max(1.0), (b[3] as f64 + rng.gen_range(-3.0..3.0)).max(1.0)]),
                score: 0.0,
                segmentation: None,
            });
        }
    }
    for _ in 0..rng.gen_range(0..15) {
        let im = &gt.images[rng.gen_range(0..gt.images.len())];
        dets.push(Detection {
            image_id: im.id.clone(),
            category_id: rng.gen_range(1..=4),
            bbox: Some([rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0), rng.gen_range(2.0..30.0), rng.gen_range(2.0..30.0)]),
            score: 0.0,
            segmentation: None,
        });
    }
    // distinct scores in shuffled order
    let n = dets.len();
    let mut scores: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n.max(1) as f64).collect();
    for i in (1..n).rev() {
        scores.swap(i, rng.gen_range(0..=i));
    }
    for (d, s) in dets.iter_mut().zip(scores) {
        d.score = s;
    }
    (gt, dets)
}
