//! 8-connected component analysis and topological defect classification.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{BinaryLayout, PixelRect};
use crate::morphology::{PerturbationSpec, Sigma};

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("layout dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
}

/// Per-pixel component labels; `0` is background, components are `1..=count`
/// numbered in raster order of their first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabeling {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub count: usize,
}

impl ComponentLabeling {
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        let next = parent[i as usize];
        parent[i as usize] = parent[next as usize];
        i = next;
    }
    i
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        // smaller provisional label wins so roots stay stable under scan order
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi as usize] = lo;
    }
}

/// Two-pass union-find labeling with 8-connectivity.
pub fn label_components(a: &BinaryLayout) -> ComponentLabeling {
    let (w, h) = a.dims();
    let px = a.pixels();
    let mut labels = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if px[i] == 0 {
                continue;
            }
            // already-visited neighbours: W, NW, N, NE
            let mut current = 0u32;
            let mut neighbours = [0u32; 4];
            if x > 0 {
                neighbours[0] = labels[i - 1];
            }
            if y > 0 {
                let up = i - w;
                if x > 0 {
                    neighbours[1] = labels[up - 1];
                }
                neighbours[2] = labels[up];
                if x + 1 < w {
                    neighbours[3] = labels[up + 1];
                }
            }
            for &n in &neighbours {
                if n == 0 {
                    continue;
                }
                if current == 0 {
                    current = n;
                } else if n != current {
                    union(&mut parent, current, n);
                }
            }
            if current == 0 {
                current = parent.len() as u32;
                parent.push(current);
            }
            labels[i] = current;
        }
    }

    let mut remap = vec![0u32; parent.len()];
    let mut count = 0u32;
    for label in labels.iter_mut() {
        if *label == 0 {
            continue;
        }
        let root = find(&mut parent, *label) as usize;
        if remap[root] == 0 {
            count += 1;
            remap[root] = count;
        }
        *label = remap[root];
    }

    ComponentLabeling {
        width: w,
        height: h,
        labels,
        count: count as usize,
    }
}

/// `k(A)`.
pub fn count_components(a: &BinaryLayout) -> usize {
    label_components(a).count
}

/// `Δk = k(A') - k(A)`.
pub fn delta_k(a: &BinaryLayout, a_prime: &BinaryLayout) -> Result<i64, TopologyError> {
    if !a.same_dims(a_prime) {
        return Err(TopologyError::DimensionMismatch(a.dims(), a_prime.dims()));
    }
    Ok(count_components(a_prime) as i64 - count_components(a) as i64)
}

/// Foreground pixel with a background 4-neighbour (off-grid counts as background).
pub fn is_boundary(a: &BinaryLayout, x: usize, y: usize) -> bool {
    if !a.get(x, y) {
        return false;
    }
    let (xi, yi) = (x as i64, y as i64);
    !(a.get_signed(xi - 1, yi) && a.get_signed(xi + 1, yi) && a.get_signed(xi, yi - 1) && a.get_signed(xi, yi + 1))
}

#[derive(Clone, Copy, PartialEq)]
struct Visit {
    dist: f64,
    node: usize,
}

impl Eq for Visit {}

impl Ord for Visit {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Geodesic distances over an 8-connected pixel chain (unit axial steps,
/// `√2` diagonal steps).
fn chain_distances(points: &[(i64, i64)], source: usize) -> Vec<f64> {
    let index: std::collections::HashMap<(i64, i64), usize> =
        points.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut dist = vec![f64::INFINITY; points.len()];
    dist[source] = 0.0;
    let mut heap = BinaryHeap::from([Visit { dist: 0.0, node: source }]);
    while let Some(Visit { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        let (x, y) = points[node];
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                if let Some(&next) = index.get(&(x + dx, y + dy)) {
                    let step = if dx != 0 && dy != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                    let nd = d + step;
                    if nd < dist[next] {
                        dist[next] = nd;
                        heap.push(Visit { dist: nd, node: next });
                    }
                }
            }
        }
    }
    dist
}

fn farthest(dist: &[f64]) -> usize {
    // first maximum in point order
    let mut best = 0;
    for (i, &d) in dist.iter().enumerate() {
        if d > dist[best] {
            best = i;
        }
    }
    best
}

/// `1 - chord / arc` of one boundary chain, with endpoints taken as the ends of
/// its geodesic diameter.
fn chain_irregularity(points: &[(i64, i64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let first = farthest(&chain_distances(points, 0));
    let dist = chain_distances(points, first);
    let last = farthest(&dist);
    let arc = dist[last];
    if !(arc > 0.0) {
        return 0.0;
    }
    let (ax, ay) = points[first];
    let (bx, by) = points[last];
    let chord = (((ax - bx).pow(2) + (ay - by).pow(2)) as f64).sqrt();
    (1.0 - chord / arc).clamp(0.0, 1.0)
}

/// Irregularity of the newly exposed boundary inside `window`.
///
/// New boundary pixels are boundary pixels of `A'` that were not boundary
/// pixels of `A`. Each 8-connected group of them is scored `1 - chord / arc`
/// and the maximum is returned; no new boundary scores 0.
pub fn irregularity(a: &BinaryLayout, a_prime: &BinaryLayout, window: PixelRect) -> f64 {
    assert!(a.same_dims(a_prime), "dimension mismatch");
    let window = window.clip(a.width(), a.height());
    let (ww, wh) = (window.width(), window.height());
    if ww == 0 || wh == 0 {
        return 0.0;
    }
    let mut fresh = vec![false; ww * wh];
    for y in window.y0..window.y1 {
        for x in window.x0..window.x1 {
            fresh[(y - window.y0) * ww + (x - window.x0)] = is_boundary(a_prime, x, y) && !is_boundary(a, x, y);
        }
    }

    let mut seen = vec![false; ww * wh];
    let mut best = 0.0f64;
    for start in 0..ww * wh {
        if !fresh[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut chain = Vec::new();
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (lx, ly) = ((i % ww) as i64, (i / ww) as i64);
            chain.push((lx, ly));
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (nx, ny) = (lx + dx, ly + dy);
                    if nx < 0 || ny < 0 || nx >= ww as i64 || ny >= wh as i64 {
                        continue;
                    }
                    let j = ny as usize * ww + nx as usize;
                    if fresh[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        chain.sort_unstable_by_key(|&(x, y)| (y, x));
        best = best.max(chain_irregularity(&chain));
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefectClass {
    Pinch,
    Bridge,
    Burr,
    #[serde(rename = "none")]
    NoDefect,
}

impl DefectClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            DefectClass::Pinch => "pinch",
            DefectClass::Bridge => "bridge",
            DefectClass::Burr => "burr",
            DefectClass::NoDefect => "none",
        }
    }
}

/// Thresholds for the pinch and burr predicates.
///
/// Neither default is a measured value: `irregularity_threshold = 0` accepts
/// every split, `burr_min_area = 4` is the smallest protrusion kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub irregularity_threshold: f64,
    pub burr_min_area: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            irregularity_threshold: 0.0,
            burr_min_area: 4,
        }
    }
}

/// Everything the classifier looks at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectSignature {
    pub sigma: Sigma,
    pub delta_k: i64,
    pub irregularity: f64,
    /// `|A' Δ A|` in pixels.
    pub changed_area: usize,
}

pub fn classify_signature(sig: &DefectSignature, cfg: &ClassifyConfig) -> DefectClass {
    match sig.sigma {
        Sigma::Erosion if sig.delta_k > 0 && sig.irregularity >= cfg.irregularity_threshold => DefectClass::Pinch,
        Sigma::Dilation if sig.delta_k < 0 => DefectClass::Bridge,
        Sigma::Dilation if sig.delta_k == 0 && sig.changed_area >= cfg.burr_min_area => DefectClass::Burr,
        _ => DefectClass::NoDefect,
    }
}

/// Measure the signature of `A -> A'` and classify it. `k_a` may carry a
/// precomputed `k(A)`.
pub fn signature(
    a: &BinaryLayout,
    a_prime: &BinaryLayout,
    spec: &PerturbationSpec,
    k_a: Option<usize>,
) -> Result<DefectSignature, TopologyError> {
    if !a.same_dims(a_prime) {
        return Err(TopologyError::DimensionMismatch(a.dims(), a_prime.dims()));
    }
    let changed_area = a.symmetric_difference_area(a_prime);
    let delta_k = if changed_area == 0 {
        0
    } else {
        let k_a = k_a.unwrap_or_else(|| count_components(a));
        count_components(a_prime) as i64 - k_a as i64
    };
    // irregularity only gates pinches
    let irregularity = if spec.sigma == Sigma::Erosion && delta_k > 0 {
        irregularity(a, a_prime, spec.window(a.width(), a.height()))
    } else {
        0.0
    };
    Ok(DefectSignature {
        sigma: spec.sigma,
        delta_k,
        irregularity,
        changed_area,
    })
}

pub fn classify(
    a: &BinaryLayout,
    a_prime: &BinaryLayout,
    spec: &PerturbationSpec,
    cfg: &ClassifyConfig,
) -> Result<DefectClass, TopologyError> {
    Ok(classify_signature(&signature(a, a_prime, spec, None)?, cfg))
}
