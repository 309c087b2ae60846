//! Ground-truth instances from differencing defect-free and defect renders.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::injection::DefectRecord;
use crate::layout::BinaryLayout;
use crate::renderer::RenderedImage;
use crate::topology::{label_components, DefectClass};

#[derive(Debug, Error, PartialEq)]
pub enum AnnotateError {
    #[error("image pair differs in size ({0}x{1} vs {2}x{3})")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("image pair was rendered with different configs")]
    ConfigMismatch,
    #[error("no diff component of `{image_id}` reaches min_area ({discarded} discarded)")]
    EmptyAnnotation { image_id: String, discarded: usize },
    #[error("record `{0}` carries no defect class")]
    Unlabeled(String),
    #[error("malformed rle: {0}")]
    MalformedRle(String),
}

/// Instance categories. The numeric value is the exported category id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Bridge = 1,
    Burr = 2,
    Pinch = 3,
    /// Natural particle defects. Reserved; never synthesized.
    Contamination = 4,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Bridge, Category::Burr, Category::Pinch, Category::Contamination];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn from_id(id: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Bridge => "bridge",
            Category::Burr => "burr",
            Category::Pinch => "pinch",
            Category::Contamination => "contamination",
        }
    }

    pub fn from_class(class: DefectClass) -> Option<Self> {
        match class {
            DefectClass::Bridge => Some(Category::Bridge),
            DefectClass::Burr => Some(Category::Burr),
            DefectClass::Pinch => Some(Category::Pinch),
            DefectClass::NoDefect => None,
        }
    }
}

/// Column-major uncompressed run lengths, alternating background and
/// foreground and starting with background. `size` is `[height, width]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rle {
    pub size: [usize; 2],
    pub counts: Vec<u64>,
}

impl Rle {
    pub fn height(&self) -> usize {
        self.size[0]
    }

    pub fn width(&self) -> usize {
        self.size[1]
    }

    /// Build from strictly increasing column-major indices `x * height + y`.
    pub fn from_sorted_indices(width: usize, height: usize, indices: &[usize]) -> Self {
        let total = (width * height) as u64;
        let mut counts = Vec::new();
        let mut pos = 0u64;
        let mut i = 0;
        while i < indices.len() {
            let start = indices[i] as u64;
            let mut end = start + 1;
            i += 1;
            while i < indices.len() && indices[i] as u64 == end {
                end += 1;
                i += 1;
            }
            counts.push(start - pos);
            counts.push(end - start);
            pos = end;
        }
        if pos < total || counts.is_empty() {
            counts.push(total - pos);
        }
        Self {
            size: [height, width],
            counts,
        }
    }

    fn check(&self) -> Result<(), AnnotateError> {
        let total = (self.width() * self.height()) as u64;
        let sum: u64 = self.counts.iter().sum();
        if sum != total {
            return Err(AnnotateError::MalformedRle(format!(
                "runs sum to {sum}, expected {total}"
            )));
        }
        if self.counts.iter().skip(1).any(|&c| c == 0) {
            return Err(AnnotateError::MalformedRle("zero-length interior run".into()));
        }
        Ok(())
    }

    /// Foreground runs as half-open column-major index ranges.
    pub fn foreground_ranges(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += c;
            (i % 2 == 1 && c > 0).then_some((start, pos))
        })
    }

    /// Visit every foreground pixel as `(x, y)`, column by column.
    pub fn for_each_pixel(&self, mut f: impl FnMut(usize, usize)) {
        let h = self.height() as u64;
        for (start, end) in self.foreground_ranges() {
            for i in start..end {
                f((i / h) as usize, (i % h) as usize);
            }
        }
    }

    pub fn area(&self) -> u64 {
        self.foreground_ranges().map(|(s, e)| e - s).sum()
    }

    /// Tight `[x, y, w, h]` box, or `None` for an empty mask.
    pub fn bbox(&self) -> Option<[u32; 4]> {
        let h = self.height() as u64;
        let mut ext: Option<(u64, u64, u64, u64)> = None;
        for (start, end) in self.foreground_ranges() {
            let (x0, x1) = (start / h, (end - 1) / h);
            // a run crossing a column break reaches row h-1 of one column and row 0 of the next
            let (y0, y1) = if x0 == x1 { (start % h, (end - 1) % h) } else { (0, h - 1) };
            ext = Some(match ext {
                None => (x0, y0, x1, y1),
                Some((ax0, ay0, ax1, ay1)) => (ax0.min(x0), ay0.min(y0), ax1.max(x1), ay1.max(y1)),
            });
        }
        ext.map(|(x0, y0, x1, y1)| [x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32])
    }
}

pub fn encode_rle(mask: &BinaryLayout) -> Rle {
    let (w, h) = mask.dims();
    let mut indices = Vec::new();
    for x in 0..w {
        for y in 0..h {
            if mask.get(x, y) {
                indices.push(x * h + y);
            }
        }
    }
    Rle::from_sorted_indices(w, h, &indices)
}

pub fn decode_rle(rle: &Rle) -> Result<BinaryLayout, AnnotateError> {
    rle.check()?;
    let mut out = BinaryLayout::new(rle.width(), rle.height());
    rle.for_each_pixel(|x, y| out.set(x, y, true));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationInstance {
    /// 1-based index within its image.
    pub instance_id: u64,
    pub image_id: String,
    pub category: Category,
    pub mask: Rle,
    /// Tight `[x, y, w, h]`.
    pub bbox: [u32; 4],
    pub area: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotateConfig {
    /// Smallest diff component kept, in output pixels.
    pub min_area: usize,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        Self { min_area: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub instances: Vec<AnnotationInstance>,
    /// Areas of components dropped for falling below `min_area`.
    pub discarded: Vec<usize>,
}

/// Pixel-wise XOR of the binary channels.
pub fn diff_mask(b: &RenderedImage, b_prime: &RenderedImage) -> Result<BinaryLayout, AnnotateError> {
    if b.binary.dims() != b_prime.binary.dims() {
        return Err(AnnotateError::DimensionMismatch(b.width, b.height, b_prime.width, b_prime.height));
    }
    if b.config_hash != b_prime.config_hash {
        return Err(AnnotateError::ConfigMismatch);
    }
    Ok(b.binary.xor(&b_prime.binary))
}

/// One instance per 8-connected diff component of at least `min_area`
/// pixels, all labelled with the record's class.
pub fn extract_instances(
    diff: &BinaryLayout,
    record: &DefectRecord,
    image_id: &str,
    cfg: &AnnotateConfig,
) -> Result<Extraction, AnnotateError> {
    let category = Category::from_class(record.class).ok_or_else(|| AnnotateError::Unlabeled(record.id.clone()))?;
    let labeling = label_components(diff);
    let (w, h) = diff.dims();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); labeling.count];
    for x in 0..w {
        for y in 0..h {
            let l = labeling.label(x, y);
            if l > 0 {
                members[l as usize - 1].push(x * h + y);
            }
        }
    }
    let mut instances = Vec::new();
    let mut discarded = Vec::new();
    for pixels in members {
        if pixels.len() < cfg.min_area {
            discarded.push(pixels.len());
            continue;
        }
        let mask = Rle::from_sorted_indices(w, h, &pixels);
        let bbox = mask.bbox().expect("component is non-empty");
        instances.push(AnnotationInstance {
            instance_id: instances.len() as u64 + 1,
            image_id: image_id.to_string(),
            category,
            bbox,
            area: pixels.len() as u64,
            mask,
        });
    }
    if instances.is_empty() {
        return Err(AnnotateError::EmptyAnnotation {
            image_id: image_id.to_string(),
            discarded: discarded.len(),
        });
    }
    Ok(Extraction { instances, discarded })
}
