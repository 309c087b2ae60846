//! Minkowski dilation and erosion, localized perturbations, and the linear
//! chain from structuring element to boundary displacement to edge placement
//! error.
//!
//! Coordinates are `(x, y)` = (column, row). Reads outside the grid are
//! background throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{BinaryLayout, PixelRect};

/// Number of evenly spaced normals used for `Δb_max`.
pub const SAMPLED_NORMALS: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum MorphologyError {
    #[error("normal ({0}, {1}) is not unit length")]
    NonUnitNormal(f64, f64),
    #[error("target ({x}, {y}) lies outside the {width}x{height} grid")]
    OutOfBoundsTarget {
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },
    #[error("structuring element offsets must contain the origin and be symmetric")]
    InvalidOffsets,
    #[error("structuring element scale must be >= 1")]
    ZeroScale,
    #[error("custom structuring elements cannot be serialized")]
    CustomShape,
    #[error("meef must be positive and finite, got {0}")]
    InvalidMeef(f64),
    #[error("sigma must be -1 or +1, got {0}")]
    InvalidSigma(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeShape {
    /// Chebyshev ball, `max(|dx|, |dy|) <= r`.
    Square,
    /// L1 ball, `|dx| + |dy| <= r`.
    Diamond,
    /// Arbitrary symmetric offset set (internal use only).
    Custom,
}

impl SeShape {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeShape::Square => "square",
            SeShape::Diamond => "diamond",
            SeShape::Custom => "custom",
        }
    }
}

/// Origin-centered offset set `k_r`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SeDescriptor", into = "SeDescriptor")]
pub struct StructuringElement {
    shape: SeShape,
    r: u32,
    offsets: Vec<(i32, i32)>,
}

#[derive(Serialize, Deserialize)]
struct SeDescriptor {
    shape: SeShape,
    r: u32,
}

impl TryFrom<SeDescriptor> for StructuringElement {
    type Error = MorphologyError;

    fn try_from(d: SeDescriptor) -> Result<Self, Self::Error> {
        match d.shape {
            SeShape::Square => Self::square(d.r),
            SeShape::Diamond => Self::diamond(d.r),
            SeShape::Custom => Err(MorphologyError::CustomShape),
        }
    }
}

impl From<StructuringElement> for SeDescriptor {
    fn from(se: StructuringElement) -> Self {
        SeDescriptor {
            shape: se.shape,
            r: se.r,
        }
    }
}

impl StructuringElement {
    pub fn square(r: u32) -> Result<Self, MorphologyError> {
        Self::ball(SeShape::Square, r, |dx, dy| dx.abs().max(dy.abs()) <= r as i32)
    }

    pub fn diamond(r: u32) -> Result<Self, MorphologyError> {
        Self::ball(SeShape::Diamond, r, |dx, dy| dx.abs() + dy.abs() <= r as i32)
    }

    pub fn new(shape: SeShape, r: u32) -> Result<Self, MorphologyError> {
        match shape {
            SeShape::Square => Self::square(r),
            SeShape::Diamond => Self::diamond(r),
            SeShape::Custom => Err(MorphologyError::CustomShape),
        }
    }

    /// The single-offset element `{(0, 0)}`, the identity for both operations.
    pub fn point() -> Self {
        Self {
            shape: SeShape::Custom,
            r: 0,
            offsets: vec![(0, 0)],
        }
    }

    /// Symmetric offset set containing the origin.
    pub fn from_offsets(mut offsets: Vec<(i32, i32)>) -> Result<Self, MorphologyError> {
        offsets.sort_unstable();
        offsets.dedup();
        let has = |o: &(i32, i32)| offsets.binary_search(o).is_ok();
        if !has(&(0, 0)) || !offsets.iter().all(|&(dx, dy)| has(&(-dx, -dy))) {
            return Err(MorphologyError::InvalidOffsets);
        }
        let r = offsets
            .iter()
            .map(|&(dx, dy)| dx.unsigned_abs().max(dy.unsigned_abs()))
            .max()
            .unwrap_or(0);
        Ok(Self {
            shape: SeShape::Custom,
            r,
            offsets,
        })
    }

    fn ball(shape: SeShape, r: u32, inside: impl Fn(i32, i32) -> bool) -> Result<Self, MorphologyError> {
        if r == 0 {
            return Err(MorphologyError::ZeroScale);
        }
        let ri = r as i32;
        let mut offsets = Vec::new();
        for dx in -ri..=ri {
            for dy in -ri..=ri {
                if inside(dx, dy) {
                    offsets.push((dx, dy));
                }
            }
        }
        Ok(Self { shape, r, offsets })
    }

    pub fn shape(&self) -> SeShape {
        self.shape
    }

    pub fn scale(&self) -> u32 {
        self.r
    }

    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }

    /// Largest `|dx|` and `|dy|` over the offsets.
    pub fn half_extent(&self) -> (i64, i64) {
        self.offsets.iter().fold((0, 0), |(mx, my), &(dx, dy)| {
            (mx.max(dx.abs() as i64), my.max(dy.abs() as i64))
        })
    }
}

/// Minkowski addition: `out(x, y) = 1` iff some offset `d` has `a(p - d) = 1`.
pub fn dilate(a: &BinaryLayout, se: &StructuringElement) -> BinaryLayout {
    let (w, h) = a.dims();
    let mut out = BinaryLayout::new(w, h);
    let src = a.pixels();
    let dst = out.pixels_mut();
    for &(dx, dy) in se.offsets() {
        let (dx, dy) = (dx as i64, dy as i64);
        // x - dx in [0, w)
        let x_lo = dx.max(0) as usize;
        let x_hi = (w as i64 + dx).min(w as i64).max(0) as usize;
        if x_lo >= x_hi {
            continue;
        }
        for y in 0..h {
            let sy = y as i64 - dy;
            if sy < 0 || sy >= h as i64 {
                continue;
            }
            let s0 = sy as usize * w + (x_lo as i64 - dx) as usize;
            let d0 = y * w + x_lo;
            let len = x_hi - x_lo;
            for (d, s) in dst[d0..d0 + len].iter_mut().zip(&src[s0..s0 + len]) {
                *d |= *s;
            }
        }
    }
    out
}

/// Minkowski subtraction: `out(x, y) = 1` iff `a(p + d) = 1` for every offset `d`.
pub fn erode(a: &BinaryLayout, se: &StructuringElement) -> BinaryLayout {
    let (w, h) = a.dims();
    let mut out = BinaryLayout::filled(w, h);
    let src = a.pixels();
    let dst = out.pixels_mut();
    for &(dx, dy) in se.offsets() {
        let (dx, dy) = (dx as i64, dy as i64);
        for y in 0..h {
            let row = &mut dst[y * w..(y + 1) * w];
            let sy = y as i64 + dy;
            if sy < 0 || sy >= h as i64 {
                row.fill(0);
                continue;
            }
            let src_row = &src[sy as usize * w..(sy as usize + 1) * w];
            for (x, d) in row.iter_mut().enumerate() {
                let sx = x as i64 + dx;
                *d &= if sx < 0 || sx >= w as i64 { 0 } else { src_row[sx as usize] };
            }
        }
    }
    out
}

/// Perturbation direction; the integer value is `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Sigma {
    Erosion,
    Dilation,
}

impl Sigma {
    pub fn value(self) -> i64 {
        match self {
            Sigma::Erosion => -1,
            Sigma::Dilation => 1,
        }
    }
}

impl TryFrom<i64> for Sigma {
    type Error = MorphologyError;

    fn try_from(v: i64) -> Result<Self, Self::Error> {
        match v {
            -1 => Ok(Sigma::Erosion),
            1 => Ok(Sigma::Dilation),
            other => Err(MorphologyError::InvalidSigma(other)),
        }
    }
}

impl From<Sigma> for i64 {
    fn from(s: Sigma) -> i64 {
        s.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbMode {
    /// Union with / removal of the translated element.
    #[default]
    Footprint,
    /// Global morphology applied only inside the window.
    Windowed,
}

/// One localized perturbation: `σ`, element, target and locality mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub sigma: Sigma,
    pub se: StructuringElement,
    /// Target `(x, y)`.
    pub target: (i64, i64),
    #[serde(default)]
    pub mode: PerturbMode,
    /// Window margin in pixels; `None` means `2 r`.
    #[serde(default)]
    pub window_margin: Option<u32>,
}

impl PerturbationSpec {
    pub fn new(sigma: Sigma, se: StructuringElement, target: (i64, i64)) -> Self {
        Self {
            sigma,
            se,
            target,
            mode: PerturbMode::Footprint,
            window_margin: None,
        }
    }

    pub fn windowed(mut self, margin: Option<u32>) -> Self {
        self.mode = PerturbMode::Windowed;
        self.window_margin = margin;
        self
    }

    pub fn effective_margin(&self) -> u32 {
        self.window_margin.unwrap_or(2 * self.se.scale())
    }

    /// Bounding box of the translated element grown by the margin, clipped to
    /// the grid. The perturbed layout agrees with the original outside it.
    pub fn window(&self, width: usize, height: usize) -> PixelRect {
        let (rx, ry) = self.se.half_extent();
        let m = self.effective_margin() as i64;
        let (tx, ty) = self.target;
        PixelRect::from_inclusive_clipped(tx - rx - m, ty - ry - m, tx + rx + m, ty + ry + m, width, height)
    }

    fn check_target(&self, a: &BinaryLayout) -> Result<(), MorphologyError> {
        let (x, y) = self.target;
        if x < 0 || y < 0 || x >= a.width() as i64 || y >= a.height() as i64 {
            return Err(MorphologyError::OutOfBoundsTarget {
                x,
                y,
                width: a.width(),
                height: a.height(),
            });
        }
        Ok(())
    }
}

/// Produce `A'` from `A` according to `spec`.
pub fn perturb(a: &BinaryLayout, spec: &PerturbationSpec) -> Result<BinaryLayout, MorphologyError> {
    spec.check_target(a)?;
    let mut out = a.clone();
    let (tx, ty) = spec.target;
    match spec.mode {
        PerturbMode::Footprint => {
            let value = spec.sigma == Sigma::Dilation;
            for &(dx, dy) in spec.se.offsets() {
                let (x, y) = (tx + dx as i64, ty + dy as i64);
                if x >= 0 && y >= 0 && (x as usize) < a.width() && (y as usize) < a.height() {
                    out.set(x as usize, y as usize, value);
                }
            }
        }
        PerturbMode::Windowed => {
            let window = spec.window(a.width(), a.height());
            for y in window.y0..window.y1 {
                for x in window.x0..window.x1 {
                    let (xi, yi) = (x as i64, y as i64);
                    let offsets = spec.se.offsets().iter().map(|&(dx, dy)| (dx as i64, dy as i64));
                    let value = match spec.sigma {
                        Sigma::Dilation => offsets.clone().any(|(dx, dy)| a.get_signed(xi - dx, yi - dy)),
                        Sigma::Erosion => offsets.clone().all(|(dx, dy)| a.get_signed(xi + dx, yi + dy)),
                    };
                    out.set(x, y, value);
                }
            }
        }
    }
    Ok(out)
}

fn check_unit(n: (f64, f64)) -> Result<(), MorphologyError> {
    let norm = (n.0 * n.0 + n.1 * n.1).sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
        return Err(MorphologyError::NonUnitNormal(n.0, n.1));
    }
    Ok(())
}

/// Support function `h_k(n) = max over offsets of d · n`.
pub fn support(se: &StructuringElement, n: (f64, f64)) -> Result<f64, MorphologyError> {
    check_unit(n)?;
    Ok(se
        .offsets()
        .iter()
        .map(|&(dx, dy)| dx as f64 * n.0 + dy as f64 * n.1)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Equivalent boundary displacement `Δb = σ h_k(n)`.
pub fn boundary_displacement(se: &StructuringElement, sigma: Sigma, n: (f64, f64)) -> Result<f64, MorphologyError> {
    Ok(sigma.value() as f64 * support(se, n)?)
}

/// `count` unit normals at angles `2πi / count`.
pub fn sampled_normals(count: usize) -> Vec<(f64, f64)> {
    (0..count)
        .map(|i| {
            let theta = std::f64::consts::TAU * i as f64 / count as f64;
            (theta.cos(), theta.sin())
        })
        .collect()
}

/// `max |Δb|` over [`SAMPLED_NORMALS`] evenly spaced normals.
pub fn max_boundary_displacement(se: &StructuringElement, sigma: Sigma) -> f64 {
    sampled_normals(SAMPLED_NORMALS)
        .into_iter()
        .map(|n| boundary_displacement(se, sigma, n).expect("sampled normals are unit").abs())
        .fold(0.0, f64::max)
}

/// Scalar mask error enhancement factor.
///
/// There is no measured MEEF behind the default of 1.4; it is a placeholder
/// that only sets the gain of the linear `Δb -> ΔEPE` map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EpeModelRaw")]
pub struct EpeModel {
    pub meef: f64,
}

#[derive(Deserialize)]
struct EpeModelRaw {
    meef: f64,
}

impl TryFrom<EpeModelRaw> for EpeModel {
    type Error = MorphologyError;

    fn try_from(raw: EpeModelRaw) -> Result<Self, Self::Error> {
        EpeModel::new(raw.meef)
    }
}

impl Default for EpeModel {
    fn default() -> Self {
        Self { meef: 1.4 }
    }
}

impl EpeModel {
    pub fn new(meef: f64) -> Result<Self, MorphologyError> {
        if !(meef.is_finite() && meef > 0.0) {
            return Err(MorphologyError::InvalidMeef(meef));
        }
        Ok(Self { meef })
    }
}

/// `ΔEPE = MEEF · Δb`.
pub fn predicted_epe(delta_b: f64, model: &EpeModel) -> f64 {
    model.meef * delta_b
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_dilate(a: &BinaryLayout, se: &StructuringElement) -> BinaryLayout {
        BinaryLayout::from_fn(a.width(), a.height(), |x, y| {
            se.offsets()
                .iter()
                .any(|&(dx, dy)| a.get_signed(x as i64 - dx as i64, y as i64 - dy as i64))
        })
    }

    fn random_layout(rng: &mut ChaCha8Rng, w: usize, h: usize, p: f64) -> BinaryLayout {
        BinaryLayout::from_fn(w, h, |_, _| rng.gen_bool(p))
    }

    #[test]
    fn dilating_a_point_by_square1_gives_3x3() {
        let mut a = BinaryLayout::new(32, 32);
        a.set(10, 10, true);
        let d = dilate(&a, &StructuringElement::square(1).unwrap());
        assert_eq!(d.area(), 9);
        for (x, y) in d.foreground() {
            assert!((9..=11).contains(&x) && (9..=11).contains(&y));
        }
    }

    #[test]
    fn point_element_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_layout(&mut rng, 16, 12, 0.4);
        let id = StructuringElement::point();
        assert_eq!(dilate(&a, &id), a);
        assert_eq!(erode(&a, &id), a);
        let full = BinaryLayout::filled(8, 8);
        assert_eq!(erode(&full, &id), full);
    }

    #[test]
    fn dilate_matches_naive_on_random_diamond2() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let se = StructuringElement::diamond(2).unwrap();
        for _ in 0..20 {
            let a = random_layout(&mut rng, 32, 32, 0.1);
            assert_eq!(dilate(&a, &se), naive_dilate(&a, &se));
        }
    }

    #[test]
    fn eroding_5x5_by_square1_gives_3x3() {
        let mut a = BinaryLayout::new(12, 12);
        a.fill_rect(PixelRect::new(3, 3, 8, 8), true);
        let e = erode(&a, &StructuringElement::square(1).unwrap());
        let mut expected = BinaryLayout::new(12, 12);
        expected.fill_rect(PixelRect::new(4, 4, 7, 7), true);
        assert_eq!(e, expected);
    }

    /// `¬(¬A ⊕ k)` with the complement taken over a grid padded by the
    /// element's reach, so off-grid background of `A` becomes foreground of `¬A`.
    fn dual_erode(a: &BinaryLayout, se: &StructuringElement) -> BinaryLayout {
        let m = se.scale() as usize;
        let padded = a.padded(m).complement();
        dilate(&padded, se)
            .complement()
            .cropped(PixelRect::new(m, m, m + a.width(), m + a.height()))
    }

    #[test]
    fn erosion_duality_on_random_layouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for r in 1..=3 {
            for se in [StructuringElement::square(r).unwrap(), StructuringElement::diamond(r).unwrap()] {
                let a = random_layout(&mut rng, 32, 32, 0.6);
                let e = erode(&a, &se);
                assert_eq!(e, dual_erode(&a, &se));
                // the grid-clipped complement agrees away from the border
                let clipped = dilate(&a.complement(), &se).complement();
                let m = r as usize;
                let inner = PixelRect::new(m, m, 32 - m, 32 - m);
                assert_eq!(e.cropped(inner), clipped.cropped(inner));
            }
        }
    }

    #[test]
    fn element_offsets_match_their_definitions() {
        let sq = StructuringElement::square(2).unwrap();
        assert_eq!(sq.offsets().len(), 25);
        let di = StructuringElement::diamond(2).unwrap();
        assert_eq!(di.offsets().len(), 13);
        for se in [sq, di] {
            assert!(se.offsets().contains(&(0, 0)));
            for &(dx, dy) in se.offsets() {
                assert!(se.offsets().contains(&(-dx, -dy)));
            }
        }
        assert_eq!(StructuringElement::square(0), Err(MorphologyError::ZeroScale));
        assert_eq!(
            StructuringElement::from_offsets(vec![(0, 0), (1, 0)]),
            Err(MorphologyError::InvalidOffsets)
        );
    }

    fn two_lines_with_gap() -> BinaryLayout {
        // rows 10..14 and 20..24: 4-px lines, 6-px gap
        let mut a = BinaryLayout::new(64, 40);
        a.fill_rect(PixelRect::new(0, 10, 64, 14), true);
        a.fill_rect(PixelRect::new(0, 20, 64, 24), true);
        a
    }

    #[test]
    fn footprint_dilation_fills_the_gap_locally() {
        let a = two_lines_with_gap();
        let spec = PerturbationSpec::new(Sigma::Dilation, StructuringElement::square(4).unwrap(), (32, 17));
        let b = perturb(&a, &spec).unwrap();
        assert!(a.is_subset_of(&b));
        for y in 14..20 {
            assert!(b.get(32, y));
        }
        assert!(b.equal_outside(&a, spec.window(64, 40)));
        assert!(b.equal_outside(&a, PixelRect::new(28, 13, 37, 22)));
    }

    #[test]
    fn footprint_erosion_on_background_is_noop() {
        let a = two_lines_with_gap();
        let spec = PerturbationSpec::new(Sigma::Erosion, StructuringElement::square(1).unwrap(), (32, 17));
        assert_eq!(perturb(&a, &spec).unwrap(), a);
    }

    #[test]
    fn windowed_erosion_thins_inside_window_only() {
        let mut a = BinaryLayout::new(64, 32);
        a.fill_rect(PixelRect::new(0, 10, 64, 14), true);
        let se = StructuringElement::square(1).unwrap();
        let spec = PerturbationSpec::new(Sigma::Erosion, se.clone(), (32, 12)).windowed(Some(2));
        let b = perturb(&a, &spec).unwrap();
        let window = spec.window(64, 32);
        assert_eq!(window, PixelRect::new(29, 9, 36, 16));
        let global = erode(&a, &se);
        for y in 0..32 {
            for x in 0..64 {
                let expected = if window.contains(x, y) { global.get(x, y) } else { a.get(x, y) };
                assert_eq!(b.get(x, y), expected, "({x},{y})");
            }
        }
        // line thins from 4 to 2 px inside the window
        assert_eq!((0..32).filter(|&y| b.get(32, y)).count(), 2);
        assert_eq!((0..32).filter(|&y| b.get(5, y)).count(), 4);
    }

    #[test]
    fn out_of_bounds_target_is_an_error() {
        let a = BinaryLayout::new(8, 8);
        let spec = PerturbationSpec::new(Sigma::Dilation, StructuringElement::square(1).unwrap(), (8, 0));
        assert!(matches!(perturb(&a, &spec), Err(MorphologyError::OutOfBoundsTarget { .. })));
    }

    #[test]
    fn support_examples() {
        let h = support(&StructuringElement::square(3).unwrap(), (1.0, 0.0)).unwrap();
        assert_eq!(h, 3.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // brute force over the 25 offsets of square(2): best is (2, 2)
        let brute = (-2..=2)
            .flat_map(|dx| (-2..=2).map(move |dy| (dx as f64 + dy as f64) * s))
            .fold(f64::MIN, f64::max);
        let h = support(&StructuringElement::square(2).unwrap(), (s, s)).unwrap();
        assert!((h - brute).abs() < 1e-12 && (h - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        let h = support(&StructuringElement::diamond(4).unwrap(), (s, s)).unwrap();
        assert!((h - 4.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            support(&StructuringElement::square(1).unwrap(), (1.0, 1.0)),
            Err(MorphologyError::NonUnitNormal(..))
        ));
    }

    #[test]
    fn boundary_displacement_examples() {
        let sq3 = StructuringElement::square(3).unwrap();
        assert_eq!(boundary_displacement(&sq3, Sigma::Dilation, (1.0, 0.0)).unwrap(), 3.0);
        assert_eq!(boundary_displacement(&sq3, Sigma::Erosion, (1.0, 0.0)).unwrap(), -3.0);
        let di2 = StructuringElement::diamond(2).unwrap();
        assert_eq!(boundary_displacement(&di2, Sigma::Dilation, (0.0, 1.0)).unwrap(), 2.0);
    }

    #[test]
    fn max_displacement_over_sampled_normals() {
        let sq = StructuringElement::square(3).unwrap();
        assert!((max_boundary_displacement(&sq, Sigma::Erosion) - 3.0 * 2f64.sqrt()).abs() < 1e-9);
        let di = StructuringElement::diamond(3).unwrap();
        assert!((max_boundary_displacement(&di, Sigma::Erosion) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn predicted_epe_examples() {
        assert_eq!(predicted_epe(2.0, &EpeModel::new(1.0).unwrap()), 2.0);
        assert_eq!(predicted_epe(-3.0, &EpeModel::new(2.0).unwrap()), -6.0);
        assert_eq!(predicted_epe(0.0, &EpeModel::default()), 0.0);
        assert!(EpeModel::new(0.0).is_err());
        assert!(serde_json::from_str::<EpeModel>(r#"{"meef": -1.0}"#).is_err());
    }

    #[test]
    fn spec_serializes_with_shape_and_scale_only() {
        let spec = PerturbationSpec::new(Sigma::Erosion, StructuringElement::diamond(3).unwrap(), (5, 6));
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(
            text,
            r#"{"sigma":-1,"se":{"shape":"diamond","r":3},"target":[5,6],"mode":"footprint","window_margin":null}"#
        );
        assert_eq!(serde_json::from_str::<PerturbationSpec>(&text).unwrap(), spec);
    }
}
