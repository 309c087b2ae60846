//! Litho proxy: bilinear upscale, Gaussian point-spread blur, optional grain
//! noise and a resist threshold. Also measures edge placement error between
//! two renders.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::injection::DefectRecord;
use crate::layout::{BinaryLayout, PixelRect};
use crate::seed::rng_from_seed;
use crate::topology::is_boundary;

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("invalid render config: {0}")]
    InvalidConfig(String),
    #[error("rendered images differ in size or config")]
    Mismatch,
    #[error("no boundary pixels inside the measurement window")]
    WindowEmpty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub output_size: u32,
    /// Output pixels per layout pixel.
    pub scale: f64,
    /// PSF standard deviation in output pixels.
    pub psf_sigma: f64,
    pub resist_threshold: f64,
    pub noise_sigma: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            output_size: 700,
            scale: 700.0 / 128.0,
            psf_sigma: 3.0,
            resist_threshold: 0.5,
            noise_sigma: 0.0,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self, layout: (usize, usize)) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidConfig(m.into()));
        if (self.output_size as usize) < layout.0.max(layout.1) {
            return bad("output_size must be at least the layout size");
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return bad("scale must be positive");
        }
        if !(self.psf_sigma.is_finite() && self.psf_sigma >= 0.0) {
            return bad("psf_sigma must be >= 0");
        }
        if !(self.resist_threshold > 0.0 && self.resist_threshold < 1.0) {
            return bad("resist_threshold must lie in (0, 1)");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0");
        }
        Ok(())
    }

    /// Hex SHA-256 of the config's JSON form.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Continuous output coordinate of a layout-grid edge coordinate, with the
    /// layout centred in the output field.
    fn to_output(&self, edge: f64, layout_len: usize) -> f64 {
        (edge - layout_len as f64 / 2.0) * self.scale + self.output_size as f64 / 2.0
    }

    /// Output pixels covered by a layout rectangle.
    pub fn layout_rect_to_output(&self, rect: PixelRect, layout: (usize, usize)) -> PixelRect {
        let n = self.output_size as i64;
        let lo = |e: usize, len| self.to_output(e as f64, len).floor() as i64;
        let hi = |e: usize, len| self.to_output(e as f64, len).ceil() as i64 - 1;
        PixelRect::from_inclusive_clipped(
            lo(rect.x0, layout.0),
            lo(rect.y0, layout.1),
            hi(rect.x1, layout.0),
            hi(rect.y1, layout.1),
            n as usize,
            n as usize,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities in `[0, 1]`.
    pub gray: Vec<f64>,
    /// `gray >= resist_threshold`.
    pub binary: BinaryLayout,
    pub layout_dims: (usize, usize),
    pub source_id: Option<String>,
    pub config_hash: String,
}

impl RenderedImage {
    pub fn with_source(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }
}

/// Normalized Gaussian truncated at `±ceil(4σ)`; `σ = 0` gives the unit impulse.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

struct Tap {
    i0: usize,
    i1: usize,
    t: f64,
}

/// Bilinear taps for each output sample along one axis, clamped to the edge.
fn bilinear_taps(cfg: &RenderConfig, layout_len: usize) -> Vec<Tap> {
    let n = cfg.output_size as usize;
    let last = layout_len as f64 - 1.0;
    (0..n)
        .map(|u| {
            let centre = (u as f64 + 0.5 - n as f64 / 2.0) / cfg.scale + layout_len as f64 / 2.0 - 0.5;
            let c = centre.clamp(0.0, last);
            let i0 = c.floor() as usize;
            let i1 = (i0 + 1).min(layout_len - 1);
            Tap { i0, i1, t: c - i0 as f64 }
        })
        .collect()
}

fn upscale(a: &BinaryLayout, cfg: &RenderConfig) -> Vec<f64> {
    let n = cfg.output_size as usize;
    let xs = bilinear_taps(cfg, a.width());
    let ys = bilinear_taps(cfg, a.height());
    let px = a.pixels();
    let w = a.width();
    // horizontal pass over every layout row, then blend rows
    let rows: Vec<Vec<f64>> = (0..a.height())
        .map(|y| {
            let row = &px[y * w..(y + 1) * w];
            xs.iter()
                .map(|tap| {
                    let (p, q) = (row[tap.i0] as f64, row[tap.i1] as f64);
                    p + (q - p) * tap.t
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n * n);
    for tap in &ys {
        let (r0, r1) = (&rows[tap.i0], &rows[tap.i1]);
        out.extend(r0.iter().zip(r1).map(|(&p, &q)| p + (q - p) * tap.t));
    }
    out
}

/// Separable convolution with edge replication.
fn blur(img: &[f64], n: usize, kernel: &[f64]) -> Vec<f64> {
    if kernel.len() == 1 {
        return img.to_vec();
    }
    let radius = (kernel.len() / 2) as i64;
    let clamp = |i: i64| i.clamp(0, n as i64 - 1) as usize;

    let mut tmp = vec![0.0; n * n];
    for y in 0..n {
        let src = &img[y * n..(y + 1) * n];
        let dst = &mut tmp[y * n..(y + 1) * n];
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * src[clamp(x as i64 + k as i64 - radius)];
            }
            *d = acc;
        }
    }

    let mut out = vec![0.0; n * n];
    for y in 0..n {
        let dst = &mut out[y * n..(y + 1) * n];
        for (k, &kv) in kernel.iter().enumerate() {
            let sy = clamp(y as i64 + k as i64 - radius);
            let src = &tmp[sy * n..(sy + 1) * n];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

/// Render a layout into a `output_size`² proxy micrograph.
pub fn render(a: &BinaryLayout, cfg: &RenderConfig, noise_seed: u64) -> Result<RenderedImage, RenderError> {
    cfg.validate(a.dims())?;
    let n = cfg.output_size as usize;
    let mut gray = blur(&upscale(a, cfg), n, &gaussian_kernel(cfg.psf_sigma));
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
        let mut rng = rng_from_seed(noise_seed);
        for v in gray.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    for v in gray.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    let thr = cfg.resist_threshold;
    let binary = BinaryLayout::from_pixels(n, n, gray.iter().map(|&v| (v >= thr) as u8).collect())
        .expect("binary by construction");
    Ok(RenderedImage {
        width: n,
        height: n,
        gray,
        binary,
        layout_dims: a.dims(),
        source_id: None,
        config_hash: cfg.config_hash(),
    })
}

/// Exact squared Euclidean distance transform of a 1-D sampled function.
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    let first = match f.iter().position(|x| x.is_finite()) {
        Some(i) => i,
        None => {
            out.fill(f64::INFINITY);
            return;
        }
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared distance from every cell to the nearest `true` cell.
pub fn squared_distance_transform(feature: &[bool], width: usize, height: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = feature.iter().map(|&f| if f { 0.0 } else { f64::INFINITY }).collect();
    let mut col = vec![0.0; height];
    let mut col_out = vec![0.0; height];
    for x in 0..width {
        for y in 0..height {
            col[y] = grid[y * width + x];
        }
        edt_1d(&col, &mut col_out);
        for y in 0..height {
            grid[y * width + x] = col_out[y];
        }
    }
    let mut row_out = vec![0.0; width];
    for y in 0..height {
        edt_1d(&grid[y * width..(y + 1) * width], &mut row_out);
        grid[y * width..(y + 1) * width].copy_from_slice(&row_out);
    }
    grid
}

/// Directed Hausdorff distance `B -> B'` between the binarized contours inside
/// the record's perturbation window (scaled to output pixels): the largest
/// distance from a boundary pixel of `b` to the nearest boundary pixel of
/// `b_prime`.
pub fn measure_epe(
    b: &RenderedImage,
    b_prime: &RenderedImage,
    record: &DefectRecord,
    cfg: &RenderConfig,
) -> Result<f64, RenderError> {
    if b.width != b_prime.width
        || b.height != b_prime.height
        || b.config_hash != b_prime.config_hash
        || b.layout_dims != b_prime.layout_dims
    {
        return Err(RenderError::Mismatch);
    }
    let (lw, lh) = b.layout_dims;
    let window = cfg.layout_rect_to_output(record.spec.window(lw, lh), b.layout_dims);
    measure_epe_in(b, b_prime, window)
}

/// [`measure_epe`] over an explicit output-pixel window.
pub fn measure_epe_in(b: &RenderedImage, b_prime: &RenderedImage, window: PixelRect) -> Result<f64, RenderError> {
    let window = window.clip(b.width, b.height);
    let identical = (window.y0..window.y1)
        .all(|y| (window.x0..window.x1).all(|x| b.binary.get(x, y) == b_prime.binary.get(x, y)));
    if identical {
        return Ok(0.0);
    }
    let (ww, wh) = (window.width(), window.height());
    let mut source = Vec::new();
    let mut target = vec![false; ww * wh];
    for y in window.y0..window.y1 {
        for x in window.x0..window.x1 {
            if is_boundary(&b.binary, x, y) {
                source.push((x - window.x0, y - window.y0));
            }
            target[(y - window.y0) * ww + (x - window.x0)] = is_boundary(&b_prime.binary, x, y);
        }
    }
    if source.is_empty() || !target.iter().any(|&t| t) {
        return Err(RenderError::WindowEmpty);
    }
    let dist = squared_distance_transform(&target, ww, wh);
    Ok(source
        .iter()
        .map(|&(x, y)| dist[y * ww + x])
        .fold(0.0, f64::max)
        .sqrt())
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when fewer
/// than two points or either side is constant.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::{perturb, PerturbationSpec, Sigma, StructuringElement};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::function::erf::erf;

    fn horizontal_line(rows: std::ops::Range<usize>) -> BinaryLayout {
        BinaryLayout::from_fn(128, 128, |_, y| rows.contains(&y))
    }

    #[test]
    fn kernel_is_normalized() {
        for sigma in [0.0, 0.5, 1.0, 3.0, 7.25] {
            let k = gaussian_kernel(sigma);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(k.len() % 2, 1);
        }
        assert_eq!(gaussian_kernel(3.0).len(), 25);
    }

    #[test]
    fn identity_psf_preserves_area_ratio() {
        let cfg = RenderConfig {
            psf_sigma: 0.0,
            ..RenderConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = BinaryLayout::from_fn(128, 128, |x, y| {
            ((x / 8) + (y / 8)) % 2 == 0 && rng.gen_bool(0.95)
        });
        let img = render(&a, &cfg, 0).unwrap();
        let layout_ratio = a.area() as f64 / (128.0 * 128.0);
        let image_ratio = img.binary.area() as f64 / (700.0 * 700.0);
        assert!((image_ratio - layout_ratio).abs() <= 0.02 * layout_ratio, "{image_ratio} vs {layout_ratio}");
    }

    #[test]
    fn constant_layout_stays_constant() {
        let full = BinaryLayout::filled(128, 128);
        for sigma in [0.0, 1.5, 3.0] {
            let cfg = RenderConfig {
                psf_sigma: sigma,
                ..RenderConfig::default()
            };
            let img = render(&full, &cfg, 0).unwrap();
            assert_eq!(img.binary.area(), 700 * 700);
        }
    }

    /// Width of the above-threshold interval of a blurred top-hat, found by
    /// bisection on the erf profile.
    fn analytic_printed_width(width: f64, sigma: f64, thr: f64) -> f64 {
        let profile = |x: f64| {
            let s = sigma * std::f64::consts::SQRT_2;
            0.5 * (erf((x + width / 2.0) / s) - erf((x - width / 2.0) / s))
        };
        let (mut lo, mut hi) = (0.0, width);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if profile(mid) >= thr {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        2.0 * lo
    }

    #[test]
    fn printed_line_width_matches_erf_model() {
        let cfg = RenderConfig::default();
        let a = horizontal_line(62..66);
        let img = render(&a, &cfg, 0).unwrap();
        let expected = analytic_printed_width(4.0 * cfg.scale, cfg.psf_sigma, cfg.resist_threshold);
        assert!((expected - 21.875).abs() < 0.1);
        for x in [100, 350, 600] {
            let measured = (0..700).filter(|&y| img.binary.get(x, y)).count() as f64;
            assert!((measured - expected).abs() <= 2.0, "column {x}: {measured} vs {expected}");
        }
    }

    #[test]
    fn binary_is_thresholded_gray() {
        let a = horizontal_line(30..34);
        let cfg = RenderConfig::default();
        let img = render(&a, &cfg, 0).unwrap();
        for (i, &g) in img.gray.iter().enumerate() {
            assert_eq!(img.binary.pixels()[i] == 1, g >= cfg.resist_threshold);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let a = horizontal_line(30..34);
        let cfg = RenderConfig {
            noise_sigma: 0.05,
            ..RenderConfig::default()
        };
        let x = render(&a, &cfg, 9).unwrap();
        assert_eq!(x, render(&a, &cfg, 9).unwrap());
        assert_ne!(x.gray, render(&a, &cfg, 10).unwrap().gray);
        assert!(x.gray.iter().all(|&g| (0.0..=1.0).contains(&g)));
    }

    #[test]
    fn rendering_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cfg = RenderConfig {
            output_size: 200,
            scale: 200.0 / 128.0,
            ..RenderConfig::default()
        };
        for _ in 0..3 {
            let a = BinaryLayout::from_fn(128, 128, |_, _| rng.gen_bool(0.3));
            let bigger = a.union(&BinaryLayout::from_fn(128, 128, |_, _| rng.gen_bool(0.2)));
            let (ra, rb) = (render(&a, &cfg, 0).unwrap(), render(&bigger, &cfg, 0).unwrap());
            assert!(ra.binary.is_subset_of(&rb.binary));
        }
    }

    #[test]
    fn edt_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (w, h) = (23, 17);
        let feature: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.05)).collect();
        let dt = squared_distance_transform(&feature, w, h);
        for y in 0..h {
            for x in 0..w {
                let best = (0..w * h)
                    .filter(|&i| feature[i])
                    .map(|i| {
                        let (fx, fy) = ((i % w) as f64, (i / w) as f64);
                        (fx - x as f64).powi(2) + (fy - y as f64).powi(2)
                    })
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(dt[y * w + x], best);
            }
        }
    }

    fn record_for(spec: PerturbationSpec) -> DefectRecord {
        DefectRecord {
            id: "d".into(),
            base_layout_id: "a".into(),
            group: crate::injection::DefectGroup::BridgeSquare,
            spec,
            delta_k: 0,
            class: crate::topology::DefectClass::Burr,
            delta_b_max: 0.0,
            predicted_epe_max: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn identical_renders_measure_zero() {
        let cfg = RenderConfig::default();
        let a = horizontal_line(40..44);
        let b = render(&a, &cfg, 0).unwrap();
        let spec = PerturbationSpec::new(Sigma::Dilation, StructuringElement::square(3).unwrap(), (64, 43));
        assert_eq!(measure_epe(&b, &b, &record_for(spec), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn footprint_dilation_measures_r_times_scale() {
        let cfg = RenderConfig {
            psf_sigma: 0.0,
            ..RenderConfig::default()
        };
        let a = horizontal_line(40..44);
        let b = render(&a, &cfg, 0).unwrap();
        for r in 2..=6u32 {
            // blob centred on the last line row pushes the lower edge down by r
            let spec = PerturbationSpec::new(Sigma::Dilation, StructuringElement::square(r).unwrap(), (64, 43));
            let a2 = perturb(&a, &spec).unwrap();
            let b2 = render(&a2, &cfg, 0).unwrap();
            let got = measure_epe(&b, &b2, &record_for(spec), &cfg).unwrap();
            let expected = r as f64 * cfg.scale;
            assert!((got - expected).abs() <= 1.0, "r={r}: {got} vs {expected}");
        }
    }

    #[test]
    fn epe_direction_is_b_to_b_prime() {
        // a full cut: edges of B inside the gap are far from the cut faces of
        // B', while every face pixel of B' sits close to an edge of B
        let cfg = RenderConfig {
            psf_sigma: 0.0,
            ..RenderConfig::default()
        };
        let a = horizontal_line(40..44);
        let spec = PerturbationSpec::new(Sigma::Erosion, StructuringElement::square(5).unwrap(), (64, 42));
        let a2 = perturb(&a, &spec).unwrap();
        let (b, b2) = (render(&a, &cfg, 0).unwrap(), render(&a2, &cfg, 0).unwrap());
        let rec = record_for(spec);
        let forward = measure_epe(&b, &b2, &rec, &cfg).unwrap();
        let backward = measure_epe(&b2, &b, &rec, &cfg).unwrap();
        assert!((forward - 5.5 * cfg.scale).abs() <= 1.5, "{forward}");
        assert!(backward < 2.5 * cfg.scale, "{backward}");
    }

    #[test]
    fn empty_window_is_an_error() {
        let cfg = RenderConfig::default();
        let blank = render(&BinaryLayout::new(128, 128), &cfg, 0).unwrap();
        let mut a = BinaryLayout::new(128, 128);
        a.fill_rect(PixelRect::new(60, 60, 68, 68), true);
        let blob = render(&a, &cfg, 0).unwrap();
        // blob fully inside the window: B has no boundary there, B' has one
        let spec = PerturbationSpec::new(Sigma::Dilation, StructuringElement::square(4).unwrap(), (64, 64));
        assert_eq!(measure_epe(&blank, &blob, &record_for(spec), &cfg), Err(RenderError::WindowEmpty));
    }

    #[test]
    fn spearman_basics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman_rho(&xs, &[10.0, 20.0, 30.0, 40.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman_rho(&xs, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(spearman_rho(&xs, &[1.0; 4]), None);
        // ties: ranks [1.5, 1.5, 3], [1, 2, 3]
        let rho = spearman_rho(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((rho - 0.8660254037844386).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let a = BinaryLayout::new(128, 128);
        for cfg in [
            RenderConfig { output_size: 64, ..RenderConfig::default() },
            RenderConfig { psf_sigma: -1.0, ..RenderConfig::default() },
            RenderConfig { resist_threshold: 1.0, ..RenderConfig::default() },
        ] {
            assert!(matches!(render(&a, &cfg, 0), Err(RenderError::InvalidConfig(_))));
        }
    }
}
