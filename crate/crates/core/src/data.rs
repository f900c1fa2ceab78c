//! Deterministic generators for the desk-scale datasets: 2-D point sets,
//! a two-factor glyph dataset, and a patchable two-class image dataset.
//!
//! Every generator is a pure function of its arguments; the same
//! `(kind, n, noise, seed)` always yields bit-identical tensors.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::cos;
use libm::sin;
use libm::sqrt;

use crate::error::{CoreError, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const IMG_SIDE: usize = 16;
pub const IMG_PIXELS: usize = IMG_SIDE * IMG_SIDE;
pub const GLYPH_FACTORS: usize = 6;
pub const GLYPH_CLASSES: usize = GLYPH_FACTORS * GLYPH_FACTORS;

const PI: f64 = core::f64::consts::PI;

/// The four 2-D point-sample shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSetKind {
    SwissRoll,
    Circle,
    Moon,
    SCurve,
}

impl PointSetKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "swiss_roll" => PointSetKind::SwissRoll,
            "circle" => PointSetKind::Circle,
            "moon" => PointSetKind::Moon,
            "s_curve" => PointSetKind::SCurve,
            other => {
                return Err(CoreError::InvalidArgument(format!("unknown point-set kind '{other}'")))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            PointSetKind::SwissRoll => "swiss_roll",
            PointSetKind::Circle => "circle",
            PointSetKind::Moon => "moon",
            PointSetKind::SCurve => "s_curve",
        }
    }

    pub fn all() -> [PointSetKind; 4] {
        [PointSetKind::SwissRoll, PointSetKind::Circle, PointSetKind::Moon, PointSetKind::SCurve]
    }
}

/// A standardized 2-D point sample.
#[derive(Debug, Clone)]
pub struct PointSet {
    pub points: Tensor,
    pub kind: PointSetKind,
    pub seed: u64,
}

impl PointSet {
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Raw (pre-noise, pre-standardization) curve point for parameter `u` in [0, 1).
fn curve_point(kind: PointSetKind, u: f64, side: bool) -> (f64, f64) {
    match kind {
        PointSetKind::SwissRoll => {
            // Planar spiral, one and a half turns, radius normalised to <= 1.
            let t = 1.5 * PI * (1.0 + 2.0 * u);
            let scale = 4.5 * PI;
            (t * cos(t) / scale, t * sin(t) / scale)
        }
        PointSetKind::Circle => {
            let theta = 2.0 * PI * u;
            (cos(theta), sin(theta))
        }
        PointSetKind::Moon => {
            let theta = PI * u;
            if side {
                (cos(theta), sin(theta))
            } else {
                (1.0 - cos(theta), 0.5 - sin(theta))
            }
        }
        PointSetKind::SCurve => {
            let t = 1.5 * PI * (2.0 * u - 1.0);
            let sign = if t >= 0.0 { 1.0 } else { -1.0 };
            (sin(t), sign * (cos(t) - 1.0) * 0.5)
        }
    }
}

fn raw_points(kind: PointSetKind, n: usize, noise: f64, seed: u64) -> Vec<f64> {
    let mut rng = Rng::with_stream(seed, 0x706f696e74); // "point"
    let mut data = Vec::with_capacity(n * 2);
    for i in 0..n {
        let u = rng.uniform();
        let side = i % 2 == 0;
        let (mut x, mut y) = curve_point(kind, u, side);
        if noise > 0.0 {
            x += noise * rng.normal();
            y += noise * rng.normal();
        }
        data.push(x);
        data.push(y);
    }
    data
}

/// Standardize columns of an `n x 2` buffer to zero mean and unit variance
/// (population variance). Constant columns are left centred.
pub fn standardize(points: &mut [f64]) {
    let n = points.len() / 2;
    if n == 0 {
        return;
    }
    for axis in 0..2 {
        let mut mean = 0.0;
        for i in 0..n {
            mean += points[i * 2 + axis];
        }
        mean /= n as f64;
        let mut var = 0.0;
        for i in 0..n {
            let d = points[i * 2 + axis] - mean;
            var += d * d;
        }
        var /= n as f64;
        let sd = if var > 0.0 { sqrt(var) } else { 1.0 };
        for i in 0..n {
            points[i * 2 + axis] = (points[i * 2 + axis] - mean) / sd;
        }
    }
}

/// Sample `n` points of the given shape, jitter with isotropic Gaussian
/// noise of scale `noise`, then standardize per axis.
pub fn make_point_set(kind: PointSetKind, n: usize, noise: f64, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(CoreError::InvalidArgument("point count must be at least 1".into()));
    }
    if noise < 0.0 || !noise.is_finite() {
        return Err(CoreError::InvalidArgument("noise must be a finite non-negative scalar".into()));
    }
    let mut data = raw_points(kind, n, noise, seed);
    standardize(&mut data);
    Ok(PointSet { points: Tensor::from_vec(&[n, 2], data)?, kind, seed })
}

/// Convenience: `make_point_set` by kind name.
pub fn make_point_set_named(kind: &str, n: usize, noise: f64, seed: u64) -> Result<PointSet> {
    make_point_set(PointSetKind::parse(kind)?, n, noise, seed)
}

// ---------------------------------------------------------------------------
// Glyph dataset
// ---------------------------------------------------------------------------

/// Two-factor glyph images: the left 8x16 half is drawn from factor 1's
/// template, the right half from factor 2's.
#[derive(Debug, Clone)]
pub struct GlyphDataset {
    /// `n x 1 x 16 x 16`, values in [0, 1].
    pub images: Tensor,
    /// Factor pair per sample, each in 0..6.
    pub factors: Vec<[u8; 2]>,
}

impl GlyphDataset {
    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Flat class index `6*f1 + f2`.
    pub fn class_of(&self, i: usize) -> usize {
        self.factors[i][0] as usize * GLYPH_FACTORS + self.factors[i][1] as usize
    }
}

/// The 8x16 half-image template for glyph `index` (0..6), row-major
/// (16 rows of 8 columns).
pub fn glyph_half(index: usize) -> Vec<f64> {
    assert!(index < GLYPH_FACTORS, "glyph index out of range");
    let (w, h) = (8usize, 16usize);
    let mut img = vec![0.0; w * h];
    let mut set = |r: usize, c: usize| img[r * w + c] = 1.0;
    match index {
        // Border frame.
        0 => {
            for r in 1..h - 1 {
                set(r, 1);
                set(r, w - 2);
            }
            for c in 1..w - 1 {
                set(1, c);
                set(h - 2, c);
            }
        }
        // Center vertical bar.
        1 => {
            for r in 1..h - 1 {
                set(r, 3);
                set(r, 4);
            }
        }
        // Center horizontal bar.
        2 => {
            for c in 1..w - 1 {
                set(7, c);
                set(8, c);
            }
        }
        // 2x2 checkerboard.
        3 => {
            for r in 0..h {
                for c in 0..w {
                    if (r / 2 + c / 2) % 2 == 0 {
                        set(r, c);
                    }
                }
            }
        }
        // Diagonal band from top-left to bottom-right.
        4 => {
            for r in 0..h {
                let center = r as f64 * (w - 1) as f64 / (h - 1) as f64;
                for c in 0..w {
                    if (c as f64 - center).abs() <= 1.0 {
                        set(r, c);
                    }
                }
            }
        }
        // Filled ellipse.
        _ => {
            let (cr, cc) = (7.5, 3.5);
            for r in 0..h {
                for c in 0..w {
                    let dr = (r as f64 - cr) / 5.5;
                    let dc = (c as f64 - cc) / 2.8;
                    if dr * dr + dc * dc <= 1.0 {
                        set(r, c);
                    }
                }
            }
        }
    }
    img
}

/// Compose the clean (pre-jitter) 16x16 glyph image for a factor pair.
pub fn compose_glyph(f1: usize, f2: usize) -> Vec<f64> {
    let left = glyph_half(f1);
    let right = glyph_half(f2);
    let mut img = vec![0.0; IMG_PIXELS];
    for r in 0..IMG_SIDE {
        for c in 0..8 {
            img[r * IMG_SIDE + c] = left[r * 8 + c];
            img[r * IMG_SIDE + 8 + c] = right[r * 8 + c];
        }
    }
    img
}

/// Pixel jitter applied to every rendered image.
const GLYPH_JITTER: f64 = 0.04;

/// Balanced two-factor glyph dataset: every one of the 36 factor pairs
/// appears at least `n / 36` times (the remainder is spread over the first
/// classes), with mild per-sample pixel jitter. Requires `n >= 1800`.
pub fn make_glyph_dataset(n: usize, seed: u64) -> Result<GlyphDataset> {
    if n < GLYPH_CLASSES * 50 {
        return Err(CoreError::InvalidArgument(format!(
            "glyph dataset needs n >= {}, got {n}",
            GLYPH_CLASSES * 50
        )));
    }
    let mut rng = Rng::with_stream(seed, 0x676c797068); // "glyph"
    let base = n / GLYPH_CLASSES;
    let extra = n % GLYPH_CLASSES;
    let mut factors: Vec<[u8; 2]> = Vec::with_capacity(n);
    for class in 0..GLYPH_CLASSES {
        let count = base + usize::from(class < extra);
        for _ in 0..count {
            factors.push([(class / GLYPH_FACTORS) as u8, (class % GLYPH_FACTORS) as u8]);
        }
    }
    // Deterministic shuffle so minibatches mix classes.
    let order = rng.permutation(n);
    let factors: Vec<[u8; 2]> = order.iter().map(|&i| factors[i]).collect();

    let mut data = Vec::with_capacity(n * IMG_PIXELS);
    for f in &factors {
        let mut img = compose_glyph(f[0] as usize, f[1] as usize);
        for px in img.iter_mut() {
            *px = (*px + GLYPH_JITTER * rng.normal()).clamp(0.0, 1.0);
        }
        data.extend_from_slice(&img);
    }
    Ok(GlyphDataset {
        images: Tensor::from_vec(&[n, 1, IMG_SIDE, IMG_SIDE], data)?,
        factors,
    })
}

/// Intensity-inverted copy of an image tensor (out-of-distribution probe).
pub fn invert_images(images: &Tensor) -> Tensor {
    let data: Vec<f64> = images.data().iter().map(|&v| 1.0 - v).collect();
    Tensor::from_vec(images.shape(), data).unwrap()
}

// ---------------------------------------------------------------------------
// Patchable two-class dataset
// ---------------------------------------------------------------------------

/// Pixel rectangle `(row, col, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.height && c >= self.col && c < self.col + self.width
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn fits(&self, side: usize) -> bool {
        self.height > 0
            && self.width > 0
            && self.row + self.height <= side
            && self.col + self.width <= side
    }
}

/// Default attack patch: 4x8 pixels centred at the top of the image.
pub const DEFAULT_PATCH: Rect = Rect { row: 0, col: 4, height: 4, width: 8 };

/// Two-class 16x16 image set with a designated patchable region.
#[derive(Debug, Clone)]
pub struct PatchImageSet {
    /// `n x 1 x 16 x 16`, values in [0, 1].
    pub images: Tensor,
    /// Binary class label per sample.
    pub labels: Vec<u8>,
    /// Default region patch attacks perturb.
    pub patch: Rect,
}

impl PatchImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Clean template of one class: 0 is a diagonal cross, 1 is a ring.
pub fn patch_class_template(class: usize) -> Vec<f64> {
    let mut img = vec![0.0; IMG_PIXELS];
    if class == 0 {
        for r in 0..IMG_SIDE {
            for c in 0..IMG_SIDE {
                let d1 = (r as i64 - c as i64).abs();
                let d2 = (r as i64 + c as i64 - (IMG_SIDE as i64 - 1)).abs();
                if d1 <= 1 || d2 <= 1 {
                    img[r * IMG_SIDE + c] = 1.0;
                }
            }
        }
    } else {
        let center = (IMG_SIDE as f64 - 1.0) / 2.0;
        for r in 0..IMG_SIDE {
            for c in 0..IMG_SIDE {
                let dr = r as f64 - center;
                let dc = c as f64 - center;
                let dist = sqrt(dr * dr + dc * dc);
                if (dist - 5.2).abs() <= 1.1 {
                    img[r * IMG_SIDE + c] = 1.0;
                }
            }
        }
    }
    img
}

const PATCH_SET_JITTER: f64 = 0.05;

/// Balanced binary dataset of cross/ring images with per-sample intensity
/// variation and pixel jitter.
pub fn make_patch_dataset(n: usize, seed: u64) -> Result<PatchImageSet> {
    if n < 2 {
        return Err(CoreError::InvalidArgument("patch dataset needs n >= 2".into()));
    }
    let mut rng = Rng::with_stream(seed, 0x7061746368); // "patch"
    let mut labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let order = rng.permutation(n);
    labels = order.iter().map(|&i| labels[i]).collect();

    let templates = [patch_class_template(0), patch_class_template(1)];
    let mut data = Vec::with_capacity(n * IMG_PIXELS);
    for &label in &labels {
        let intensity = rng.uniform_range(0.7, 1.0);
        for &px in &templates[label as usize] {
            let v = px * intensity + PATCH_SET_JITTER * rng.normal();
            data.push(v.clamp(0.0, 1.0));
        }
    }
    Ok(PatchImageSet {
        images: Tensor::from_vec(&[n, 1, IMG_SIDE, IMG_SIDE], data)?,
        labels,
        patch: DEFAULT_PATCH,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swiss_roll_standardization() {
        let ps = make_point_set(PointSetKind::SwissRoll, 10_000, 0.05, 3).unwrap();
        assert_eq!(ps.points.shape(), &[10_000, 2]);
        for axis in 0..2 {
            let mean: f64 =
                (0..10_000).map(|i| ps.points.data()[i * 2 + axis]).sum::<f64>() / 10_000.0;
            assert!(mean.abs() < 1e-9, "axis {axis} mean {mean}");
            let var: f64 = (0..10_000)
                .map(|i| {
                    let v = ps.points.data()[i * 2 + axis] - mean;
                    v * v
                })
                .sum::<f64>()
                / 10_000.0;
            assert!((var - 1.0).abs() < 1e-9, "axis {axis} var {var}");
        }
    }

    #[test]
    fn noiseless_circle_has_constant_radius_pre_normalization() {
        let raw = raw_points(PointSetKind::Circle, 512, 0.0, 11);
        for i in 0..512 {
            let (x, y) = (raw[i * 2], raw[i * 2 + 1]);
            assert!((x * x + y * y - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn point_sets_are_deterministic() {
        let a = make_point_set(PointSetKind::Moon, 500, 0.05, 17).unwrap();
        let b = make_point_set(PointSetKind::Moon, 500, 0.05, 17).unwrap();
        assert_eq!(a.points, b.points);
        let c = make_point_set(PointSetKind::Moon, 500, 0.05, 18).unwrap();
        assert_ne!(a.points, c.points);
    }

    #[test]
    fn standardize_is_idempotent() {
        let mut pts = raw_points(PointSetKind::SCurve, 300, 0.1, 5);
        standardize(&mut pts);
        let once = pts.clone();
        standardize(&mut pts);
        for (a, b) in once.iter().zip(&pts) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_kind_is_rejected() {
        assert!(make_point_set_named("spiral", 10, 0.0, 0).is_err());
    }

    #[test]
    fn glyph_halves_compose() {
        // (0,0) and (0,1) share the left half bit for bit, pre-jitter.
        let a = compose_glyph(0, 0);
        let b = compose_glyph(0, 1);
        for r in 0..IMG_SIDE {
            for c in 0..8 {
                assert_eq!(a[r * IMG_SIDE + c], b[r * IMG_SIDE + c]);
            }
        }
        assert_ne!(a, b);
    }

    #[test]
    fn glyph_templates_distinct() {
        for i in 0..GLYPH_FACTORS {
            for j in (i + 1)..GLYPH_FACTORS {
                assert_ne!(glyph_half(i), glyph_half(j), "glyphs {i} and {j} collide");
            }
        }
    }

    #[test]
    fn glyph_dataset_is_balanced_and_deterministic() {
        let ds = make_glyph_dataset(3600, 7).unwrap();
        assert_eq!(ds.len(), 3600);
        let mut counts = [0usize; GLYPH_CLASSES];
        for i in 0..ds.len() {
            counts[ds.class_of(i)] += 1;
        }
        assert!(counts.iter().all(|&c| c == 100), "counts {counts:?}");

        let ds2 = make_glyph_dataset(3600, 7).unwrap();
        assert_eq!(ds.images, ds2.images);
        assert!(ds.images.data().iter().all(|&v| (0.0..=1.0).contains(&v)));

        assert!(make_glyph_dataset(1799, 7).is_err());
    }

    #[test]
    fn patch_dataset_basics() {
        let ds = make_patch_dataset(400, 21).unwrap();
        assert_eq!(ds.len(), 400);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 0).count(), 200);
        assert!(ds.images.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let again = make_patch_dataset(400, 21).unwrap();
        assert_eq!(ds.images, again.images);
        assert!(ds.patch.fits(IMG_SIDE));
    }

    #[test]
    fn class_templates_overlap_below_half() {
        let a = patch_class_template(0);
        let b = patch_class_template(1);
        let mut both = 0usize;
        let mut either = 0usize;
        for (x, y) in a.iter().zip(&b) {
            let (xa, ya) = (*x > 0.5, *y > 0.5);
            if xa && ya {
                both += 1;
            }
            if xa || ya {
                either += 1;
            }
        }
        let overlap = both as f64 / either as f64;
        assert!(overlap < 0.5, "overlap {overlap}");
    }

    #[test]
    fn inverted_images_flip_intensity() {
        let ds = make_glyph_dataset(1800, 3).unwrap();
        let inv = invert_images(&ds.images);
        for (a, b) in ds.images.data().iter().zip(inv.data()) {
            assert!((a + b - 1.0).abs() < 1e-15);
        }
    }
}
