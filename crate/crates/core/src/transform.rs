//! Object-level and image-level augmentation.
//!
//! An object-level pipeline is two rigid steps and two intensity steps,
//! each kind drawn uniformly with replacement, interleaved in random order.
//! Rigid steps move the lesion patch, its mask and a coverage mask (pixels
//! that still carry source content) together; intensity steps touch only the
//! image.
//!
//! Rotation is counter-clockwise as displayed (rows grow downward) about the
//! patch centre. Rotations and scalings resize the frame so no source pixel
//! is cropped: exact multiples of 90 degrees permute pixels, other angles use
//! the bounding box of the rotated frame. Flips and pans keep the frame.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{convolve_separable, gaussian_kernel};
use crate::raster::{BinaryMask, ClassId, ImagePlane, Interpolation, LabelMap, Raster, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Mirror left to right.
    Horizontal,
    /// Mirror top to bottom.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RigidKind {
    None,
    Flip { axis: Axis },
    Rotation { degrees: f64 },
    Scaling { factor: f64 },
    Panning { dr: i64, dc: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntensityKind {
    None,
    Gamma { g: f64 },
    GaussianNoise { sigma: f64 },
    GaussianBlur { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformStep {
    Rigid(RigidKind),
    Intensity(IntensityKind),
}

/// Four steps applied in order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransformPipeline {
    pub steps: Vec<TransformStep>,
}

impl TransformPipeline {
    pub fn identity() -> Self {
        Self {
            steps: vec![
                TransformStep::Rigid(RigidKind::None),
                TransformStep::Rigid(RigidKind::None),
                TransformStep::Intensity(IntensityKind::None),
                TransformStep::Intensity(IntensityKind::None),
            ],
        }
    }

    pub fn rigid_steps(&self) -> impl Iterator<Item = &RigidKind> {
        self.steps.iter().filter_map(|s| match s {
            TransformStep::Rigid(r) => Some(r),
            TransformStep::Intensity(_) => None,
        })
    }
}

/// Optional crop followed by a resize, then intensity steps on the image.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImageLevelPipeline {
    pub crop: Option<Rect>,
    pub intensity: Vec<IntensityKind>,
}

/// Sampling ranges for transform parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformRanges {
    /// Rotation angles are drawn from `[-rotation_degrees, rotation_degrees]`.
    pub rotation_degrees: f64,
    pub scale: [f64; 2],
    /// Pan distance as a fraction of the patch size, in either direction.
    pub pan_fraction: f64,
    pub gamma: [f64; 2],
    pub noise_sigma: [f64; 2],
    pub blur_sigma: [f64; 2],
    /// Probability that an image-level pipeline crops.
    pub crop_probability: f64,
    /// Side length of the crop as a fraction of the image.
    pub crop_scale: [f64; 2],
}

impl Default for TransformRanges {
    fn default() -> Self {
        Self {
            rotation_degrees: 30.0,
            scale: [0.8, 1.25],
            pan_fraction: 0.1,
            gamma: [0.7, 1.5],
            noise_sigma: [0.0, 0.05],
            blur_sigma: [0.0, 1.5],
            crop_probability: 0.5,
            crop_scale: [0.8, 1.0],
        }
    }
}

fn check_range(name: &str, r: [f64; 2], lo: f64, hi: f64) -> Result<()> {
    if !(r[0] <= r[1] && r[0] >= lo && r[1] <= hi) {
        return Err(Error::InvalidParameter(format!(
            "{name} range {r:?} must be ordered and within [{lo}, {hi}]"
        )));
    }
    Ok(())
}

impl TransformRanges {
    pub fn validate(&self) -> Result<()> {
        check_range("rotation", [0.0, self.rotation_degrees], 0.0, 180.0)?;
        check_range("scale", self.scale, f64::MIN_POSITIVE, f64::INFINITY)?;
        check_range("pan fraction", [0.0, self.pan_fraction], 0.0, 1.0)?;
        check_range("gamma", self.gamma, f64::MIN_POSITIVE, f64::INFINITY)?;
        check_range("noise sigma", self.noise_sigma, 0.0, f64::INFINITY)?;
        check_range("blur sigma", self.blur_sigma, 0.0, f64::INFINITY)?;
        check_range("crop probability", [0.0, self.crop_probability], 0.0, 1.0)?;
        check_range("crop scale", self.crop_scale, f64::MIN_POSITIVE, 1.0)?;
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

fn sample_rigid<R: Rng + ?Sized>(rng: &mut R, ranges: &TransformRanges, dims: (usize, usize)) -> RigidKind {
    match rng.random_range(0..5) {
        0 => RigidKind::None,
        1 => RigidKind::Flip { axis: if rng.random_bool(0.5) { Axis::Horizontal } else { Axis::Vertical } },
        2 => RigidKind::Rotation { degrees: uniform(rng, [-ranges.rotation_degrees, ranges.rotation_degrees]) },
        3 => RigidKind::Scaling { factor: uniform(rng, ranges.scale) },
        _ => {
            let f = ranges.pan_fraction;
            let dr = (uniform(rng, [-f, f]) * dims.0 as f64).round() as i64;
            let dc = (uniform(rng, [-f, f]) * dims.1 as f64).round() as i64;
            RigidKind::Panning { dr, dc }
        }
    }
}

fn sample_intensity<R: Rng + ?Sized>(rng: &mut R, ranges: &TransformRanges) -> IntensityKind {
    match rng.random_range(0..4) {
        0 => IntensityKind::None,
        1 => IntensityKind::Gamma { g: uniform(rng, ranges.gamma) },
        2 => IntensityKind::GaussianNoise { sigma: uniform(rng, ranges.noise_sigma) },
        _ => IntensityKind::GaussianBlur { sigma: uniform(rng, ranges.blur_sigma) },
    }
}

/// Draws an object-level pipeline for a patch of the given dimensions (used
/// to scale pan distances).
pub fn sample_object_pipeline<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &TransformRanges,
    patch_dims: (usize, usize),
) -> TransformPipeline {
    let mut steps = vec![
        TransformStep::Rigid(sample_rigid(rng, ranges, patch_dims)),
        TransformStep::Rigid(sample_rigid(rng, ranges, patch_dims)),
        TransformStep::Intensity(sample_intensity(rng, ranges)),
        TransformStep::Intensity(sample_intensity(rng, ranges)),
    ];
    steps.shuffle(rng);
    TransformPipeline { steps }
}

/// Draws an image-level pipeline for an image of the given dimensions.
pub fn sample_image_pipeline<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &TransformRanges,
    dims: (usize, usize),
) -> ImageLevelPipeline {
    let (h, w) = dims;
    let crop = if rng.random_bool(ranges.crop_probability) {
        let s = uniform(rng, ranges.crop_scale);
        let ch = ((h as f64 * s).round() as usize).clamp(1, h);
        let cw = ((w as f64 * s).round() as usize).clamp(1, w);
        let row = rng.random_range(0..=h - ch);
        let col = rng.random_range(0..=w - cw);
        Some(Rect::new(row, col, ch, cw))
    } else {
        None
    };
    let intensity = vec![sample_intensity(rng, ranges), sample_intensity(rng, ranges)];
    ImageLevelPipeline { crop, intensity }
}

/// A lesion patch moving through rigid transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedPatch {
    pub image: ImagePlane,
    pub mask: BinaryMask,
    /// Pixels whose content comes from inside the source frame.
    pub coverage: BinaryMask,
}

impl TransformedPatch {
    pub fn new(image: ImagePlane, mask: BinaryMask) -> Result<Self> {
        if image.dims() != mask.dims() {
            return Err(Error::DimensionMismatch(format!(
                "patch {:?} vs mask {:?}",
                image.dims(),
                mask.dims()
            )));
        }
        let (h, w) = mask.dims();
        Ok(Self { image, mask, coverage: BinaryMask::ones(h, w) })
    }
}

/// Applies a rigid transform to a patch and its mask.
pub fn apply_rigid(patch: &ImagePlane, mask: &BinaryMask, t: &RigidKind) -> Result<(ImagePlane, BinaryMask)> {
    let out = apply_rigid_covered(&TransformedPatch::new(patch.clone(), mask.clone())?, t)?;
    Ok((out.image, out.mask))
}

/// Applies a rigid transform to image, mask and coverage together. Fails
/// with [`Error::EmptyMask`] if no lesion pixel survives.
pub fn apply_rigid_covered(p: &TransformedPatch, t: &RigidKind) -> Result<TransformedPatch> {
    let out = match *t {
        RigidKind::None => p.clone(),
        RigidKind::Flip { axis } => {
            let (h, w) = p.mask.dims();
            let map = move |r: usize, c: usize| match axis {
                Axis::Horizontal => Some((r, w - 1 - c)),
                Axis::Vertical => Some((h - 1 - r, c)),
            };
            remap_exact(p, h, w, map)
        }
        RigidKind::Rotation { degrees } => {
            if !(-180.0..=180.0).contains(&degrees) {
                return Err(Error::InvalidParameter(format!("rotation {degrees} outside [-180, 180]")));
            }
            if degrees % 90.0 == 0.0 {
                rotate_quarter_turns(p, (degrees / 90.0) as i64)
            } else {
                rotate_general(p, degrees)
            }
        }
        RigidKind::Scaling { factor } => {
            if !(factor > 0.0) {
                return Err(Error::InvalidParameter(format!("scale factor must be positive, got {factor}")));
            }
            let (h, w) = p.mask.dims();
            let nh = ((h as f64 * factor).round() as usize).max(1);
            let nw = ((w as f64 * factor).round() as usize).max(1);
            TransformedPatch {
                image: p.image.resample(nh, nw, Interpolation::Bilinear)?,
                mask: p.mask.resample(nh, nw, Interpolation::Nearest)?,
                coverage: p.coverage.resample(nh, nw, Interpolation::Nearest)?,
            }
        }
        RigidKind::Panning { dr, dc } => {
            let (h, w) = p.mask.dims();
            remap_exact(p, h, w, move |r, c| {
                let (sr, sc) = (r as i64 - dr, c as i64 - dc);
                (sr >= 0 && sc >= 0 && (sr as usize) < h && (sc as usize) < w).then_some((sr as usize, sc as usize))
            })
        }
    };
    if out.mask.is_blank() {
        return Err(Error::EmptyMask(format!("{t:?}")));
    }
    Ok(out)
}

/// Builds an `h x w` patch where output `(r, c)` copies source pixel
/// `map(r, c)`, or zero (uncovered) when the map returns `None`.
fn remap_exact(
    p: &TransformedPatch,
    h: usize,
    w: usize,
    map: impl Fn(usize, usize) -> Option<(usize, usize)>,
) -> TransformedPatch {
    let ch = p.image.channels();
    let mut samples = vec![0.0; h * w * ch];
    let mut mask = BinaryMask::zeros(h, w);
    let mut coverage = BinaryMask::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            if let Some((sr, sc)) = map(r, c) {
                for k in 0..ch {
                    samples[(r * w + c) * ch + k] = p.image.get(sr, sc, k);
                }
                mask.set(r, c, p.mask.get(sr, sc));
                coverage.set(r, c, p.coverage.get(sr, sc));
            }
        }
    }
    TransformedPatch { image: ImagePlane::from_clamped(h, w, ch, samples), mask, coverage }
}

fn rotate_quarter_turns(p: &TransformedPatch, turns: i64) -> TransformedPatch {
    let (h, w) = p.mask.dims();
    match turns.rem_euclid(4) {
        0 => p.clone(),
        1 => remap_exact(p, w, h, |r, c| Some((c, w - 1 - r))),
        2 => remap_exact(p, h, w, |r, c| Some((h - 1 - r, w - 1 - c))),
        _ => remap_exact(p, w, h, |r, c| Some((h - 1 - c, r))),
    }
}

fn rotate_general(p: &TransformedPatch, degrees: f64) -> TransformedPatch {
    let (h, w) = p.mask.dims();
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let nh = ((h as f64 * cos.abs() + w as f64 * sin.abs()) - 1e-9).ceil().max(1.0) as usize;
    let nw = ((w as f64 * cos.abs() + h as f64 * sin.abs()) - 1e-9).ceil().max(1.0) as usize;
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (ncy, ncx) = ((nh as f64 - 1.0) / 2.0, (nw as f64 - 1.0) / 2.0);
    let ch = p.image.channels();
    let eps = 1e-9;

    let mut samples = vec![0.0; nh * nw * ch];
    let mut mask = BinaryMask::zeros(nh, nw);
    let mut coverage = BinaryMask::zeros(nh, nw);
    for r in 0..nh {
        for c in 0..nw {
            let (dy, dx) = (r as f64 - ncy, c as f64 - ncx);
            let sx = cx + dx * cos - dy * sin;
            let sy = cy + dx * sin + dy * cos;
            if sy < -0.5 || sx < -0.5 || sy > h as f64 - 0.5 || sx > w as f64 - 0.5 {
                continue;
            }
            let (nr, nc) = (sy.round().clamp(0.0, h as f64 - 1.0) as usize, sx.round().clamp(0.0, w as f64 - 1.0) as usize);
            mask.set(r, c, p.mask.get(nr, nc));
            coverage.set(r, c, p.coverage.get(nr, nc) && sy >= -eps && sx >= -eps && sy <= h as f64 - 1.0 + eps && sx <= w as f64 - 1.0 + eps);
            let y = sy.clamp(0.0, h as f64 - 1.0);
            let x = sx.clamp(0.0, w as f64 - 1.0);
            let (y0, x0) = (y.floor() as usize, x.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (y - y0 as f64, x - x0 as f64);
            for k in 0..ch {
                let top = crate::raster::lerp(p.image.get(y0, x0, k), p.image.get(y0, x1, k), fx);
                let bottom = crate::raster::lerp(p.image.get(y1, x0, k), p.image.get(y1, x1, k), fx);
                samples[(r * nw + c) * ch + k] = crate::raster::lerp(top, bottom, fy);
            }
        }
    }
    TransformedPatch { image: ImagePlane::from_clamped(nh, nw, ch, samples), mask, coverage }
}

/// Applies an intensity transform; `rng` is consumed only by noise.
pub fn apply_intensity<R: Rng + ?Sized>(patch: &ImagePlane, t: &IntensityKind, rng: &mut R) -> Result<ImagePlane> {
    Ok(match *t {
        IntensityKind::None => patch.clone(),
        IntensityKind::Gamma { g } => {
            if !(g > 0.0) {
                return Err(Error::InvalidParameter(format!("gamma must be positive, got {g}")));
            }
            if g == 1.0 {
                patch.clone()
            } else {
                patch.map(|v| v.powf(g))
            }
        }
        IntensityKind::GaussianNoise { sigma } => {
            if sigma < 0.0 {
                return Err(Error::InvalidParameter(format!("noise sigma must be non-negative, got {sigma}")));
            }
            if sigma == 0.0 {
                patch.clone()
            } else {
                let normal = Normal::new(0.0, sigma).expect("finite sigma");
                patch.map(|v| v + normal.sample(rng))
            }
        }
        IntensityKind::GaussianBlur { sigma } => {
            if sigma < 0.0 {
                return Err(Error::InvalidParameter(format!("blur sigma must be non-negative, got {sigma}")));
            }
            if sigma == 0.0 {
                patch.clone()
            } else {
                let (h, w) = patch.dims();
                let out = convolve_separable(patch.samples(), h, w, patch.channels(), &gaussian_kernel(sigma));
                ImagePlane::from_clamped(h, w, patch.channels(), out)
            }
        }
    })
}

/// Runs every step of an object-level pipeline.
pub fn apply_object_pipeline<R: Rng + ?Sized>(
    p: &TransformedPatch,
    pipeline: &TransformPipeline,
    rng: &mut R,
) -> Result<TransformedPatch> {
    let mut cur = p.clone();
    for step in &pipeline.steps {
        match step {
            TransformStep::Rigid(t) => cur = apply_rigid_covered(&cur, t)?,
            TransformStep::Intensity(t) => cur.image = apply_intensity(&cur.image, t, rng)?,
        }
    }
    Ok(cur)
}

/// Rigid steps only, for replaying mask geometry without image content.
pub fn replay_mask_geometry(mask: &BinaryMask, pipeline: &TransformPipeline) -> Result<BinaryMask> {
    let (h, w) = mask.dims();
    let mut cur = TransformedPatch { image: ImagePlane::filled(h, w, 1, 0.0), mask: mask.clone(), coverage: BinaryMask::ones(h, w) };
    for t in pipeline.rigid_steps() {
        cur = apply_rigid_covered(&cur, t)?;
    }
    Ok(cur.mask)
}

/// Label-map half of [`apply_image_level`]: crop then nearest resize.
pub fn image_level_labels(labels: &LabelMap, p: &ImageLevelPipeline, out_size: (usize, usize)) -> Result<LabelMap> {
    let cropped = match p.crop {
        Some(rect) => labels.extract(rect)?,
        None => labels.clone(),
    };
    cropped.resample(out_size.0, out_size.1, Interpolation::Nearest)
}

/// Crops image and labels jointly, resizes both to `out_size` and applies
/// the intensity steps to the image. With `reference_class` set, a crop that
/// leaves no pixel of that class is an error.
pub fn apply_image_level<R: Rng + ?Sized>(
    img: &ImagePlane,
    labels: &LabelMap,
    p: &ImageLevelPipeline,
    out_size: (usize, usize),
    reference_class: Option<ClassId>,
    rng: &mut R,
) -> Result<(ImagePlane, LabelMap)> {
    if img.dims() != labels.dims() {
        return Err(Error::DimensionMismatch(format!(
            "image {:?} vs labels {:?}",
            img.dims(),
            labels.dims()
        )));
    }
    let out_labels = image_level_labels(labels, p, out_size)?;
    if let Some(class) = reference_class {
        if out_labels.count_class(class) == 0 {
            return Err(Error::ReferenceCropped(class));
        }
    }
    let cropped = match p.crop {
        Some(rect) => img.extract(rect)?,
        None => img.clone(),
    };
    let mut out = cropped.resample(out_size.0, out_size.1, Interpolation::Bilinear)?;
    for t in &p.intensity {
        out = apply_intensity(&out, t, rng)?;
    }
    Ok((out, out_labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_patch() -> (ImagePlane, BinaryMask) {
        let img = ImagePlane::from_fn(6, 6, 1, |r, c, _| ((r * 6 + c) % 17) as f64 / 17.0);
        let mask = BinaryMask::from_fn(6, 6, |r, c| (1..4).contains(&r) && (2..5).contains(&c) && r + c != 5);
        (img, mask)
    }

    #[test]
    fn flip_twice_is_identity() {
        let (img, mask) = sample_patch();
        for axis in [Axis::Horizontal, Axis::Vertical] {
            let t = RigidKind::Flip { axis };
            let (i1, m1) = apply_rigid(&img, &mask, &t).unwrap();
            assert_ne!(m1, mask);
            let (i2, m2) = apply_rigid(&i1, &m1, &t).unwrap();
            assert_eq!((i2, m2), (img.clone(), mask.clone()));
        }
    }

    #[test]
    fn four_quarter_turns_are_identity() {
        let img = ImagePlane::from_fn(5, 3, 3, |r, c, k| ((r * 3 + c) * 3 + k) as f64 / 45.0);
        let mask = BinaryMask::from_fn(5, 3, |r, c| r >= c);
        let t = RigidKind::Rotation { degrees: 90.0 };
        let (mut i, mut m) = (img.clone(), mask.clone());
        for _ in 0..4 {
            (i, m) = apply_rigid(&i, &m, &t).unwrap();
        }
        assert_eq!((i, m), (img, mask));
    }

    #[test]
    fn quarter_turn_is_counter_clockwise() {
        let img = ImagePlane::from_fn(2, 3, 1, |r, c, _| (r * 3 + c) as f64 / 10.0);
        let mask = BinaryMask::ones(2, 3);
        let (i, _) = apply_rigid(&img, &mask, &RigidKind::Rotation { degrees: 90.0 }).unwrap();
        assert_eq!(i.dims(), (3, 2));
        // Top-right source pixel lands top-left.
        assert_eq!(i.get(0, 0, 0), img.get(0, 2, 0));
    }

    #[test]
    fn scaling_two_quadruples_area() {
        let img = ImagePlane::filled(6, 6, 1, 0.5);
        let mask = BinaryMask::from_fn(6, 6, |r, c| (2..4).contains(&r) && (2..4).contains(&c));
        let (i, m) = apply_rigid(&img, &mask, &RigidKind::Scaling { factor: 2.0 }).unwrap();
        assert_eq!(i.dims(), (12, 12));
        // Oracle: output pixel maps to source floor((x + 0.5) / 2).
        let oracle = BinaryMask::from_fn(12, 12, |r, c| mask.get((r * 2 + 1) / 4, (c * 2 + 1) / 4));
        assert_eq!(m, oracle);
        assert_eq!(m.count(), 16);
    }

    #[test]
    fn scaling_can_empty_the_mask() {
        let img = ImagePlane::filled(5, 5, 1, 0.5);
        let mut mask = BinaryMask::zeros(5, 5);
        mask.set(0, 0, true);
        assert!(matches!(
            apply_rigid(&img, &mask, &RigidKind::Scaling { factor: 0.2 }),
            Err(Error::EmptyMask(_))
        ));
    }

    #[test]
    fn panning_shifts_with_zero_fill() {
        let (img, mask) = sample_patch();
        let (i, m) = apply_rigid(&img, &mask, &RigidKind::Panning { dr: 1, dc: -1 }).unwrap();
        assert_eq!(i.get(0, 0, 0), 0.0);
        assert_eq!(i.get(2, 2, 0), img.get(1, 3, 0));
        assert_eq!(m.get(2, 2), mask.get(1, 3));
    }

    #[test]
    fn identity_transforms() {
        let (img, mask) = sample_patch();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in [RigidKind::None, RigidKind::Scaling { factor: 1.0 }, RigidKind::Rotation { degrees: 0.0 }, RigidKind::Panning { dr: 0, dc: 0 }] {
            assert_eq!(apply_rigid(&img, &mask, &t).unwrap(), (img.clone(), mask.clone()));
        }
        for t in [IntensityKind::None, IntensityKind::Gamma { g: 1.0 }, IntensityKind::GaussianNoise { sigma: 0.0 }, IntensityKind::GaussianBlur { sigma: 0.0 }] {
            assert_eq!(apply_intensity(&img, &t, &mut rng).unwrap(), img);
        }
        let p = TransformedPatch::new(img.clone(), mask.clone()).unwrap();
        let out = apply_object_pipeline(&p, &TransformPipeline::identity(), &mut rng).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn gamma_two_squares() {
        let img = ImagePlane::filled(1, 1, 1, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = apply_intensity(&img, &IntensityKind::Gamma { g: 2.0 }, &mut rng).unwrap();
        assert_eq!(out.samples(), &[0.25]);
    }

    #[test]
    fn noise_is_clamped_and_seeded() {
        let img = ImagePlane::filled(8, 8, 1, 0.5);
        let t = IntensityKind::GaussianNoise { sigma: 2.0 };
        let a = apply_intensity(&img, &t, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = apply_intensity(&img, &t, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.samples().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(a.samples().iter().any(|&v| v != 0.5));
    }

    #[test]
    fn paper_example_pipeline_is_in_support() {
        // [rotation, flip, Gaussian, none]
        let target = ["rotation", "flip", "gaussian", "none"];
        let name = |s: &TransformStep| match s {
            TransformStep::Rigid(RigidKind::Rotation { .. }) => "rotation",
            TransformStep::Rigid(RigidKind::Flip { .. }) => "flip",
            TransformStep::Intensity(IntensityKind::GaussianNoise { .. } | IntensityKind::GaussianBlur { .. }) => "gaussian",
            TransformStep::Intensity(IntensityKind::None) => "none",
            _ => "other",
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ranges = TransformRanges::default();
        let found = (0..20_000).any(|_| {
            let p = sample_object_pipeline(&mut rng, &ranges, (20, 20));
            p.steps.iter().map(name).eq(target)
        });
        assert!(found);
    }

    #[test]
    fn image_level_identity_and_quadrant_crop() {
        let img = ImagePlane::from_fn(8, 8, 1, |r, c, _| match (r < 4, c < 4) {
            (true, true) => 0.1,
            (true, false) => 0.4,
            (false, true) => 0.7,
            (false, false) => 0.9,
        });
        let labels = LabelMap::from_fn(8, 8, |r, c| u8::from(r >= 4) + u8::from(c >= 4) * 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let id = ImageLevelPipeline { crop: None, intensity: vec![IntensityKind::None] };
        assert_eq!(apply_image_level(&img, &labels, &id, (8, 8), None, &mut rng).unwrap(), (img.clone(), labels.clone()));

        let tl = ImageLevelPipeline { crop: Some(Rect::new(0, 0, 4, 4)), intensity: vec![] };
        let (i, l) = apply_image_level(&img, &labels, &tl, (8, 8), None, &mut rng).unwrap();
        assert!(i.samples().iter().all(|&v| v == 0.1));
        assert!(l.labels().iter().all(|&v| v == 0));
        assert!(matches!(
            apply_image_level(&img, &labels, &tl, (8, 8), Some(3), &mut rng),
            Err(Error::ReferenceCropped(3))
        ));
    }
}
