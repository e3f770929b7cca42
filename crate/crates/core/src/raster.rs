//! Image, mask and label-map grids plus PNG I/O.
//!
//! All pixel samples are stored as `f64` in `[0, 1]`; integer PNG samples are
//! divided by the bit-depth maximum on load (255 or 65535). Grids are
//! row-major and colour images are channel-interleaved.
//!
//! Bilinear resampling aligns pixel centres: output pixel `i` of an axis of
//! length `n_out` samples the input at `(i + 0.5) * n_in / n_out - 0.5`,
//! clamped to the valid range. Nearest resampling uses the same mapping and
//! picks the pixel containing the sample position, so it never introduces
//! values absent from the input.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class identifier stored in a [`LabelMap`]; `0` is background.
pub type ClassId = u8;

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn new(row: usize, col: usize, height: usize, width: usize) -> Self {
        Self { row, col, height, width }
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn bottom(&self) -> usize {
        self.row + self.height
    }

    pub fn right(&self) -> usize {
        self.col + self.width
    }

    pub fn fits_within(&self, height: usize, width: usize) -> bool {
        self.bottom() <= height && self.right() <= width
    }

    /// Grows the rectangle by `margin` on every side, clipped to the frame.
    pub fn expand_clipped(&self, margin: usize, height: usize, width: usize) -> Rect {
        let row = self.row.saturating_sub(margin);
        let col = self.col.saturating_sub(margin);
        let bottom = (self.bottom() + margin).min(height);
        let right = (self.right() + margin).min(width);
        Rect::new(row, col, bottom - row, right - col)
    }
}

/// Interpolation used by [`Raster::resample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    Bilinear,
}

/// Output bit depth for PNG writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BitDepth {
    #[default]
    #[serde(rename = "8")]
    Eight,
    #[serde(rename = "16")]
    Sixteen,
}

/// Operations shared by every grid kind.
pub trait Raster: Sized {
    fn height(&self) -> usize;
    fn width(&self) -> usize;

    /// Copies the sub-grid under `rect`.
    fn extract(&self, rect: Rect) -> Result<Self>;

    /// Resamples to `height` x `width`. Masks and label maps reject
    /// [`Interpolation::Bilinear`].
    fn resample(&self, height: usize, width: usize, mode: Interpolation) -> Result<Self>;

    fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }
}

fn check_rect(rect: Rect, height: usize, width: usize) -> Result<()> {
    if rect.height == 0 || rect.width == 0 || !rect.fits_within(height, width) {
        return Err(Error::OutOfBounds(format!(
            "rectangle {rect:?} does not lie within a {height}x{width} grid"
        )));
    }
    Ok(())
}

fn check_target(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidParameter(format!(
            "resample target {height}x{width} must be at least 1x1"
        )));
    }
    Ok(())
}

fn extract_slice<T: Copy>(data: &[T], width: usize, channels: usize, rect: Rect) -> Vec<T> {
    let mut out = Vec::with_capacity(rect.area() * channels);
    for r in rect.row..rect.bottom() {
        let start = (r * width + rect.col) * channels;
        out.extend_from_slice(&data[start..start + rect.width * channels]);
    }
    out
}

/// Source coordinate of output index `i` under pixel-centre alignment.
pub(crate) fn centre_aligned(i: usize, n_in: usize, n_out: usize) -> f64 {
    let pos = (i as f64 + 0.5) * (n_in as f64 / n_out as f64) - 0.5;
    pos.clamp(0.0, (n_in - 1) as f64)
}

fn nearest_index(i: usize, n_in: usize, n_out: usize) -> usize {
    if n_in == n_out {
        return i;
    }
    let pos = (i as f64 + 0.5) * (n_in as f64 / n_out as f64);
    (pos.floor() as usize).min(n_in - 1)
}

fn nearest_slice<T: Copy>(
    data: &[T],
    (h, w, ch): (usize, usize, usize),
    nh: usize,
    nw: usize,
) -> Vec<T> {
    let cols: Vec<usize> = (0..nw).map(|c| nearest_index(c, w, nw)).collect();
    let mut out = Vec::with_capacity(nh * nw * ch);
    for r in 0..nh {
        let sr = nearest_index(r, h, nh);
        for &sc in &cols {
            let base = (sr * w + sc) * ch;
            out.extend_from_slice(&data[base..base + ch]);
        }
    }
    out
}

/// A floating image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    height: usize,
    width: usize,
    channels: usize,
    samples: Vec<f64>,
}

impl ImagePlane {
    pub fn new(height: usize, width: usize, channels: usize, samples: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidParameter(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if samples.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {height}x{width}x{channels} image",
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "sample {bad} lies outside [0, 1]"
            )));
        }
        Ok(Self { height, width, channels, samples })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            height,
            width,
            channels,
            samples: vec![value.clamp(0.0, 1.0); height * width * channels],
        }
    }

    /// Builds an image from a per-sample function of `(row, col, channel)`;
    /// values are clamped into `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        let mut samples = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    samples.push(f(r, c, ch).clamp(0.0, 1.0));
                }
            }
        }
        Self { height, width, channels, samples }
    }

    /// Wraps samples that are already known to be in range, clamping any
    /// floating drift.
    pub(crate) fn from_clamped(
        height: usize,
        width: usize,
        channels: usize,
        mut samples: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(samples.len(), height * width * channels);
        for v in &mut samples {
            *v = v.clamp(0.0, 1.0);
        }
        Self { height, width, channels, samples }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.samples[(row * self.width + col) * self.channels + channel]
    }

    /// Converts between grey and RGB. Grey to RGB replicates; RGB to grey
    /// uses Rec. 601 luma weights.
    pub fn to_channels(&self, channels: usize) -> ImagePlane {
        match (self.channels, channels) {
            (a, b) if a == b => self.clone(),
            (1, 3) => {
                let samples = self.samples.iter().flat_map(|&v| [v, v, v]).collect();
                Self::from_clamped(self.height, self.width, 3, samples)
            }
            (3, 1) => {
                let samples = self
                    .samples
                    .chunks_exact(3)
                    .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                    .collect();
                Self::from_clamped(self.height, self.width, 1, samples)
            }
            (_, b) => panic!("unsupported channel count {b}"),
        }
    }

    /// Applies `f` to every sample; results are clamped into `[0, 1]`.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> ImagePlane {
        let samples = self.samples.iter().map(|&v| f(v)).collect();
        Self::from_clamped(self.height, self.width, self.channels, samples)
    }

    /// Places `tiles` left to right with `gap` pixels of black between them.
    /// Every tile must share height and channel count.
    pub fn hconcat(tiles: &[ImagePlane], gap: usize) -> Result<ImagePlane> {
        let first = tiles
            .first()
            .ok_or_else(|| Error::InvalidParameter("no tiles to concatenate".into()))?;
        let (h, ch) = (first.height, first.channels);
        if tiles.iter().any(|t| t.height != h || t.channels != ch) {
            return Err(Error::DimensionMismatch(
                "tiles differ in height or channel count".into(),
            ));
        }
        let width = tiles.iter().map(|t| t.width).sum::<usize>() + gap * (tiles.len() - 1);
        let mut samples = vec![0.0; h * width * ch];
        let mut col0 = 0;
        for t in tiles {
            for r in 0..h {
                let dst = (r * width + col0) * ch;
                let src = r * t.width * ch;
                samples[dst..dst + t.width * ch]
                    .copy_from_slice(&t.samples[src..src + t.width * ch]);
            }
            col0 += t.width + gap;
        }
        Ok(Self::from_clamped(h, width, ch, samples))
    }
}

impl Raster for ImagePlane {
    fn height(&self) -> usize {
        self.height
    }

    fn width(&self) -> usize {
        self.width
    }

    fn extract(&self, rect: Rect) -> Result<Self> {
        check_rect(rect, self.height, self.width)?;
        let samples = extract_slice(&self.samples, self.width, self.channels, rect);
        Ok(Self { height: rect.height, width: rect.width, channels: self.channels, samples })
    }

    fn resample(&self, height: usize, width: usize, mode: Interpolation) -> Result<Self> {
        check_target(height, width)?;
        if (height, width) == (self.height, self.width) {
            return Ok(self.clone());
        }
        let samples = match mode {
            Interpolation::Nearest => nearest_slice(
                &self.samples,
                (self.height, self.width, self.channels),
                height,
                width,
            ),
            Interpolation::Bilinear => bilinear_resize(self, height, width),
        };
        Ok(Self::from_clamped(height, width, self.channels, samples))
    }
}

fn bilinear_resize(img: &ImagePlane, nh: usize, nw: usize) -> Vec<f64> {
    let ch = img.channels;
    let cols: Vec<(usize, usize, f64)> = (0..nw)
        .map(|c| {
            let x = centre_aligned(c, img.width, nw);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            (x0, x1, x - x0 as f64)
        })
        .collect();
    let mut out = Vec::with_capacity(nh * nw * ch);
    for r in 0..nh {
        let y = centre_aligned(r, img.height, nh);
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let fy = y - y0 as f64;
        for &(x0, x1, fx) in &cols {
            for k in 0..ch {
                let top = lerp(img.get(y0, x0, k), img.get(y0, x1, k), fx);
                let bottom = lerp(img.get(y1, x0, k), img.get(y1, x1, k), fx);
                out.push(lerp(top, bottom, fy));
            }
        }
    }
    out
}

#[inline]
pub(crate) fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

/// A `{0, 1}` grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} bits for a {height}x{width} mask",
                bits.len()
            )));
        }
        Ok(Self { height, width, bits })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, bits: vec![false; height * width] }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self { height, width, bits: vec![true; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Self { height, width, bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    /// Out-of-frame reads return `false`.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> bool {
        row >= 0
            && col >= 0
            && (row as usize) < self.height
            && (col as usize) < self.width
            && self.bits[row as usize * self.width + col as usize]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_blank(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn complement(&self) -> BinaryMask {
        Self {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> BinaryMask {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
        Self {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn and(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_with(other, |a, b| a && !b)
    }

    /// `true` when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        assert_eq!(self.dims(), other.dims(), "mask dimensions differ");
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Tight bounding rectangle of the foreground, if any.
    pub fn bounding_rect(&self) -> Option<Rect> {
        let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    r0 = r0.min(r);
                    c0 = c0.min(c);
                    r1 = r1.max(r);
                    c1 = c1.max(c);
                }
            }
        }
        (r0 != usize::MAX).then(|| Rect::new(r0, c0, r1 - r0 + 1, c1 - c0 + 1))
    }

    /// Renders the mask as a single-channel image with values 0.0 and 1.0.
    pub fn to_image(&self) -> ImagePlane {
        let samples = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        ImagePlane::from_clamped(self.height, self.width, 1, samples)
    }
}

impl Raster for BinaryMask {
    fn height(&self) -> usize {
        self.height
    }

    fn width(&self) -> usize {
        self.width
    }

    fn extract(&self, rect: Rect) -> Result<Self> {
        check_rect(rect, self.height, self.width)?;
        let bits = extract_slice(&self.bits, self.width, 1, rect);
        Ok(Self { height: rect.height, width: rect.width, bits })
    }

    fn resample(&self, height: usize, width: usize, mode: Interpolation) -> Result<Self> {
        check_target(height, width)?;
        if mode == Interpolation::Bilinear {
            return Err(Error::InvalidParameter(
                "binary masks only support nearest resampling".into(),
            ));
        }
        let bits = nearest_slice(&self.bits, (self.height, self.width, 1), height, width);
        Ok(Self { height, width, bits })
    }
}

/// A `[0, 1]` weight grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    height: usize,
    width: usize,
    weights: Vec<f64>,
}

impl SoftMask {
    pub fn new(height: usize, width: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for a {height}x{width} soft mask",
                weights.len()
            )));
        }
        if let Some(bad) = weights.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidParameter(format!(
                "weight {bad} lies outside [0, 1]"
            )));
        }
        Ok(Self { height, width, weights })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, weights: vec![0.0; height * width] }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self { height, width, weights: vec![value.clamp(0.0, 1.0); height * width] }
    }

    pub(crate) fn from_clamped(height: usize, width: usize, mut weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), height * width);
        for w in &mut weights {
            *w = w.clamp(0.0, 1.0);
        }
        Self { height, width, weights }
    }

    pub fn from_binary(mask: &BinaryMask) -> Self {
        let weights = mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self { height: mask.height(), width: mask.width(), weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.width + col]
    }

    /// Zeroes every weight outside `keep`.
    pub fn restrict_to(&self, keep: &BinaryMask) -> SoftMask {
        assert_eq!(self.dims(), keep.dims(), "mask dimensions differ");
        let weights = self
            .weights
            .iter()
            .zip(keep.bits())
            .map(|(&w, &k)| if k { w } else { 0.0 })
            .collect();
        Self { height: self.height, width: self.width, weights }
    }
}

impl Raster for SoftMask {
    fn height(&self) -> usize {
        self.height
    }

    fn width(&self) -> usize {
        self.width
    }

    fn extract(&self, rect: Rect) -> Result<Self> {
        check_rect(rect, self.height, self.width)?;
        let weights = extract_slice(&self.weights, self.width, 1, rect);
        Ok(Self { height: rect.height, width: rect.width, weights })
    }

    fn resample(&self, height: usize, width: usize, mode: Interpolation) -> Result<Self> {
        check_target(height, width)?;
        let plane = ImagePlane::from_clamped(self.height, self.width, 1, self.weights.clone());
        let out = plane.resample(height, width, mode)?;
        Ok(Self { height, width, weights: out.samples })
    }
}

/// A grid of class identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<ClassId>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<ClassId>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {height}x{width} label map",
                labels.len()
            )));
        }
        Ok(Self { height, width, labels })
    }

    pub fn background(height: usize, width: usize) -> Self {
        Self { height, width, labels: vec![0; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> ClassId) -> Self {
        let mut labels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                labels.push(f(r, c));
            }
        }
        Self { height, width, labels }
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> ClassId {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, class: ClassId) {
        self.labels[row * self.width + col] = class;
    }

    /// Foreground where the label equals `class`.
    pub fn class_mask(&self, class: ClassId) -> BinaryMask {
        let bits = self.labels.iter().map(|&l| l == class).collect();
        BinaryMask { height: self.height, width: self.width, bits }
    }

    pub fn count_class(&self, class: ClassId) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    pub fn distinct(&self) -> BTreeSet<ClassId> {
        self.labels.iter().copied().collect()
    }
}

impl Raster for LabelMap {
    fn height(&self) -> usize {
        self.height
    }

    fn width(&self) -> usize {
        self.width
    }

    fn extract(&self, rect: Rect) -> Result<Self> {
        check_rect(rect, self.height, self.width)?;
        let labels = extract_slice(&self.labels, self.width, 1, rect);
        Ok(Self { height: rect.height, width: rect.width, labels })
    }

    fn resample(&self, height: usize, width: usize, mode: Interpolation) -> Result<Self> {
        check_target(height, width)?;
        if mode == Interpolation::Bilinear {
            return Err(Error::InvalidParameter(
                "label maps only support nearest resampling".into(),
            ));
        }
        let labels = nearest_slice(&self.labels, (self.height, self.width, 1), height, width);
        Ok(Self { height, width, labels })
    }
}

/// Maps 8-bit mask pixel values to class identifiers.
///
/// Serialized as a table from decimal pixel value to class, e.g.
/// `{ "0" = 0, "255" = 1 }`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, ClassId>", into = "BTreeMap<String, ClassId>")]
pub struct ClassConfig {
    values: BTreeMap<u8, ClassId>,
}

impl ClassConfig {
    pub fn new(values: impl IntoIterator<Item = (u8, ClassId)>) -> Self {
        Self { values: values.into_iter().collect() }
    }

    /// `{0 -> 0, 255 -> 1}`, the usual lesion-only mask encoding.
    pub fn binary() -> Self {
        Self::new([(0, 0), (255, 1)])
    }

    /// Every pixel value maps to the class with the same number.
    pub fn identity() -> Self {
        Self::new((0..=255).map(|v| (v, v)))
    }

    pub fn class_of(&self, value: u8) -> Option<ClassId> {
        self.values.get(&value).copied()
    }

    /// Smallest pixel value that encodes `class`.
    pub fn pixel_value(&self, class: ClassId) -> Option<u8> {
        self.values.iter().find(|(_, &c)| c == class).map(|(&v, _)| v)
    }

    pub fn classes(&self) -> BTreeSet<ClassId> {
        self.values.values().copied().collect()
    }

    pub fn contains_class(&self, class: ClassId) -> bool {
        self.values.values().any(|&c| c == class)
    }
}

impl TryFrom<BTreeMap<String, ClassId>> for ClassConfig {
    type Error = String;

    fn try_from(raw: BTreeMap<String, ClassId>) -> std::result::Result<Self, String> {
        let mut values = BTreeMap::new();
        for (k, class) in raw {
            let v: u8 = k
                .trim()
                .parse()
                .map_err(|_| format!("class map key {k:?} is not a pixel value in 0..=255"))?;
            values.insert(v, class);
        }
        Ok(Self { values })
    }
}

impl From<ClassConfig> for BTreeMap<String, ClassId> {
    fn from(cfg: ClassConfig) -> Self {
        cfg.values.into_iter().map(|(v, c)| (v.to_string(), c)).collect()
    }
}

fn decode_png(path: &Path) -> Result<DynamicImage> {
    let io_err = |e: std::io::Error| Error::Io { path: path.to_path_buf(), source: e };
    let reader = ImageReader::open(path).map_err(io_err)?;
    let reader = reader.with_guessed_format().map_err(io_err)?;
    if reader.format() != Some(ImageFormat::Png) {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            reason: "not a PNG stream".into(),
        });
    }
    reader.decode().map_err(|e| Error::Decode { path: path.to_path_buf(), reason: e.to_string() })
}

/// Reads an 8- or 16-bit greyscale or RGB PNG.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImagePlane> {
    let path = path.as_ref();
    let img = decode_png(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, samples): (usize, Vec<f64>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => {
            (1, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
        }
        DynamicImage::ImageRgb16(b) => {
            (3, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect())
        }
        other => {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                reason: format!("unsupported colour type {:?}", other.color()),
            })
        }
    };
    Ok(ImagePlane::from_clamped(h, w, channels, samples))
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// Writes an image as PNG at the requested bit depth.
pub fn save_image(path: impl AsRef<Path>, img: &ImagePlane, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynamic = match (img.channels(), depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, to_u8(img.samples())).expect("buffer size"),
        ),
        (3, BitDepth::Eight) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, to_u8(img.samples())).expect("buffer size"),
        ),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, to_u16(img.samples())).expect("buffer size"),
        ),
        (3, BitDepth::Sixteen) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, to_u16(img.samples())).expect("buffer size"),
        ),
        (c, _) => unreachable!("image with {c} channels"),
    };
    dynamic
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::Encode { path: path.to_path_buf(), reason: e.to_string() })
}

fn to_u8(samples: &[f64]) -> Vec<u8> {
    samples.iter().map(|&v| quantize(v, 255.0) as u8).collect()
}

fn to_u16(samples: &[f64]) -> Vec<u16> {
    samples.iter().map(|&v| quantize(v, 65535.0) as u16).collect()
}

/// Reads an 8-bit single-channel mask PNG and maps each pixel through `classes`.
pub fn load_label_map(path: impl AsRef<Path>, classes: &ClassConfig) -> Result<LabelMap> {
    let path = path.as_ref();
    let img = decode_png(path)?;
    let DynamicImage::ImageLuma8(buf) = img else {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            reason: format!("label maps must be 8-bit greyscale, found {:?}", img.color()),
        });
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let raw = buf.into_raw();
    let mut labels = Vec::with_capacity(raw.len());
    for (i, &v) in raw.iter().enumerate() {
        match classes.class_of(v) {
            Some(c) => labels.push(c),
            None => {
                return Err(Error::UndeclaredLabel {
                    path: path.to_path_buf(),
                    value: v,
                    row: i / w,
                    col: i % w,
                })
            }
        }
    }
    Ok(LabelMap { height: h, width: w, labels })
}

/// Writes a label map as an 8-bit PNG, encoding each class by its smallest
/// declared pixel value.
pub fn save_label_map(path: impl AsRef<Path>, labels: &LabelMap, classes: &ClassConfig) -> Result<()> {
    let path = path.as_ref();
    let mut lut = [None; 256];
    for class in labels.distinct() {
        lut[class as usize] = classes.pixel_value(class);
    }
    let mut raw = Vec::with_capacity(labels.labels.len());
    for &l in &labels.labels {
        raw.push(lut[l as usize].ok_or_else(|| Error::Encode {
            path: path.to_path_buf(),
            reason: format!("class {l} has no pixel value in the class map"),
        })?);
    }
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(labels.width as u32, labels.height as u32, raw)
        .expect("buffer size");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::Encode { path: path.to_path_buf(), reason: e.to_string() })
}

/// Reads a binary mask PNG: any nonzero pixel is foreground.
pub fn load_binary_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let labels = load_label_map(path, &ClassConfig::identity())?;
    let bits = labels.labels.iter().map(|&l| l != 0).collect();
    Ok(BinaryMask { height: labels.height, width: labels.width, bits })
}

/// Writes a binary mask as an 8-bit PNG with values 0 and 255.
pub fn save_binary_mask(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    let labels = LabelMap {
        height: mask.height,
        width: mask.width,
        labels: mask.bits.iter().map(|&b| b as u8).collect(),
    };
    save_label_map(path, &labels, &ClassConfig::binary())
}
