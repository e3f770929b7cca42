//! Run configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blend::BlendMode;
use crate::error::{Error, Result};
use crate::placement::PlacementConstraints;
use crate::raster::{BitDepth, ClassConfig, ClassId};
use crate::softmask::SoftMaskParams;
use crate::transform::TransformRanges;

/// Real-to-synthetic ratio, written `"3:1"` or as a bare number (`3` means
/// `3:1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio {
    pub real: f64,
    pub synthetic: f64,
}

impl Ratio {
    pub fn synthetic_count(&self, n_real: usize) -> usize {
        (n_real as f64 * self.synthetic / self.real).floor() as usize
    }
}

impl Default for Ratio {
    fn default() -> Self {
        Self { real: 3.0, synthetic: 1.0 }
    }
}

impl FromStr for Ratio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid ratio {s:?}: expected REAL:SYNTHETIC")))
        };
        let (real, synthetic) = match s.split_once(':') {
            Some((a, b)) => (parse(a)?, parse(b)?),
            None => (parse(s)?, 1.0),
        };
        if !(real > 0.0 && synthetic > 0.0 && real.is_finite() && synthetic.is_finite()) {
            return Err(Error::Config(format!("ratio {s:?} must have positive terms")));
        }
        Ok(Self { real, synthetic })
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.real, self.synthetic)
    }
}

impl Serialize for Ratio {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Text(t) => t,
            Raw::Number(n) => n.to_string(),
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassesConfig {
    /// Mask pixel value to class.
    pub values: ClassConfig,
    pub lesion_class: ClassId,
    /// Structure every pasted lesion must intersect; absent means the whole
    /// frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_class: Option<ClassId>,
}

impl Default for ClassesConfig {
    fn default() -> Self {
        Self { values: ClassConfig::binary(), lesion_class: 1, reference_class: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    /// Reference-overlap threshold as a fraction of the lesion area
    /// (rounded down). Ignored when `s1_pixels` is set.
    pub s1_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s1_pixels: Option<u64>,
    pub s2: u64,
    pub max_attempts: usize,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self { s1_fraction: 0.5, s1_pixels: None, s2: 1, max_attempts: 100 }
    }
}

impl PlacementConfig {
    pub fn s1_for_area(&self, lesion_area: usize) -> u64 {
        self.s1_pixels.unwrap_or_else(|| (self.s1_fraction * lesion_area as f64).floor() as u64)
    }

    pub fn constraints(&self, lesion_area: usize, classes: &ClassesConfig) -> PlacementConstraints {
        PlacementConstraints {
            s1: self.s1_for_area(lesion_area),
            s2: self.s2,
            reference_class: classes.reference_class,
            lesion_class: classes.lesion_class,
            max_attempts: self.max_attempts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_root: PathBuf,
    pub output_root: PathBuf,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<Ratio>,
    /// `[height, width]`.
    pub output_size: [usize; 2],
    pub output_bit_depth: BitDepth,
    /// Components smaller than this are not used as lesions.
    pub min_area: usize,
    /// Inclusive range of lesions pasted per synthetic image.
    pub lesions_per_image: [usize; 2],
    /// Background/lesion redraws allowed after a failed attempt.
    pub max_retries: usize,
    /// Apply an intensity-only image-level pass to the composite.
    pub final_intensity: bool,
    pub classes: ClassesConfig,
    pub soft_mask: SoftMaskParams,
    pub transform: TransformRanges,
    pub placement: PlacementConfig,
    pub blend: BlendMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_root: PathBuf::from("data"),
            output_root: PathBuf::from("out"),
            seed: 0,
            count: None,
            ratio: None,
            output_size: [256, 256],
            output_bit_depth: BitDepth::Eight,
            min_area: 10,
            lesions_per_image: [1, 1],
            max_retries: 20,
            final_intensity: false,
            classes: ClassesConfig::default(),
            soft_mask: SoftMaskParams::default(),
            transform: TransformRanges::default(),
            placement: PlacementConfig::default(),
            blend: BlendMode::Soft,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.dataset_root, &mut cfg.output_root] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.count.is_some() && self.ratio.is_some() {
            return Err(Error::Config("set either count or ratio, not both".into()));
        }
        if self.output_size.contains(&0) {
            return Err(Error::Config("output_size must be positive".into()));
        }
        if self.min_area == 0 {
            return Err(Error::Config("min_area must be at least 1".into()));
        }
        let [lo, hi] = self.lesions_per_image;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("lesions_per_image {:?} must be an ordered range starting at 1 or more", self.lesions_per_image)));
        }
        if self.placement.max_attempts == 0 {
            return Err(Error::Config("placement.max_attempts must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.placement.s1_fraction) {
            return Err(Error::Config("placement.s1_fraction must lie in [0, 1]".into()));
        }
        if !self.classes.values.contains_class(self.classes.lesion_class) {
            return Err(Error::Config(format!("lesion class {} has no pixel value", self.classes.lesion_class)));
        }
        if let Some(r) = self.classes.reference_class {
            if !self.classes.values.contains_class(r) {
                return Err(Error::Config(format!("reference class {r} has no pixel value")));
            }
            if r == self.classes.lesion_class {
                return Err(Error::Config("reference and lesion classes must differ".into()));
            }
        }
        self.soft_mask.validate()?;
        self.transform.validate()?;
        self.blend.validate()?;
        Ok(())
    }

    pub fn output_dims(&self) -> (usize, usize) {
        (self.output_size[0], self.output_size[1])
    }

    /// Synthetic sample count for a dataset of `n_real` images.
    pub fn synthetic_count(&self, n_real: usize) -> usize {
        match self.count {
            Some(n) => n,
            None => self.ratio.unwrap_or_default().synthetic_count(n_real),
        }
    }

    /// Context kept around each lesion in the bank: enough for the blend
    /// mode's weights to decay.
    pub fn context_margin(&self) -> usize {
        match self.blend {
            BlendMode::Gaussian { sigma } => (3.0 * sigma).ceil() as usize,
            BlendMode::Poisson { .. } => 2,
            BlendMode::Soft | BlendMode::Hard => self.soft_mask.k_dilate,
        }
        .max(self.soft_mask.k_dilate)
    }
}

/// Default configuration with explanatory comments, as written by
/// `init-config`.
pub const DEFAULT_CONFIG_TOML: &str = r#"# Soft copy-paste augmentation run configuration.
# Relative paths resolve against this file's directory.

# Dataset root holding images/*.png and masks/*.png with matching stems.
dataset_root = "data"
# Output tree: images/, masks/ and manifest.jsonl are written here.
output_root = "out"
# Master seed. Sample i draws from stream i of this seed.
seed = 0
# Set exactly one of `count` (absolute) or `ratio` (real:synthetic).
# Neither means ratio = "3:1".
# count = 100
ratio = "3:1"
# [height, width] of every synthetic image.
output_size = [256, 256]
# "8" or "16".
output_bit_depth = "8"
# Lesion components smaller than this many pixels are ignored.
min_area = 10
# Inclusive range of lesions pasted into each synthetic image.
lesions_per_image = [1, 1]
# Background/lesion redraws allowed when placement fails.
max_retries = 20
# Apply a final intensity-only pass to each composite.
final_intensity = false

[classes]
# Mask pixel value -> class id. 0 is background.
values = { "0" = 0, "255" = 1 }
# Class id of the lesions that are copied and pasted.
lesion_class = 1
# Structure a pasted lesion must intersect (e.g. kidney). Omit to allow the
# whole frame.
# reference_class = 1

[soft_mask]
# Erosions applied before softening.
k_erode = 1
# Rings grown around the eroded core; ring j gets weight alpha^j.
k_dilate = 5
# Softening coefficient in (0, 1).
alpha = 0.5
binarize_threshold = 1e-5

[transform]
# Rotation drawn from [-rotation_degrees, rotation_degrees].
rotation_degrees = 30.0
scale = [0.8, 1.25]
# Pan distance as a fraction of patch size.
pan_fraction = 0.1
gamma = [0.7, 1.5]
noise_sigma = [0.0, 0.05]
blur_sigma = [0.0, 1.5]
# Image-level crop: probability and side fraction.
crop_probability = 0.5
crop_scale = [0.8, 1.0]

[placement]
# Reference overlap must exceed s1 pixels. s1 = floor(s1_fraction * lesion
# area) unless s1_pixels is set.
s1_fraction = 0.5
# s1_pixels = 20
# Overlap with existing lesions must be below s2 pixels (1 = no overlap).
s2 = 1
max_attempts = 100

[blend]
# soft | hard | gaussian (sigma) | poisson (tolerance, max_iterations)
mode = "soft"
"#;
