//! Compositing a lesion patch into a background.
//!
//! Soft-copy multiplies the patch by its soft mask; soft-paste adds the
//! result to the background weighted by the complement of the mask:
//! `out = S * patch + (1 - S) * background` inside the translated patch
//! window. Single-channel masks broadcast across colour channels.

mod poisson;

use serde::{Deserialize, Serialize};

pub use poisson::{poisson_paste, solve_poisson, PoissonSolution};

use crate::error::{Error, Result};
use crate::filter::{convolve_separable, gaussian_kernel};
use crate::morphology::dilate;
use crate::raster::{BinaryMask, ClassId, ImagePlane, LabelMap, Raster, Rect, SoftMask};
use crate::softmask::{compute_soft_mask, SoftMaskParams};

/// Translation of a patch's top-left corner into background coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PasteOffset {
    pub row: i64,
    pub col: i64,
}

impl PasteOffset {
    pub fn new(row: i64, col: i64) -> Self {
        Self { row, col }
    }

    /// Background rectangle covered by a `height x width` patch, if it lies
    /// fully inside a `bg_height x bg_width` frame.
    pub fn window(&self, height: usize, width: usize, bg_height: usize, bg_width: usize) -> Result<Rect> {
        let fits = self.row >= 0
            && self.col >= 0
            && self.row as usize + height <= bg_height
            && self.col as usize + width <= bg_width;
        if !fits {
            return Err(Error::OutOfBounds(format!(
                "{height}x{width} patch at ({}, {}) overflows a {bg_height}x{bg_width} frame",
                self.row, self.col
            )));
        }
        Ok(Rect::new(self.row as usize, self.col as usize, height, width))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum BlendMode {
    /// Soft-mask copy-paste.
    #[default]
    Soft,
    /// Binary mask select.
    Hard,
    /// Lesion mask blurred with a Gaussian of the given sigma.
    Gaussian { sigma: f64 },
    /// Gradient-domain paste solved by conjugate gradients.
    Poisson { tolerance: f64, max_iterations: usize },
}

impl BlendMode {
    pub const DEFAULT_GAUSSIAN_SIGMA: f64 = 2.0;
    pub const DEFAULT_POISSON_TOLERANCE: f64 = 1e-7;
    pub const DEFAULT_POISSON_MAX_ITERATIONS: usize = 5000;

    pub fn name(&self) -> &'static str {
        match self {
            BlendMode::Soft => "soft",
            BlendMode::Hard => "hard",
            BlendMode::Gaussian { .. } => "gaussian",
            BlendMode::Poisson { .. } => "poisson",
        }
    }

    /// Parses a mode name, using default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "soft" => BlendMode::Soft,
            "hard" => BlendMode::Hard,
            "gaussian" => BlendMode::Gaussian { sigma: Self::DEFAULT_GAUSSIAN_SIGMA },
            "poisson" => BlendMode::Poisson {
                tolerance: Self::DEFAULT_POISSON_TOLERANCE,
                max_iterations: Self::DEFAULT_POISSON_MAX_ITERATIONS,
            },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown blend mode {other:?} (expected soft, hard, gaussian or poisson)"
                )))
            }
        })
    }

    pub fn all_defaults() -> [BlendMode; 4] {
        ["soft", "hard", "gaussian", "poisson"].map(|n| Self::from_name(n).expect("known name"))
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BlendMode::Gaussian { sigma } if !(sigma > 0.0) => {
                Err(Error::InvalidParameter(format!("gaussian sigma must be positive, got {sigma}")))
            }
            BlendMode::Poisson { tolerance, .. } if !(tolerance > 0.0) => Err(Error::InvalidParameter(
                format!("poisson tolerance must be positive, got {tolerance}"),
            )),
            _ => Ok(()),
        }
    }
}

fn check_same_dims(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{what}: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// `S * patch`, per pixel and channel.
pub fn soft_copy(patch: &ImagePlane, s: &SoftMask) -> Result<ImagePlane> {
    check_same_dims(patch.dims(), s.dims(), "patch and soft mask")?;
    let ch = patch.channels();
    let samples = patch
        .samples()
        .iter()
        .enumerate()
        .map(|(i, &v)| s.weights()[i / ch] * v)
        .collect();
    Ok(ImagePlane::from_clamped(patch.height(), patch.width(), ch, samples))
}

/// `i_soft + (1 - S) * background` inside the window at `at`; the
/// background elsewhere.
pub fn soft_paste(i_soft: &ImagePlane, s: &SoftMask, background: &ImagePlane, at: PasteOffset) -> Result<ImagePlane> {
    check_same_dims(i_soft.dims(), s.dims(), "soft patch and soft mask")?;
    if i_soft.channels() != background.channels() {
        return Err(Error::DimensionMismatch(format!(
            "patch has {} channels, background has {}",
            i_soft.channels(),
            background.channels()
        )));
    }
    let win = at.window(i_soft.height(), i_soft.width(), background.height(), background.width())?;
    let ch = background.channels();
    let bw = background.width();
    let mut out = background.samples().to_vec();
    for r in 0..win.height {
        for c in 0..win.width {
            let wt = s.get(r, c);
            let dst = ((win.row + r) * bw + win.col + c) * ch;
            let src = (r * win.width + c) * ch;
            for k in 0..ch {
                out[dst + k] = i_soft.samples()[src + k] + (1.0 - wt) * out[dst + k];
            }
        }
    }
    Ok(ImagePlane::from_clamped(background.height(), bw, ch, out))
}

/// Writes `lesion_class` wherever the translated `m_p` is set; every other
/// label is copied from `m_g`.
pub fn merge_labels(m_p: &BinaryMask, lesion_class: ClassId, m_g: &LabelMap, at: PasteOffset) -> Result<LabelMap> {
    let win = at.window(m_p.height(), m_p.width(), m_g.height(), m_g.width())?;
    let mut out = m_g.clone();
    for r in 0..win.height {
        for c in 0..win.width {
            if m_p.get(r, c) {
                out.set(win.row + r, win.col + c, lesion_class);
            }
        }
    }
    Ok(out)
}

/// The mask blurred by a normalized Gaussian of radius `ceil(3 * sigma)`.
pub fn gaussian_mask(m: &BinaryMask, sigma: f64) -> Result<SoftMask> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let data: Vec<f64> = m.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let blurred = convolve_separable(&data, m.height(), m.width(), 1, &gaussian_kernel(sigma));
    Ok(SoftMask::from_clamped(m.height(), m.width(), blurred))
}

/// Result of [`composite`].
#[derive(Debug, Clone)]
pub struct Composite {
    pub image: ImagePlane,
    /// Patch-local blending weights: the soft mask for weighted modes, the
    /// solved region for Poisson.
    pub weights: SoftMask,
}

/// Blends `patch` (with lesion `mask`) into `background` at `at` using
/// `mode`. When `coverage` is given, weights outside it are zeroed; it marks
/// patch pixels that carry real image content after geometric transforms.
pub fn composite(
    mode: &BlendMode,
    patch: &ImagePlane,
    mask: &BinaryMask,
    coverage: Option<&BinaryMask>,
    soft: &SoftMaskParams,
    background: &ImagePlane,
    at: PasteOffset,
) -> Result<Composite> {
    check_same_dims(patch.dims(), mask.dims(), "patch and mask")?;
    let restrict = |s: SoftMask| match coverage {
        Some(cov) => s.restrict_to(cov),
        None => s,
    };
    let weights = match *mode {
        BlendMode::Soft => restrict(compute_soft_mask(mask, soft)),
        BlendMode::Hard => SoftMask::from_binary(mask),
        BlendMode::Gaussian { sigma } => restrict(gaussian_mask(mask, sigma)?),
        BlendMode::Poisson { tolerance, max_iterations } => {
            let omega = poisson_region(mask, coverage);
            let image = poisson_paste(patch, &omega, background, at, tolerance, max_iterations)?;
            return Ok(Composite { image, weights: SoftMask::from_binary(&omega) });
        }
    };
    let i_soft = soft_copy(patch, &weights)?;
    let image = soft_paste(&i_soft, &weights, background, at)?;
    Ok(Composite { image, weights })
}

/// Lesion mask grown by one ring, kept off the patch border and inside the
/// covered area so every unknown has guidance neighbours.
fn poisson_region(mask: &BinaryMask, coverage: Option<&BinaryMask>) -> BinaryMask {
    let (h, w) = mask.dims();
    let grown = dilate(mask);
    BinaryMask::from_fn(h, w, |r, c| {
        r > 0 && c > 0 && r + 1 < h && c + 1 < w && grown.get(r, c) && coverage.is_none_or(|cov| cov.get(r, c))
    })
}
