//! Soft-mask construction.
//!
//! The lesion mask is eroded `k_erode` times to form a core with weight 1.
//! The core is then grown one 3x3 dilation at a time; pixels first reached
//! by the `j`-th dilation get weight `alpha^j`. Weights already assigned are
//! never overwritten, so the result is `alpha^d` where `d` is the Chebyshev
//! distance to the core, for `1 <= d <= k_dilate`, and 0 beyond.
//!
//! Each dilation starts from the accumulated mask binarized at
//! `binarize_threshold`, so growth stops early once `alpha^j` falls to the
//! threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{binarize, dilate, erode_n};
use crate::raster::{BinaryMask, Raster, SoftMask};

pub const DEFAULT_BINARIZE_THRESHOLD: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftMaskParams {
    pub k_erode: usize,
    pub k_dilate: usize,
    /// Softening coefficient, strictly between 0 and 1.
    pub alpha: f64,
    pub binarize_threshold: f64,
}

impl Default for SoftMaskParams {
    fn default() -> Self {
        Self { k_erode: 1, k_dilate: 5, alpha: 0.5, binarize_threshold: DEFAULT_BINARIZE_THRESHOLD }
    }
}

impl SoftMaskParams {
    pub fn new(k_erode: usize, k_dilate: usize, alpha: f64) -> Result<Self> {
        let p = Self { k_erode, k_dilate, alpha, ..Self::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.binarize_threshold > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "binarize threshold must be positive, got {}",
                self.binarize_threshold
            )));
        }
        Ok(())
    }
}

/// Computes the soft mask of `m`. Parameters are assumed validated.
pub fn compute_soft_mask(m: &BinaryMask, p: &SoftMaskParams) -> SoftMask {
    let (h, w) = m.dims();
    let core = erode_n(m, p.k_erode);
    let mut weights: Vec<f64> = core.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    if core.is_blank() {
        return SoftMask::from_clamped(h, w, weights);
    }
    for j in 1..=p.k_dilate {
        let current = SoftMask::from_clamped(h, w, weights.clone());
        let reached = dilate(&binarize(&current, p.binarize_threshold));
        let ring_weight = p.alpha.powi(j as i32);
        let mut grew = false;
        for (wt, &hit) in weights.iter_mut().zip(reached.bits()) {
            if hit && *wt == 0.0 {
                *wt = ring_weight;
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    SoftMask::from_clamped(h, w, weights)
}
