//! Brute-force reference implementations used as test oracles. Each one
//! follows the textbook definition directly and shares no code with the
//! library beyond the raster containers.

#![allow(dead_code)]

use std::collections::VecDeque;

use softcp_core::{BinaryMask, ImagePlane, Raster, Rect};

fn at(m: &BinaryMask, r: isize, c: isize) -> bool {
    let (h, w) = m.dims();
    r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && m.get(r as usize, c as usize)
}

/// Pixel is set iff every pixel of its 3x3 neighbourhood is set; outside the
/// frame counts as unset.
pub fn erode(m: &BinaryMask) -> BinaryMask {
    BinaryMask::from_fn(m.height(), m.width(), |r, c| {
        (-1..=1).all(|dr| (-1..=1).all(|dc| at(m, r as isize + dr, c as isize + dc)))
    })
}

/// Pixel is set iff any pixel of its 3x3 neighbourhood is set.
pub fn dilate(m: &BinaryMask) -> BinaryMask {
    BinaryMask::from_fn(m.height(), m.width(), |r, c| {
        (-1..=1).any(|dr| (-1..=1).any(|dc| at(m, r as isize + dr, c as isize + dc)))
    })
}

pub fn erode_n(m: &BinaryMask, n: usize) -> BinaryMask {
    (0..n).fold(m.clone(), |acc, _| erode(&acc))
}

pub fn dilate_n(m: &BinaryMask, n: usize) -> BinaryMask {
    (0..n).fold(m.clone(), |acc, _| dilate(&acc))
}

/// Chebyshev distance from each pixel to the nearest set pixel of `core`,
/// searched by scanning a window of radius `cap`; `None` beyond it.
pub fn chebyshev_distance(core: &BinaryMask, cap: usize) -> Vec<Option<usize>> {
    let (h, w) = core.dims();
    let cap = cap as isize;
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut best: Option<usize> = None;
            for dr in -cap..=cap {
                for dc in -cap..=cap {
                    if at(core, r + dr, c + dc) {
                        let d = dr.unsigned_abs().max(dc.unsigned_abs());
                        best = Some(best.map_or(d, |b| b.min(d)));
                    }
                }
            }
            out.push(best);
        }
    }
    out
}

/// Closed-form soft mask: `alpha^d` within `k_dilate` of the eroded core.
pub fn soft_mask(m: &BinaryMask, k_erode: usize, k_dilate: usize, alpha: f64) -> Vec<f64> {
    let core = erode_n(m, k_erode);
    chebyshev_distance(&core, k_dilate)
        .into_iter()
        .map(|d| match d {
            Some(d) if d <= k_dilate => alpha.powi(d as i32),
            _ => 0.0,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentSummary {
    pub area: usize,
    pub bbox: Rect,
    /// Row-major pixel list.
    pub pixels: Vec<(usize, usize)>,
}

/// 8-connected components by breadth-first flood fill, in raster order of
/// their first pixel.
pub fn components(m: &BinaryMask) -> Vec<ComponentSummary> {
    let (h, w) = m.dims();
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    for r0 in 0..h {
        for c0 in 0..w {
            if !m.get(r0, c0) || seen[r0 * w + c0] {
                continue;
            }
            let mut pixels = Vec::new();
            let mut queue = VecDeque::from([(r0, c0)]);
            seen[r0 * w + c0] = true;
            while let Some((r, c)) = queue.pop_front() {
                pixels.push((r, c));
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        let (nr, nc) = (r as isize + dr, c as isize + dc);
                        if at(m, nr, nc) && !seen[nr as usize * w + nc as usize] {
                            seen[nr as usize * w + nc as usize] = true;
                            queue.push_back((nr as usize, nc as usize));
                        }
                    }
                }
            }
            pixels.sort();
            let rmin = pixels.iter().map(|p| p.0).min().unwrap();
            let rmax = pixels.iter().map(|p| p.0).max().unwrap();
            let cmin = pixels.iter().map(|p| p.1).min().unwrap();
            let cmax = pixels.iter().map(|p| p.1).max().unwrap();
            out.push(ComponentSummary {
                area: pixels.len(),
                bbox: Rect::new(rmin, cmin, rmax - rmin + 1, cmax - cmin + 1),
                pixels,
            });
        }
    }
    out
}

/// DSC from set sizes: `2|X ∩ Y| / (|X| + |Y|)`, 1 when both are empty.
pub fn dice_sets(x: &BinaryMask, y: &BinaryMask) -> f64 {
    let inter = x.bits().iter().zip(y.bits()).filter(|(a, b)| **a && **b).count();
    let total = x.count() + y.count();
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

/// Largest absolute residual of the discrete Poisson equation
/// `4f_p - sum f_q = 4g_p - sum g_q` over `omega`, where `f` is the composite
/// (in background coordinates at `offset`) and `g` the guidance patch.
pub fn poisson_residual(f: &[f64], bg_w: usize, channels: usize, patch: &ImagePlane, omega: &BinaryMask, offset: (usize, usize)) -> f64 {
    let (h, w) = omega.dims();
    let mut worst = 0.0f64;
    for r in 0..h {
        for c in 0..w {
            if !omega.get(r, c) {
                continue;
            }
            for k in 0..channels {
                let fv = |rr: usize, cc: usize| f[((offset.0 + rr) * bg_w + offset.1 + cc) * channels + k];
                let nbrs = [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)];
                let lap_f = 4.0 * fv(r, c) - nbrs.iter().map(|&(a, b)| fv(a, b)).sum::<f64>();
                let lap_g = 4.0 * patch.get(r, c, k) - nbrs.iter().map(|&(a, b)| patch.get(a, b, k)).sum::<f64>();
                worst = worst.max((lap_f - lap_g).abs());
            }
        }
    }
    worst
}

/// Deterministic pseudo-random mask: blobs of random rectangles.
pub fn random_mask(rng: &mut impl rand::Rng, max_side: usize) -> BinaryMask {
    let h = rng.random_range(1..=max_side);
    let w = rng.random_range(1..=max_side);
    let mut m = BinaryMask::zeros(h, w);
    let density = rng.random_range(0.0..1.0f64);
    if rng.random_bool(0.5) {
        for r in 0..h {
            for c in 0..w {
                m.set(r, c, rng.random_bool(density * 0.6));
            }
        }
    } else {
        for _ in 0..rng.random_range(0..6) {
            let (r0, c0) = (rng.random_range(0..h), rng.random_range(0..w));
            let (rh, rw) = (rng.random_range(1..=h - r0), rng.random_range(1..=w - c0));
            for r in r0..r0 + rh {
                for c in c0..c0 + rw {
                    m.set(r, c, true);
                }
            }
        }
    }
    m
}
