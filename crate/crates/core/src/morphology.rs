//! Binary morphology with a fixed 3x3 square structuring element.
//!
//! Pixels outside the frame read as 0 for both erosion and dilation, so
//! erosion always clears the outermost ring of the frame.

use crate::raster::{BinaryMask, Raster, Rect, SoftMask};

/// The 3x3 all-ones square. It is the only element supported; one dilation
/// grows a set by exactly one ring of Chebyshev distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StructuringElement;

impl StructuringElement {
    pub const RADIUS: isize = 1;

    pub fn offsets(self) -> impl Iterator<Item = (isize, isize)> {
        (-Self::RADIUS..=Self::RADIUS)
            .flat_map(|dr| (-Self::RADIUS..=Self::RADIUS).map(move |dc| (dr, dc)))
    }
}

/// A pixel survives iff its whole 3x3 neighbourhood is foreground.
pub fn erode(m: &BinaryMask) -> BinaryMask {
    let (h, w) = m.dims();
    // Row pass then column pass; a 3x3 square is separable.
    let mut rows = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            rows[r * w + c] = c > 0 && c + 1 < w && m.get(r, c - 1) && m.get(r, c) && m.get(r, c + 1);
        }
    }
    BinaryMask::from_fn(h, w, |r, c| {
        r > 0 && r + 1 < h && rows[(r - 1) * w + c] && rows[r * w + c] && rows[(r + 1) * w + c]
    })
}

/// A pixel is set iff any pixel of its 3x3 neighbourhood is foreground.
pub fn dilate(m: &BinaryMask) -> BinaryMask {
    let (h, w) = m.dims();
    let mut rows = vec![false; h * w];
    for r in 0..h {
        for c in 0..w {
            rows[r * w + c] = m.get(r, c)
                || (c > 0 && m.get(r, c - 1))
                || (c + 1 < w && m.get(r, c + 1));
        }
    }
    BinaryMask::from_fn(h, w, |r, c| {
        rows[r * w + c] || (r > 0 && rows[(r - 1) * w + c]) || (r + 1 < h && rows[(r + 1) * w + c])
    })
}

pub fn erode_n(m: &BinaryMask, iterations: usize) -> BinaryMask {
    let mut out = m.clone();
    for _ in 0..iterations {
        if out.is_blank() {
            break;
        }
        out = erode(&out);
    }
    out
}

pub fn dilate_n(m: &BinaryMask, iterations: usize) -> BinaryMask {
    let mut out = m.clone();
    for _ in 0..iterations {
        out = dilate(&out);
    }
    out
}

/// Foreground where the weight is strictly above `threshold`.
pub fn binarize(s: &SoftMask, threshold: f64) -> BinaryMask {
    debug_assert!(threshold > 0.0);
    let (h, w) = s.dims();
    BinaryMask::new(h, w, s.weights().iter().map(|&v| v > threshold).collect())
        .expect("soft mask dimensions are consistent")
}

/// One 8-connected foreground region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    /// Support of the component, cropped to `bbox`.
    pub support: BinaryMask,
    /// Tight bounding rectangle in frame coordinates.
    pub bbox: Rect,
    pub area: usize,
}

impl Component {
    /// Support re-embedded into a frame of the given size.
    pub fn full_frame_support(&self, height: usize, width: usize) -> BinaryMask {
        let b = self.bbox;
        BinaryMask::from_fn(height, width, |r, c| {
            r >= b.row && r < b.bottom() && c >= b.col && c < b.right() && self.support.get(r - b.row, c - b.col)
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComponentSet {
    pub components: Vec<Component>,
}

impl ComponentSet {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Component> {
        self.components.iter()
    }
}

/// 8-connected components with at least `min_area` pixels, ordered by the
/// raster position of their first pixel.
pub fn connected_components(m: &BinaryMask, min_area: usize) -> ComponentSet {
    let (h, w) = m.dims();
    let mut seen = vec![false; h * w];
    let mut stack = Vec::new();
    let mut pixels = Vec::new();
    let mut components = Vec::new();

    for start in 0..h * w {
        if seen[start] || !m.bits()[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        pixels.clear();
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (r, c) = ((p / w) as isize, (p % w) as isize);
            for (dr, dc) in StructuringElement.offsets() {
                let (nr, nc) = (r + dr, c + dc);
                if m.get_signed(nr, nc) {
                    let q = nr as usize * w + nc as usize;
                    if !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        if pixels.len() < min_area.max(1) {
            continue;
        }
        let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
        for &p in &pixels {
            let (r, c) = (p / w, p % w);
            r0 = r0.min(r);
            c0 = c0.min(c);
            r1 = r1.max(r);
            c1 = c1.max(c);
        }
        let bbox = Rect::new(r0, c0, r1 - r0 + 1, c1 - c0 + 1);
        let mut support = BinaryMask::zeros(bbox.height, bbox.width);
        for &p in &pixels {
            support.set(p / w - r0, p % w - c0, true);
        }
        components.push(Component { support, bbox, area: pixels.len() });
    }
    ComponentSet { components }
}
