//! Gradient-domain paste.
//!
//! For every pixel `x` of the region `omega` the pasted value `f` satisfies
//! `4 f(x) - sum_{y in N4(x)} f(y) = 4 g(x) - sum_{y in N4(x)} g(y)`, where
//! `g` is the patch and `f(y)` is fixed to the background for neighbours
//! outside `omega`. The system is symmetric positive definite and is solved
//! per channel with conjugate gradients, starting from the background.

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ImagePlane, Raster};

use super::PasteOffset;

const NONE: usize = usize::MAX;

/// Unclamped solution of the discrete Poisson system on `omega`.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    /// Patch-local `(row, col)` of each unknown, in raster order.
    pub unknowns: Vec<(usize, usize)>,
    /// `values[channel][i]` is the solved value of unknown `i`.
    pub values: Vec<Vec<f64>>,
    /// Largest final residual norm over channels.
    pub residual: f64,
    /// Largest iteration count over channels.
    pub iterations: usize,
}

struct System {
    unknowns: Vec<(usize, usize)>,
    /// In-omega neighbour indices, `NONE` where the neighbour is a boundary pixel.
    neighbours: Vec<[usize; 4]>,
}

impl System {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, nb) in self.neighbours.iter().enumerate() {
            let mut acc = 4.0 * x[i];
            for &j in nb {
                if j != NONE {
                    acc -= x[j];
                }
            }
            out[i] = acc;
        }
    }
}

const N4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Solves for the pasted values without writing them anywhere.
pub fn solve_poisson(
    patch: &ImagePlane,
    omega: &BinaryMask,
    background: &ImagePlane,
    at: PasteOffset,
    tol: f64,
    max_iter: usize,
) -> Result<PoissonSolution> {
    if patch.dims() != omega.dims() {
        return Err(Error::DimensionMismatch(format!(
            "patch {:?} vs region {:?}",
            patch.dims(),
            omega.dims()
        )));
    }
    if patch.channels() != background.channels() {
        return Err(Error::DimensionMismatch(format!(
            "patch has {} channels, background has {}",
            patch.channels(),
            background.channels()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let (h, w) = patch.dims();
    let win = at.window(h, w, background.height(), background.width())?;
    let (bh, bw) = background.dims();

    let mut index = vec![NONE; h * w];
    let mut unknowns = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if omega.get(r, c) {
                let (br, bc) = (win.row + r, win.col + c);
                if r == 0 || c == 0 || r + 1 == h || c + 1 == w || br == 0 || bc == 0 || br + 1 == bh || bc + 1 == bw {
                    return Err(Error::OutOfBounds(format!(
                        "poisson region touches the border at patch pixel ({r}, {c})"
                    )));
                }
                index[r * w + c] = unknowns.len();
                unknowns.push((r, c));
            }
        }
    }
    let neighbours: Vec<[usize; 4]> = unknowns
        .iter()
        .map(|&(r, c)| {
            N4.map(|(dr, dc)| index[(r as isize + dr) as usize * w + (c as isize + dc) as usize])
        })
        .collect();
    let system = System { unknowns, neighbours };

    let n = system.unknowns.len();
    let mut values = Vec::with_capacity(patch.channels());
    let (mut residual, mut iterations) = (0.0f64, 0usize);
    for k in 0..patch.channels() {
        let mut rhs = vec![0.0; n];
        let mut x = vec![0.0; n];
        for (i, &(r, c)) in system.unknowns.iter().enumerate() {
            let mut b = 4.0 * patch.get(r, c, k);
            for (dr, dc) in N4 {
                let (nr, nc) = ((r as isize + dr) as usize, (c as isize + dc) as usize);
                b -= patch.get(nr, nc, k);
                if !omega.get(nr, nc) {
                    b += background.get(win.row + nr, win.col + nc, k);
                }
            }
            rhs[i] = b;
            x[i] = background.get(win.row + r, win.col + c, k);
        }
        let (res, iters) = conjugate_gradient(&system, &rhs, &mut x, tol, max_iter)?;
        residual = residual.max(res);
        iterations = iterations.max(iters);
        values.push(x);
    }
    Ok(PoissonSolution { unknowns: system.unknowns, values, residual, iterations })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn conjugate_gradient(sys: &System, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<(f64, usize)> {
    let n = b.len();
    let mut ax = vec![0.0; n];
    sys.apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        if rr.sqrt() <= tol {
            return Ok((rr.sqrt(), it));
        }
        sys.apply(&p, &mut ap);
        let step = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
    }
    // Recompute the true residual; the recurrence can drift.
    sys.apply(x, &mut ax);
    let true_res = b.iter().zip(&ax).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt();
    if true_res <= tol {
        Ok((true_res, max_iter))
    } else {
        Err(Error::NonConvergence { iterations: max_iter, residual: true_res })
    }
}

/// Pastes `patch` over `omega` in the gradient domain; pixels outside
/// `omega` keep the background. Results are clamped to `[0, 1]`.
pub fn poisson_paste(
    patch: &ImagePlane,
    omega: &BinaryMask,
    background: &ImagePlane,
    at: PasteOffset,
    tol: f64,
    max_iter: usize,
) -> Result<ImagePlane> {
    let sol = solve_poisson(patch, omega, background, at, tol, max_iter)?;
    let (bw, ch) = (background.width(), background.channels());
    let mut out = background.samples().to_vec();
    for (k, vals) in sol.values.iter().enumerate() {
        for (&(r, c), &v) in sol.unknowns.iter().zip(vals) {
            let (br, bc) = (at.row as usize + r, at.col as usize + c);
            out[(br * bw + bc) * ch + k] = v;
        }
    }
    Ok(ImagePlane::from_clamped(background.height(), bw, ch, out))
}
