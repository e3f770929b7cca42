//! Separable Gaussian smoothing with replicate padding.

/// Normalized 1-D Gaussian taps of radius `ceil(3 * sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Convolves an interleaved `h x w x channels` grid with `kernel` along both
/// axes, replicating edge pixels.
pub fn convolve_separable(data: &[f64], h: usize, w: usize, channels: usize, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; data.len()];
    for r in 0..h {
        for c in 0..w {
            for k in 0..channels {
                let mut acc = 0.0;
                for (t, &wt) in kernel.iter().enumerate() {
                    let sc = clamp(c as isize + t as isize - radius, w);
                    acc += wt * data[(r * w + sc) * channels + k];
                }
                tmp[(r * w + c) * channels + k] = acc;
            }
        }
    }
    let mut out = vec![0.0; data.len()];
    for r in 0..h {
        for c in 0..w {
            for k in 0..channels {
                let mut acc = 0.0;
                for (t, &wt) in kernel.iter().enumerate() {
                    let sr = clamp(r as isize + t as isize - radius, h);
                    acc += wt * tmp[(sr * w + c) * channels + k];
                }
                out[(r * w + c) * channels + k] = acc;
            }
        }
    }
    out
}
