//! Synthetic kidney phantoms: a textured background, one or two elliptical
//! kidneys (class 1) and, in some images, a tumour inside a kidney
//! (class 2). Used for tests, benchmarks and demos.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ClassesConfig, RunConfig};
use crate::error::{Error, Result};
use crate::raster::{save_image, save_label_map, BitDepth, ClassConfig, ImagePlane, LabelMap};

pub const KIDNEY: u8 = 1;
pub const TUMOUR: u8 = 2;

/// Pixel values 0, 128 and 255 for background, kidney and tumour.
pub fn phantom_classes() -> ClassesConfig {
    ClassesConfig {
        values: ClassConfig::new([(0, 0), (128, KIDNEY), (255, TUMOUR)]),
        lesion_class: TUMOUR,
        reference_class: Some(KIDNEY),
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cr: f64,
    cc: f64,
    rr: f64,
    rc: f64,
}

impl Ellipse {
    fn contains(&self, r: usize, c: usize) -> bool {
        let dr = (r as f64 + 0.5 - self.cr) / self.rr;
        let dc = (c as f64 + 0.5 - self.cc) / self.rc;
        dr * dr + dc * dc <= 1.0
    }
}

/// One phantom pair. `tumour_probability` is the chance each kidney carries
/// a tumour.
pub fn phantom_pair(h: usize, w: usize, seed: u64, tumour_probability: f64) -> (ImagePlane, LabelMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (hf, wf) = (h as f64, w as f64);
    let n_kidneys = rng.random_range(1..=2usize);
    let mut kidneys = Vec::new();
    let mut tumours = Vec::new();
    for k in 0..n_kidneys {
        let side = if n_kidneys == 1 { rng.random_range(0.3..0.7) } else { 0.28 + 0.44 * k as f64 };
        let kid = Ellipse {
            cr: hf * rng.random_range(0.4..0.6),
            cc: wf * side,
            rr: hf * rng.random_range(0.16..0.24),
            rc: wf * rng.random_range(0.09..0.13),
        };
        if rng.random_bool(tumour_probability) {
            let scale = rng.random_range(0.25..0.45);
            tumours.push(Ellipse {
                cr: kid.cr + kid.rr * rng.random_range(-0.4..0.4),
                cc: kid.cc + kid.rc * rng.random_range(-0.3..0.3),
                rr: kid.rr * scale,
                rc: kid.rc * scale * rng.random_range(0.8..1.4),
            });
        }
        kidneys.push(kid);
    }
    let labels = LabelMap::from_fn(h, w, |r, c| {
        if tumours.iter().any(|t| t.contains(r, c)) {
            TUMOUR
        } else if kidneys.iter().any(|k| k.contains(r, c)) {
            KIDNEY
        } else {
            0
        }
    });
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let noise: Vec<f64> = (0..h * w).map(|_| rng.random_range(-0.03..0.03)).collect();
    let image = ImagePlane::from_fn(h, w, 1, |r, c, _| {
        let base = match labels.get(r, c) {
            TUMOUR => 0.72,
            KIDNEY => 0.5,
            _ => 0.2 + 0.05 * ((r as f64 * 0.11 + phase).sin() + (c as f64 * 0.07).cos()),
        };
        base + noise[r * w + c]
    });
    (image, labels)
}

/// Writes `n` phantom pairs under `root/images` and `root/masks`.
pub fn write_phantom_dataset(root: &Path, n: usize, h: usize, w: usize, seed: u64) -> Result<()> {
    if n == 0 || h < 16 || w < 16 {
        return Err(Error::InvalidParameter(format!("phantom dataset needs n > 0 and at least 16x16, got {n} of {h}x{w}")));
    }
    for sub in ["images", "masks"] {
        let dir = root.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let classes = phantom_classes();
    for i in 0..n {
        let (img, labels) = phantom_pair(h, w, seed.wrapping_add(i as u64), 0.6);
        let stem = format!("case_{i:04}");
        save_image(root.join("images").join(format!("{stem}.png")), &img, BitDepth::Eight)?;
        save_label_map(root.join("masks").join(format!("{stem}.png")), &labels, &classes.values)?;
    }
    Ok(())
}

/// A run configuration for a phantom dataset at `root`.
pub fn phantom_config(root: &Path, out: &Path, size: usize) -> RunConfig {
    RunConfig {
        dataset_root: root.to_path_buf(),
        output_root: out.to_path_buf(),
        output_size: [size, size],
        classes: phantom_classes(),
        ..RunConfig::default()
    }
}
