//! End-to-end synthesis: sample a background and lesions, transform, place,
//! blend, record.
//!
//! Sample `i` draws every random choice from stream `i` of a ChaCha8
//! generator seeded with the master seed, so its output depends only on the
//! seed, the index, the configuration and the dataset.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::blend::{composite, merge_labels, BlendMode};
use crate::config::RunConfig;
use crate::dataset::{build_lesion_bank, scan_dataset, DatasetIndex, LesionInstance};
use crate::error::{Error, Result};
use crate::manifest::{
    write_manifest, BackgroundRecord, ManifestEntry, ManifestHeader, PastedLesion, SampleSeed, SynthesisTally,
    TOOL_VERSION,
};
use crate::placement::{find_placement, Placement};
use crate::raster::{save_image, save_label_map, ImagePlane, LabelMap, Raster, SoftMask};
use crate::transform::{
    apply_image_level, apply_intensity, apply_object_pipeline, sample_image_pipeline, sample_object_pipeline,
    TransformedPatch,
};

/// Random stream for sample `index`.
pub fn sample_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

/// A finished synthetic sample plus the intermediates used by previews.
#[derive(Debug, Clone)]
pub struct SyntheticSample {
    pub image: ImagePlane,
    pub labels: LabelMap,
    pub entry: ManifestEntry,
    /// Background after the image-level pipeline, before pasting.
    pub background: ImagePlane,
    /// Full-frame blending weights (maximum over pasted lesions).
    pub weights: SoftMask,
}

pub fn sample_paths(index: usize) -> (PathBuf, PathBuf) {
    let name = format!("syn_{index:06}.png");
    (Path::new("images").join(&name), Path::new("masks").join(&name))
}

enum Attempt {
    Done(Box<SyntheticSample>),
    Retry,
}

/// Synthesizes sample `index`. On a failed placement the background and
/// lesions are redrawn, up to `cfg.max_retries` times.
pub fn synthesize_one(cfg: &RunConfig, index: usize, idx: &DatasetIndex, bank: &[LesionInstance]) -> Result<SyntheticSample> {
    if bank.is_empty() {
        return Err(Error::Synthesis("lesion bank is empty".into()));
    }
    if idx.records.is_empty() {
        return Err(Error::Synthesis("dataset has no records".into()));
    }
    let mut rng = sample_rng(cfg.seed, index);
    let mut tally = SynthesisTally::default();
    for attempt in 1..=cfg.max_retries + 1 {
        match try_synthesize(cfg, index, idx, bank, &mut rng, &mut tally, attempt)? {
            Attempt::Done(sample) => return Ok(*sample),
            Attempt::Retry => {}
        }
    }
    Err(Error::Synthesis(format!(
        "sample {index}: no valid placement after {} attempts ({tally:?})",
        cfg.max_retries + 1
    )))
}

fn try_synthesize(
    cfg: &RunConfig,
    index: usize,
    idx: &DatasetIndex,
    bank: &[LesionInstance],
    rng: &mut ChaCha8Rng,
    tally: &mut SynthesisTally,
    attempt: usize,
) -> Result<Attempt> {
    let out_dims = cfg.output_dims();
    let rec = &idx.records[rng.random_range(0..idx.records.len())];
    let (src_img, src_labels) = rec.load(&cfg.classes, None)?;
    let bg_pipeline = sample_image_pipeline(rng, &cfg.transform, src_img.dims());
    let (background, mut scene) =
        match apply_image_level(&src_img, &src_labels, &bg_pipeline, out_dims, cfg.classes.reference_class, rng) {
            Ok(v) => v,
            Err(Error::ReferenceCropped(_)) => {
                tally.reference_cropped += 1;
                return Ok(Attempt::Retry);
            }
            Err(e) => return Err(e),
        };

    let [lo, hi] = cfg.lesions_per_image;
    let n_lesions = rng.random_range(lo..=hi);
    let mut image = background.clone();
    let mut weights = vec![0.0; out_dims.0 * out_dims.1];
    let mut lesions = Vec::with_capacity(n_lesions);

    for _ in 0..n_lesions {
        let inst = &bank[rng.random_range(0..bank.len())];
        let obj_pipeline = sample_object_pipeline(rng, &cfg.transform, inst.patch.dims());
        let start = TransformedPatch::new(inst.patch.to_channels(image.channels()), inst.mask.clone())?;
        let moved = match apply_object_pipeline(&start, &obj_pipeline, rng) {
            Ok(p) => p,
            Err(Error::EmptyMask(_)) => {
                tally.empty_masks += 1;
                return Ok(Attempt::Retry);
            }
            Err(e) => return Err(e),
        };
        let (ph, pw) = moved.mask.dims();
        if ph > out_dims.0 || pw > out_dims.1 {
            tally.oversized += 1;
            return Ok(Attempt::Retry);
        }
        let constraints = cfg.placement.constraints(moved.mask.count(), &cfg.classes);
        let placed = match find_placement(&moved.mask, &scene, &constraints, rng)? {
            Placement::Found { result, rejections } => {
                tally.placement.add(&rejections);
                result
            }
            Placement::Exhausted(rejections) => {
                tally.placement.add(&rejections);
                tally.exhausted += 1;
                return Ok(Attempt::Retry);
            }
        };
        let at = placed.offset;
        let blended = composite(&cfg.blend, &moved.image, &moved.mask, Some(&moved.coverage), &cfg.soft_mask, &image, at)?;
        image = blended.image;
        for r in 0..ph {
            for c in 0..pw {
                let dst = &mut weights[(at.row as usize + r) * out_dims.1 + at.col as usize + c];
                *dst = f64::max(*dst, blended.weights.get(r, c));
            }
        }
        scene = merge_labels(&moved.mask, cfg.classes.lesion_class, &scene, at)?;
        lesions.push(PastedLesion {
            source_stem: inst.source_stem.clone(),
            component: inst.component,
            bbox: inst.bbox,
            pipeline: obj_pipeline,
            offset: at,
            placement: placed,
            s1: constraints.s1,
            s2: constraints.s2,
        });
    }

    let mut final_intensity = Vec::new();
    if cfg.final_intensity {
        let pass = sample_image_pipeline(rng, &cfg.transform, out_dims).intensity;
        for t in &pass {
            image = apply_intensity(&image, t, rng)?;
        }
        final_intensity = pass;
    }

    let (image_path, mask_path) = sample_paths(index);
    let entry = ManifestEntry {
        index,
        image: image_path,
        mask: mask_path,
        seed: SampleSeed { master: cfg.seed, stream: index as u64 },
        background: BackgroundRecord { stem: rec.stem.clone(), pipeline: bg_pipeline },
        lesions,
        blend: cfg.blend,
        soft_mask: cfg.soft_mask,
        attempts: attempt,
        rejections: *tally,
        final_intensity,
    };
    Ok(Attempt::Done(Box::new(SyntheticSample {
        image,
        labels: scene,
        entry,
        background,
        weights: SoftMask::from_clamped(out_dims.0, out_dims.1, weights),
    })))
}

/// Dataset index and lesion bank prepared for a run.
pub struct PreparedRun {
    pub index: DatasetIndex,
    pub bank: Vec<LesionInstance>,
}

pub fn prepare(cfg: &RunConfig) -> Result<PreparedRun> {
    cfg.validate()?;
    let index = scan_dataset(&cfg.dataset_root, &cfg.classes)?;
    let bank = build_lesion_bank(&index, cfg.min_area, cfg.context_margin(), Some(cfg.output_dims()))?;
    Ok(PreparedRun { index, bank })
}

#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    /// Recorded in the manifest header.
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BatchSummary {
    pub manifest: PathBuf,
    pub samples: usize,
    pub real_records: usize,
    pub rejections: SynthesisTally,
    /// Unpaired dataset files.
    pub warnings: Vec<String>,
}

/// Generates the whole batch into `cfg.output_root`. Samples run in
/// parallel; the manifest is written in index order. If any sample fails,
/// the successful ones are still written (with their manifest) and the
/// first failure is returned.
pub fn synthesize_batch(cfg: &RunConfig, opts: &BatchOptions) -> Result<BatchSummary> {
    let run = prepare(cfg)?;
    let n = cfg.synthetic_count(run.index.records.len());
    if n > 0 && run.bank.is_empty() {
        return Err(Error::Synthesis(format!(
            "no lesions of class {} with at least {} pixels in {}",
            cfg.classes.lesion_class,
            cfg.min_area,
            cfg.dataset_root.display()
        )));
    }
    let out = &cfg.output_root;
    for sub in ["images", "masks"] {
        let dir = out.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Synthesis(e.to_string()))?;
    let results: Vec<Result<ManifestEntry>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let s = synthesize_one(cfg, i, &run.index, &run.bank)?;
                save_image(out.join(&s.entry.image), &s.image, cfg.output_bit_depth)?;
                save_label_map(out.join(&s.entry.mask), &s.labels, &cfg.classes.values)?;
                Ok(s.entry)
            })
            .collect()
    });

    let mut entries = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => entries.push(e),
            Err(e) => failures.push((i, e)),
        }
    }
    let header = ManifestHeader { tool_version: TOOL_VERSION.to_string(), config: cfg.clone(), overrides: opts.overrides.clone() };
    let manifest = out.join("manifest.jsonl");
    write_manifest(&manifest, &header, &entries)?;

    if let Some((i, first)) = failures.first() {
        return Err(Error::Synthesis(format!(
            "{} of {n} samples failed; {} written to {}; first failure (sample {i}): {first}",
            failures.len(),
            entries.len(),
            manifest.display()
        )));
    }
    let mut rejections = SynthesisTally::default();
    for e in &entries {
        rejections.add(&e.rejections);
    }
    Ok(BatchSummary {
        manifest,
        samples: entries.len(),
        real_records: run.index.records.len(),
        rejections,
        warnings: run.index.warnings,
    })
}

/// Side-by-side preview row for one sample: background, weight heatmap,
/// then the composite under each blend mode. The configured mode keeps its
/// parameters; the others use defaults.
pub fn render_preview(cfg: &RunConfig, index: usize, run: &PreparedRun) -> Result<ImagePlane> {
    let primary = synthesize_one(cfg, index, &run.index, &run.bank)?;
    let mut tiles = vec![primary.background.to_channels(3), heatmap(&primary.weights)];
    for mode in BlendMode::all_defaults() {
        let sample = if mode.name() == cfg.blend.name() {
            primary.image.clone()
        } else {
            let alt = RunConfig { blend: mode, ..cfg.clone() };
            synthesize_one(&alt, index, &run.index, &run.bank)?.image
        };
        tiles.push(sample.to_channels(3));
    }
    ImagePlane::hconcat(&tiles, 2)
}

/// Blue-to-red colour ramp of a weight map.
pub fn heatmap(s: &SoftMask) -> ImagePlane {
    let (h, w) = s.dims();
    ImagePlane::from_fn(h, w, 3, |r, c, k| {
        let v = s.get(r, c);
        match k {
            0 => (1.5 - (4.0 * v - 3.0).abs()).clamp(0.0, 1.0),
            1 => (1.5 - (4.0 * v - 2.0).abs()).clamp(0.0, 1.0),
            _ => (1.5 - (4.0 * v - 1.0).abs()).clamp(0.0, 1.0),
        }
    })
}
