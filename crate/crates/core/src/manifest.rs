//! Manifest records and independent re-validation of generated samples.
//!
//! A manifest is JSON Lines: a header line carrying the full run
//! configuration, then one line per synthetic sample sorted by index.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blend::{merge_labels, BlendMode, PasteOffset};
use crate::config::RunConfig;
use crate::dataset::{build_lesion_bank, scan_dataset, LesionInstance};
use crate::error::{Error, Result};
use crate::placement::{check_placement, Constraint, PlacementCheck, PlacementResult, RejectionTally};
use crate::raster::{load_label_map, Raster, Rect};
use crate::softmask::SoftMaskParams;
use crate::transform::{image_level_labels, replay_mask_geometry, ImageLevelPipeline, IntensityKind, TransformPipeline};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub tool_version: String,
    pub config: RunConfig,
    /// `key=value` for every command-line flag that replaced a config value.
    pub overrides: Vec<String>,
}

/// How the per-sample random stream was derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSeed {
    pub master: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundRecord {
    pub stem: String,
    pub pipeline: ImageLevelPipeline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PastedLesion {
    pub source_stem: String,
    pub component: usize,
    /// Lesion bounding box in (resized) source coordinates.
    pub bbox: Rect,
    pub pipeline: TransformPipeline,
    pub offset: PasteOffset,
    pub placement: PlacementResult,
    pub s1: u64,
    pub s2: u64,
}

/// Draw counts that did not lead to a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SynthesisTally {
    pub reference_cropped: usize,
    pub empty_masks: usize,
    pub oversized: usize,
    pub exhausted: usize,
    pub placement: RejectionTally,
}

impl SynthesisTally {
    pub fn add(&mut self, other: &SynthesisTally) {
        self.reference_cropped += other.reference_cropped;
        self.empty_masks += other.empty_masks;
        self.oversized += other.oversized;
        self.exhausted += other.exhausted;
        self.placement.add(&other.placement);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    /// Relative to the output root.
    pub image: PathBuf,
    pub mask: PathBuf,
    pub seed: SampleSeed,
    pub background: BackgroundRecord,
    pub lesions: Vec<PastedLesion>,
    pub blend: BlendMode,
    pub soft_mask: SoftMaskParams,
    /// Attempts used, counting the successful one.
    pub attempts: usize,
    pub rejections: SynthesisTally,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub final_intensity: Vec<IntensityKind>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(Box<ManifestHeader>),
    Sample(Box<ManifestEntry>),
}

pub fn write_manifest(path: impl AsRef<Path>, header: &ManifestHeader, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut emit = |line: &Line| -> Result<()> {
        serde_json::to_writer(&mut out, line).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: 0,
            reason: e.to_string(),
        })?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))
    };
    emit(&Line::Header(Box::new(header.clone())))?;
    for e in entries {
        emit(&Line::Sample(Box::new(e.clone())))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a manifest. An empty file yields no header and no entries.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<(Option<ManifestHeader>, Vec<ManifestEntry>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = None;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Manifest { path: path.to_path_buf(), line: i + 1, reason };
        match serde_json::from_str::<Line>(&line).map_err(|e| bad(e.to_string()))? {
            Line::Header(h) if header.is_none() && entries.is_empty() => header = Some(*h),
            Line::Header(_) => return Err(bad("unexpected second header".into())),
            Line::Sample(e) => entries.push(*e),
        }
    }
    if header.is_none() && !entries.is_empty() {
        return Err(Error::Manifest { path: path.to_path_buf(), line: 1, reason: "missing header line".into() });
    }
    Ok((header, entries))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Reference overlap not above `s1`.
    ReferenceOverlap,
    /// Existing-lesion overlap not below `s2`.
    LesionOverlap,
    /// Written mask differs from the merged labels.
    MaskMismatch,
    /// Sources or outputs could not be reproduced.
    Unreplayable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub entries_checked: usize,
    pub violations: Vec<Violation>,
    /// Pixels where a pasted lesion landed on an earlier lesion, summed.
    pub lesion_overlap_pixels: u64,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Re-derives every entry's placement from its recorded sources and checks
/// both constraints and the written mask. `dataset_root` overrides the
/// root recorded in the header.
pub fn validate_manifest(manifest: impl AsRef<Path>, dataset_root: Option<&Path>) -> Result<ValidationReport> {
    let manifest = manifest.as_ref();
    let (header, entries) = read_manifest(manifest)?;
    let Some(header) = header else {
        return Ok(ValidationReport::default());
    };
    let cfg = header.config;
    let out_root = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let root = dataset_root.map(Path::to_path_buf).unwrap_or_else(|| cfg.dataset_root.clone());
    let idx = scan_dataset(&root, &cfg.classes)?;
    let bank = build_lesion_bank(&idx, cfg.min_area, cfg.context_margin(), Some(cfg.output_dims()))?;
    let by_key: HashMap<(&str, Rect), &LesionInstance> =
        bank.iter().map(|l| ((l.source_stem.as_str(), l.bbox), l)).collect();

    let mut report = ValidationReport { entries_checked: entries.len(), ..Default::default() };
    for entry in &entries {
        let violations = &mut report.violations;
        let mut push = |kind: ViolationKind, detail: String| {
            violations.push(Violation { index: entry.index, kind, detail });
        };
        let overlap_total = &mut report.lesion_overlap_pixels;
        let Some(rec) = idx.record(&entry.background.stem) else {
            push(ViolationKind::Unreplayable, format!("background {} not in dataset", entry.background.stem));
            continue;
        };
        let scene = load_label_map(&rec.mask, &cfg.classes.values)
            .and_then(|l| image_level_labels(&l, &entry.background.pipeline, cfg.output_dims()));
        let mut scene = match scene {
            Ok(s) => s,
            Err(e) => {
                push(ViolationKind::Unreplayable, e.to_string());
                continue;
            }
        };
        let mut replay_ok = true;
        for (k, lesion) in entry.lesions.iter().enumerate() {
            let Some(inst) = by_key.get(&(lesion.source_stem.as_str(), lesion.bbox)) else {
                push(ViolationKind::Unreplayable, format!("lesion {k}: {} {:?} not in bank", lesion.source_stem, lesion.bbox));
                replay_ok = false;
                break;
            };
            let result = replay_mask_geometry(&inst.mask, &lesion.pipeline).and_then(|mask| {
                let c = cfg.placement.constraints(mask.count(), &cfg.classes);
                let check = check_placement(&mask, lesion.offset, &scene, &c)?;
                Ok((mask, check))
            });
            let (mask, check) = match result {
                Ok(v) => v,
                Err(e) => {
                    push(ViolationKind::Unreplayable, format!("lesion {k}: {e}"));
                    replay_ok = false;
                    break;
                }
            };
            match check {
                PlacementCheck::Accept { overlap_lesions, .. } => *overlap_total += overlap_lesions,
                PlacementCheck::Reject { failed, overlap_reference, overlap_lesions } => {
                    *overlap_total += overlap_lesions;
                    let kind = match failed {
                        Constraint::Reference => ViolationKind::ReferenceOverlap,
                        Constraint::LesionOverlap => ViolationKind::LesionOverlap,
                    };
                    push(kind, format!("lesion {k}: reference overlap {overlap_reference}, lesion overlap {overlap_lesions}"));
                }
            }
            scene = merge_labels(&mask, cfg.classes.lesion_class, &scene, lesion.offset)?;
        }
        if !replay_ok {
            continue;
        }
        match load_label_map(out_root.join(&entry.mask), &cfg.classes.values) {
            Ok(written) if written == scene => {}
            Ok(written) if written.dims() != scene.dims() => push(
                ViolationKind::MaskMismatch,
                format!("mask is {:?}, expected {:?}", written.dims(), scene.dims()),
            ),
            Ok(written) => {
                let diff = written.labels().iter().zip(scene.labels()).filter(|(a, b)| a != b).count();
                push(ViolationKind::MaskMismatch, format!("{diff} pixels differ from merged labels"));
            }
            Err(e) => push(ViolationKind::Unreplayable, e.to_string()),
        }
    }
    Ok(report)
}
