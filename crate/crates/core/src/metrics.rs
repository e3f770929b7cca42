//! Segmentation overlap metrics.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::raster::{load_label_map, BinaryMask, ClassConfig, ClassId, LabelMap, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, o: &ConfusionCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegScores {
    pub dsc: f64,
    pub accuracy: f64,
    pub iou: f64,
}

pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts> {
    if pred.dims() != truth.dims() {
        return Err(Error::DimensionMismatch(format!("prediction {:?} vs truth {:?}", pred.dims(), truth.dims())));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// DSC, accuracy and IoU. When prediction and truth are both empty
/// (`tp = fp = fn = 0`) DSC and IoU are 1.
pub fn scores(c: &ConfusionCounts) -> SegScores {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let union = tp + fp + fn_;
    let (dsc, iou) = if union == 0.0 { (1.0, 1.0) } else { (2.0 * tp / (2.0 * tp + fp + fn_), tp / union) };
    let total = tp + fp + fn_ + tn;
    let accuracy = if total == 0.0 { 1.0 } else { (tp + tn) / total };
    SegScores { dsc, accuracy, iou }
}

/// One-vs-rest counts for each class in `classes`.
pub fn per_class_confusion(pred: &LabelMap, truth: &LabelMap, classes: &[ClassId]) -> Result<BTreeMap<ClassId, ConfusionCounts>> {
    classes
        .iter()
        .map(|&k| Ok((k, confusion(&pred.class_mask(k), &truth.class_mask(k))?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassRow {
    pub class: ClassId,
    /// Counts pooled over every image.
    pub counts: ConfusionCounts,
    pub pooled: SegScores,
    /// Mean of per-image DSC.
    pub mean_dsc: f64,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalTable {
    pub rows: Vec<ClassRow>,
    pub missing_predictions: Vec<String>,
}

impl EvalTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,images,tp,fp,fn,tn,dsc,iou,accuracy,mean_dsc\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                r.class, r.images, r.counts.tp, r.counts.fp, r.counts.fn_, r.counts.tn, r.pooled.dsc, r.pooled.iou,
                r.pooled.accuracy, r.mean_dsc
            ));
        }
        out
    }
}

/// Evaluates every `truth_dir/*.png` against the same-named file in
/// `pred_dir`, one-vs-rest for every non-background class in `classes`.
pub fn evaluate_dirs(pred_dir: &Path, truth_dir: &Path, classes: &ClassConfig) -> Result<EvalTable> {
    let mut names: Vec<_> = std::fs::read_dir(truth_dir)
        .map_err(|e| Error::io(truth_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .filter_map(|p| p.file_name().map(|n| n.to_owned()))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Dataset(format!("no masks in {}", truth_dir.display())));
    }
    let targets: Vec<ClassId> = classes.classes().into_iter().filter(|&k| k != 0).collect();
    let mut pooled: BTreeMap<ClassId, (ConfusionCounts, f64, usize)> = BTreeMap::new();
    let mut missing = Vec::new();
    for name in names {
        let pred_path = pred_dir.join(&name);
        if !pred_path.exists() {
            missing.push(name.to_string_lossy().into_owned());
            continue;
        }
        let truth = load_label_map(truth_dir.join(&name), classes)?;
        let pred = load_label_map(&pred_path, classes)?;
        for (k, c) in per_class_confusion(&pred, &truth, &targets)? {
            let slot = pooled.entry(k).or_default();
            slot.0.add(&c);
            slot.1 += scores(&c).dsc;
            slot.2 += 1;
        }
    }
    let rows = pooled
        .into_iter()
        .map(|(class, (counts, dsc_sum, images))| ClassRow {
            class,
            counts,
            pooled: scores(&counts),
            mean_dsc: if images == 0 { 0.0 } else { dsc_sum / images as f64 },
            images,
        })
        .collect();
    Ok(EvalTable { rows, missing_predictions: missing })
}
