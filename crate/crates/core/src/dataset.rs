//! Dataset scanning and lesion-bank construction.
//!
//! A dataset root holds `images/*.png` and `masks/*.png`. Files pair by
//! stem; a trailing `_mask` on a mask stem is ignored, so BUSI-style
//! `case_mask.png` pairs with `case.png`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::ClassesConfig;
use crate::error::{Error, Result};
use crate::morphology::connected_components;
use crate::raster::{
    load_image, load_label_map, BinaryMask, ImagePlane, Interpolation, LabelMap, Raster, Rect,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRecord {
    pub stem: String,
    pub image: PathBuf,
    pub mask: PathBuf,
}

impl DatasetRecord {
    /// Loads the pair, optionally resized to `size` (bilinear image, nearest
    /// labels).
    pub fn load(&self, classes: &ClassesConfig, size: Option<(usize, usize)>) -> Result<(ImagePlane, LabelMap)> {
        let img = load_image(&self.image)?;
        let labels = load_label_map(&self.mask, &classes.values)?;
        if img.dims() != labels.dims() {
            return Err(Error::Dataset(format!(
                "{}: image is {:?} but mask is {:?}",
                self.stem,
                img.dims(),
                labels.dims()
            )));
        }
        match size {
            Some((h, w)) if (h, w) != img.dims() => Ok((
                img.resample(h, w, Interpolation::Bilinear)?,
                labels.resample(h, w, Interpolation::Nearest)?,
            )),
            _ => Ok((img, labels)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub root: PathBuf,
    /// Sorted by stem.
    pub records: Vec<DatasetRecord>,
    pub classes: ClassesConfig,
    /// Files without a partner.
    pub warnings: Vec<String>,
}

impl DatasetIndex {
    pub fn record(&self, stem: &str) -> Option<&DatasetRecord> {
        self.records
            .binary_search_by(|r| r.stem.as_str().cmp(stem))
            .ok()
            .map(|i| &self.records[i])
    }
}

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png || !path.is_file() {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

/// Pairs `root/images` with `root/masks` by stem and checks that every pair
/// has matching dimensions.
pub fn scan_dataset(root: impl AsRef<Path>, classes: &ClassesConfig) -> Result<DatasetIndex> {
    let root = root.as_ref();
    let images = png_stems(&root.join("images"))?;
    let masks: BTreeMap<String, PathBuf> = png_stems(&root.join("masks"))?
        .into_iter()
        .map(|(stem, p)| (stem.strip_suffix("_mask").map(str::to_string).unwrap_or(stem), p))
        .collect();

    let mut warnings = Vec::new();
    let mut records = Vec::new();
    for (stem, image) in &images {
        match masks.get(stem) {
            Some(mask) => records.push(DatasetRecord { stem: stem.clone(), image: image.clone(), mask: mask.clone() }),
            None => warnings.push(format!("image {} has no mask", image.display())),
        }
    }
    for (stem, mask) in &masks {
        if !images.contains_key(stem) {
            warnings.push(format!("mask {} has no image", mask.display()));
        }
    }
    if records.is_empty() {
        return Err(Error::Dataset(format!("no pairs found under {}", root.display())));
    }
    records.par_iter().try_for_each(|rec| {
        let dim = |p: &Path| {
            image::image_dimensions(p).map_err(|e| Error::Decode { path: p.to_path_buf(), reason: e.to_string() })
        };
        let (a, b) = (dim(&rec.image)?, dim(&rec.mask)?);
        if a != b {
            return Err(Error::Dataset(format!(
                "{}: image is {}x{} but mask is {}x{}",
                rec.stem, a.1, a.0, b.1, b.0
            )));
        }
        Ok(())
    })?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(DatasetIndex { root: root.to_path_buf(), records, classes: classes.clone(), warnings })
}

/// One lesion extracted from a source image.
#[derive(Debug, Clone, PartialEq)]
pub struct LesionInstance {
    /// Source image under `window`.
    pub patch: ImagePlane,
    /// This lesion's pixels under `window`; other lesions are excluded.
    pub mask: BinaryMask,
    pub source_stem: String,
    /// Position of the component in raster order within its source.
    pub component: usize,
    pub area: usize,
    /// Tight lesion bounding box in source coordinates.
    pub bbox: Rect,
    /// Patch window: `bbox` grown by the margin, clipped to the source.
    pub window: Rect,
}

/// Extracts one instance per lesion component of each record. Sources are
/// resized to `size` first when given.
pub fn build_lesion_bank(
    idx: &DatasetIndex,
    min_area: usize,
    margin: usize,
    size: Option<(usize, usize)>,
) -> Result<Vec<LesionInstance>> {
    if min_area == 0 {
        return Err(Error::InvalidParameter("min_area must be at least 1".into()));
    }
    let per_record: Vec<Vec<LesionInstance>> = idx
        .records
        .par_iter()
        .map(|rec| {
            let (img, labels) = rec.load(&idx.classes, size)?;
            lesions_in(&img, &labels, idx.classes.lesion_class, &rec.stem, min_area, margin)
        })
        .collect::<Result<_>>()?;
    Ok(per_record.into_iter().flatten().collect())
}

pub(crate) fn lesions_in(
    img: &ImagePlane,
    labels: &LabelMap,
    lesion_class: u8,
    stem: &str,
    min_area: usize,
    margin: usize,
) -> Result<Vec<LesionInstance>> {
    let (h, w) = labels.dims();
    let set = connected_components(&labels.class_mask(lesion_class), min_area);
    set.components
        .iter()
        .enumerate()
        .map(|(k, comp)| {
            let window = comp.bbox.expand_clipped(margin, h, w);
            let patch = img.extract(window)?;
            let mask = BinaryMask::from_fn(window.height, window.width, |r, c| {
                let (sr, sc) = (window.row + r, window.col + c);
                sr >= comp.bbox.row
                    && sc >= comp.bbox.col
                    && sr < comp.bbox.bottom()
                    && sc < comp.bbox.right()
                    && comp.support.get(sr - comp.bbox.row, sc - comp.bbox.col)
            });
            Ok(LesionInstance {
                patch,
                mask,
                source_stem: stem.to_string(),
                component: k,
                area: comp.area,
                bbox: comp.bbox,
                window,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{save_image, save_label_map, BitDepth, ClassConfig};

    fn write_pair(root: &Path, stem: &str, mask_stem: &str, labels: &LabelMap) {
        let img = ImagePlane::from_fn(labels.height(), labels.width(), 1, |r, c, _| ((r + c) % 9) as f64 / 9.0);
        save_image(root.join("images").join(format!("{stem}.png")), &img, BitDepth::Eight).unwrap();
        save_label_map(root.join("masks").join(format!("{mask_stem}.png")), labels, &ClassConfig::binary()).unwrap();
    }

    fn layout() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        std::fs::create_dir_all(dir.path().join("masks")).unwrap();
        dir
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let dir = layout();
        let err = scan_dataset(dir.path(), &ClassesConfig::default()).unwrap_err();
        assert!(err.to_string().contains("no pairs found"));
    }

    #[test]
    fn pairs_by_stem_and_warns_on_orphans() {
        let dir = layout();
        let labels = LabelMap::background(8, 8);
        write_pair(dir.path(), "a", "a", &labels);
        write_pair(dir.path(), "b", "b_mask", &labels);
        write_pair(dir.path(), "c", "c", &labels);
        let img = ImagePlane::filled(8, 8, 1, 0.0);
        save_image(dir.path().join("images/orphan.png"), &img, BitDepth::Eight).unwrap();
        let idx = scan_dataset(dir.path(), &ClassesConfig::default()).unwrap();
        let stems: Vec<_> = idx.records.iter().map(|r| r.stem.as_str()).collect();
        assert_eq!(stems, ["a", "b", "c"]);
        assert_eq!(idx.warnings.len(), 1);
        assert!(idx.record("b").is_some());
    }

    #[test]
    fn dimension_mismatch_names_the_stem() {
        let dir = layout();
        save_image(dir.path().join("images/odd.png"), &ImagePlane::filled(256, 256, 1, 0.0), BitDepth::Eight).unwrap();
        save_label_map(dir.path().join("masks/odd.png"), &LabelMap::background(128, 128), &ClassConfig::binary()).unwrap();
        let err = scan_dataset(dir.path(), &ClassesConfig::default()).unwrap_err();
        assert!(err.to_string().contains("odd"));
    }

    #[test]
    fn bank_extracts_components() {
        let dir = layout();
        write_pair(dir.path(), "empty", "empty", &LabelMap::background(16, 16));
        let two = LabelMap::from_fn(16, 16, |r, c| u8::from(((1..5).contains(&r) && (1..5).contains(&c)) || ((9..14).contains(&r) && (8..15).contains(&c))));
        write_pair(dir.path(), "two", "two", &two);
        let tiny = LabelMap::from_fn(16, 16, |r, c| u8::from(r == 3 && c < 3));
        write_pair(dir.path(), "tiny", "tiny", &tiny);

        let idx = scan_dataset(dir.path(), &ClassesConfig::default()).unwrap();
        let bank = build_lesion_bank(&idx, 10, 2, None).unwrap();
        assert_eq!(bank.len(), 2);
        assert!(bank.iter().all(|l| l.source_stem == "two"));
        assert_eq!(bank[0].bbox, Rect::new(1, 1, 4, 4));
        assert_eq!(bank[1].bbox, Rect::new(9, 8, 5, 7));
        assert_eq!(bank[0].window, Rect::new(0, 0, 7, 7));
        assert_eq!(bank[1].window, Rect::new(7, 6, 9, 10));
        assert_eq!(bank[0].mask.count(), 16);
        assert_eq!(bank[1].area, 35);
        assert_eq!(bank[0].patch.dims(), bank[0].mask.dims());
    }
}
