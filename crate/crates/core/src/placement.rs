//! Anatomical placement constraints and rejection-sampled paste offsets.
//!
//! A candidate offset is accepted when the lesion overlaps the reference
//! structure by strictly more than `s1` pixels and overlaps lesions already
//! in the scene by strictly fewer than `s2` pixels. With `s2 = 1` no overlap
//! with existing lesions is allowed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blend::PasteOffset;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ClassId, LabelMap, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementConstraints {
    /// Reference overlap must exceed this many pixels.
    pub s1: u64,
    /// Overlap with existing lesions must stay below this many pixels.
    pub s2: u64,
    /// `None` treats the whole frame as reference.
    pub reference_class: Option<ClassId>,
    pub lesion_class: ClassId,
    pub max_attempts: usize,
}

impl PlacementConstraints {
    pub fn validate(&self) -> Result<()> {
        if self.max_attempts == 0 {
            return Err(Error::InvalidParameter("max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub offset: PasteOffset,
    pub attempts_used: usize,
    pub overlap_reference: u64,
    pub overlap_lesions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Lesion must intersect the reference structure.
    Reference,
    /// Lesion must not overlap existing lesions.
    LesionOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PlacementCheck {
    Accept { overlap_reference: u64, overlap_lesions: u64 },
    Reject { failed: Constraint, overlap_reference: u64, overlap_lesions: u64 },
}

impl PlacementCheck {
    pub fn is_accept(&self) -> bool {
        matches!(self, PlacementCheck::Accept { .. })
    }
}

/// Rejection counts from a placement search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RejectionTally {
    pub reference: usize,
    pub lesion_overlap: usize,
}

impl RejectionTally {
    pub fn total(&self) -> usize {
        self.reference + self.lesion_overlap
    }

    pub fn add(&mut self, other: &RejectionTally) {
        self.reference += other.reference;
        self.lesion_overlap += other.lesion_overlap;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    Found { result: PlacementResult, rejections: RejectionTally },
    Exhausted(RejectionTally),
}

/// Pixels set in both `a` (translated by `at`) and `b`.
pub fn overlap_count(a: &BinaryMask, b: &BinaryMask, at: PasteOffset) -> Result<u64> {
    let win = at.window(a.height(), a.width(), b.height(), b.width())?;
    let mut n = 0u64;
    for r in 0..win.height {
        for c in 0..win.width {
            if a.get(r, c) && b.get(win.row + r, win.col + c) {
                n += 1;
            }
        }
    }
    Ok(n)
}

fn overlap_with_class(lesion: &BinaryMask, at: PasteOffset, scene: &LabelMap, class: Option<ClassId>) -> Result<u64> {
    let win = at.window(lesion.height(), lesion.width(), scene.height(), scene.width())?;
    let mut n = 0u64;
    for r in 0..win.height {
        for c in 0..win.width {
            if lesion.get(r, c) && class.is_none_or(|k| scene.get(win.row + r, win.col + c) == k) {
                n += 1;
            }
        }
    }
    Ok(n)
}

/// Evaluates both constraints for the lesion placed at `at`.
pub fn check_placement(lesion: &BinaryMask, at: PasteOffset, scene: &LabelMap, c: &PlacementConstraints) -> Result<PlacementCheck> {
    let overlap_reference = overlap_with_class(lesion, at, scene, c.reference_class)?;
    let overlap_lesions = overlap_with_class(lesion, at, scene, Some(c.lesion_class))?;
    Ok(if overlap_reference <= c.s1 {
        PlacementCheck::Reject { failed: Constraint::Reference, overlap_reference, overlap_lesions }
    } else if overlap_lesions >= c.s2 {
        PlacementCheck::Reject { failed: Constraint::LesionOverlap, overlap_reference, overlap_lesions }
    } else {
        PlacementCheck::Accept { overlap_reference, overlap_lesions }
    })
}

/// Draws offsets uniformly over every position where the lesion frame fits
/// and returns the first accepted one.
pub fn find_placement<R: Rng + ?Sized>(
    lesion: &BinaryMask,
    scene: &LabelMap,
    c: &PlacementConstraints,
    rng: &mut R,
) -> Result<Placement> {
    c.validate()?;
    if lesion.is_blank() {
        return Err(Error::InvalidParameter("cannot place an empty lesion".into()));
    }
    let (lh, lw) = lesion.dims();
    let (sh, sw) = scene.dims();
    if lh > sh || lw > sw {
        return Err(Error::OutOfBounds(format!(
            "{lh}x{lw} lesion patch cannot fit in a {sh}x{sw} scene"
        )));
    }
    let mut tally = RejectionTally::default();
    for attempt in 1..=c.max_attempts {
        let at = PasteOffset::new(rng.random_range(0..=sh - lh) as i64, rng.random_range(0..=sw - lw) as i64);
        match check_placement(lesion, at, scene, c)? {
            PlacementCheck::Accept { overlap_reference, overlap_lesions } => {
                let result = PlacementResult { offset: at, attempts_used: attempt, overlap_reference, overlap_lesions };
                return Ok(Placement::Found { result, rejections: tally });
            }
            PlacementCheck::Reject { failed: Constraint::Reference, .. } => tally.reference += 1,
            PlacementCheck::Reject { failed: Constraint::LesionOverlap, .. } => tally.lesion_overlap += 1,
        }
    }
    Ok(Placement::Exhausted(tally))
}
