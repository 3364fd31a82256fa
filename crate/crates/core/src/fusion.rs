//! Label matching between disease detections and tooth detections.
//!
//! Every tooth source contributes a [`ToothDictionary`]. For one disease box,
//! each tooth id collects `weight * IoU` from every dictionary holding that
//! tooth, and the id with the largest tally wins. Near-equal tallies (within a
//! relative 1e-12) are ties, resolved by the larger summed score of the
//! overlapping entries and then by the lower global id.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::annotations::{DiseaseLabel, IndexBase, ToothId};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// Predicts tooth boxes directly.
    Detector,
    /// Boxes derived from a segmentation mask.
    Segmenter,
}

impl SourceKind {
    pub fn default_weight(self) -> f64 {
        match self {
            SourceKind::Detector => 2.0,
            SourceKind::Segmenter => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToothEntry {
    pub bbox: BBox,
    /// Absent for mask-derived boxes; counts as 1.0 where a score is needed.
    pub score: Option<f64>,
}

impl ToothEntry {
    pub fn effective_score(&self) -> f64 {
        self.score.unwrap_or(1.0)
    }
}

/// One tooth source's output for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ToothDictionary {
    pub source_id: String,
    pub kind: SourceKind,
    weight: f64,
    entries: BTreeMap<u8, ToothEntry>,
}

impl ToothDictionary {
    pub fn new(source_id: impl Into<String>, kind: SourceKind, weight: f64) -> Result<Self> {
        let source_id = source_id.into();
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Config(format!(
                "source `{source_id}` has weight {weight}; weights must be positive"
            )));
        }
        Ok(ToothDictionary {
            source_id,
            kind,
            weight,
            entries: BTreeMap::new(),
        })
    }

    /// Dictionary with the default weight for its kind.
    pub fn with_default_weight(source_id: impl Into<String>, kind: SourceKind) -> Self {
        ToothDictionary::new(source_id, kind, kind.default_weight())
            .expect("default weights are positive")
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn entries(&self) -> &BTreeMap<u8, ToothEntry> {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds a candidate box for a global tooth id. When the id is already
    /// present the higher score is kept, then the larger box.
    pub fn insert(&mut self, global: u8, bbox: BBox, score: Option<f64>) -> Result<()> {
        ToothId::from_global(global)?;
        if let Some(s) = score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Range(format!("tooth score {s} outside [0, 1]")));
            }
        }
        let cand = ToothEntry { bbox, score };
        match self.entries.get_mut(&global) {
            None => {
                self.entries.insert(global, cand);
            }
            Some(cur) => {
                let (cs, ns) = (cur.effective_score(), cand.effective_score());
                if ns > cs || (ns == cs && cand.bbox.area() > cur.bbox.area()) {
                    *cur = cand;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseaseDetection {
    pub image_id: u64,
    pub disease: DiseaseLabel,
    pub bbox: BBox,
    pub score: f64,
}

impl DiseaseDetection {
    pub fn new(image_id: u64, disease: DiseaseLabel, bbox: BBox, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Range(format!(
                "disease score {score} outside [0, 1]"
            )));
        }
        Ok(DiseaseDetection {
            image_id,
            disease,
            bbox,
            score,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub detection: DiseaseDetection,
    pub tooth: Option<ToothId>,
    /// Accumulated vote per global tooth id, for every id any dictionary holds.
    pub tally: BTreeMap<u8, f64>,
    pub matched: bool,
}

const TIE_RELATIVE: f64 = 1e-12;

fn tallies_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_RELATIVE * a.abs().max(b.abs())
}

/// Picks the tooth for one disease detection by weighted IoU voting.
pub fn vote_tooth(d: &DiseaseDetection, dicts: &[ToothDictionary]) -> Result<MatchResult> {
    if dicts.is_empty() {
        return Err(Error::Config(
            "label matching needs at least one tooth source".into(),
        ));
    }
    let mut tally: BTreeMap<u8, f64> = BTreeMap::new();
    let mut score_sum: BTreeMap<u8, f64> = BTreeMap::new();
    for dict in dicts {
        for (&g, entry) in &dict.entries {
            let overlap = iou(&d.bbox, &entry.bbox);
            *tally.entry(g).or_insert(0.0) += dict.weight * overlap;
            if overlap > 0.0 {
                *score_sum.entry(g).or_insert(0.0) += entry.effective_score();
            }
        }
    }

    let mut best: Option<(u8, f64, f64)> = None;
    // ascending id order makes "lower id" the default on full ties
    for (&g, &v) in &tally {
        if v <= 0.0 {
            continue;
        }
        let s = score_sum.get(&g).copied().unwrap_or(0.0);
        best = match best {
            None => Some((g, v, s)),
            Some((bg, bv, bs)) => {
                let better = if tallies_tie(v, bv) { s > bs } else { v > bv };
                if better {
                    Some((g, v, s))
                } else {
                    Some((bg, bv, bs))
                }
            }
        };
    }

    let tooth = best.map(|(g, _, _)| ToothId::from_global(g).expect("dictionary ids are valid"));
    Ok(MatchResult {
        detection: d.clone(),
        tooth,
        tally,
        matched: tooth.is_some(),
    })
}

/// One output record. `tooth` is `None` for detections no tooth box overlaps.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFinding {
    pub image_id: u64,
    pub disease: DiseaseLabel,
    pub tooth: Option<ToothId>,
    pub bbox: BBox,
    pub score: f64,
}

impl FusedFinding {
    pub fn tooth_fdi(&self, base: IndexBase) -> Option<String> {
        self.tooth.map(|t| t.to_fdi(base))
    }

    pub fn is_matched(&self) -> bool {
        self.tooth.is_some()
    }
}

/// Matches every disease detection of one image. Detection boxes and scores
/// pass through unchanged.
pub fn fuse_image(
    diseases: &[DiseaseDetection],
    dicts: &[ToothDictionary],
) -> Result<Vec<FusedFinding>> {
    let Some(first) = diseases.first() else {
        return Ok(Vec::new());
    };
    if let Some(other) = diseases.iter().find(|d| d.image_id != first.image_id) {
        return Err(Error::Integrity(format!(
            "fuse_image got detections from images {} and {}",
            first.image_id, other.image_id
        )));
    }
    diseases
        .iter()
        .map(|d| {
            let m = vote_tooth(d, dicts)?;
            Ok(FusedFinding {
                image_id: d.image_id,
                disease: d.disease.clone(),
                tooth: m.tooth,
                bbox: d.bbox,
                score: d.score,
            })
        })
        .collect()
}
