//! Prediction, crop-frame and submission file formats.
//!
//! A prediction file is a JSON array of [`PredictionRecord`]s. `category` is a
//! global tooth id (1..=32) for tooth sources or a disease id for disease
//! sources. A record with `quadrant` set holds a box in the local raster of
//! that quadrant's crop and an in-quadrant label (1..=8, or 9 for a tooth of
//! another quadrant); it is mapped back through the image's crop frame.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::annotations::{DiseaseVocabulary, IndexBase, ToothId};
use crate::error::{Error, Result};
use crate::fusion::{DiseaseDetection, FusedFinding, SourceKind, ToothDictionary};
use crate::geometry::{restore_to_image, BBox, CropFrame};
use crate::rasterize::OTHER_QUADRANT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: u64,
    pub bbox: BBox,
    pub category: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrant: Option<i64>,
}

pub fn parse_predictions(text: &str) -> Result<Vec<PredictionRecord>> {
    serde_json::from_str(text).map_err(|e| {
        Error::parse(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })
}

/// Crop placement of every quadrant of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFrames {
    pub image_id: u64,
    pub source_size: [f64; 2],
    pub quadrants: Vec<QuadrantFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantFrame {
    pub quadrant: u8,
    pub crop_box: BBox,
    pub crop_size: [f64; 2],
}

/// Crop frames keyed by (image id, quadrant).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameIndex {
    frames: HashMap<(u64, u8), CropFrame>,
}

impl FrameIndex {
    pub fn parse(text: &str) -> Result<Self> {
        let images: Vec<ImageFrames> = serde_json::from_str(text).map_err(|e| {
            Error::parse(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        FrameIndex::from_images(&images)
    }

    pub fn from_images(images: &[ImageFrames]) -> Result<Self> {
        let mut frames = HashMap::new();
        for img in images {
            for q in &img.quadrants {
                if !(1..=4).contains(&q.quadrant) {
                    return Err(Error::Range(format!(
                        "image {}: crop frame quadrant {} outside 1..=4",
                        img.image_id, q.quadrant
                    )));
                }
                let frame = CropFrame::new(
                    q.crop_box,
                    (img.source_size[0], img.source_size[1]),
                    (q.crop_size[0], q.crop_size[1]),
                )?;
                if frames.insert((img.image_id, q.quadrant), frame).is_some() {
                    return Err(Error::Integrity(format!(
                        "image {}: quadrant {} has two crop frames",
                        img.image_id, q.quadrant
                    )));
                }
            }
        }
        Ok(FrameIndex { frames })
    }

    pub fn get(&self, image_id: u64, quadrant: u8) -> Option<&CropFrame> {
        self.frames.get(&(image_id, quadrant))
    }
}

/// How one tooth source's records are read.
#[derive(Debug, Clone)]
pub struct ToothSource {
    pub id: String,
    pub kind: SourceKind,
    pub weight: f64,
    /// Base of `category` (and `quadrant`) in the file.
    pub category_base: IndexBase,
}

/// Counts of records left out while building dictionaries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: usize,
    /// Records carrying another source's id.
    pub foreign_source: usize,
    /// Quadrant-local boxes labeled as belonging to another quadrant.
    pub other_quadrant: usize,
}

/// Builds one dictionary per image from a source's records. Records whose
/// `source_id` names a different source are ignored.
pub fn tooth_dictionaries(
    source: &ToothSource,
    records: &[PredictionRecord],
    frames: Option<&FrameIndex>,
) -> Result<(BTreeMap<u64, ToothDictionary>, IngestReport)> {
    let mut out: BTreeMap<u64, ToothDictionary> = BTreeMap::new();
    let mut report = IngestReport::default();
    for (i, r) in records.iter().enumerate() {
        report.records += 1;
        if r.source_id.as_deref().is_some_and(|s| s != source.id) {
            report.foreign_source += 1;
            continue;
        }
        let loc = || format!("source `{}` record {i} (image {})", source.id, r.image_id);
        let category = source.category_base.to_internal(r.category);
        let (global, bbox) = match r.quadrant {
            None => {
                let g = u8::try_from(category)
                    .ok()
                    .filter(|g| (1..=32).contains(g))
                    .ok_or_else(|| {
                        Error::Range(format!("{}: tooth id {} outside 1..=32", loc(), category))
                    })?;
                (g, r.bbox)
            }
            Some(q) => {
                if category == i64::from(OTHER_QUADRANT) {
                    report.other_quadrant += 1;
                    continue;
                }
                let q = source.category_base.to_internal(q);
                let tooth = u8::try_from(q)
                    .ok()
                    .zip(u8::try_from(category).ok())
                    .and_then(|(q, e)| ToothId::new(q, e).ok())
                    .ok_or_else(|| {
                        Error::Range(format!(
                            "{}: quadrant {q} / position {category} invalid",
                            loc()
                        ))
                    })?;
                let frame = frames
                    .and_then(|f| f.get(r.image_id, tooth.quadrant()))
                    .ok_or_else(|| {
                        Error::Integrity(format!(
                            "{}: no crop frame for quadrant {}",
                            loc(),
                            tooth.quadrant()
                        ))
                    })?;
                (tooth.to_global(), restore_to_image(&r.bbox, frame))
            }
        };
        let dict = match out.entry(r.image_id) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => e.insert(ToothDictionary::new(
                source.id.clone(),
                source.kind,
                source.weight,
            )?),
        };
        dict.insert(global, bbox, r.score)
            .map_err(|e| Error::Range(format!("{}: {e}", loc())))?;
    }
    Ok((out, report))
}

/// Reads disease detections; a missing score counts as 1.0.
pub fn disease_detections(
    records: &[PredictionRecord],
    vocab: &DiseaseVocabulary,
    category_base: IndexBase,
) -> Result<Vec<DiseaseDetection>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let id = category_base.to_internal(r.category);
            let disease = u32::try_from(id)
                .ok()
                .and_then(|id| vocab.by_id(id))
                .cloned()
                .ok_or_else(|| {
                    Error::Range(format!(
                        "disease record {i}: id {} not in the vocabulary",
                        r.category
                    ))
                })?;
            DiseaseDetection::new(r.image_id, disease, r.bbox, r.score.unwrap_or(1.0))
                .map_err(|e| Error::Range(format!("disease record {i}: {e}")))
        })
        .collect()
}

/// One submitted finding, COCO-results style with the three category fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub image_id: u64,
    pub bbox: BBox,
    pub score: f64,
    pub category_id_1: Option<u32>,
    pub category_id_2: Option<u32>,
    pub category_id_3: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fdi: Option<String>,
}

pub fn to_submission(findings: &[FusedFinding], base: IndexBase) -> Vec<SubmissionRecord> {
    findings
        .iter()
        .map(|f| SubmissionRecord {
            image_id: f.image_id,
            bbox: f.bbox,
            score: f.score,
            category_id_1: f.tooth.map(|t| base.to_external(t.quadrant().into())),
            category_id_2: f.tooth.map(|t| base.to_external(t.in_quadrant().into())),
            category_id_3: base.to_external(f.disease.id),
            fdi: f.tooth_fdi(base),
        })
        .collect()
}

pub fn parse_submission(
    text: &str,
    base: IndexBase,
    vocab: &DiseaseVocabulary,
) -> Result<Vec<FusedFinding>> {
    let records: Vec<SubmissionRecord> = serde_json::from_str(text).map_err(|e| {
        Error::parse(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    from_submission(&records, base, vocab)
}

pub fn from_submission(
    records: &[SubmissionRecord],
    base: IndexBase,
    vocab: &DiseaseVocabulary,
) -> Result<Vec<FusedFinding>> {
    let off = i64::from(base.offset());
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let err = |m: String| Error::Range(format!("submission record {i}: {m}"));
            let tooth = match (r.category_id_1, r.category_id_2) {
                (Some(q), Some(e)) => {
                    let (q, e) = (i64::from(q) + off, i64::from(e) + off);
                    let t = u8::try_from(q)
                        .ok()
                        .zip(u8::try_from(e).ok())
                        .and_then(|(q, e)| ToothId::new(q, e).ok())
                        .ok_or_else(|| err(format!("invalid tooth ({q}, {e})")))?;
                    Some(t)
                }
                (None, None) => None,
                _ => {
                    return Err(err(
                        "quadrant and enumeration must both be set or both be null".into(),
                    ))
                }
            };
            let disease = vocab
                .by_id(r.category_id_3 + base.offset())
                .cloned()
                .ok_or_else(|| {
                    err(format!(
                        "disease id {} not in the vocabulary",
                        r.category_id_3
                    ))
                })?;
            if !(0.0..=1.0).contains(&r.score) {
                return Err(err(format!("score {} outside [0, 1]", r.score)));
            }
            Ok(FusedFinding {
                image_id: r.image_id,
                disease,
                tooth,
                bbox: r.bbox,
                score: r.score,
            })
        })
        .collect()
}
