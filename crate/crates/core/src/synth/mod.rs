//! Deterministic synthetic cases with known ground truth.
//!
//! Teeth are axis-aligned rectangles on integer pixel coordinates, laid out
//! in two rows: the upper row holds quadrant 1 (third molar at the left edge
//! through the central incisor) followed by quadrant 2, the lower row holds
//! quadrant 4 followed by quadrant 3. Each row bends into a shallow arc.
//! Predictions are the ground truth perturbed by corner jitter, dropped
//! entries and false positives, all drawn from [`rng::Stream`] so the same
//! spec always yields the same case.

pub mod rng;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::annotations::{
    AnnotatedObject, AnnotationSet, DiseaseVocabulary, HierarchyLevel, ImageInfo, ToothId,
};
use crate::error::{Error, Result};
use crate::formats::{ImageFrames, PredictionRecord, QuadrantFrame};
use crate::fusion::SourceKind;
use crate::geometry::{BBox, CropFrame};
use crate::rasterize::{rasterize_objects, LabelMask, Labeling};
use rng::Stream;

/// Parameters of a synthetic case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub image_size: (u32, u32),
    /// Global tooth ids present in every image.
    pub teeth_present: Vec<u8>,
    /// Standard deviation, in pixels, of each box corner's displacement.
    pub jitter: f64,
    pub drop_rate: f64,
    pub false_positive_rate: f64,
    /// (global tooth id, disease name) pairs planted in every image.
    pub disease_plan: Vec<(u8, String)>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 42,
            image_size: (1024, 512),
            teeth_present: (1..=32).collect(),
            jitter: 0.0,
            drop_rate: 0.0,
            false_positive_rate: 0.0,
            disease_plan: Vec::new(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self, vocab: &DiseaseVocabulary) -> Result<()> {
        for (name, r) in [
            ("drop_rate", self.drop_rate),
            ("false_positive_rate", self.false_positive_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("{name} {r} outside [0, 1]")));
            }
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::Config(format!(
                "jitter {} must be finite and non-negative",
                self.jitter
            )));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        let mut seen = BTreeSet::new();
        for &g in &self.teeth_present {
            ToothId::from_global(g)?;
            if !seen.insert(g) {
                return Err(Error::Config(format!("tooth {g} listed twice")));
            }
        }
        let mut planned = BTreeSet::new();
        for (g, name) in &self.disease_plan {
            if !seen.contains(g) {
                return Err(Error::Config(format!(
                    "disease planned on absent tooth {g}"
                )));
            }
            let d = vocab
                .by_name(name)
                .ok_or_else(|| Error::Config(format!("unknown disease `{name}` in plan")))?;
            if !planned.insert((*g, d.id)) {
                return Err(Error::Config(format!(
                    "disease `{name}` planned twice on tooth {g}"
                )));
            }
        }
        Ok(())
    }
}

/// Predictions of one synthetic tooth source.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSource {
    pub id: String,
    pub kind: SourceKind,
    pub records: Vec<PredictionRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    /// Every present tooth, quadrant and enumeration labels.
    pub teeth: AnnotationSet,
    /// Diseased teeth with all three labels.
    pub diseases: AnnotationSet,
    /// Whole-image masks with global tooth labels, one per image in order.
    pub masks: Vec<LabelMask>,
    /// Crop placement of each quadrant, cropped at native resolution.
    pub frames: Vec<ImageFrames>,
    pub tooth_sources: Vec<SynthSource>,
    pub disease_predictions: Vec<PredictionRecord>,
}

impl SynthCase {
    /// Crop-local mask of one quadrant with in-quadrant labels and 9 for
    /// teeth of other quadrants.
    pub fn quadrant_mask(&self, image_id: u64, quadrant: u8) -> Option<LabelMask> {
        let img = self.frames.iter().find(|f| f.image_id == image_id)?;
        let q = img.quadrants.iter().find(|q| q.quadrant == quadrant)?;
        let frame = CropFrame::new(
            q.crop_box,
            (img.source_size[0], img.source_size[1]),
            (q.crop_size[0], q.crop_size[1]),
        )
        .ok()?;
        let local: Vec<AnnotatedObject> = self
            .teeth
            .objects_in(image_id)
            .map(|o| AnnotatedObject {
                polygon: o
                    .polygon
                    .iter()
                    .map(|ring| {
                        ring.iter()
                            .map(|&(x, y)| frame.point_to_local(x, y))
                            .collect()
                    })
                    .collect(),
                ..o.clone()
            })
            .collect();
        let (w, h) = (q.crop_size[0] as usize, q.crop_size[1] as usize);
        Some(
            rasterize_objects(
                &local,
                w,
                h,
                Labeling::Quadrant9 {
                    reference: quadrant,
                },
            )
            .mask,
        )
    }
}

struct Layout {
    boxes: Vec<(ToothId, BBox)>,
    slot: u32,
}

fn row_order(upper: bool) -> Vec<ToothId> {
    let (left, right) = if upper { (1, 2) } else { (4, 3) };
    let mut out: Vec<ToothId> = (1..=8)
        .rev()
        .map(|e| ToothId::new(left, e).unwrap())
        .collect();
    out.extend((1..=8).map(|e| ToothId::new(right, e).unwrap()));
    out
}

fn layout(spec: &SynthSpec) -> Result<Layout> {
    let (w, h) = spec.image_size;
    let present: BTreeSet<u8> = spec.teeth_present.iter().copied().collect();
    let margin = w / 20;
    let usable = w - 2 * margin;
    let mut boxes = Vec::new();
    let mut min_slot = u32::MAX;
    for upper in [true, false] {
        let row: Vec<ToothId> = row_order(upper)
            .into_iter()
            .filter(|t| present.contains(&t.to_global()))
            .collect();
        if row.is_empty() {
            continue;
        }
        let (top, bottom) = if upper {
            (h / 10, h * 45 / 100)
        } else {
            (h * 55 / 100, h * 9 / 10)
        };
        let band = bottom.saturating_sub(top);
        let n = row.len() as u32;
        let slot = usable / n;
        let gap = (slot / 8).max(1);
        let tw = slot.saturating_sub(gap);
        let th = band * 8 / 10;
        let lift = band * 15 / 100;
        if tw < 2 || th < 2 {
            return Err(Error::Capacity(format!(
                "{n} teeth in one row do not fit a {w}x{h} image without overlap"
            )));
        }
        min_slot = min_slot.min(slot);
        let center = (n - 1) as f64 / 2.0;
        for (i, tooth) in row.into_iter().enumerate() {
            let d = if center > 0.0 {
                (i as f64 - center).abs() / center
            } else {
                0.0
            };
            let offset = (f64::from(lift) * d * d).floor() as u32;
            let x = margin + i as u32 * slot + gap / 2;
            let y = if upper {
                top + lift - offset
            } else {
                top + offset
            };
            boxes.push((tooth, BBox::new(x.into(), y.into(), tw.into(), th.into())?));
        }
    }
    boxes.sort_by_key(|(t, _)| t.to_global());
    Ok(Layout {
        boxes,
        slot: if min_slot == u32::MAX { 0 } else { min_slot },
    })
}

fn rect(b: &BBox) -> Vec<(f64, f64)> {
    vec![(b.x, b.y), (b.x2(), b.y), (b.x2(), b.y2()), (b.x, b.y2())]
}

fn jittered(b: &BBox, sigma: f64, s: &mut Stream, size: (f64, f64)) -> BBox {
    // always four draws so the stream position does not depend on sigma
    let d: [f64; 4] = std::array::from_fn(|_| s.normal());
    if sigma == 0.0 {
        return *b;
    }
    BBox::from_corners(
        b.x + sigma * d[0],
        b.y + sigma * d[1],
        b.x2() + sigma * d[2],
        b.y2() + sigma * d[3],
    )
    .clamp_to(size.0, size.1)
}

fn random_box(like: &BBox, s: &mut Stream, size: (f64, f64)) -> BBox {
    let x = s.range(0.0, (size.0 - like.w).max(0.0)).floor();
    let y = s.range(0.0, (size.1 - like.h).max(0.0)).floor();
    BBox {
        x,
        y,
        w: like.w,
        h: like.h,
    }
    .clamp_to(size.0, size.1)
}

/// Single-image case.
pub fn generate_case(spec: &SynthSpec, vocab: &DiseaseVocabulary) -> Result<SynthCase> {
    generate_dataset(spec, vocab, 1)
}

/// `n_images` images with ids `1..=n_images`, each with independent noise.
pub fn generate_dataset(
    spec: &SynthSpec,
    vocab: &DiseaseVocabulary,
    n_images: usize,
) -> Result<SynthCase> {
    spec.validate(vocab)?;
    let lay = layout(spec)?;
    let (w, h) = spec.image_size;
    let size = (f64::from(w), f64::from(h));
    let root = Stream::new(spec.seed);

    let mut images = Vec::new();
    let mut teeth_objs = Vec::new();
    let mut disease_objs = Vec::new();
    let mut masks = Vec::new();
    let mut frames = Vec::new();
    let mut det = SynthSource {
        id: "synth-detector".into(),
        kind: SourceKind::Detector,
        records: Vec::new(),
    };
    let mut seg = SynthSource {
        id: "synth-segmenter".into(),
        kind: SourceKind::Segmenter,
        records: Vec::new(),
    };
    let mut disease_predictions = Vec::new();

    for i in 0..n_images {
        let image_id = i as u64 + 1;
        images.push(ImageInfo {
            id: image_id,
            file_name: format!("synth_{image_id:04}.png"),
            width: w,
            height: h,
        });

        let first_obj = teeth_objs.len();
        for (tooth, b) in &lay.boxes {
            teeth_objs.push(AnnotatedObject {
                id: teeth_objs.len() as u64 + 1,
                image_id,
                bbox: *b,
                polygon: vec![rect(b)],
                quadrant: Some(tooth.quadrant()),
                enumeration: Some(tooth.in_quadrant()),
                disease: None,
            });
        }
        masks.push(
            rasterize_objects(
                &teeth_objs[first_obj..],
                w as usize,
                h as usize,
                Labeling::Global32,
            )
            .mask,
        );

        let margin = f64::from((lay.slot / 2).max(1));
        let mut quadrants = Vec::new();
        for q in 1..=4u8 {
            let mut qb = lay
                .boxes
                .iter()
                .filter(|(t, _)| t.quadrant() == q)
                .map(|(_, b)| *b);
            let Some(first) = qb.next() else { continue };
            let (x0, y0, x1, y1) = qb.fold((first.x, first.y, first.x2(), first.y2()), |a, b| {
                (a.0.min(b.x), a.1.min(b.y), a.2.max(b.x2()), a.3.max(b.y2()))
            });
            let crop = BBox::from_corners(x0 - margin, y0 - margin, x1 + margin, y1 + margin)
                .clamp_to(size.0, size.1);
            quadrants.push(QuadrantFrame {
                quadrant: q,
                crop_box: crop,
                crop_size: [crop.w, crop.h],
            });
        }
        frames.push(ImageFrames {
            image_id,
            source_size: [size.0, size.1],
            quadrants,
        });

        let img_stream = root.split(image_id);
        for (src, tag, scored) in [(&mut det, 1u64, true), (&mut seg, 2, false)] {
            let mut s = img_stream.split(tag);
            for (tooth, b) in &lay.boxes {
                let dropped = s.chance(spec.drop_rate);
                let bbox = jittered(b, spec.jitter, &mut s, size);
                let score = s.range(0.5, 1.0);
                if !dropped {
                    src.records.push(PredictionRecord {
                        image_id,
                        bbox,
                        category: i64::from(tooth.to_global()),
                        score: scored.then_some(score),
                        source_id: Some(src.id.clone()),
                        quadrant: None,
                    });
                }
                let fp = s.chance(spec.false_positive_rate);
                let wrong = (u64::from(tooth.to_global()) + s.below(31)) % 32 + 1;
                let fp_box = random_box(b, &mut s, size);
                let fp_score = s.range(0.05, 0.45);
                if fp {
                    src.records.push(PredictionRecord {
                        image_id,
                        bbox: fp_box,
                        category: wrong as i64,
                        score: scored.then_some(fp_score),
                        source_id: Some(src.id.clone()),
                        quadrant: None,
                    });
                }
            }
        }

        let mut s = img_stream.split(3);
        for (g, name) in &spec.disease_plan {
            let tooth = ToothId::from_global(*g)?;
            let gt_box = lay
                .boxes
                .iter()
                .find(|(t, _)| *t == tooth)
                .map(|(_, b)| *b)
                .expect("validated");
            let disease = vocab.by_name(name).expect("validated").clone();
            disease_objs.push(AnnotatedObject {
                id: disease_objs.len() as u64 + 1,
                image_id,
                bbox: gt_box,
                polygon: vec![rect(&gt_box)],
                quadrant: Some(tooth.quadrant()),
                enumeration: Some(tooth.in_quadrant()),
                disease: Some(disease.clone()),
            });
            let bbox = jittered(&gt_box, spec.jitter, &mut s, size);
            let score = s.range(0.5, 1.0);
            disease_predictions.push(PredictionRecord {
                image_id,
                bbox,
                category: i64::from(disease.id),
                score: Some(score),
                source_id: None,
                quadrant: None,
            });

            let fp = s.chance(spec.false_positive_rate);
            let fp_disease = &vocab.labels()[s.below(vocab.labels().len() as u64) as usize];
            let (_, other) = lay.boxes[s.below(lay.boxes.len() as u64) as usize];
            let fp_box = jittered(&other, spec.jitter.max(1.0), &mut s, size);
            let fp_score = s.range(0.05, 0.45);
            if fp {
                disease_predictions.push(PredictionRecord {
                    image_id,
                    bbox: fp_box,
                    category: i64::from(fp_disease.id),
                    score: Some(fp_score),
                    source_id: None,
                    quadrant: None,
                });
            }
        }
    }

    let teeth = AnnotationSet {
        images: images.clone(),
        objects: teeth_objs,
        level: HierarchyLevel::Enumeration,
        diseases: vocab.clone(),
    };
    let diseases = AnnotationSet {
        images,
        objects: disease_objs,
        level: HierarchyLevel::Disease,
        diseases: vocab.clone(),
    };
    Ok(SynthCase {
        teeth,
        diseases,
        masks,
        frames,
        tooth_sources: vec![det, seg],
        disease_predictions,
    })
}
