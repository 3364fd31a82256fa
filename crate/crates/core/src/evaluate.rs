//! COCO-style detection metrics for the three label types.
//!
//! Conventions follow the usual COCO box evaluation without crowd regions or
//! area ranges: per image and class, predictions are ranked by score
//! (stable), cut to `max_detections`, and greedily matched to the unmatched
//! ground truth of highest IoU at or above the threshold. Precision is made
//! monotone from the right and sampled at `recall_points` evenly spaced recall
//! levels. Classes without ground truth are left out of every average.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::annotations::{AnnotatedObject, AnnotationSet};
use crate::error::{Error, Result};
use crate::fusion::FusedFinding;
use crate::geometry::{iou, BBox};

/// Which category field is the class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelType {
    Quadrant,
    Enumeration,
    Disease,
}

impl LabelType {
    pub const ALL: [LabelType; 3] = [
        LabelType::Quadrant,
        LabelType::Enumeration,
        LabelType::Disease,
    ];

    pub fn gt_class(self, o: &AnnotatedObject) -> Option<u32> {
        match self {
            LabelType::Quadrant => o.quadrant.map(u32::from),
            LabelType::Enumeration => o.tooth().map(|t| u32::from(t.to_global())),
            LabelType::Disease => o.disease.as_ref().map(|d| d.id),
        }
    }

    pub fn finding_class(self, f: &FusedFinding) -> Option<u32> {
        match self {
            LabelType::Quadrant => f.tooth.map(|t| u32::from(t.quadrant())),
            LabelType::Enumeration => f.tooth.map(|t| u32::from(t.to_global())),
            LabelType::Disease => Some(f.disease.id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub recall_points: usize,
    pub max_detections: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            recall_points: 101,
            max_detections: 100,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::Config(
                "at least one IoU threshold is required".into(),
            ));
        }
        if self.iou_thresholds.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::Config("IoU thresholds must lie in (0, 1]".into()));
        }
        if self.iou_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "IoU thresholds must be strictly increasing".into(),
            ));
        }
        if self.recall_points < 2 {
            return Err(Error::Config("recall_points must be at least 2".into()));
        }
        if self.max_detections == 0 {
            return Err(Error::Config("max_detections must be positive".into()));
        }
        Ok(())
    }
}

/// A ground-truth box with its class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub bbox: BBox,
    pub class: u32,
}

/// A predicted box with class and confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub class: u32,
    pub score: f64,
}

/// Outcome for one prediction, listed in ranking order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredMatch {
    /// Index into the prediction slice.
    pub pred: usize,
    /// Index of the matched ground truth, if any.
    pub gt: Option<usize>,
}

/// Greedy matching within one image. Predictions are ranked by descending
/// score with ties kept in input order; each one takes the unmatched
/// same-class ground truth of highest IoU at or above `iou_thr` (earliest on
/// equal IoU).
pub fn match_detections(gts: &[LabeledBox], preds: &[ScoredBox], iou_thr: f64) -> Vec<PredMatch> {
    let mut taken = vec![false; gts.len()];
    rank_by_score(preds)
        .into_iter()
        .map(|p| {
            let pb = &preds[p];
            let mut best: Option<(usize, f64)> = None;
            for (g, gb) in gts.iter().enumerate() {
                if taken[g] || gb.class != pb.class {
                    continue;
                }
                let v = iou(&pb.bbox, &gb.bbox);
                if v >= iou_thr && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            PredMatch {
                pred: p,
                gt: best.map(|(g, _)| g),
            }
        })
        .collect()
}

fn rank_by_score(preds: &[ScoredBox]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..preds.len()).collect();
    idx.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    idx
}

/// Interpolated AP from dataset-wide ranked outcomes `(score, is_true_positive)`.
///
/// `ranked` must already be in ranking order. Returns `None` when there is no
/// ground truth.
pub fn average_precision(ranked: &[(f64, bool)], n_gt: usize, recall_points: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let (recall, mut precision) = pr_curve(ranked, n_gt);
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let n = recall_points - 1;
    let sum: f64 = (0..=n)
        .map(|i| {
            let r = i as f64 / n as f64;
            let k = recall.partition_point(|&rc| rc < r);
            precision.get(k).copied().unwrap_or(0.0)
        })
        .sum();
    Some(sum / recall_points as f64)
}

fn pr_curve(ranked: &[(f64, bool)], n_gt: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut tp, mut fp) = (0usize, 0usize);
    ranked
        .iter()
        .map(|&(_, hit)| {
            if hit {
                tp += 1;
            } else {
                fp += 1;
            }
            (tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64)
        })
        .unzip()
}

/// Metrics of one class; `None` where the class has no ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: u32,
    pub name: String,
    pub gt_count: usize,
    pub pred_count: usize,
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub label_type: LabelType,
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar: f64,
    /// Classes with at least one ground truth, i.e. those averaged.
    pub classes_evaluated: usize,
    pub gt_count: usize,
    pub pred_count: usize,
    /// True positives at IoU 0.5.
    pub matched_at_50: usize,
    pub per_class: Vec<ClassReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub labels: Vec<LabelReport>,
}

impl EvalReport {
    pub fn get(&self, t: LabelType) -> Option<&LabelReport> {
        self.labels.iter().find(|l| l.label_type == t)
    }
}

/// Per-class, per-image boxes gathered for one label type.
struct Dataset {
    /// class -> image -> boxes
    gts: BTreeMap<u32, BTreeMap<u64, Vec<LabeledBox>>>,
    preds: BTreeMap<u32, BTreeMap<u64, Vec<ScoredBox>>>,
}

impl Dataset {
    fn collect(gt: &AnnotationSet, findings: &[FusedFinding], label: LabelType) -> Self {
        let mut gts: BTreeMap<u32, BTreeMap<u64, Vec<LabeledBox>>> = BTreeMap::new();
        for o in &gt.objects {
            if let Some(class) = label.gt_class(o) {
                gts.entry(class)
                    .or_default()
                    .entry(o.image_id)
                    .or_default()
                    .push(LabeledBox {
                        bbox: o.bbox,
                        class,
                    });
            }
        }
        let mut preds: BTreeMap<u32, BTreeMap<u64, Vec<ScoredBox>>> = BTreeMap::new();
        for f in findings {
            if let Some(class) = label.finding_class(f) {
                preds
                    .entry(class)
                    .or_default()
                    .entry(f.image_id)
                    .or_default()
                    .push(ScoredBox {
                        bbox: f.bbox,
                        class,
                        score: f.score,
                    });
            }
        }
        Dataset { gts, preds }
    }
}

struct ClassAtThreshold {
    ap: Option<f64>,
    recall: Option<f64>,
    tp: usize,
}

fn eval_class(
    gts: Option<&BTreeMap<u64, Vec<LabeledBox>>>,
    preds: Option<&BTreeMap<u64, Vec<ScoredBox>>>,
    thr: f64,
    cfg: &EvalConfig,
) -> ClassAtThreshold {
    let empty_g = BTreeMap::new();
    let empty_p = BTreeMap::new();
    let gts = gts.unwrap_or(&empty_g);
    let preds = preds.unwrap_or(&empty_p);
    let n_gt: usize = gts.values().map(Vec::len).sum();

    let images: BTreeSet<u64> = gts.keys().chain(preds.keys()).copied().collect();
    let mut ranked: Vec<(f64, bool)> = Vec::new();
    for img in images {
        let g = gts.get(&img).map(Vec::as_slice).unwrap_or(&[]);
        let p = preds.get(&img).map(Vec::as_slice).unwrap_or(&[]);
        let top: Vec<ScoredBox> = rank_by_score(p)
            .into_iter()
            .take(cfg.max_detections)
            .map(|i| p[i])
            .collect();
        for m in match_detections(g, &top, thr) {
            ranked.push((top[m.pred].score, m.gt.is_some()));
        }
    }
    // stable: equal scores keep image order, then per-image rank
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let tp = ranked.iter().filter(|r| r.1).count();
    ClassAtThreshold {
        ap: average_precision(&ranked, n_gt, cfg.recall_points),
        recall: (n_gt > 0).then(|| tp as f64 / n_gt as f64),
        tp,
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn class_name(gt: &AnnotationSet, label: LabelType, class: u32) -> String {
    match label {
        LabelType::Quadrant => format!("Q{class}"),
        LabelType::Enumeration => crate::annotations::ToothId::from_global(class as u8)
            .map(|t| t.to_string())
            .unwrap_or_else(|_| class.to_string()),
        LabelType::Disease => gt
            .diseases
            .by_id(class)
            .map(|d| d.name.clone())
            .unwrap_or_else(|| class.to_string()),
    }
}

/// Scores one label type.
pub fn evaluate_label(
    gt: &AnnotationSet,
    findings: &[FusedFinding],
    label: LabelType,
    cfg: &EvalConfig,
) -> Result<LabelReport> {
    cfg.validate()?;
    let known: BTreeSet<u64> = gt.images.iter().map(|i| i.id).collect();
    let unknown: BTreeSet<u64> = findings
        .iter()
        .map(|f| f.image_id)
        .filter(|id| !known.contains(id))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Integrity(format!(
            "findings reference images missing from the ground truth: {unknown:?}"
        )));
    }

    let data = Dataset::collect(gt, findings, label);
    let classes: BTreeSet<u32> = data.gts.keys().chain(data.preds.keys()).copied().collect();

    let mut per_class = Vec::new();
    let mut matched_at_50 = 0;
    for &class in &classes {
        let g = data.gts.get(&class);
        let p = data.preds.get(&class);
        let at = |thr: f64| eval_class(g, p, thr, cfg);
        let sweep: Vec<ClassAtThreshold> = cfg.iou_thresholds.iter().map(|&t| at(t)).collect();
        let at50 = at(0.5);
        matched_at_50 += at50.tp;
        let has_gt = g.is_some();
        per_class.push(ClassReport {
            class,
            name: class_name(gt, label, class),
            gt_count: g.map_or(0, |m| m.values().map(Vec::len).sum()),
            pred_count: p.map_or(0, |m| m.values().map(Vec::len).sum()),
            ap: has_gt
                .then(|| mean(sweep.iter().filter_map(|s| s.ap)))
                .flatten(),
            ap50: at50.ap,
            ap75: at(0.75).ap,
            ar: has_gt
                .then(|| mean(sweep.iter().filter_map(|s| s.recall)))
                .flatten(),
        });
    }

    let defined: Vec<&ClassReport> = per_class.iter().filter(|c| c.gt_count > 0).collect();
    let macro_avg = |f: fn(&ClassReport) -> Option<f64>| {
        mean(defined.iter().filter_map(|c| f(c))).unwrap_or(0.0)
    };
    Ok(LabelReport {
        label_type: label,
        ap: macro_avg(|c| c.ap),
        ap50: macro_avg(|c| c.ap50),
        ap75: macro_avg(|c| c.ap75),
        ar: macro_avg(|c| c.ar),
        classes_evaluated: defined.len(),
        gt_count: per_class.iter().map(|c| c.gt_count).sum(),
        pred_count: per_class.iter().map(|c| c.pred_count).sum(),
        matched_at_50,
        per_class,
    })
}

/// Scores every requested label type.
pub fn evaluate(
    gt: &AnnotationSet,
    findings: &[FusedFinding],
    labels: &[LabelType],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let labels = labels
        .iter()
        .map(|&l| evaluate_label(gt, findings, l, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        config: cfg.clone(),
        labels,
    })
}
