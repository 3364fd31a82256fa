//! Output-side cleanup of fused findings: score threshold, unmatched policy,
//! duplicate suppression and prior-knowledge rules, applied in that order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::annotations::{DiseaseLabel, DiseaseVocabulary, ToothId, IMPACTED};
use crate::error::{Error, Result};
use crate::fusion::FusedFinding;

/// Keeps findings scoring strictly above `min_score`, in order.
pub fn threshold(findings: &[FusedFinding], min_score: f64) -> Vec<FusedFinding> {
    debug_assert!((0.0..=1.0).contains(&min_score));
    findings
        .iter()
        .filter(|f| f.score > min_score)
        .cloned()
        .collect()
}

/// Keeps the best finding of every (image, tooth, disease) group: highest
/// score, then larger box, then earliest. Survivors keep their input order.
pub fn dedupe(findings: &[FusedFinding]) -> Vec<FusedFinding> {
    let mut winner: HashMap<(u64, Option<ToothId>, u32), usize> = HashMap::new();
    for (i, f) in findings.iter().enumerate() {
        let key = (f.image_id, f.tooth, f.disease.id);
        match winner.get(&key) {
            None => {
                winner.insert(key, i);
            }
            Some(&j) => {
                let cur = &findings[j];
                if f.score > cur.score || (f.score == cur.score && f.bbox.area() > cur.bbox.area())
                {
                    winner.insert(key, i);
                }
            }
        }
    }
    let mut keep = vec![false; findings.len()];
    for &i in winner.values() {
        keep[i] = true;
    }
    findings
        .iter()
        .zip(keep)
        .filter(|&(_, k)| k)
        .map(|(f, _)| f.clone())
        .collect()
}

/// Declarative prior: findings of `disease` must sit on a tooth satisfying
/// every listed constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorRule {
    pub disease: String,
    /// Allowed in-quadrant positions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_quadrant: Option<Vec<u8>>,
    /// Allowed quadrants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrant: Option<Vec<u8>>,
}

impl PriorRule {
    /// Impacted teeth are third molars.
    pub fn impacted_third_molar() -> Self {
        PriorRule {
            disease: IMPACTED.to_string(),
            in_quadrant: Some(vec![8]),
            quadrant: None,
        }
    }

    /// Binds the rule to a vocabulary entry and checks its constraints.
    pub fn resolve(&self, vocab: &DiseaseVocabulary) -> Result<ResolvedPrior> {
        let disease = vocab.by_name(&self.disease).cloned().ok_or_else(|| {
            Error::Config(format!(
                "prior rule names unknown disease `{}`",
                self.disease
            ))
        })?;
        if self.in_quadrant.is_none() && self.quadrant.is_none() {
            return Err(Error::Config(format!(
                "prior rule for `{}` has no constraint",
                self.disease
            )));
        }
        if let Some(bad) = self
            .in_quadrant
            .iter()
            .flatten()
            .find(|p| !(1..=8).contains(*p))
        {
            return Err(Error::Config(format!(
                "prior rule in-quadrant position {bad} outside 1..=8"
            )));
        }
        if let Some(bad) = self
            .quadrant
            .iter()
            .flatten()
            .find(|q| !(1..=4).contains(*q))
        {
            return Err(Error::Config(format!(
                "prior rule quadrant {bad} outside 1..=4"
            )));
        }
        Ok(ResolvedPrior {
            disease,
            in_quadrant: self.in_quadrant.clone(),
            quadrant: self.quadrant.clone(),
        })
    }
}

/// A [`PriorRule`] checked against the vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedPrior {
    pub disease: DiseaseLabel,
    in_quadrant: Option<Vec<u8>>,
    quadrant: Option<Vec<u8>>,
}

impl ResolvedPrior {
    pub fn allows(&self, tooth: ToothId) -> bool {
        self.in_quadrant
            .as_ref()
            .is_none_or(|s| s.contains(&tooth.in_quadrant()))
            && self
                .quadrant
                .as_ref()
                .is_none_or(|s| s.contains(&tooth.quadrant()))
    }

    /// True when this rule removes the finding.
    pub fn rejects(&self, f: &FusedFinding) -> bool {
        f.disease.id == self.disease.id && f.tooth.is_some_and(|t| !self.allows(t))
    }
}

/// Drops findings that violate any rule. Unmatched findings are not judged.
pub fn apply_priors(findings: &[FusedFinding], rules: &[ResolvedPrior]) -> Vec<FusedFinding> {
    findings
        .iter()
        .filter(|f| !rules.iter().any(|r| r.rejects(f)))
        .cloned()
        .collect()
}

/// What happens to findings no tooth box overlapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmatchedPolicy {
    #[default]
    Drop,
    Keep,
}

#[derive(Debug, Clone)]
pub struct PostprocessConfig {
    pub min_score: f64,
    pub unmatched: UnmatchedPolicy,
    pub priors: Vec<ResolvedPrior>,
}

impl PostprocessConfig {
    /// Submission defaults: no threshold, unmatched dropped, impacted prior
    /// enabled when the vocabulary has an impacted class.
    pub fn submission(vocab: &DiseaseVocabulary) -> Self {
        let priors = PriorRule::impacted_third_molar()
            .resolve(vocab)
            .map(|r| vec![r])
            .unwrap_or_default();
        PostprocessConfig {
            min_score: 0.0,
            unmatched: UnmatchedPolicy::Drop,
            priors,
        }
    }
}

/// Per-stage removal counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostprocessReport {
    pub input: usize,
    pub below_threshold: usize,
    pub unmatched_dropped: usize,
    pub duplicates_removed: usize,
    pub prior_violations: usize,
    pub output: usize,
}

impl std::ops::AddAssign for PostprocessReport {
    fn add_assign(&mut self, o: Self) {
        self.input += o.input;
        self.below_threshold += o.below_threshold;
        self.unmatched_dropped += o.unmatched_dropped;
        self.duplicates_removed += o.duplicates_removed;
        self.prior_violations += o.prior_violations;
        self.output += o.output;
    }
}

/// threshold, then the unmatched policy, then dedupe, then priors.
pub fn postprocess(
    findings: &[FusedFinding],
    cfg: &PostprocessConfig,
) -> (Vec<FusedFinding>, PostprocessReport) {
    let mut report = PostprocessReport {
        input: findings.len(),
        ..Default::default()
    };
    let kept = threshold(findings, cfg.min_score);
    report.below_threshold = findings.len() - kept.len();

    let kept = match cfg.unmatched {
        UnmatchedPolicy::Keep => kept,
        UnmatchedPolicy::Drop => {
            let n = kept.len();
            let m: Vec<_> = kept.into_iter().filter(FusedFinding::is_matched).collect();
            report.unmatched_dropped = n - m.len();
            m
        }
    };

    let deduped = dedupe(&kept);
    report.duplicates_removed = kept.len() - deduped.len();

    let out = apply_priors(&deduped, &cfg.priors);
    report.prior_violations = deduped.len() - out.len();
    report.output = out.len();
    (out, report)
}
