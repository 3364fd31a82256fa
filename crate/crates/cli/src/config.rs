//! Run configuration for `fuse`, read from a TOML file.
//!
//! ```toml
//! index_base = "one_based"      # FDI and category ids in the submission
//! min_score = 0.0
//! unmatched = "drop"            # or "keep"
//! connectivity = 8
//! disease_predictions = "diseases.json"
//! diseases = ["Impacted", "Caries", "Periapical Lesion", "Deep Caries"]
//!
//! [[sources]]
//! id = "det-a"
//! kind = "detector"             # weight defaults to 2.0, segmenters to 1.0
//! predictions = "teeth_det_a.json"
//!
//! [[sources]]
//! id = "seg-quadrant"
//! kind = "segmenter"
//! masks = "masks/quadrant"      # <id>_q<n>.png files
//! crop_frames = "frames.json"
//!
//! [[priors]]                    # replaces the default impacted rule
//! disease = "Impacted"
//! in_quadrant = [8]
//! ```
//!
//! Relative paths are resolved against the file's directory.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dentfuse_core::annotations::{DiseaseVocabulary, IndexBase, DEFAULT_DISEASES};
use dentfuse_core::evaluate::EvalConfig;
use dentfuse_core::fusion::SourceKind;
use dentfuse_core::postprocess::{PostprocessConfig, PriorRule, UnmatchedPolicy};
use dentfuse_core::rasterize::Connectivity;
use serde::{Deserialize, Serialize};

use crate::files::read_text;

/// A problem with the configuration rather than with the data.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn one_based() -> IndexBase {
    IndexBase::OneBased
}

fn eight() -> u8 {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub id: String,
    pub kind: SourceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    /// Prediction file of box records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    /// Directory of label masks, boxed at load time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_frames: Option<PathBuf>,
    #[serde(default = "one_based")]
    pub category_base: IndexBase,
}

impl SourceConfig {
    pub fn weight(&self) -> f64 {
        self.weight.unwrap_or_else(|| self.kind.default_weight())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "one_based")]
    pub index_base: IndexBase,
    #[serde(default)]
    pub min_score: f64,
    #[serde(default)]
    pub unmatched: UnmatchedPolicy,
    #[serde(default = "eight")]
    pub connectivity: u8,
    pub disease_predictions: PathBuf,
    #[serde(default = "one_based")]
    pub disease_category_base: IndexBase,
    #[serde(default = "default_diseases")]
    pub diseases: Vec<String>,
    /// `None` means the default impacted-tooth rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priors: Option<Vec<PriorRule>>,
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_diseases() -> Vec<String> {
    DEFAULT_DISEASES.iter().map(|s| s.to_string()).collect()
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = read_text(path).map_err(|e| invalid(format!("{e:#}")))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(dir);
        cfg.validate()
            .with_context(|| format!("in {}", path.display()))?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.disease_predictions);
        for s in &mut self.sources {
            for p in [&mut s.predictions, &mut s.masks, &mut s.crop_frames]
                .into_iter()
                .flatten()
            {
                fix(p);
            }
        }
    }

    /// Checks everything that can be checked before any file is read.
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(invalid("at least one tooth source is required"));
        }
        let mut ids = BTreeSet::new();
        for s in &self.sources {
            if !ids.insert(s.id.as_str()) {
                return Err(invalid(format!("source id `{}` appears twice", s.id)));
            }
            let w = s.weight();
            if !(w > 0.0 && w.is_finite()) {
                return Err(invalid(format!(
                    "source `{}`: weight must be positive, got {w}",
                    s.id
                )));
            }
            match (&s.predictions, &s.masks) {
                (Some(_), Some(_)) | (None, None) => {
                    return Err(invalid(format!(
                        "source `{}`: set exactly one of `predictions` and `masks`",
                        s.id
                    )))
                }
                _ => {}
            }
            for p in [&s.predictions, &s.masks, &s.crop_frames]
                .into_iter()
                .flatten()
            {
                if !p.exists() {
                    return Err(invalid(format!(
                        "source `{}`: {} does not exist",
                        s.id,
                        p.display()
                    )));
                }
            }
        }
        if !self.disease_predictions.exists() {
            return Err(invalid(format!(
                "{} does not exist",
                self.disease_predictions.display()
            )));
        }
        if !(0.0..=1.0).contains(&self.min_score) {
            return Err(invalid(format!(
                "min_score {} outside [0, 1]",
                self.min_score
            )));
        }
        Connectivity::try_from(self.connectivity)?;
        self.postprocess()?;
        self.eval.validate()?;
        Ok(())
    }

    pub fn vocabulary(&self) -> Result<DiseaseVocabulary> {
        Ok(DiseaseVocabulary::from_names(&self.diseases)?)
    }

    pub fn postprocess(&self) -> Result<PostprocessConfig> {
        let vocab = self.vocabulary()?;
        let mut cfg = PostprocessConfig::submission(&vocab);
        cfg.min_score = self.min_score;
        cfg.unmatched = self.unmatched;
        if let Some(rules) = &self.priors {
            cfg.priors = rules
                .iter()
                .map(|r| r.resolve(&vocab))
                .collect::<dentfuse_core::Result<_>>()?;
        }
        Ok(cfg)
    }
}
