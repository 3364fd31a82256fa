use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A disease class with its internal 1-based id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiseaseLabel {
    pub id: u32,
    pub name: String,
}

impl DiseaseLabel {
    pub fn is_named(&self, name: &str) -> bool {
        self.name.eq_ignore_ascii_case(name.trim())
    }
}

/// Names of the default disease classes, in id order.
pub const DEFAULT_DISEASES: [&str; 4] = ["Impacted", "Caries", "Periapical Lesion", "Deep Caries"];

/// Name the impacted-tooth prior looks for.
pub const IMPACTED: &str = "impacted";

/// Ordered set of disease labels with unique ids and names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiseaseVocabulary {
    labels: Vec<DiseaseLabel>,
}

impl DiseaseVocabulary {
    pub fn new(labels: Vec<DiseaseLabel>) -> Result<Self> {
        for (i, a) in labels.iter().enumerate() {
            if a.id == 0 {
                return Err(Error::Config(format!("disease `{}` has id 0", a.name)));
            }
            for b in &labels[..i] {
                if a.id == b.id {
                    return Err(Error::Config(format!("duplicate disease id {}", a.id)));
                }
                if a.is_named(&b.name) {
                    return Err(Error::Config(format!(
                        "duplicate disease name `{}`",
                        a.name
                    )));
                }
            }
        }
        Ok(DiseaseVocabulary { labels })
    }

    /// Builds a vocabulary from names, assigning ids 1, 2, ... in order.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        DiseaseVocabulary::new(
            names
                .iter()
                .enumerate()
                .map(|(i, n)| DiseaseLabel {
                    id: i as u32 + 1,
                    name: n.as_ref().to_string(),
                })
                .collect(),
        )
    }

    pub fn labels(&self) -> &[DiseaseLabel] {
        &self.labels
    }

    pub fn by_id(&self, id: u32) -> Option<&DiseaseLabel> {
        self.labels.iter().find(|l| l.id == id)
    }

    pub fn by_name(&self, name: &str) -> Option<&DiseaseLabel> {
        self.labels.iter().find(|l| l.is_named(name))
    }

    /// True when the impacted-tooth prior can apply.
    pub fn has_impacted(&self) -> bool {
        self.by_name(IMPACTED).is_some()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl Default for DiseaseVocabulary {
    fn default() -> Self {
        DiseaseVocabulary::from_names(&DEFAULT_DISEASES).expect("default vocabulary is valid")
    }
}
