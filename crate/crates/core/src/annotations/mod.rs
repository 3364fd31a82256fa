//! Dental annotation documents and tooth numbering.

mod disease;
mod document;
mod tooth;

pub use disease::{DiseaseLabel, DiseaseVocabulary, DEFAULT_DISEASES, IMPACTED};
pub use document::{
    parse_annotations, serialize_annotations, to_coco, AnnotatedObject, AnnotationSet,
    CocoLabeling, HierarchyLevel, ImageInfo, ParseOptions, Ring, SchemaMap,
};
pub use tooth::{IndexBase, ToothId};
