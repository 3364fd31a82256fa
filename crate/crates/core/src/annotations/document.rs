//! Reading and writing annotation documents.
//!
//! Two layouts are understood:
//!
//! * the hierarchical layout, where each object carries up to three
//!   category fields (quadrant, enumeration, disease) whose names come from a
//!   [`SchemaMap`], and the document declares one category array per level;
//! * plain COCO detection layout with a single `category_id`, as written by
//!   [`to_coco`]. Such documents carry `info.dental_labeling` so they can be
//!   read back without loss.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::disease::{DiseaseLabel, DiseaseVocabulary};
use super::tooth::{IndexBase, ToothId};
use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Field names used by the hierarchical layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaMap {
    pub quadrant: String,
    pub enumeration: String,
    pub disease: String,
    pub quadrant_categories: String,
    pub enumeration_categories: String,
    pub disease_categories: String,
}

impl Default for SchemaMap {
    fn default() -> Self {
        SchemaMap {
            quadrant: "category_id_1".into(),
            enumeration: "category_id_2".into(),
            disease: "category_id_3".into(),
            quadrant_categories: "categories_1".into(),
            enumeration_categories: "categories_2".into(),
            disease_categories: "categories_3".into(),
        }
    }
}

/// Which category fields every object of a set carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HierarchyLevel {
    /// Quadrant only.
    Quadrant,
    /// Quadrant and in-quadrant enumeration.
    Enumeration,
    /// Quadrant, enumeration and disease.
    Disease,
    /// Disease only, as produced by disease-only conversion.
    DiseaseOnly,
}

impl HierarchyLevel {
    pub fn has_quadrant(self) -> bool {
        !matches!(self, HierarchyLevel::DiseaseOnly)
    }

    pub fn has_enumeration(self) -> bool {
        matches!(self, HierarchyLevel::Enumeration | HierarchyLevel::Disease)
    }

    pub fn has_disease(self) -> bool {
        matches!(self, HierarchyLevel::Disease | HierarchyLevel::DiseaseOnly)
    }
}

/// Labeling written into a plain COCO document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CocoLabeling {
    /// `category_id` is the quadrant, 1..=4.
    Quadrant,
    /// `category_id` is the global tooth id, 1..=32.
    GlobalTooth,
    /// `category_id` is the disease id.
    Disease,
}

impl CocoLabeling {
    fn level(self) -> HierarchyLevel {
        match self {
            CocoLabeling::Quadrant => HierarchyLevel::Quadrant,
            CocoLabeling::GlobalTooth => HierarchyLevel::Enumeration,
            CocoLabeling::Disease => HierarchyLevel::DiseaseOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

/// One polygon ring as `(x, y)` vertices.
pub type Ring = Vec<(f64, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedObject {
    pub id: u64,
    pub image_id: u64,
    pub bbox: BBox,
    /// Zero or more rings; all rings of an object are filled together under
    /// the even-odd rule.
    pub polygon: Vec<Ring>,
    pub quadrant: Option<u8>,
    pub enumeration: Option<u8>,
    pub disease: Option<DiseaseLabel>,
}

impl AnnotatedObject {
    pub fn tooth(&self) -> Option<ToothId> {
        ToothId::new(self.quadrant?, self.enumeration?).ok()
    }

    /// Area of the polygon rings, or of the box when there is no polygon.
    pub fn area(&self) -> f64 {
        if self.polygon.is_empty() {
            return self.bbox.area();
        }
        self.polygon.iter().map(|r| shoelace(r).abs()).sum()
    }
}

fn shoelace(ring: &[(f64, f64)]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..ring.len() {
        let (x0, y0) = ring[i];
        let (x1, y1) = ring[(i + 1) % ring.len()];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub images: Vec<ImageInfo>,
    pub objects: Vec<AnnotatedObject>,
    pub level: HierarchyLevel,
    pub diseases: DiseaseVocabulary,
}

impl AnnotationSet {
    pub fn image(&self, id: u64) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn objects_in(&self, image_id: u64) -> impl Iterator<Item = &AnnotatedObject> {
        self.objects.iter().filter(move |o| o.image_id == image_id)
    }

    /// Checks the set-level invariants: unique image ids, objects reference
    /// known images, and objects carry the fields implied by `level`.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for img in &self.images {
            if !ids.insert(img.id) {
                return Err(Error::Integrity(format!("duplicate image id {}", img.id)));
            }
        }
        for obj in &self.objects {
            if !ids.contains(&obj.image_id) {
                return Err(Error::Integrity(format!(
                    "object {} references unknown image {}",
                    obj.id, obj.image_id
                )));
            }
            let lvl = self.level;
            if lvl.has_quadrant() != obj.quadrant.is_some()
                || lvl.has_enumeration() != obj.enumeration.is_some()
                || lvl.has_disease() != obj.disease.is_some()
            {
                return Err(Error::Integrity(format!(
                    "object {} does not carry the fields of level {lvl:?}",
                    obj.id
                )));
            }
        }
        Ok(())
    }
}

/// Options for [`parse_annotations`].
#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// Base of the category ids in the hierarchical layout.
    pub id_base: IndexBase,
    pub schema: SchemaMap,
    /// Used when the document declares no disease categories.
    pub diseases: DiseaseVocabulary,
}

impl ParseOptions {
    pub fn new(id_base: IndexBase) -> Self {
        ParseOptions {
            id_base,
            schema: SchemaMap::default(),
            diseases: DiseaseVocabulary::default(),
        }
    }
}

const LABELING_KEY: &str = "dental_labeling";

/// Parses an annotation document into a normalized set with 1-based category
/// ids, boxes and polygons clipped to their image.
pub fn parse_annotations(text: &str, opts: &ParseOptions) -> Result<AnnotationSet> {
    let doc: Value = serde_json::from_str(text).map_err(|e| {
        Error::parse(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let root = doc
        .as_object()
        .ok_or_else(|| Error::parse("$", "document root is not an object"))?;

    let images = parse_images(root)?;

    let labeling = root
        .get("info")
        .and_then(|i| i.get(LABELING_KEY))
        .map(|v| {
            serde_json::from_value::<CocoLabeling>(v.clone())
                .map_err(|e| Error::parse(format!("info.{LABELING_KEY}"), e.to_string()))
        })
        .transpose()?;

    let raw_objects = match root.get("annotations") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(a)) => a.iter().collect(),
        Some(_) => return Err(Error::parse("annotations", "expected an array")),
    };

    let (level, diseases, fields) = match labeling {
        Some(lab) => {
            let diseases = if lab == CocoLabeling::Disease {
                parse_vocab(root.get("categories"), "categories", IndexBase::OneBased)?
                    .unwrap_or_else(|| opts.diseases.clone())
            } else {
                opts.diseases.clone()
            };
            (lab.level(), diseases, CategoryFields::Coco(lab))
        }
        None => {
            let s = &opts.schema;
            let declared = |k: &str| root.get(k).is_some_and(|v| v.is_array());
            let level = if declared(&s.disease_categories) {
                HierarchyLevel::Disease
            } else if declared(&s.enumeration_categories) {
                HierarchyLevel::Enumeration
            } else if declared(&s.quadrant_categories) {
                HierarchyLevel::Quadrant
            } else {
                infer_level_from_objects(&raw_objects, s)?
            };
            let diseases = parse_vocab(
                root.get(&s.disease_categories),
                &s.disease_categories,
                opts.id_base,
            )?
            .unwrap_or_else(|| opts.diseases.clone());
            (
                level,
                diseases,
                CategoryFields::Hierarchical(s, opts.id_base),
            )
        }
    };

    let mut objects = Vec::with_capacity(raw_objects.len());
    for (idx, raw) in raw_objects.iter().enumerate() {
        objects.push(parse_object(idx, raw, &images, level, &diseases, &fields)?);
    }

    let set = AnnotationSet {
        images,
        objects,
        level,
        diseases,
    };
    set.validate()?;
    Ok(set)
}

enum CategoryFields<'a> {
    Hierarchical(&'a SchemaMap, IndexBase),
    Coco(CocoLabeling),
}

fn infer_level_from_objects(objects: &[&Value], s: &SchemaMap) -> Result<HierarchyLevel> {
    let Some(first) = objects.first() else {
        return Err(Error::parse(
            "$",
            "no category arrays declared and no objects to infer the hierarchy level from",
        ));
    };
    let has = |k: &str| first.get(k).is_some_and(|v| !v.is_null());
    if has(&s.disease) {
        Ok(HierarchyLevel::Disease)
    } else if has(&s.enumeration) {
        Ok(HierarchyLevel::Enumeration)
    } else if has(&s.quadrant) {
        Ok(HierarchyLevel::Quadrant)
    } else {
        Err(Error::parse(
            "annotations[0]",
            "object carries none of the configured category fields",
        ))
    }
}

fn parse_images(root: &Map<String, Value>) -> Result<Vec<ImageInfo>> {
    let arr = match root.get("images") {
        Some(Value::Array(a)) => a,
        Some(_) => return Err(Error::parse("images", "expected an array")),
        None => return Err(Error::parse("$", "missing `images` array")),
    };
    arr.iter()
        .enumerate()
        .map(|(i, v)| {
            let loc = format!("images[{i}]");
            let img: ImageInfo = serde_json::from_value(v.clone())
                .map_err(|e| Error::parse(loc.clone(), e.to_string()))?;
            if img.width == 0 || img.height == 0 {
                return Err(Error::Range(format!(
                    "{loc}: image {} has zero size",
                    img.id
                )));
            }
            Ok(img)
        })
        .collect()
}

#[derive(Deserialize)]
struct RawCategory {
    id: i64,
    name: String,
}

fn parse_vocab(v: Option<&Value>, key: &str, base: IndexBase) -> Result<Option<DiseaseVocabulary>> {
    let Some(v) = v else { return Ok(None) };
    let cats: Vec<RawCategory> =
        serde_json::from_value(v.clone()).map_err(|e| Error::parse(key, e.to_string()))?;
    if cats.is_empty() {
        return Ok(None);
    }
    let labels = cats
        .into_iter()
        .map(|c| {
            let id = base.to_internal(c.id);
            u32::try_from(id)
                .ok()
                .filter(|&id| id >= 1)
                .map(|id| DiseaseLabel {
                    id,
                    name: c.name.clone(),
                })
                .ok_or_else(|| {
                    Error::Range(format!("{key}: disease category id {} out of range", c.id))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    DiseaseVocabulary::new(labels).map(Some)
}

#[derive(Deserialize)]
struct RawObject {
    #[serde(default)]
    id: u64,
    image_id: u64,
    bbox: [f64; 4],
    #[serde(default)]
    segmentation: Option<Value>,
}

fn parse_object(
    idx: usize,
    raw: &Value,
    images: &[ImageInfo],
    level: HierarchyLevel,
    diseases: &DiseaseVocabulary,
    fields: &CategoryFields<'_>,
) -> Result<AnnotatedObject> {
    let loc = format!("annotations[{idx}]");
    let obj: RawObject = serde_json::from_value(raw.clone())
        .map_err(|e| Error::parse(loc.clone(), e.to_string()))?;
    let name = format!("object {} ({loc})", obj.id);

    let img = images
        .iter()
        .find(|i| i.id == obj.image_id)
        .ok_or_else(|| {
            Error::Integrity(format!("{name} references unknown image {}", obj.image_id))
        })?;
    let (w, h) = (f64::from(img.width), f64::from(img.height));

    let [bx, by, bw, bh] = obj.bbox;
    let bbox = BBox::new(bx, by, bw, bh)
        .map_err(|e| Error::Range(format!("{name}: {e}")))?
        .clamp_to(w, h);

    let polygon = parse_polygon(obj.segmentation.as_ref(), &loc, &name)?
        .into_iter()
        .map(|ring| {
            ring.into_iter()
                .map(|(x, y)| (x.clamp(0.0, w), y.clamp(0.0, h)))
                .collect()
        })
        .collect();

    let int_field = |key: &str| -> Result<Option<i64>> {
        match raw.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_i64()
                .map(Some)
                .ok_or_else(|| Error::parse(format!("{loc}.{key}"), "expected an integer")),
        }
    };
    let require = |key: &str, v: Option<i64>| {
        v.ok_or_else(|| Error::parse(format!("{loc}.{key}"), "missing category field"))
    };
    let in_range = |what: &str, v: i64, hi: i64| -> Result<u8> {
        if (1..=hi).contains(&v) {
            Ok(v as u8)
        } else {
            Err(Error::Range(format!(
                "{name}: {what} {v} outside 1..={hi} after normalization"
            )))
        }
    };
    let disease_of = |v: i64| -> Result<DiseaseLabel> {
        u32::try_from(v)
            .ok()
            .and_then(|id| diseases.by_id(id))
            .cloned()
            .ok_or_else(|| Error::Range(format!("{name}: disease id {v} not in the vocabulary")))
    };

    let (mut quadrant, mut enumeration, mut disease) = (None, None, None);
    match fields {
        CategoryFields::Hierarchical(s, base) => {
            if level.has_quadrant() {
                let v = base.to_internal(require(&s.quadrant, int_field(&s.quadrant)?)?);
                quadrant = Some(in_range("quadrant", v, 4)?);
            }
            if level.has_enumeration() {
                let v = base.to_internal(require(&s.enumeration, int_field(&s.enumeration)?)?);
                enumeration = Some(in_range("enumeration", v, 8)?);
            }
            if level.has_disease() {
                let v = base.to_internal(require(&s.disease, int_field(&s.disease)?)?);
                disease = Some(disease_of(v)?);
            }
        }
        CategoryFields::Coco(lab) => {
            let v = require("category_id", int_field("category_id")?)?;
            match lab {
                CocoLabeling::Quadrant => quadrant = Some(in_range("quadrant", v, 4)?),
                CocoLabeling::GlobalTooth => {
                    let g = in_range("global tooth id", v, 32)?;
                    let t = ToothId::from_global(g)?;
                    quadrant = Some(t.quadrant());
                    enumeration = Some(t.in_quadrant());
                }
                CocoLabeling::Disease => disease = Some(disease_of(v)?),
            }
        }
    }

    Ok(AnnotatedObject {
        id: obj.id,
        image_id: obj.image_id,
        bbox,
        polygon,
        quadrant,
        enumeration,
        disease,
    })
}

fn parse_polygon(seg: Option<&Value>, loc: &str, name: &str) -> Result<Vec<Ring>> {
    let rings = match seg {
        None | Some(Value::Null) => return Ok(Vec::new()),
        Some(Value::Array(rings)) => rings,
        Some(_) => {
            return Err(Error::parse(
                format!("{loc}.segmentation"),
                "expected polygon rings (run-length masks are not supported)",
            ))
        }
    };
    // a single flat ring is accepted as well as a list of rings
    let flat = !rings.is_empty() && rings.iter().all(|v| v.is_number());
    let rings: Vec<&Value> = if flat {
        vec![seg.unwrap()]
    } else {
        rings.iter().collect()
    };
    rings
        .iter()
        .enumerate()
        .map(|(ri, ring)| {
            let rloc = format!("{loc}.segmentation[{ri}]");
            let coords: Vec<f64> = serde_json::from_value((*ring).clone())
                .map_err(|e| Error::parse(rloc.clone(), e.to_string()))?;
            if !coords.len().is_multiple_of(2) {
                return Err(Error::parse(rloc, "odd number of polygon coordinates"));
            }
            if coords.iter().any(|c| !c.is_finite()) {
                return Err(Error::Range(format!(
                    "{name}: non-finite polygon coordinate"
                )));
            }
            Ok(coords.chunks_exact(2).map(|p| (p[0], p[1])).collect())
        })
        .collect()
}

fn object_json(o: &AnnotatedObject) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("id".into(), json!(o.id));
    m.insert("image_id".into(), json!(o.image_id));
    m.insert("bbox".into(), json!(<[f64; 4]>::from(o.bbox)));
    m.insert("area".into(), json!(o.area()));
    let seg: Vec<Vec<f64>> = o
        .polygon
        .iter()
        .map(|r| r.iter().flat_map(|&(x, y)| [x, y]).collect())
        .collect();
    m.insert("segmentation".into(), json!(seg));
    m.insert("iscrowd".into(), json!(0));
    m
}

fn images_json(set: &AnnotationSet) -> Value {
    serde_json::to_value(&set.images).expect("image info serializes")
}

fn numbered_categories(n: u32, base: IndexBase) -> Value {
    Value::Array(
        (1..=n)
            .map(|i| json!({"id": base.to_external(i), "name": i.to_string(), "supercategory": ""}))
            .collect(),
    )
}

fn disease_categories(v: &DiseaseVocabulary, base: IndexBase) -> Value {
    Value::Array(
        v.labels()
            .iter()
            .map(|l| json!({"id": base.to_external(l.id), "name": l.name, "supercategory": ""}))
            .collect(),
    )
}

/// Writes the set back in the hierarchical layout. Parsing the output with the
/// same schema and id base reproduces the set.
pub fn serialize_annotations(set: &AnnotationSet, schema: &SchemaMap, id_base: IndexBase) -> Value {
    let lvl = set.level;
    let annotations: Vec<Value> = set
        .objects
        .iter()
        .map(|o| {
            let mut m = object_json(o);
            if let Some(q) = o.quadrant {
                m.insert(
                    schema.quadrant.clone(),
                    json!(id_base.to_external(q.into())),
                );
            }
            if let Some(e) = o.enumeration {
                m.insert(
                    schema.enumeration.clone(),
                    json!(id_base.to_external(e.into())),
                );
            }
            if let Some(d) = &o.disease {
                m.insert(schema.disease.clone(), json!(id_base.to_external(d.id)));
            }
            Value::Object(m)
        })
        .collect();

    let mut root = Map::new();
    root.insert("images".into(), images_json(set));
    root.insert("annotations".into(), Value::Array(annotations));
    if lvl.has_quadrant() {
        root.insert(
            schema.quadrant_categories.clone(),
            numbered_categories(4, id_base),
        );
    }
    if lvl.has_enumeration() {
        root.insert(
            schema.enumeration_categories.clone(),
            numbered_categories(8, id_base),
        );
    }
    if lvl.has_disease() {
        root.insert(
            schema.disease_categories.clone(),
            disease_categories(&set.diseases, id_base),
        );
    }
    Value::Object(root)
}

/// Writes the set as a plain COCO detection document with 1-based category
/// ids under the chosen labeling.
pub fn to_coco(set: &AnnotationSet, labeling: CocoLabeling) -> Result<Value> {
    let lvl = set.level;
    let ok = match labeling {
        CocoLabeling::Quadrant => lvl.has_quadrant(),
        CocoLabeling::GlobalTooth => lvl.has_enumeration(),
        CocoLabeling::Disease => lvl.has_disease(),
    };
    if !ok {
        return Err(Error::Config(format!(
            "a {lvl:?}-level set cannot be written with {labeling:?} labels"
        )));
    }

    let annotations: Vec<Value> = set
        .objects
        .iter()
        .map(|o| {
            let cat = match labeling {
                CocoLabeling::Quadrant => u32::from(o.quadrant.expect("validated")),
                CocoLabeling::GlobalTooth => u32::from(o.tooth().expect("validated").to_global()),
                CocoLabeling::Disease => o.disease.as_ref().expect("validated").id,
            };
            let mut m = object_json(o);
            m.insert("category_id".into(), json!(cat));
            Value::Object(m)
        })
        .collect();

    let categories = match labeling {
        CocoLabeling::Quadrant => numbered_categories(4, IndexBase::OneBased),
        CocoLabeling::GlobalTooth => Value::Array(
            ToothId::all()
                .map(|t| json!({"id": t.to_global(), "name": t.to_fdi(IndexBase::OneBased), "supercategory": "tooth"}))
                .collect(),
        ),
        CocoLabeling::Disease => disease_categories(&set.diseases, IndexBase::OneBased),
    };

    Ok(json!({
        "info": { "description": "dental annotations", LABELING_KEY: labeling },
        "images": images_json(set),
        "annotations": annotations,
        "categories": categories,
    }))
}
