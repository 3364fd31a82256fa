use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use dentfuse_core::annotations::IndexBase;
use dentfuse_core::formats::{
    disease_detections, parse_predictions, to_submission, tooth_dictionaries, FrameIndex,
    IngestReport, PredictionRecord, ToothSource,
};
use dentfuse_core::fusion::{
    fuse_image, DiseaseDetection, FusedFinding, SourceKind, ToothDictionary,
};
use dentfuse_core::postprocess::{postprocess, PostprocessReport, UnmatchedPolicy};
use dentfuse_core::rasterize::Connectivity;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, SourceConfig};
use crate::files::{read_text, write_json};
use crate::masks::{collect_masks, mask_records};
use crate::parse_base;

#[derive(Args, Debug)]
pub struct FuseArgs {
    #[arg(short, long)]
    config: PathBuf,

    /// Submission file to write.
    #[arg(short, long)]
    output: PathBuf,

    /// Run report file.
    #[arg(long)]
    report: Option<PathBuf>,

    /// Overrides `index_base`.
    #[arg(long, value_parser = parse_base)]
    index_base: Option<IndexBase>,

    /// Overrides `min_score`.
    #[arg(long)]
    min_score: Option<f64>,

    /// Overrides `unmatched` with "keep".
    #[arg(long)]
    keep_unmatched: bool,
}

#[derive(Debug, Serialize)]
struct SourceReport {
    id: String,
    kind: SourceKind,
    weight: f64,
    images: usize,
    #[serde(flatten)]
    ingest: IngestReport,
}

#[derive(Debug, Serialize)]
struct RunReport {
    images: usize,
    disease_detections: usize,
    matched: usize,
    unmatched: usize,
    sources: Vec<SourceReport>,
    postprocess: PostprocessReport,
    findings: usize,
}

fn source_records(src: &SourceConfig, conn: Connectivity) -> Result<Vec<PredictionRecord>> {
    if let Some(path) = &src.predictions {
        return parse_predictions(&read_text(path)?)
            .with_context(|| format!("parsing {}", path.display()));
    }
    let dir = src.masks.as_ref().expect("validated: predictions or masks");
    let files = collect_masks(std::slice::from_ref(dir))?;
    let per_file: Vec<Vec<PredictionRecord>> = files
        .par_iter()
        .map(|m| mask_records(m, conn, None))
        .collect::<Result<_>>()?;
    Ok(per_file.into_iter().flatten().collect())
}

type Dictionaries = (SourceConfig, BTreeMap<u64, ToothDictionary>, IngestReport);

fn load_sources(cfg: &RunConfig) -> Result<Vec<Dictionaries>> {
    let conn = Connectivity::try_from(cfg.connectivity)?;
    cfg.sources
        .iter()
        .map(|src| {
            let records = source_records(src, conn)?;
            let frames = match &src.crop_frames {
                Some(path) => Some(
                    FrameIndex::parse(&read_text(path)?)
                        .with_context(|| format!("parsing {}", path.display()))?,
                ),
                None => None,
            };
            let source = ToothSource {
                id: src.id.clone(),
                kind: src.kind,
                weight: src.weight(),
                category_base: src.category_base,
            };
            let (dicts, ingest) = tooth_dictionaries(&source, &records, frames.as_ref())
                .with_context(|| format!("source `{}`", src.id))?;
            Ok((src.clone(), dicts, ingest))
        })
        .collect()
}

pub fn run(args: &FuseArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(b) = args.index_base {
        cfg.index_base = b;
    }
    if let Some(s) = args.min_score {
        cfg.min_score = s;
    }
    if args.keep_unmatched {
        cfg.unmatched = UnmatchedPolicy::Keep;
    }
    cfg.validate()?;
    let vocab = cfg.vocabulary()?;
    let post = cfg.postprocess()?;

    let records = parse_predictions(&read_text(&cfg.disease_predictions)?)
        .with_context(|| format!("parsing {}", cfg.disease_predictions.display()))?;
    let detections = disease_detections(&records, &vocab, cfg.disease_category_base)
        .with_context(|| format!("reading {}", cfg.disease_predictions.display()))?;
    let sources = load_sources(&cfg)?;

    let mut by_image: BTreeMap<u64, Vec<DiseaseDetection>> = BTreeMap::new();
    for d in detections.iter() {
        by_image.entry(d.image_id).or_default().push(d.clone());
    }

    let per_image: Vec<(Vec<FusedFinding>, usize, PostprocessReport)> = by_image
        .par_iter()
        .map(|(id, dets)| {
            let dicts: Vec<ToothDictionary> = sources
                .iter()
                .map(|(src, dicts, _)| match dicts.get(id) {
                    Some(d) => Ok(d.clone()),
                    None => ToothDictionary::new(src.id.clone(), src.kind, src.weight()),
                })
                .collect::<dentfuse_core::Result<_>>()?;
            let fused = fuse_image(dets, &dicts)?;
            let matched = fused.iter().filter(|f| f.is_matched()).count();
            let (kept, report) = postprocess(&fused, &post);
            Ok((kept, matched, report))
        })
        .collect::<dentfuse_core::Result<_>>()?;

    let mut findings = Vec::new();
    let mut matched = 0;
    let mut post_report = PostprocessReport::default();
    for (kept, m, r) in per_image {
        findings.extend(kept);
        matched += m;
        post_report += r;
    }

    let with_detections: BTreeSet<u64> = by_image.keys().copied().collect();
    let report = RunReport {
        images: by_image.len(),
        disease_detections: detections.len(),
        matched,
        unmatched: detections.len() - matched,
        sources: sources
            .iter()
            .map(|(src, dicts, ingest)| SourceReport {
                id: src.id.clone(),
                kind: src.kind,
                weight: src.weight(),
                images: dicts
                    .keys()
                    .filter(|id| with_detections.contains(id))
                    .count(),
                ingest: *ingest,
            })
            .collect(),
        postprocess: post_report,
        findings: findings.len(),
    };

    write_json(&args.output, &to_submission(&findings, cfg.index_base))?;
    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }
    log::info!(
        "{} detections on {} images: {} matched, {} findings written",
        report.disease_detections,
        report.images,
        report.matched,
        report.findings
    );
    Ok(())
}
