use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use dentfuse_core::annotations::{serialize_annotations, DiseaseVocabulary, IndexBase, SchemaMap};
use dentfuse_core::evaluate::EvalConfig;
use dentfuse_core::fusion::SourceKind;
use dentfuse_core::postprocess::UnmatchedPolicy;
use dentfuse_core::synth::{generate_dataset, SynthSpec};
use rayon::prelude::*;

use crate::config::{ConfigError, RunConfig, SourceConfig};
use crate::files::{read_text, save_mask, write_bytes, write_json};
use crate::masks::MaskFile;

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,

    /// TOML file with SynthSpec fields; missing fields take defaults.
    #[arg(long)]
    spec: Option<PathBuf>,

    /// Overrides the spec's seed.
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, default_value_t = 1)]
    images: usize,
}

/// A run configuration fusing every generated source.
fn run_config(sources: &[(String, SourceKind)]) -> RunConfig {
    let mut list: Vec<SourceConfig> = sources
        .iter()
        .map(|(id, kind)| SourceConfig {
            id: id.clone(),
            kind: *kind,
            weight: None,
            predictions: Some(format!("predictions/{id}.json").into()),
            masks: None,
            crop_frames: None,
            category_base: IndexBase::OneBased,
        })
        .collect();
    list.push(SourceConfig {
        id: "mask-whole".into(),
        kind: SourceKind::Segmenter,
        weight: None,
        predictions: None,
        masks: Some("masks/whole".into()),
        crop_frames: None,
        category_base: IndexBase::OneBased,
    });
    list.push(SourceConfig {
        id: "mask-quadrant".into(),
        kind: SourceKind::Segmenter,
        weight: None,
        predictions: None,
        masks: Some("masks/quadrant".into()),
        crop_frames: Some("frames.json".into()),
        category_base: IndexBase::OneBased,
    });
    RunConfig {
        index_base: IndexBase::OneBased,
        min_score: 0.0,
        unmatched: UnmatchedPolicy::Drop,
        connectivity: 8,
        disease_predictions: "disease_predictions.json".into(),
        disease_category_base: IndexBase::OneBased,
        diseases: DiseaseVocabulary::default()
            .labels()
            .iter()
            .map(|d| d.name.clone())
            .collect(),
        priors: None,
        sources: list,
        eval: EvalConfig::default(),
    }
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => toml::from_str::<SynthSpec>(&read_text(path)?)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if args.images == 0 {
        return Err(ConfigError("--images must be at least 1".into()).into());
    }
    let vocab = DiseaseVocabulary::default();
    let case = generate_dataset(&spec, &vocab, args.images)?;
    let out = &args.out_dir;
    let schema = SchemaMap::default();

    write_json(
        &out.join("teeth.json"),
        &serialize_annotations(&case.teeth, &schema, IndexBase::ZeroBased),
    )?;
    write_json(
        &out.join("diseases.json"),
        &serialize_annotations(&case.diseases, &schema, IndexBase::ZeroBased),
    )?;
    write_json(&out.join("frames.json"), &case.frames)?;
    write_json(
        &out.join("disease_predictions.json"),
        &case.disease_predictions,
    )?;
    for src in &case.tooth_sources {
        write_json(
            &out.join(format!("predictions/{}.json", src.id)),
            &src.records,
        )?;
    }

    let mut jobs: Vec<(usize, Option<u8>)> = Vec::new();
    for i in 0..case.teeth.images.len() {
        jobs.push((i, None));
        jobs.extend((1..=4).map(|q| (i, Some(q))));
    }
    jobs.par_iter()
        .try_for_each(|&(i, quadrant)| -> Result<()> {
            let id = case.teeth.images[i].id;
            match quadrant {
                None => save_mask(
                    &out.join("masks/whole").join(MaskFile::file_name(id, None)),
                    &case.masks[i],
                ),
                Some(q) => {
                    let mask = case
                        .quadrant_mask(id, q)
                        .expect("frame for every generated quadrant");
                    save_mask(
                        &out.join("masks/quadrant")
                            .join(MaskFile::file_name(id, Some(q))),
                        &mask,
                    )
                }
            }
        })?;

    let sources: Vec<(String, SourceKind)> = case
        .tooth_sources
        .iter()
        .map(|s| (s.id.clone(), s.kind))
        .collect();
    write_bytes(
        &out.join("run.toml"),
        toml::to_string(&run_config(&sources))?.as_bytes(),
    )?;
    log::info!(
        "{} images written to {}",
        case.teeth.images.len(),
        out.display()
    );
    Ok(())
}
