use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use dentfuse_core::annotations::{to_coco, CocoLabeling, HierarchyLevel};

use crate::files::{load_annotations, write_json};
use crate::AnnotationArgs;

#[derive(Args, Debug)]
pub struct ConvertArgs {
    /// Annotation file, hierarchical or already converted.
    input: PathBuf,

    #[arg(short, long)]
    output: PathBuf,

    /// Keep only the disease label of each object.
    #[arg(long)]
    diseases_only: bool,

    #[command(flatten)]
    annotations: AnnotationArgs,
}

pub fn run(args: &ConvertArgs) -> Result<()> {
    let set = load_annotations(&args.input, &args.annotations)?;
    let labeling = if args.diseases_only {
        CocoLabeling::Disease
    } else {
        match set.level {
            HierarchyLevel::Quadrant => CocoLabeling::Quadrant,
            HierarchyLevel::Enumeration | HierarchyLevel::Disease => CocoLabeling::GlobalTooth,
            HierarchyLevel::DiseaseOnly => CocoLabeling::Disease,
        }
    };
    let doc = to_coco(&set, labeling)?;
    write_json(&args.output, &doc)?;
    log::info!(
        "{} objects written as {labeling:?} categories",
        set.objects.len()
    );
    Ok(())
}
