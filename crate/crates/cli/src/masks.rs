//! Mask files are named `<image id>.png` for whole-image masks (labels are
//! global tooth ids) and `<image id>_q<quadrant>.png` for quadrant masks
//! (labels 1..=8 in that quadrant, 9 for any other tooth).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use dentfuse_core::formats::PredictionRecord;
use dentfuse_core::rasterize::{
    largest_component_boxes, rasterize_objects, Connectivity, LabelMask, Labeling,
};
use rayon::prelude::*;

use crate::files::{load_annotations, save_mask, write_json};
use crate::AnnotationArgs;

#[derive(Args, Debug)]
pub struct RasterizeArgs {
    /// Annotation file with tooth polygons.
    input: PathBuf,

    #[arg(long)]
    out_dir: PathBuf,

    /// Also write one 9-label mask per quadrant.
    #[arg(long)]
    per_quadrant: bool,

    #[command(flatten)]
    annotations: AnnotationArgs,
}

#[derive(Args, Debug)]
pub struct BoxesArgs {
    /// Mask files or directories of mask files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,

    /// Output prediction file (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Pixel connectivity, 4 or 8.
    #[arg(long, default_value_t = 8, value_parser = parse_connectivity)]
    connectivity: u8,

    /// Tag written into every record.
    #[arg(long)]
    source_id: Option<String>,
}

fn parse_connectivity(s: &str) -> Result<u8, String> {
    let v: u8 = s.parse().map_err(|_| format!("`{s}` is not 4 or 8"))?;
    Connectivity::try_from(v)
        .map(|_| v)
        .map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MaskFile {
    pub image_id: u64,
    pub quadrant: Option<u8>,
    pub path: PathBuf,
}

impl MaskFile {
    pub fn from_path(path: &Path) -> Option<MaskFile> {
        if path.extension()? != "png" {
            return None;
        }
        let stem = path.file_stem()?.to_str()?;
        let (id, quadrant) = match stem.split_once("_q") {
            Some((id, q)) => (
                id,
                Some(q.parse::<u8>().ok().filter(|q| (1..=4).contains(q))?),
            ),
            None => (stem, None),
        };
        Some(MaskFile {
            image_id: id.parse().ok()?,
            quadrant,
            path: path.to_path_buf(),
        })
    }

    pub fn file_name(image_id: u64, quadrant: Option<u8>) -> String {
        match quadrant {
            Some(q) => format!("{image_id}_q{q}.png"),
            None => format!("{image_id}.png"),
        }
    }
}

/// Mask files under the given paths, sorted by image then quadrant.
pub fn collect_masks(inputs: &[PathBuf]) -> Result<Vec<MaskFile>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let entries = fs::read_dir(input)
                .map_err(|e| dentfuse_core::Error::io(input, e))
                .with_context(|| format!("listing {}", input.display()))?;
            for entry in entries {
                let path = entry
                    .map_err(|e| dentfuse_core::Error::io(input, e))?
                    .path();
                match MaskFile::from_path(&path) {
                    Some(m) => out.push(m),
                    None => log::debug!("ignoring {}", path.display()),
                }
            }
        } else {
            match MaskFile::from_path(input) {
                Some(m) => out.push(m),
                None => bail!(dentfuse_core::Error::Integrity(format!(
                    "{}: mask files must be named <image id>.png or <image id>_q<1-4>.png",
                    input.display()
                ))),
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Box records of one mask, labels ascending.
pub fn mask_records(
    mask: &MaskFile,
    conn: Connectivity,
    source_id: Option<&str>,
) -> Result<Vec<PredictionRecord>> {
    let labels = LabelMask::load_png(&mask.path)?;
    Ok(largest_component_boxes(&labels, conn)
        .into_iter()
        .map(|(label, bbox)| PredictionRecord {
            image_id: mask.image_id,
            bbox,
            category: label.into(),
            score: None,
            source_id: source_id.map(str::to_owned),
            quadrant: mask.quadrant.map(i64::from),
        })
        .collect())
}

pub fn boxes(args: &BoxesArgs) -> Result<()> {
    let conn = Connectivity::try_from(args.connectivity)?;
    let files = collect_masks(&args.inputs)?;
    let per_file: Vec<Vec<PredictionRecord>> = files
        .par_iter()
        .map(|m| mask_records(m, conn, args.source_id.as_deref()))
        .collect::<Result<_>>()?;
    let records: Vec<PredictionRecord> = per_file.into_iter().flatten().collect();
    match &args.output {
        Some(path) => write_json(path, &records),
        None => {
            println!("{}", serde_json::to_string_pretty(&records)?);
            Ok(())
        }
    }
}

pub fn rasterize(args: &RasterizeArgs) -> Result<()> {
    let set = load_annotations(&args.input, &args.annotations)?;
    if !set.level.has_enumeration() {
        bail!(dentfuse_core::Error::Integrity(format!(
            "{}: objects carry no tooth labels to rasterize",
            args.input.display()
        )));
    }
    let mut jobs: Vec<(u64, Option<u8>)> = Vec::new();
    for img in &set.images {
        jobs.push((img.id, None));
        if args.per_quadrant {
            jobs.extend((1..=4).map(|q| (img.id, Some(q))));
        }
    }
    let skipped: Vec<usize> = jobs
        .par_iter()
        .map(|&(id, quadrant)| {
            let img = set.image(id).expect("image listed in the set");
            let objects: Vec<_> = set.objects_in(id).cloned().collect();
            let labeling = match quadrant {
                Some(reference) => Labeling::Quadrant9 { reference },
                None => Labeling::Global32,
            };
            let r = rasterize_objects(&objects, img.width as usize, img.height as usize, labeling);
            save_mask(
                &args.out_dir.join(MaskFile::file_name(id, quadrant)),
                &r.mask,
            )?;
            Ok(if quadrant.is_none() { r.skipped() } else { 0 })
        })
        .collect::<Result<_>>()?;
    log::info!(
        "{} masks written, {} objects skipped",
        jobs.len(),
        skipped.iter().sum::<usize>()
    );
    Ok(())
}
