use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use dentfuse_core::annotations::{HierarchyLevel, IndexBase};
use dentfuse_core::evaluate::{evaluate, EvalConfig, EvalReport, LabelType};
use dentfuse_core::formats::parse_submission;

use crate::config::ConfigError;
use crate::files::{load_annotations, read_text, write_json, write_with};
use crate::{parse_base, AnnotationArgs};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Label {
    Quadrant,
    Enumeration,
    Disease,
}

impl From<Label> for LabelType {
    fn from(l: Label) -> LabelType {
        match l {
            Label::Quadrant => LabelType::Quadrant,
            Label::Enumeration => LabelType::Enumeration,
            Label::Disease => LabelType::Disease,
        }
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Ground-truth annotation file.
    #[arg(long)]
    gt: PathBuf,

    /// Submission file written by `fuse`.
    #[arg(long)]
    submission: PathBuf,

    /// Base of category ids and FDI codes in the submission.
    #[arg(long, default_value = "one_based", value_parser = parse_base)]
    index_base: IndexBase,

    /// Label types to score (default: all the ground truth carries).
    #[arg(long, value_enum, value_delimiter = ',')]
    labels: Vec<Label>,

    /// TOML file with iou_thresholds, recall_points and max_detections.
    #[arg(long)]
    eval_config: Option<PathBuf>,

    /// Report file.
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Per-class table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,

    #[command(flatten)]
    annotations: AnnotationArgs,
}

fn label_name(t: LabelType) -> &'static str {
    match t {
        LabelType::Quadrant => "quadrant",
        LabelType::Enumeration => "enumeration",
        LabelType::Disease => "disease",
    }
}

fn default_labels(level: HierarchyLevel) -> Vec<LabelType> {
    LabelType::ALL
        .into_iter()
        .filter(|t| match t {
            LabelType::Quadrant => level.has_quadrant(),
            LabelType::Enumeration => level.has_enumeration(),
            LabelType::Disease => level.has_disease(),
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn write_csv(path: &std::path::Path, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "label_type",
        "class",
        "name",
        "gt_count",
        "pred_count",
        "ap",
        "ap50",
        "ap75",
        "ar",
    ])?;
    for l in &report.labels {
        for c in &l.per_class {
            w.write_record([
                label_name(l.label_type).to_string(),
                c.class.to_string(),
                c.name.clone(),
                c.gt_count.to_string(),
                c.pred_count.to_string(),
                opt(c.ap),
                opt(c.ap50),
                opt(c.ap75),
                opt(c.ar),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    write_with(path, |tmp| {
        Ok(std::fs::write(tmp, &bytes).map_err(|e| dentfuse_core::Error::io(tmp, e))?)
    })
}

pub fn run(args: &EvalArgs) -> Result<()> {
    let cfg = match &args.eval_config {
        Some(path) => toml::from_str::<EvalConfig>(&read_text(path)?)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?,
        None => EvalConfig::default(),
    };
    cfg.validate()?;

    let gt = load_annotations(&args.gt, &args.annotations)?;
    let findings = parse_submission(&read_text(&args.submission)?, args.index_base, &gt.diseases)
        .with_context(|| format!("parsing {}", args.submission.display()))?;
    let labels: Vec<LabelType> = if args.labels.is_empty() {
        default_labels(gt.level)
    } else {
        args.labels.iter().map(|&l| l.into()).collect()
    };
    let report = evaluate(&gt, &findings, &labels, &cfg).context("evaluating submission")?;

    println!(
        "{:<12} {:>7} {:>7} {:>7} {:>7} {:>8}",
        "label", "AP", "AP50", "AP75", "AR", "classes"
    );
    for l in &report.labels {
        println!(
            "{:<12} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>8}",
            label_name(l.label_type),
            l.ap,
            l.ap50,
            l.ap75,
            l.ar,
            l.classes_evaluated
        );
    }

    if let Some(path) = &args.output {
        write_json(path, &report)?;
    }
    if let Some(path) = &args.csv {
        write_csv(path, &report)?;
    }
    Ok(())
}
