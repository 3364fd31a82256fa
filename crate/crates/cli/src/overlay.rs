use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use dentfuse_core::annotations::{DiseaseVocabulary, IndexBase};
use dentfuse_core::formats::parse_submission;
use dentfuse_core::fusion::FusedFinding;
use dentfuse_core::postprocess::threshold;
use image::{Rgb, RgbImage};

use crate::files::{read_text, write_with};
use crate::font;
use crate::parse_base;

#[derive(Args, Debug)]
pub struct OverlayArgs {
    /// Radiograph (PNG).
    #[arg(long)]
    image: PathBuf,

    /// Id of the image within the submission.
    #[arg(long)]
    image_id: u64,

    #[arg(long)]
    submission: PathBuf,

    #[arg(short, long)]
    output: PathBuf,

    /// Only findings scoring strictly above this are drawn.
    #[arg(long, default_value_t = 0.3)]
    min_score: f64,

    /// Base of category ids and FDI codes in the submission, and of the
    /// drawn codes.
    #[arg(long, default_value = "one_based", value_parser = parse_base)]
    index_base: IndexBase,

    /// Disease names in id order.
    #[arg(long, value_delimiter = ',')]
    diseases: Vec<String>,
}

const PALETTE: [[u8; 3]; 6] = [
    [230, 57, 70],
    [255, 183, 3],
    [42, 157, 143],
    [69, 123, 230],
    [200, 80, 192],
    [120, 200, 60],
];

fn color(disease_id: u32) -> Rgb<u8> {
    Rgb(PALETTE[(disease_id as usize).saturating_sub(1) % PALETTE.len()])
}

fn fill_rect(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
    let (w, h) = (i64::from(img.width()), i64::from(img.height()));
    for y in y0.max(0)..y1.min(h) {
        for x in x0.max(0)..x1.min(w) {
            img.put_pixel(x as u32, y as u32, c);
        }
    }
}

fn draw_text(img: &mut RgbImage, text: &str, x: i64, y: i64, scale: i64, c: Rgb<u8>) {
    let advance = (i64::from(font::WIDTH) + 1) * scale;
    for (i, ch) in text.chars().enumerate() {
        let gx = x + i as i64 * advance;
        for (row, bits) in font::glyph(ch).iter().enumerate() {
            for col in 0..font::WIDTH {
                if bits >> (font::WIDTH - 1 - col) & 1 == 1 {
                    let px = gx + i64::from(col) * scale;
                    let py = y + row as i64 * scale;
                    fill_rect(img, px, py, px + scale, py + scale, c);
                }
            }
        }
    }
}

pub fn label(f: &FusedFinding, base: IndexBase) -> String {
    let tooth = f.tooth_fdi(base).unwrap_or_else(|| "--".into());
    format!("{tooth} {} {:.2}", f.disease.name, f.score)
}

/// Draws each finding's box with its FDI code, disease and score.
pub fn render(img: &mut RgbImage, findings: &[FusedFinding], base: IndexBase) {
    let scale = i64::from(img.height() / 400).max(1);
    let stroke = scale.max(2);
    for f in findings {
        let c = color(f.disease.id);
        let (x0, y0) = (f.bbox.x.round() as i64, f.bbox.y.round() as i64);
        let (x1, y1) = (f.bbox.x2().round() as i64, f.bbox.y2().round() as i64);
        fill_rect(img, x0, y0, x1, y0 + stroke, c);
        fill_rect(img, x0, y1 - stroke, x1, y1, c);
        fill_rect(img, x0, y0, x0 + stroke, y1, c);
        fill_rect(img, x1 - stroke, y0, x1, y1, c);

        let text = label(f, base);
        let tw = text.chars().count() as i64 * (i64::from(font::WIDTH) + 1) * scale + scale;
        let th = (i64::from(font::HEIGHT) + 2) * scale;
        // above the box, or inside it when there is no room
        let ty = if y0 >= th { y0 - th } else { y0 + stroke };
        fill_rect(img, x0, ty, x0 + tw, ty + th, c);
        draw_text(img, &text, x0 + scale, ty + scale, scale, Rgb([0, 0, 0]));
    }
}

pub fn run(args: &OverlayArgs) -> Result<()> {
    let vocab = if args.diseases.is_empty() {
        DiseaseVocabulary::default()
    } else {
        DiseaseVocabulary::from_names(&args.diseases)?
    };
    let findings = parse_submission(&read_text(&args.submission)?, args.index_base, &vocab)
        .with_context(|| format!("parsing {}", args.submission.display()))?;
    let mine: Vec<FusedFinding> = findings
        .into_iter()
        .filter(|f| f.image_id == args.image_id)
        .collect();
    let shown = threshold(&mine, args.min_score);

    let mut img = image::open(&args.image)
        .map_err(|e| dentfuse_core::Error::Image {
            path: args.image.clone(),
            source: e,
        })?
        .to_rgb8();
    render(&mut img, &shown, args.index_base);
    write_with(&args.output, |tmp| {
        img.save(tmp).map_err(|e| dentfuse_core::Error::Image {
            path: args.output.clone(),
            source: e,
        })?;
        Ok(())
    })?;
    log::info!("{} of {} findings drawn", shown.len(), mine.len());
    Ok(())
}
