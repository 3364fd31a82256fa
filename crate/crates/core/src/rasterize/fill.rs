use log::warn;

use super::LabelMask;
use crate::annotations::{AnnotatedObject, Ring};

/// Which label each object receives in the mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labeling {
    /// Global tooth id, 1..=32.
    Global32,
    /// In-quadrant position 1..=8 for teeth of `reference`, 9 for any other
    /// tooth.
    Quadrant9 { reference: u8 },
}

/// Label given to teeth outside the reference quadrant.
pub const OTHER_QUADRANT: u8 = 9;

impl Labeling {
    pub fn label_for(&self, obj: &AnnotatedObject) -> Option<u8> {
        let tooth = obj.tooth()?;
        Some(match *self {
            Labeling::Global32 => tooth.to_global(),
            Labeling::Quadrant9 { reference } if tooth.quadrant() == reference => {
                tooth.in_quadrant()
            }
            Labeling::Quadrant9 { .. } => OTHER_QUADRANT,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rasterized {
    pub mask: LabelMask,
    pub skipped_missing_polygon: usize,
    pub skipped_degenerate: usize,
    /// Objects without the tooth fields the labeling needs.
    pub skipped_unlabeled: usize,
}

impl Rasterized {
    pub fn skipped(&self) -> usize {
        self.skipped_missing_polygon + self.skipped_degenerate + self.skipped_unlabeled
    }
}

/// Draws each object's polygon into a `width x height` mask. Later objects
/// overwrite earlier ones. A pixel belongs to a polygon when its center is
/// inside under the even-odd rule.
pub fn rasterize_objects(
    objects: &[AnnotatedObject],
    width: usize,
    height: usize,
    labeling: Labeling,
) -> Rasterized {
    let mut out = Rasterized {
        mask: LabelMask::new(width, height),
        skipped_missing_polygon: 0,
        skipped_degenerate: 0,
        skipped_unlabeled: 0,
    };
    for obj in objects {
        let Some(label) = labeling.label_for(obj) else {
            out.skipped_unlabeled += 1;
            continue;
        };
        if obj.polygon.is_empty() {
            out.skipped_missing_polygon += 1;
            continue;
        }
        if obj.polygon.iter().all(|r| distinct_vertices(r) < 3) {
            out.skipped_degenerate += 1;
            continue;
        }
        fill_rings(&mut out.mask, &obj.polygon, label);
    }
    if out.skipped() > 0 {
        warn!(
            "rasterize: skipped {} object(s) ({} without polygon, {} degenerate, {} unlabeled)",
            out.skipped(),
            out.skipped_missing_polygon,
            out.skipped_degenerate,
            out.skipped_unlabeled
        );
    }
    out
}

fn distinct_vertices(ring: &Ring) -> usize {
    let mut seen: Vec<(f64, f64)> = Vec::with_capacity(ring.len());
    for &p in ring {
        if !seen.contains(&p) {
            seen.push(p);
        }
    }
    seen.len()
}

/// Even-odd scanline fill sampled at pixel centers.
pub fn fill_rings(mask: &mut LabelMask, rings: &[Ring], label: u8) {
    let (w, h) = (mask.width(), mask.height());
    let mut xs: Vec<f64> = Vec::new();
    for row in 0..h {
        let yc = row as f64 + 0.5;
        xs.clear();
        for ring in rings.iter().filter(|r| r.len() >= 2) {
            for i in 0..ring.len() {
                let (x0, y0) = ring[i];
                let (x1, y1) = ring[(i + 1) % ring.len()];
                // half-open in y so shared vertices are counted once
                if (y0 <= yc) != (y1 <= yc) {
                    xs.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
                }
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            // centers with span[0] <= col + 0.5 < span[1]
            let start = (span[0] - 0.5).ceil().max(0.0);
            let end = (span[1] - 0.5).ceil().min(w as f64);
            let (start, end) = (start as usize, end.max(0.0) as usize);
            for col in start..end {
                mask.set(col, row, label);
            }
        }
    }
}
