//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the code paths it checks.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// Tiny xorshift generator for test inputs.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1)
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

/// Box as (x, y, w, h).
pub type Rect = (f64, f64, f64, f64);

fn centers_in(lo: f64, hi: f64, n: usize, a: f64, b: f64) -> Vec<bool> {
    let cell = (hi - lo) / n as f64;
    (0..n)
        .map(|k| {
            let c = lo + (k as f64 + 0.5) * cell;
            a <= c && c < b
        })
        .collect()
}

/// IoU by counting cells of an `n x n` grid laid over the pair's union box
/// whose centers fall inside each box.
pub fn grid_iou(a: Rect, b: Rect, n: usize) -> f64 {
    let lox = a.0.min(b.0);
    let hix = (a.0 + a.2).max(b.0 + b.2);
    let loy = a.1.min(b.1);
    let hiy = (a.1 + a.3).max(b.1 + b.3);
    if hix <= lox || hiy <= loy {
        return 0.0;
    }
    let ax = centers_in(lox, hix, n, a.0, a.0 + a.2);
    let bx = centers_in(lox, hix, n, b.0, b.0 + b.2);
    let ay = centers_in(loy, hiy, n, a.1, a.1 + a.3);
    let by = centers_in(loy, hiy, n, b.1, b.1 + b.3);
    // a cell is inside a rectangle iff its column and its row both are
    let (mut ia, mut ib, mut ii) = (0u64, 0u64, 0u64);
    let cols = |f: &dyn Fn(usize) -> bool| (0..n).filter(|&k| f(k)).count() as u64;
    let ax_n = cols(&|k| ax[k]);
    let bx_n = cols(&|k| bx[k]);
    let ix_n = cols(&|k| ax[k] && bx[k]);
    for r in 0..n {
        if ay[r] {
            ia += ax_n;
        }
        if by[r] {
            ib += bx_n;
        }
        if ay[r] && by[r] {
            ii += ix_n;
        }
    }
    let union = ia + ib - ii;
    if union == 0 {
        0.0
    } else {
        ii as f64 / union as f64
    }
}

/// Continuous IoU from corners, written independently of the library.
pub fn rect_iou(a: Rect, b: Rect) -> f64 {
    let ix = ((a.0 + a.2).min(b.0 + b.2) - a.0.max(b.0)).max(0.0);
    let iy = ((a.1 + a.3).min(b.1 + b.3) - a.1.max(b.1)).max(0.0);
    let inter = ix * iy;
    let union = a.2 * a.3 + b.2 * b.3 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// One flood-filled region: label, pixel count, inclusive (min_col, min_row,
/// max_col, max_row).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub label: u8,
    pub pixels: usize,
    pub extent: (usize, usize, usize, usize),
    pub seed: (usize, usize),
}

/// Breadth-first flood fill started from every unvisited non-zero pixel in
/// scan order.
pub fn flood_fill(labels: &[u8], w: usize, h: usize, eight: bool) -> Vec<Region> {
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let steps4: &[(isize, isize)] = &[(-1, 0), (1, 0), (0, -1), (0, 1)];
    let steps8: &[(isize, isize)] = &[
        (-1, 0),
        (1, 0),
        (0, -1),
        (0, 1),
        (-1, -1),
        (-1, 1),
        (1, -1),
        (1, 1),
    ];
    let steps = if eight { steps8 } else { steps4 };
    for row in 0..h {
        for col in 0..w {
            let lab = labels[row * w + col];
            if lab == 0 || seen[row * w + col] {
                continue;
            }
            let mut q = VecDeque::from([(col, row)]);
            seen[row * w + col] = true;
            let mut region = Region {
                label: lab,
                pixels: 0,
                extent: (col, row, col, row),
                seed: (row, col),
            };
            while let Some((c, r)) = q.pop_front() {
                region.pixels += 1;
                let e = &mut region.extent;
                e.0 = e.0.min(c);
                e.1 = e.1.min(r);
                e.2 = e.2.max(c);
                e.3 = e.3.max(r);
                for &(dc, dr) in steps {
                    let (nc, nr) = (c as isize + dc, r as isize + dr);
                    if nc < 0 || nr < 0 || nc >= w as isize || nr >= h as isize {
                        continue;
                    }
                    let (nc, nr) = (nc as usize, nr as usize);
                    let i = nr * w + nc;
                    if !seen[i] && labels[i] == lab {
                        seen[i] = true;
                        q.push_back((nc, nr));
                    }
                }
            }
            out.push(region);
        }
    }
    out
}

/// Largest region per label as (x, y, w, h); ties go to the region whose
/// seed comes first in scan order.
pub fn largest_regions(labels: &[u8], w: usize, h: usize, eight: bool) -> BTreeMap<u8, Rect> {
    let mut best: BTreeMap<u8, Region> = BTreeMap::new();
    for r in flood_fill(labels, w, h, eight) {
        match best.get(&r.label) {
            Some(b) if b.pixels >= r.pixels => {}
            _ => {
                best.insert(r.label, r);
            }
        }
    }
    best.into_iter()
        .map(|(l, r)| {
            let (c0, r0, c1, r1) = r.extent;
            (
                l,
                (
                    c0 as f64,
                    r0 as f64,
                    (c1 - c0 + 1) as f64,
                    (r1 - r0 + 1) as f64,
                ),
            )
        })
        .collect()
}

/// Ground truth or prediction fed to the brute-force evaluator.
#[derive(Debug, Clone)]
pub struct OracleBox {
    pub image: u64,
    pub class: u32,
    pub rect: Rect,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleMetrics {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar: f64,
}

/// (AP, recall) of one class at one threshold, or None without ground truth.
pub fn brute_class(
    gts: &[OracleBox],
    preds: &[OracleBox],
    class: u32,
    thr: f64,
    max_det: usize,
) -> Option<(f64, f64)> {
    let g: Vec<&OracleBox> = gts.iter().filter(|b| b.class == class).collect();
    if g.is_empty() {
        return None;
    }
    let images: BTreeSet<u64> = g
        .iter()
        .map(|b| b.image)
        .chain(preds.iter().filter(|p| p.class == class).map(|p| p.image))
        .collect();
    // (score, hit) in image order, then rank order inside an image
    let mut outcomes: Vec<(f64, bool)> = Vec::new();
    for img in images {
        let gi: Vec<&&OracleBox> = g.iter().filter(|b| b.image == img).collect();
        let mut pi: Vec<&OracleBox> = preds
            .iter()
            .filter(|p| p.class == class && p.image == img)
            .collect();
        // insertion sort, descending score, stable
        for i in 1..pi.len() {
            let mut j = i;
            while j > 0 && pi[j - 1].score < pi[j].score {
                pi.swap(j - 1, j);
                j -= 1;
            }
        }
        pi.truncate(max_det);
        let mut used = vec![false; gi.len()];
        for p in pi {
            let mut best: Option<usize> = None;
            let mut best_iou = -1.0;
            for (k, gb) in gi.iter().enumerate() {
                if used[k] {
                    continue;
                }
                let v = rect_iou(p.rect, gb.rect);
                if v >= thr && v > best_iou {
                    best_iou = v;
                    best = Some(k);
                }
            }
            if let Some(k) = best {
                used[k] = true;
            }
            outcomes.push((p.score, best.is_some()));
        }
    }
    // stable descending sort by score
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && outcomes[order[j - 1]].0 < outcomes[order[j]].0 {
            order.swap(j - 1, j);
            j -= 1;
        }
    }
    let n_gt = g.len() as f64;
    let mut pts = Vec::new();
    let (mut tp, mut fp) = (0.0, 0.0);
    for &i in &order {
        if outcomes[i].1 {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        pts.push((tp / n_gt, tp / (tp + fp)));
    }
    // max precision among operating points reaching each recall level
    let mut sum = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let p = pts
            .iter()
            .filter(|(rc, _)| *rc >= r)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += p;
    }
    Some((sum / 101.0, tp / n_gt))
}

/// Macro-averaged metrics over classes with ground truth.
pub fn brute_evaluate(
    gts: &[OracleBox],
    preds: &[OracleBox],
    thresholds: &[f64],
    max_det: usize,
) -> OracleMetrics {
    let classes: BTreeSet<u32> = gts.iter().map(|b| b.class).collect();
    if classes.is_empty() {
        return OracleMetrics {
            ap: 0.0,
            ap50: 0.0,
            ap75: 0.0,
            ar: 0.0,
        };
    }
    let n = classes.len() as f64;
    let (mut ap, mut ar, mut ap50, mut ap75) = (0.0, 0.0, 0.0, 0.0);
    for &c in &classes {
        let sweep: Vec<(f64, f64)> = thresholds
            .iter()
            .map(|&t| brute_class(gts, preds, c, t, max_det).unwrap())
            .collect();
        ap += sweep.iter().map(|s| s.0).sum::<f64>() / thresholds.len() as f64;
        ar += sweep.iter().map(|s| s.1).sum::<f64>() / thresholds.len() as f64;
        ap50 += brute_class(gts, preds, c, 0.5, max_det).unwrap().0;
        ap75 += brute_class(gts, preds, c, 0.75, max_det).unwrap().0;
    }
    OracleMetrics {
        ap: ap / n,
        ap50: ap50 / n,
        ap75: ap75 / n,
        ar: ar / n,
    }
}

/// 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Maps each corner of a crop-local box through the crop placement, then
/// clips the corners to the source image.
pub fn restore_by_corners(
    local: Rect,
    crop: Rect,
    crop_size: (f64, f64),
    source: (f64, f64),
) -> Rect {
    let map = |px: f64, py: f64| {
        let x = crop.0 + px / crop_size.0 * crop.2;
        let y = crop.1 + py / crop_size.1 * crop.3;
        (x.clamp(0.0, source.0), y.clamp(0.0, source.1))
    };
    let (x0, y0) = map(local.0, local.1);
    let (x1, y1) = map(local.0 + local.2, local.1 + local.3);
    (x0, y0, x1 - x0, y1 - y0)
}
