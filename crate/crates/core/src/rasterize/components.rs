use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::LabelMask;
use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Pixel adjacency used when grouping same-label pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::Config(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

/// Pixel extent of a component, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub min_col: usize,
    pub min_row: usize,
    pub max_col: usize,
    pub max_row: usize,
}

impl PixelRect {
    fn point(col: usize, row: usize) -> Self {
        PixelRect {
            min_col: col,
            min_row: row,
            max_col: col,
            max_row: row,
        }
    }

    fn include(&mut self, col: usize, row: usize) {
        self.min_col = self.min_col.min(col);
        self.min_row = self.min_row.min(row);
        self.max_col = self.max_col.max(col);
        self.max_row = self.max_row.max(row);
    }

    pub fn area(&self) -> usize {
        (self.max_col - self.min_col + 1) * (self.max_row - self.min_row + 1)
    }

    /// Continuous box covering the pixels.
    pub fn to_bbox(&self) -> BBox {
        BBox {
            x: self.min_col as f64,
            y: self.min_row as f64,
            w: (self.max_col - self.min_col + 1) as f64,
            h: (self.max_row - self.min_row + 1) as f64,
        }
    }
}

/// A maximal connected region of one non-zero label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub label: u8,
    pub pixel_count: usize,
    pub rect: PixelRect,
    /// First pixel of the component in row-major scan order, as (row, col).
    pub first_pixel: (usize, usize),
}

impl Component {
    pub fn bbox(&self) -> BBox {
        self.rect.to_bbox()
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so roots stay in scan order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Labels every same-label connected region with label >= 1.
///
/// Output is sorted by label, then pixel count descending, then the top-left
/// corner of the box (row, then column), then the first scanned pixel.
pub fn connected_components(mask: &LabelMask, connectivity: Connectivity) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let labels = mask.labels();
    const NONE: u32 = u32::MAX;
    let mut provisional = vec![NONE; w * h];
    let mut sets = DisjointSet { parent: Vec::new() };

    // first pass: provisional ids from already-visited neighbors
    for row in 0..h {
        for col in 0..w {
            let idx = row * w + col;
            let lab = labels[idx];
            if lab == 0 {
                continue;
            }
            let mut neighbors = [NONE; 4];
            if col > 0 && labels[idx - 1] == lab {
                neighbors[0] = provisional[idx - 1];
            }
            if row > 0 {
                let up = idx - w;
                if labels[up] == lab {
                    neighbors[1] = provisional[up];
                }
                if connectivity == Connectivity::Eight {
                    if col > 0 && labels[up - 1] == lab {
                        neighbors[2] = provisional[up - 1];
                    }
                    if col + 1 < w && labels[up + 1] == lab {
                        neighbors[3] = provisional[up + 1];
                    }
                }
            }
            let mut id = NONE;
            for &n in neighbors.iter().filter(|&&n| n != NONE) {
                if id == NONE {
                    id = n;
                } else {
                    sets.union(id, n);
                }
            }
            if id == NONE {
                id = sets.parent.len() as u32;
                sets.parent.push(id);
            }
            provisional[idx] = id;
        }
    }

    // second pass: accumulate per root
    let mut by_root: BTreeMap<u32, Component> = BTreeMap::new();
    for row in 0..h {
        for col in 0..w {
            let idx = row * w + col;
            if provisional[idx] == NONE {
                continue;
            }
            let root = sets.find(provisional[idx]);
            by_root
                .entry(root)
                .and_modify(|c| {
                    c.pixel_count += 1;
                    c.rect.include(col, row);
                })
                .or_insert(Component {
                    label: labels[idx],
                    pixel_count: 1,
                    rect: PixelRect::point(col, row),
                    first_pixel: (row, col),
                });
        }
    }

    let mut out: Vec<Component> = by_root.into_values().collect();
    out.sort_by(|a, b| {
        a.label
            .cmp(&b.label)
            .then(b.pixel_count.cmp(&a.pixel_count))
            .then((a.rect.min_row, a.rect.min_col).cmp(&(b.rect.min_row, b.rect.min_col)))
            .then(a.first_pixel.cmp(&b.first_pixel))
    });
    out
}

/// Box of the largest component of each label present in the mask.
pub fn largest_component_boxes(mask: &LabelMask, connectivity: Connectivity) -> BTreeMap<u8, BBox> {
    let mut out = BTreeMap::new();
    // sorted order puts the winner first within each label
    for c in connected_components(mask, connectivity) {
        out.entry(c.label).or_insert_with(|| c.bbox());
    }
    out
}
