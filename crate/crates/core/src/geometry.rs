//! Axis-aligned box arithmetic.
//!
//! Boxes use continuous pixel coordinates with the origin at the top-left
//! corner of the image, stored as `x, y, width, height` like COCO files. A
//! pixel `(col, row)` covers `[col, col + 1) x [row, row + 1)`, so a box
//! extracted from a mask spans whole pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    /// Builds a box, rejecting negative or non-finite extents.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::Range(format!("non-finite box [{x}, {y}, {w}, {h}]")));
        }
        if w < 0.0 || h < 0.0 {
            return Err(Error::Range(format!(
                "negative box extent [{x}, {y}, {w}, {h}]"
            )));
        }
        Ok(BBox { x, y, w, h })
    }

    /// Box spanning two corners given in any order.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BBox {
            x: x0.min(x1),
            y: y0.min(y1),
            w: (x1 - x0).abs(),
            h: (y1 - y0).abs(),
        }
    }

    pub fn x2(&self) -> f64 {
        self.x + self.w
    }

    pub fn y2(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        BBox {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = (self.x2().min(other.x2()) - self.x.max(other.x)).max(0.0);
        let ih = (self.y2().min(other.y2()) - self.y.max(other.y)).max(0.0);
        iw * ih
    }

    /// Clips the box to `[0, width] x [0, height]`. A box entirely outside
    /// collapses to a zero-area box on the nearest border.
    pub fn clamp_to(&self, width: f64, height: f64) -> Self {
        let x0 = self.x.clamp(0.0, width);
        let y0 = self.y.clamp(0.0, height);
        let x1 = self.x2().clamp(0.0, width);
        let y1 = self.y2().clamp(0.0, height);
        BBox {
            x: x0,
            y: y0,
            w: (x1 - x0).max(0.0),
            h: (y1 - y0).max(0.0),
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

/// Intersection over union; zero when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Scales `x, w` by `to.0 / from.0` and `y, h` by `to.1 / from.1`.
pub fn rescale_box(b: &BBox, from: (f64, f64), to: (f64, f64)) -> BBox {
    let sx = to.0 / from.0;
    let sy = to.1 / from.1;
    BBox {
        x: b.x * sx,
        y: b.y * sy,
        w: b.w * sx,
        h: b.h * sy,
    }
}

/// Placement of a cropped and resized region inside its source image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropFrame {
    crop_box: BBox,
    source_size: (f64, f64),
    crop_size: (f64, f64),
}

impl CropFrame {
    /// `crop_box` is clipped to the source image; `crop_size` is the size of
    /// the raster the crop was resized to and must be at least 1 on each axis.
    pub fn new(crop_box: BBox, source_size: (f64, f64), crop_size: (f64, f64)) -> Result<Self> {
        if !(source_size.0 >= 1.0 && source_size.1 >= 1.0) {
            return Err(Error::Range(format!(
                "source size {source_size:?} must be at least 1x1"
            )));
        }
        if !(crop_size.0 >= 1.0 && crop_size.1 >= 1.0) {
            return Err(Error::Range(format!(
                "crop size {crop_size:?} must be at least 1x1"
            )));
        }
        Ok(CropFrame {
            crop_box: crop_box.clamp_to(source_size.0, source_size.1),
            source_size,
            crop_size,
        })
    }

    /// Frame whose crop is the whole image at native resolution.
    pub fn identity(width: f64, height: f64) -> Result<Self> {
        CropFrame::new(
            BBox {
                x: 0.0,
                y: 0.0,
                w: width,
                h: height,
            },
            (width, height),
            (width, height),
        )
    }

    pub fn crop_box(&self) -> BBox {
        self.crop_box
    }

    pub fn source_size(&self) -> (f64, f64) {
        self.source_size
    }

    pub fn crop_size(&self) -> (f64, f64) {
        self.crop_size
    }

    /// Maps a point from crop-raster coordinates to source-image coordinates.
    pub fn point_to_image(&self, px: f64, py: f64) -> (f64, f64) {
        (
            self.crop_box.x + px * self.crop_box.w / self.crop_size.0,
            self.crop_box.y + py * self.crop_box.h / self.crop_size.1,
        )
    }

    /// Maps a point from source-image coordinates into the crop raster.
    pub fn point_to_local(&self, px: f64, py: f64) -> (f64, f64) {
        let sx = if self.crop_box.w > 0.0 {
            self.crop_size.0 / self.crop_box.w
        } else {
            0.0
        };
        let sy = if self.crop_box.h > 0.0 {
            self.crop_size.1 / self.crop_box.h
        } else {
            0.0
        };
        ((px - self.crop_box.x) * sx, (py - self.crop_box.y) * sy)
    }
}

/// Maps a crop-local box back onto the source image, clipped to its bounds.
pub fn restore_to_image(local: &BBox, frame: &CropFrame) -> BBox {
    let scaled = rescale_box(local, frame.crop_size, (frame.crop_box.w, frame.crop_box.h));
    scaled
        .translate(frame.crop_box.x, frame.crop_box.y)
        .clamp_to(frame.source_size.0, frame.source_size.1)
}
