use std::path::Path;

use image::GrayImage;

use crate::error::{Error, Result};

/// Row-major grid of class labels; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize) -> Self {
        LabelMask {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    pub fn from_labels(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Integrity(format!(
                "mask of {width}x{height} needs {} labels, got {}",
                width * height,
                labels.len()
            )));
        }
        Ok(LabelMask {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, label: u8) {
        self.labels[row * self.width + col] = label;
    }

    pub fn max_label(&self) -> u8 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Reads a single-channel 8-bit image; pixel values are the labels.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        if img.color() != image::ColorType::L8 {
            return Err(Error::Integrity(format!(
                "{}: label masks must be 8-bit single-channel, found {:?}",
                path.display(),
                img.color()
            )));
        }
        let gray = img.into_luma8();
        let (w, h) = gray.dimensions();
        LabelMask::from_labels(w as usize, h as usize, gray.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = GrayImage::from_raw(self.width as u32, self.height as u32, self.labels.clone())
            .expect("buffer length matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}
