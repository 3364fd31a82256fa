//! Polygon rasterization and mask-to-box conversion.

mod components;
mod fill;
mod mask;

pub use components::{
    connected_components, largest_component_boxes, Component, Connectivity, PixelRect,
};
pub use fill::{fill_rings, rasterize_objects, Labeling, Rasterized, OTHER_QUADRANT};
pub use mask::LabelMask;
