//! Bird's-eye-view rasters and the text that accompanies them.

pub mod font;
pub mod message;
pub mod raster;
pub mod render;

pub use message::{compose_human_message, MessagePurpose, MessageSettings};
pub use raster::{ImageError, RgbImage};
pub use render::{render_bev, render_view, BevImage, BevStyle, BevView, LegendEntry, ObjectKind};
