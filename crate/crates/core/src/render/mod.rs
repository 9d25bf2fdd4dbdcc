//! Policy inputs: bird's-eye-view raster and text perception summary.

mod bev;
mod font;
mod text;

pub use bev::{bev_scene, encode_png, render_bev, BevOptions, BevScene, EGO_LABEL};
pub use text::{render_text, TextFilter, TextSummary};
