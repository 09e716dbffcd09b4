//! Trajectory and clustering metrics.

mod dtw;
mod silhouette;

pub use dtw::{dtw, nearest_dtw};
pub use silhouette::{silhouette, silhouette_samples};
