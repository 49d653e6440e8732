//! Perceptually-aware adaptive streaming for tiled 360-degree video.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`flowfield`] estimates block motion between consecutive frames and turns
//!    it into relative-velocity and relative-depth maps around the viewer's gaze.
//! 2. [`perception`] converts those maps into per-pixel just-noticeable-difference
//!    thresholds, and [`qoe`] scores encoded frames with a PSNR that ignores
//!    sub-threshold errors (PSNR-OF).
//! 3. [`tiling`] groups the 12x24 basic tiles into K rectangles of similar
//!    quality-per-level efficiency.
//! 4. [`abr`] picks a quality level for each of the core, surround and outside
//!    areas with an actor-critic policy, refined per tile by a knapsack DP, and
//!    [`sim`] replays bandwidth and viewpoint traces to evaluate controllers.
//!
//! [`io`] holds the file formats and synthetic data generators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod abr;
pub mod error;
pub mod flowfield;
pub mod io;
pub mod perception;
pub mod qoe;
pub mod sim;
pub mod tiling;

pub use abr::{AbrState, Action, Area, ChunkOutcome, PolicyParams};
pub use error::{Error, Result};
pub use flowfield::{FlowField, Frame, ScalarMap, ViewpointSample};
pub use perception::{JndConfig, JndMap};
pub use qoe::{QualityLadder, TileScoreGrid};
pub use sim::{BandwidthTrace, SessionConfig, SessionLog, ViewpointTrace};
pub use tiling::{TileLayout, TileRect};

/// Rows of the basic tile grid.
pub const GRID_ROWS: usize = 12;
/// Columns of the basic tile grid.
pub const GRID_COLS: usize = 24;
