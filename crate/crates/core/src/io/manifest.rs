use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Error, Result};
use crate::qoe::{QualityLadder, TileScoreGrid};
use crate::tiling::TileLayout;

pub const MANIFEST_VERSION: u32 = 1;

/// Scores for one chunk: JND-aware and plain PSNR, same tile sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkGrids {
    pub jnd: TileScoreGrid,
    pub plain: TileScoreGrid,
}

/// Everything a session needs to know about one encoded video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoManifest {
    pub version: u32,
    pub video_id: String,
    pub chunk_count: usize,
    /// Seconds of content per chunk.
    pub chunk_duration: f64,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub ladder: QualityLadder,
    pub layout: TileLayout,
    pub chunks: Vec<ChunkGrids>,
}

impl VideoManifest {
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("unsupported manifest version {}", self.version)));
        }
        if self.chunk_count == 0 || self.chunks.len() != self.chunk_count {
            return Err(input_err!("manifest declares {} chunks but lists {}", self.chunk_count, self.chunks.len()));
        }
        if !(self.chunk_duration > 0.0 && self.chunk_duration.is_finite()) {
            return Err(input_err!("chunk duration must be positive"));
        }
        QualityLadder::new(self.ladder.names().to_vec())?;
        self.layout.validate()?;
        for (i, c) in self.chunks.iter().enumerate() {
            for g in [&c.jnd, &c.plain] {
                if (g.rows(), g.cols()) != (self.layout.rows, self.layout.cols) || g.levels() != self.ladder.len() {
                    return Err(input_err!(
                        "chunk {i}: score grid {}x{}x{} does not match layout {}x{} with {} levels",
                        g.rows(),
                        g.cols(),
                        g.levels(),
                        self.layout.rows,
                        self.layout.cols,
                        self.ladder.len()
                    ));
                }
            }
            if c.jnd.sizes() != c.plain.sizes() {
                return Err(input_err!("chunk {i}: jnd and plain grids disagree on tile sizes"));
            }
        }
        Ok(())
    }

    /// Seconds of content.
    pub fn duration(&self) -> f64 {
        self.chunk_count as f64 * self.chunk_duration
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: VideoManifest = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
