//! PSNR-OF: PSNR over the JND-masked error, plus per-tile scoring and the
//! per-tile efficiency that drives tiling.

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::flowfield::{Frame, ScalarMap};
use crate::perception::JndMap;

/// Score reported when the masked MSE is zero, and the ceiling for any score.
pub const DEFAULT_CAP_DB: f64 = 100.0;

/// Quality levels indexed from 0 (blank, nothing sent) upward in visual
/// quality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityLadder {
    levels: Vec<String>,
}

impl Default for QualityLadder {
    /// Blank plus five encoder steps, QP40 (lowest) through QP20 (highest).
    fn default() -> Self {
        QualityLadder {
            levels: ["blank", "qp40", "qp35", "qp30", "qp25", "qp20"].iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl QualityLadder {
    pub fn new(levels: Vec<String>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(input_err!("a quality ladder needs at least 2 levels"));
        }
        let mut seen = std::collections::HashSet::new();
        if !levels.iter().all(|l| seen.insert(l)) {
            return Err(input_err!("quality level names must be unique"));
        }
        Ok(QualityLadder { levels })
    }

    /// Number of levels including blank.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Index of the highest visual quality.
    pub fn top(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn names(&self) -> &[String] {
        &self.levels
    }
}

/// Per basic tile, the score (dB) and byte size at every quality level.
#[derive(Debug, Clone, PartialEq)]
pub struct TileScoreGrid {
    rows: usize,
    cols: usize,
    levels: usize,
    scores: Vec<f64>,
    sizes: Vec<u64>,
}

impl TileScoreGrid {
    /// `scores` and `sizes` are flattened `[row][col][level]`.
    pub fn new(rows: usize, cols: usize, levels: usize, scores: Vec<f64>, sizes: Vec<u64>) -> Result<Self> {
        let n = rows * cols * levels;
        if rows == 0 || cols == 0 || levels < 2 {
            return Err(input_err!("score grid needs positive dimensions and >= 2 levels"));
        }
        if scores.len() != n || sizes.len() != n {
            return Err(input_err!(
                "score grid {rows}x{cols}x{levels} needs {n} entries, got {} scores / {} sizes",
                scores.len(),
                sizes.len()
            ));
        }
        for (cell, (sc, sz)) in scores.chunks(levels).zip(sizes.chunks(levels)).enumerate() {
            if sc.iter().any(|s| !s.is_finite()) {
                return Err(input_err!("cell {cell}: non-finite score"));
            }
            if sz[0] != 0 {
                return Err(input_err!("cell {cell}: blank level must have size 0"));
            }
            if sc.windows(2).skip(1).any(|w| w[1] < w[0]) {
                return Err(input_err!("cell {cell}: scores must not decrease with quality"));
            }
            if sz.windows(2).any(|w| w[1] <= w[0]) {
                return Err(input_err!("cell {cell}: sizes must strictly increase with quality"));
            }
        }
        Ok(TileScoreGrid { rows, cols, levels, scores, sizes })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    #[inline]
    pub fn score(&self, row: usize, col: usize, level: usize) -> f64 {
        self.scores[(row * self.cols + col) * self.levels + level]
    }

    #[inline]
    pub fn size(&self, row: usize, col: usize, level: usize) -> u64 {
        self.sizes[(row * self.cols + col) * self.levels + level]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }
}

#[derive(Serialize, Deserialize)]
struct TileScoreGridWire {
    version: u32,
    rows: usize,
    cols: usize,
    levels: usize,
    scores: Vec<Vec<Vec<f64>>>,
    sizes: Vec<Vec<Vec<u64>>>,
}

const SCORE_GRID_VERSION: u32 = 1;

impl Serialize for TileScoreGrid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        fn nest<T: Copy>(flat: &[T], cols: usize, levels: usize) -> Vec<Vec<Vec<T>>> {
            flat.chunks(cols * levels).map(|row| row.chunks(levels).map(<[T]>::to_vec).collect()).collect()
        }
        TileScoreGridWire {
            version: SCORE_GRID_VERSION,
            rows: self.rows,
            cols: self.cols,
            levels: self.levels,
            scores: nest(&self.scores, self.cols, self.levels),
            sizes: nest(&self.sizes, self.cols, self.levels),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TileScoreGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = TileScoreGridWire::deserialize(d)?;
        if w.version != SCORE_GRID_VERSION {
            return Err(D::Error::custom(format!("unsupported score grid version {}", w.version)));
        }
        let scores = w.scores.into_iter().flatten().flatten().collect();
        let sizes = w.sizes.into_iter().flatten().flatten().collect();
        TileScoreGrid::new(w.rows, w.cols, w.levels, scores, sizes).map_err(|e| D::Error::custom(e.to_string()))
    }
}

fn check_dims(orig: &Frame, enc: &Frame, jnd: &JndMap) -> Result<()> {
    if orig.dims() != enc.dims() || orig.dims() != jnd.dims() {
        return Err(input_err!(
            "dimension mismatch: original {:?}, encoded {:?}, jnd {:?}",
            orig.dims(),
            enc.dims(),
            jnd.dims()
        ));
    }
    Ok(())
}

/// `(sgn(|I - I'| - JND) + 1) / 2`: 0 below threshold, 1 above, 0.5 on it.
#[inline]
pub fn visibility(diff: f64, threshold: f64) -> f64 {
    let d = diff - threshold;
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        0.0
    } else {
        0.5
    }
}

/// Per-pixel visibility of the coding error.
pub fn visibility_mask(orig: &Frame, enc: &Frame, jnd: &JndMap) -> Result<ScalarMap> {
    check_dims(orig, enc, jnd)?;
    let values = orig
        .pixels()
        .iter()
        .zip(enc.pixels())
        .zip(jnd.thresholds())
        .map(|((&a, &b), &t)| visibility(f64::from(a.abs_diff(b)), t))
        .collect();
    ScalarMap::new(orig.width(), orig.height(), values)
}

/// Sum of masked squared errors over the pixel rectangle `[x0, x1) x [y0, y1)`.
fn masked_sse(orig: &Frame, enc: &Frame, jnd: &JndMap, (x0, y0, x1, y1): (usize, usize, usize, usize)) -> f64 {
    let w = orig.width();
    let (po, pe, th) = (orig.pixels(), enc.pixels(), jnd.thresholds());
    let mut sse = 0.0;
    for y in y0..y1 {
        for i in y * w + x0..y * w + x1 {
            let diff = f64::from(po[i].abs_diff(pe[i]));
            let e = diff * visibility(diff, th[i]);
            sse += e * e;
        }
    }
    sse
}

fn psnr_from_mse(mse: f64, peak: f64, cap_db: f64) -> f64 {
    if mse <= 0.0 {
        return cap_db;
    }
    (20.0 * (peak / mse.sqrt()).log10()).min(cap_db)
}

/// Mean of the squared masked error.
pub fn mse_of(orig: &Frame, enc: &Frame, jnd: &JndMap) -> Result<f64> {
    check_dims(orig, enc, jnd)?;
    let n = (orig.width() * orig.height()) as f64;
    Ok(masked_sse(orig, enc, jnd, (0, 0, orig.width(), orig.height())) / n)
}

/// PSNR-OF in dB, clamped to `cap_db`.
pub fn psnr_of(orig: &Frame, enc: &Frame, jnd: &JndMap, cap_db: f64) -> Result<f64> {
    if !(cap_db > 0.0) {
        return Err(input_err!("cap_db must be positive, got {cap_db}"));
    }
    let mse = mse_of(orig, enc, jnd)?;
    Ok(psnr_from_mse(mse, orig.peak(), cap_db))
}

/// Textbook PSNR with the same cap, computed without any masking.
pub fn psnr(orig: &Frame, enc: &Frame, cap_db: f64) -> Result<f64> {
    if orig.dims() != enc.dims() {
        return Err(input_err!("dimension mismatch: {:?} vs {:?}", orig.dims(), enc.dims()));
    }
    let sse: f64 = orig
        .pixels()
        .iter()
        .zip(enc.pixels())
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum();
    let mse = sse / (orig.width() * orig.height()) as f64;
    Ok(psnr_from_mse(mse, orig.peak(), cap_db))
}

/// PSNR-OF of every basic tile at every level, flattened `[row][col][level]`.
///
/// `encoded[i]` is the frame at level `i + 1`; the blank level scores 0 dB.
/// Scores are made non-decreasing in level by carrying the running maximum
/// upward, so a tile never looks worse at a higher level.
pub fn tile_scores(
    orig: &Frame,
    encoded: &[Frame],
    jnd: &JndMap,
    ladder: &QualityLadder,
    cap_db: f64,
) -> Result<Vec<f64>> {
    let levels = ladder.len();
    if encoded.len() != levels - 1 {
        return Err(input_err!(
            "expected {} encoded frames (one per non-blank level), got {}",
            levels - 1,
            encoded.len()
        ));
    }
    for enc in encoded {
        check_dims(orig, enc, jnd)?;
    }
    let (rows, cols) = (crate::GRID_ROWS, crate::GRID_COLS);
    let tw = orig.width() / cols;
    let th = orig.height() / rows;
    let n = (tw * th) as f64;
    let mut out = vec![0.0; rows * cols * levels];
    for r in 0..rows {
        for c in 0..cols {
            let rect = (c * tw, r * th, (c + 1) * tw, (r + 1) * th);
            let cell = &mut out[(r * cols + c) * levels..(r * cols + c + 1) * levels];
            let mut best = 0.0f64;
            for (l, enc) in encoded.iter().enumerate() {
                let s = psnr_from_mse(masked_sse(orig, enc, jnd, rect) / n, orig.peak(), cap_db);
                best = best.max(s);
                cell[l + 1] = best;
            }
        }
    }
    Ok(out)
}

/// Average PSNR-OF gain per level between `l_low` and `l_high`, per cell
/// (row-major).
pub fn efficiency(grid: &TileScoreGrid, l_high: usize, l_low: usize) -> Result<Vec<f64>> {
    if l_high <= l_low {
        return Err(input_err!("l_high ({l_high}) must exceed l_low ({l_low})"));
    }
    if l_low == 0 || l_high >= grid.levels {
        return Err(input_err!("efficiency levels must be non-blank and below {}, got {l_low}..{l_high}", grid.levels));
    }
    let span = (l_high - l_low) as f64;
    Ok((0..grid.rows * grid.cols)
        .map(|i| {
            let cell = &grid.scores[i * grid.levels..(i + 1) * grid.levels];
            (cell[l_high] - cell[l_low]) / span
        })
        .collect())
}

/// 3x3 box blur, edges clamped, rounded to nearest.
fn box_blur(frame: &Frame) -> Frame {
    let (w, h) = frame.dims();
    let p = frame.pixels();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0u32;
            for dy in [-1isize, 0, 1] {
                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                for dx in [-1isize, 0, 1] {
                    let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    sum += u32::from(p[yy * w + xx]);
                }
            }
            out.push(((sum + 4) / 9) as u16);
        }
    }
    Frame::new(w, h, frame.bit_depth(), out).expect("blur preserves range")
}

/// Stand-in for a real encoder: `(6 - level) / 2` box blurs followed by
/// mid-rise quantization with step `2^(bit_depth - 1 - level)`.
///
/// Distortion falls monotonically with `level` in `1..=5`.
pub fn synthetic_encode(frame: &Frame, level: usize) -> Result<Frame> {
    if !(1..=5).contains(&level) {
        return Err(input_err!("synthetic encoder supports levels 1..=5, got {level}"));
    }
    let mut f = frame.clone();
    for _ in 0..(6 - level) / 2 {
        f = box_blur(&f);
    }
    let shift = frame.bit_depth() as i64 - 1 - level as i64;
    if shift <= 0 {
        return Ok(f);
    }
    let step = 1u32 << shift;
    let peak = (1u32 << frame.bit_depth()) - 1;
    let pixels = f.pixels().iter().map(|&p| ((u32::from(p) / step) * step + step / 2).min(peak) as u16).collect();
    Frame::new(f.width(), f.height(), f.bit_depth(), pixels)
}
