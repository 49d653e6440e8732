//! Versatile-size tiling: groups basic tiles into K rectangles whose members
//! have similar PSNR-OF efficiency.
//!
//! Starting from one rectangle covering the grid, every step applies the
//! single best guillotine cut among all current rectangles, where "best" means
//! the largest drop in within-rectangle sum of squared deviations. K - 1 steps
//! produce K rectangles.

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};

/// A rectangle of basic tiles. Rows `x1..=x2` and columns `y1..=y2`, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileRect {
    pub x1: usize,
    pub x2: usize,
    pub y1: usize,
    pub y2: usize,
}

impl TileRect {
    pub fn new(x1: usize, x2: usize, y1: usize, y2: usize) -> Self {
        TileRect { x1, x2, y1, y2 }
    }

    /// The whole `rows x cols` grid.
    pub fn full(rows: usize, cols: usize) -> Self {
        TileRect { x1: 1, x2: rows, y1: 1, y2: cols }
    }

    pub fn height(&self) -> usize {
        self.x2 + 1 - self.x1
    }

    pub fn width(&self) -> usize {
        self.y2 + 1 - self.y1
    }

    pub fn cell_count(&self) -> usize {
        self.height() * self.width()
    }

    pub fn is_valid_in(&self, rows: usize, cols: usize) -> bool {
        self.x1 >= 1 && self.x1 <= self.x2 && self.x2 <= rows && self.y1 >= 1 && self.y1 <= self.y2 && self.y2 <= cols
    }

    /// Zero-based `(row, col)` of every member cell.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.x1 - 1..self.x2).flat_map(move |r| (self.y1 - 1..self.y2).map(move |c| (r, c)))
    }

    /// The two halves produced by `cut`.
    pub fn split(&self, cut: &Cut) -> (TileRect, TileRect) {
        match cut.direction {
            CutDirection::Horizontal => {
                (TileRect { x2: cut.position, ..*self }, TileRect { x1: cut.position + 1, ..*self })
            }
            CutDirection::Vertical => {
                (TileRect { y2: cut.position, ..*self }, TileRect { y1: cut.position + 1, ..*self })
            }
        }
    }
}

/// Per-cell values over a `rows x cols` grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl EfficiencyGrid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(input_err!("efficiency grid {rows}x{cols} needs {} values, got {}", rows * cols, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(input_err!("efficiency values must be finite"));
        }
        Ok(EfficiencyGrid { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutDirection {
    /// Splits rows: the first half keeps rows `x1..=position`.
    Horizontal,
    /// Splits columns: the first half keeps columns `y1..=position`.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cut {
    pub direction: CutDirection,
    /// Last row (horizontal) or column (vertical) of the first half, 1-based.
    pub position: usize,
    /// Parent sum of squares minus the children's.
    pub gain: f64,
}

/// Relative tolerance under which two gains count as a tie.
const GAIN_TOL: f64 = 1e-9;

fn gain_beats(a: f64, b: f64) -> bool {
    a > b + GAIN_TOL * (1.0 + a.abs().max(b.abs()))
}

fn gain_ties(a: f64, b: f64) -> bool {
    !gain_beats(a, b) && !gain_beats(b, a)
}

/// Population variance of the values in `rect`, times their count: the
/// within-rectangle sum of squared deviations.
pub fn rect_variance(rect: &TileRect, grid: &EfficiencyGrid) -> f64 {
    let n = rect.cell_count() as f64;
    if rect.cell_count() <= 1 {
        return 0.0;
    }
    let mean = rect.cells().map(|(r, c)| grid.get(r, c)).sum::<f64>() / n;
    rect.cells()
        .map(|(r, c)| {
            let d = grid.get(r, c) - mean;
            d * d
        })
        .sum()
}

/// The cut of `rect` that most reduces the summed variance of its halves.
///
/// Horizontal positions are tried before vertical ones, each in ascending
/// order, and a later candidate only wins with a strictly larger gain. Returns
/// `None` for a single cell.
pub fn get_best_cut(rect: &TileRect, grid: &EfficiencyGrid) -> Option<Cut> {
    let parent = rect_variance(rect, grid);
    let horizontal = (rect.x1..rect.x2).map(|p| (CutDirection::Horizontal, p));
    let vertical = (rect.y1..rect.y2).map(|p| (CutDirection::Vertical, p));
    let mut best: Option<Cut> = None;
    for (direction, position) in horizontal.chain(vertical) {
        let mut cut = Cut { direction, position, gain: 0.0 };
        let (a, b) = rect.split(&cut);
        cut.gain = parent - rect_variance(&a, grid) - rect_variance(&b, grid);
        if best.is_none_or(|b| gain_beats(cut.gain, b.gain)) {
            best = Some(cut);
        }
    }
    best
}

/// A partition of the basic grid into rectangles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileLayout {
    pub rows: usize,
    pub cols: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub rects: Vec<TileRect>,
}

impl TileLayout {
    /// Every basic tile on its own.
    pub fn fixed_grid(rows: usize, cols: usize) -> Self {
        let rects = (1..=rows).flat_map(|r| (1..=cols).map(move |c| TileRect::new(r, r, c, c))).collect::<Vec<_>>();
        TileLayout { rows, cols, k: rects.len(), rects }
    }

    /// Checks that the rectangles are in bounds, disjoint, and cover the grid.
    pub fn validate(&self) -> Result<()> {
        let mut owner = vec![false; self.rows * self.cols];
        for rect in &self.rects {
            if !rect.is_valid_in(self.rows, self.cols) {
                return Err(input_err!("rect {rect:?} lies outside the {}x{} grid", self.rows, self.cols));
            }
            for (r, c) in rect.cells() {
                let slot = &mut owner[r * self.cols + c];
                if *slot {
                    return Err(input_err!("cell ({}, {}) is covered twice", r + 1, c + 1));
                }
                *slot = true;
            }
        }
        if let Some(i) = owner.iter().position(|o| !o) {
            return Err(input_err!("cell ({}, {}) is not covered", i / self.cols + 1, i % self.cols + 1));
        }
        Ok(())
    }

    /// Index of the owning rectangle for each cell, row-major.
    pub fn cell_owners(&self) -> Vec<usize> {
        let mut owner = vec![usize::MAX; self.rows * self.cols];
        for (i, rect) in self.rects.iter().enumerate() {
            for (r, c) in rect.cells() {
                owner[r * self.cols + c] = i;
            }
        }
        owner
    }

    /// Sum of [`rect_variance`] over all rectangles.
    pub fn total_variance(&self, grid: &EfficiencyGrid) -> f64 {
        self.rects.iter().map(|r| rect_variance(r, grid)).sum()
    }
}

/// Picks which leaf to cut next: largest gain, then horizontal before
/// vertical, then smaller position, then the rectangle nearer the top-left.
fn preferred(a: (&TileRect, &Cut), b: (&TileRect, &Cut)) -> bool {
    let (ra, ca) = a;
    let (rb, cb) = b;
    if gain_beats(ca.gain, cb.gain) {
        return true;
    }
    if !gain_ties(ca.gain, cb.gain) {
        return false;
    }
    (ca.direction, ca.position, ra.x1, ra.y1) < (cb.direction, cb.position, rb.x1, rb.y1)
}

/// Greedily splits the grid into `k` rectangles.
pub fn build_layout(grid: &EfficiencyGrid, k: usize) -> Result<TileLayout> {
    build_layout_traced(grid, k).map(|(layout, _)| layout)
}

/// [`build_layout`], also returning the `(rect, cut)` applied at each step.
pub fn build_layout_traced(grid: &EfficiencyGrid, k: usize) -> Result<(TileLayout, Vec<(TileRect, Cut)>)> {
    let cells = grid.rows * grid.cols;
    if k == 0 || k > cells {
        return Err(input_err!("K must be in 1..={cells}, got {k}"));
    }
    let root = TileRect::full(grid.rows, grid.cols);
    let mut leaves: Vec<(TileRect, Option<Cut>)> = vec![(root, get_best_cut(&root, grid))];
    let mut steps = Vec::with_capacity(k - 1);
    while leaves.len() < k {
        let mut pick: Option<usize> = None;
        for (i, (rect, cut)) in leaves.iter().enumerate() {
            let Some(cut) = cut else { continue };
            let better = match pick {
                None => true,
                Some(j) => {
                    let (prect, pcut) = &leaves[j];
                    preferred((rect, cut), (prect, pcut.as_ref().expect("picked leaf has a cut")))
                }
            };
            if better {
                pick = Some(i);
            }
        }
        // k <= cells guarantees some leaf is still larger than one cell
        let i = pick.expect("a splittable leaf remains");
        let (rect, cut) = leaves.swap_remove(i);
        let cut = cut.expect("picked leaf has a cut");
        let (a, b) = rect.split(&cut);
        leaves.push((a, get_best_cut(&a, grid)));
        leaves.push((b, get_best_cut(&b, grid)));
        steps.push((rect, cut));
    }
    let mut rects: Vec<TileRect> = leaves.into_iter().map(|(r, _)| r).collect();
    rects.sort_by_key(|r| (r.x1, r.y1));
    Ok((TileLayout { rows: grid.rows, cols: grid.cols, k, rects }, steps))
}
