//! Per-rectangle quality selection inside each area's byte budget.
//!
//! This is a multiple-choice knapsack: each rectangle picks exactly one level,
//! the total size must fit the budget, and the summed score is maximized. The
//! DP keeps, after each rectangle, the Pareto frontier of (bytes, score)
//! partial assignments; dominated states can never complete into a better
//! solution, so the frontier DP is exact. Very large instances fall back to
//! one state per cost bucket.

use super::Area;
use crate::qoe::TileScoreGrid;
use crate::tiling::TileLayout;

/// One selectable level for a rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelOption {
    pub size: u64,
    pub score: f64,
}

/// When a stage could produce more than this many states, the DP keeps only
/// the best score per cost bucket, `THIN_BUCKETS` buckets across the budget.
/// Small instances never reach it, so they are solved exactly.
const MAX_FRONTIER: usize = 1 << 12;
const THIN_BUCKETS: u64 = 1 << 8;

#[derive(Clone, Copy)]
struct State {
    cost: u64,
    value: f64,
    parent: u32,
    choice: u8,
}

/// Chooses one option per item to maximize total score within `budget`.
///
/// Returns the chosen option index per item. Items whose options all exceed
/// the budget fall back to option 0; callers put the zero-size blank level
/// there so the fallback is always feasible.
pub fn knapsack(options: &[Vec<LevelOption>], budget: u64) -> Vec<usize> {
    let best_each: Vec<usize> = options
        .iter()
        .map(|opts| {
            (0..opts.len())
                .max_by(|&a, &b| opts[a].score.total_cmp(&opts[b].score).then(opts[b].size.cmp(&opts[a].size)))
                .unwrap_or(0)
        })
        .collect();
    let unconstrained: u64 = best_each.iter().zip(options).map(|(&i, o)| o.get(i).map_or(0, |o| o.size)).sum();
    if unconstrained <= budget {
        return best_each;
    }
    let width = (budget / THIN_BUCKETS).max(1);
    let mut stages: Vec<Vec<State>> = Vec::with_capacity(options.len() + 1);
    stages.push(vec![State { cost: 0, value: 0.0, parent: 0, choice: 0 }]);
    // once a stage overflows, the rest of the instance stays bucketed
    let mut thinning = false;
    for opts in options {
        let prev = stages.last().expect("seeded");
        let candidates = prev.iter().enumerate().flat_map(|(pi, s)| {
            opts.iter().enumerate().filter_map(move |(oi, o)| {
                let cost = s.cost.checked_add(o.size).filter(|&c| c <= budget)?;
                Some(State { cost, value: s.value + o.score, parent: pi as u32, choice: oi as u8 })
            })
        });
        thinning |= prev.len() * opts.len() > MAX_FRONTIER;
        let mut frontier =
            if thinning { bucketed(candidates, budget / width + 1, width) } else { exact(candidates.collect()) };
        if frontier.is_empty() {
            // nothing fits; keep every partial assignment and force option 0
            frontier = prev
                .iter()
                .enumerate()
                .map(|(pi, s)| State { cost: s.cost, value: s.value, parent: pi as u32, choice: 0 })
                .collect();
        }
        stages.push(frontier);
    }
    let last = stages.last().expect("seeded");
    // frontier values increase with cost, so the best is the last state
    let mut idx = last.len() - 1;
    let mut picks = vec![0; options.len()];
    for stage in (1..stages.len()).rev() {
        let s = stages[stage][idx];
        picks[stage - 1] = usize::from(s.choice);
        idx = s.parent as usize;
    }
    picks
}

fn pareto(sorted: impl IntoIterator<Item = State>) -> Vec<State> {
    let mut frontier: Vec<State> = Vec::new();
    for s in sorted {
        if frontier.last().is_none_or(|l| s.value > l.value) {
            frontier.push(s);
        }
    }
    frontier
}

fn exact(mut next: Vec<State>) -> Vec<State> {
    next.sort_by(|a, b| a.cost.cmp(&b.cost).then(b.value.total_cmp(&a.value)));
    pareto(next)
}

/// Best state per `width`-wide cost bucket, then the Pareto filter.
fn bucketed(candidates: impl Iterator<Item = State>, buckets: u64, width: u64) -> Vec<State> {
    let mut best: Vec<Option<State>> = vec![None; buckets as usize];
    for s in candidates {
        let slot = &mut best[(s.cost / width) as usize];
        match slot {
            Some(b) if b.value > s.value || (b.value == s.value && b.cost <= s.cost) => {}
            _ => *slot = Some(s),
        }
    }
    pareto(best.into_iter().flatten())
}

/// Options for every rectangle of `layout`: the summed size and summed cell
/// score of its member tiles at each level.
pub fn rect_options(grid: &TileScoreGrid, layout: &TileLayout) -> Vec<Vec<LevelOption>> {
    layout
        .rects
        .iter()
        .map(|rect| {
            (0..grid.levels())
                .map(|l| {
                    let mut size = 0;
                    let mut score = 0.0;
                    for (r, c) in rect.cells() {
                        size += grid.size(r, c, l);
                        score += grid.score(r, c, l);
                    }
                    LevelOption { size, score }
                })
                .collect()
        })
        .collect()
}

/// Quality level per rectangle, optimizing each area independently within its
/// budget (`budgets` indexed by [`Area::index`]).
pub fn allocate_tiles(labels: &[Area], budgets: [u64; 3], grid: &TileScoreGrid, layout: &TileLayout) -> Vec<usize> {
    allocate_with_options(labels, budgets, &rect_options(grid, layout))
}

pub(crate) fn allocate_with_options(labels: &[Area], budgets: [u64; 3], options: &[Vec<LevelOption>]) -> Vec<usize> {
    let mut levels = vec![0; labels.len()];
    for area in Area::ALL {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == area).collect();
        if members.is_empty() {
            continue;
        }
        let opts: Vec<Vec<LevelOption>> = members.iter().map(|&i| options[i].clone()).collect();
        for (&i, pick) in members.iter().zip(knapsack(&opts, budgets[area.index()])) {
            levels[i] = pick;
        }
    }
    levels
}
