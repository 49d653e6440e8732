use super::Area;
use crate::flowfield::ViewpointSample;
use crate::tiling::TileLayout;

pub const DEFAULT_FOV_DEG: f64 = 100.0;
pub const DEFAULT_MARGIN_DEG: f64 = 30.0;

/// Length of the overlap between `[a0, a1]` and `[b0, b1]`.
fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Which basic tiles of a `rows x cols` equirectangular grid overlap a
/// `span x span` degree window centred on `(yaw, pitch)`, row-major.
///
/// The window wraps across the +-180 yaw seam; vertically it is simply cut off
/// at the poles. Tiles that only touch the window's border do not count.
pub fn window_cells(rows: usize, cols: usize, yaw: f64, pitch: f64, span: f64) -> Vec<bool> {
    let cw = 360.0 / cols as f64;
    let rh = 180.0 / rows as f64;
    let half = span / 2.0;
    let (p0, p1) = (pitch - half, pitch + half);
    let col_hit: Vec<bool> = (0..cols)
        .map(|c| {
            if span >= 360.0 {
                return true;
            }
            let c0 = -180.0 + c as f64 * cw;
            let c1 = c0 + cw;
            [-360.0, 0.0, 360.0].iter().any(|shift| overlap(yaw - half + shift, yaw + half + shift, c0, c1) > 0.0)
        })
        .collect();
    let row_hit: Vec<bool> = (0..rows)
        .map(|r| {
            let top = 90.0 - r as f64 * rh;
            overlap(p0, p1, top - rh, top) > 0.0
        })
        .collect();
    (0..rows * cols).map(|i| row_hit[i / cols] && col_hit[i % cols]).collect()
}

/// Labels every rectangle of `layout` relative to the predicted gaze.
///
/// Core rectangles intersect the `fov x fov` window; surround rectangles
/// intersect the window widened by `margin` on every side but not the core
/// window; everything else is outside.
pub fn classify_areas(layout: &TileLayout, predicted: &ViewpointSample, fov: f64, margin: f64) -> Vec<Area> {
    let core = window_cells(layout.rows, layout.cols, predicted.yaw, predicted.pitch, fov);
    let wide = window_cells(layout.rows, layout.cols, predicted.yaw, predicted.pitch, fov + 2.0 * margin);
    layout
        .rects
        .iter()
        .map(|rect| {
            let hits = |mask: &[bool]| rect.cells().any(|(r, c)| mask[r * layout.cols + c]);
            if hits(&core) {
                Area::Core
            } else if hits(&wide) {
                Area::Surround
            } else {
                Area::Outside
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiling::TileRect;
    use proptest::prelude::*;

    fn grid() -> TileLayout {
        TileLayout::fixed_grid(12, 24)
    }

    #[test]
    fn full_window_is_all_core() {
        let vp = ViewpointSample::new(0.0, 0.0, 0.0);
        let labels = classify_areas(&grid(), &vp, 360.0, 30.0);
        assert!(labels.iter().all(|&a| a == Area::Core));
    }

    #[test]
    fn window_inside_one_rect() {
        // one big rect around the centre, fixed cells elsewhere
        let mut rects = vec![TileRect::new(5, 8, 9, 16)];
        for r in 1..=12 {
            for c in 1..=24 {
                if !(5..=8).contains(&r) || !(9..=16).contains(&c) {
                    rects.push(TileRect::new(r, r, c, c));
                }
            }
        }
        let layout = TileLayout { rows: 12, cols: 24, k: rects.len(), rects };
        layout.validate().unwrap();
        // fov 20 deg at the centre stays inside rows 5..8 (pitch 30..-30), cols 9..16 (yaw -60..60)
        let vp = ViewpointSample::new(0.0, 0.0, 0.0);
        let labels = classify_areas(&layout, &vp, 20.0, 15.0);
        assert_eq!(labels[0], Area::Core);
        assert_eq!(labels.iter().filter(|&&a| a == Area::Core).count(), 1);
        // the 50 deg window spans yaw -25..25 and pitch -25..25; it stays in the big rect
        assert_eq!(labels.iter().filter(|&&a| a == Area::Surround).count(), 0);
        // margin 25 -> 70 deg window, yaw/pitch -35..35 crosses into rows 4, 9 (pitch 45..30, -30..-45)
        let labels = classify_areas(&layout, &vp, 20.0, 25.0);
        let surround: Vec<&TileRect> =
            layout.rects.iter().zip(&labels).filter(|(_, &a)| a == Area::Surround).map(|(r, _)| r).collect();
        // rows 4 and 9, columns covering yaw -35..35 -> cols 10..15
        assert_eq!(surround.len(), 12);
        assert!(surround.iter().all(|r| (r.x1 == 4 || r.x1 == 9) && (10..=15).contains(&r.y1)));
    }

    #[test]
    fn window_wraps_across_seam() {
        let mask = window_cells(12, 24, 179.0, 0.0, 30.0);
        // yaw 164..194 -> columns 22, 23 on the right and 0 on the left
        let cols: Vec<usize> = (0..24).filter(|&c| mask[6 * 24 + c]).collect();
        assert_eq!(cols, vec![0, 22, 23]);
    }

    #[test]
    fn border_touching_tiles_are_excluded() {
        // yaw -15..15 exactly covers columns 11 and 12
        let mask = window_cells(12, 24, 0.0, 0.0, 30.0);
        let cols: Vec<usize> = (0..24).filter(|&c| mask[6 * 24 + c]).collect();
        assert_eq!(cols, vec![11, 12]);
    }

    proptest! {
        #[test]
        fn labels_are_total_and_core_monotone(
            yaw in -180.0f64..180.0, pitch in -90.0f64..=90.0,
            fov in 1.0f64..200.0, grow in 0.0f64..100.0, margin in 0.0f64..60.0,
        ) {
            let layout = grid();
            let vp = ViewpointSample::new(0.0, yaw, pitch);
            let small = classify_areas(&layout, &vp, fov, margin);
            let big = classify_areas(&layout, &vp, fov + grow, margin);
            prop_assert_eq!(small.len(), layout.rects.len());
            for (a, b) in small.iter().zip(&big) {
                if *a == Area::Core {
                    prop_assert_eq!(*b, Area::Core);
                }
            }
        }
    }
}
