//! Block-matching motion estimation and the motion-derived maps that feed the
//! JND model: relative viewpoint velocity and relative depth.

use crate::error::{input_err, Result};

/// A single-channel image in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    bit_depth: u32,
    pixels: Vec<u16>,
}

impl Frame {
    /// Builds a frame, checking that the dimensions tile the 12x24 grid and
    /// that every pixel fits in `bit_depth` bits.
    pub fn new(width: usize, height: usize, bit_depth: u32, pixels: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(input_err!("frame dimensions must be positive, got {width}x{height}"));
        }
        if !width.is_multiple_of(crate::GRID_COLS) || !height.is_multiple_of(crate::GRID_ROWS) {
            return Err(input_err!(
                "frame {width}x{height} does not divide into the {}x{} tile grid",
                crate::GRID_ROWS,
                crate::GRID_COLS
            ));
        }
        if !(1..=16).contains(&bit_depth) {
            return Err(input_err!("unsupported bit depth {bit_depth}"));
        }
        if pixels.len() != width * height {
            return Err(input_err!("expected {} pixels for {width}x{height}, got {}", width * height, pixels.len()));
        }
        let max = (1u32 << bit_depth) - 1;
        if let Some(p) = pixels.iter().find(|&&p| u32::from(p) > max) {
            return Err(input_err!("pixel value {p} exceeds {bit_depth}-bit range"));
        }
        Ok(Frame { width, height, bit_depth, pixels })
    }

    /// An 8-bit frame.
    pub fn from_u8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        Frame::new(width, height, 8, pixels.iter().map(|&p| u16::from(p)).collect())
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        bit_depth: u32,
        mut f: impl FnMut(usize, usize) -> u16,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Frame::new(width, height, bit_depth, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u32 {
        self.bit_depth
    }

    /// Largest representable pixel value, `2^N - 1`.
    pub fn peak(&self) -> f64 {
        f64::from((1u32 << self.bit_depth) - 1)
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.pixels[y * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Per-pixel motion vectors in pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, vectors: Vec<[f32; 2]>) -> Result<Self> {
        if width == 0 || height == 0 || vectors.len() != width * height {
            return Err(input_err!(
                "flow field {width}x{height} needs {} vectors, got {}",
                width * height,
                vectors.len()
            ));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(input_err!("flow field contains non-finite vectors"));
        }
        Ok(FlowField { width, height, vectors })
    }

    /// Every pixel moves by the same vector.
    pub fn uniform(width: usize, height: usize, v: [f32; 2]) -> Self {
        FlowField { width, height, vectors: vec![v; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn vectors(&self) -> &[[f32; 2]] {
        &self.vectors
    }

    pub fn vectors_mut(&mut self) -> &mut [[f32; 2]] {
        &mut self.vectors
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        self.vectors[y * self.width + x]
    }

    /// Component-wise median over all pixels.
    pub fn median_vector(&self) -> [f32; 2] {
        let median = |c: usize| {
            let mut v: Vec<f32> = self.vectors.iter().map(|p| p[c]).collect();
            v.sort_by(f32::total_cmp);
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2]
            } else {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            }
        };
        [median(0), median(1)]
    }

    /// Restricts the field to the pixels of `(x0..x1, y0..y1)`.
    pub fn crop(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> FlowField {
        let mut vectors = Vec::with_capacity((x1 - x0) * (y1 - y0));
        for y in y0..y1 {
            vectors.extend_from_slice(&self.vectors[y * self.width + x0..y * self.width + x1]);
        }
        FlowField { width: x1 - x0, height: y1 - y0, vectors }
    }
}

/// A non-negative real value per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScalarMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(input_err!(
                "scalar map {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(input_err!("scalar map values must be finite and non-negative"));
        }
        Ok(ScalarMap { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(value.is_finite() && value >= 0.0);
        ScalarMap { width, height, values: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Where the viewer is looking, and how fast the gaze moves across the
/// equirectangular frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewpointSample {
    /// Seconds since the start of the video.
    pub t: f64,
    /// Degrees in `[-180, 180)`.
    pub yaw: f64,
    /// Degrees in `[-90, 90]`.
    pub pitch: f64,
    /// Gaze velocity in pixels per frame on the equirectangular plane.
    pub velocity: [f64; 2],
}

impl ViewpointSample {
    pub fn new(t: f64, yaw: f64, pitch: f64) -> Self {
        ViewpointSample { t, yaw, pitch, velocity: [0.0, 0.0] }
    }

    pub fn with_velocity(mut self, vx: f64, vy: f64) -> Self {
        self.velocity = [vx, vy];
        self
    }

    pub fn is_valid(&self) -> bool {
        self.t.is_finite()
            && (-180.0..180.0).contains(&self.yaw)
            && (-90.0..=90.0).contains(&self.pitch)
            && self.velocity.iter().all(|v| v.is_finite())
    }

    /// Pixel `(col, row)` under the gaze on a `width x height` equirectangular
    /// frame.
    pub fn project(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        if !(-180.0..180.0).contains(&self.yaw) || !(-90.0..=90.0).contains(&self.pitch) {
            return Err(input_err!("viewpoint (yaw {}, pitch {}) lies outside the frame", self.yaw, self.pitch));
        }
        let col = ((self.yaw + 180.0) / 360.0 * width as f64).floor() as usize;
        let row = ((90.0 - self.pitch) / 180.0 * height as f64).floor() as usize;
        Ok((col.min(width - 1), row.min(height - 1)))
    }
}

/// Wraps `yaw` into `[-180, 180)`.
pub fn wrap_yaw(yaw: f64) -> f64 {
    let w = (yaw + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Default block size for [`estimate_flow`].
pub const DEFAULT_BLOCK: usize = 16;
/// Default search radius for [`estimate_flow`].
pub const DEFAULT_RADIUS: usize = 7;
/// Default background threshold for [`depth_proxy_map`], pixels per frame.
pub const DEFAULT_BACKGROUND_EPS: f64 = 0.5;

/// Exhaustive block-matching motion search.
///
/// For every `block x block` tile of `prev` (the last row and column of blocks
/// may be narrower), tries every displacement within `radius` and keeps the one
/// with the smallest sum of absolute differences against `next`. Columns wrap
/// around, rows clamp at the poles. Ties go to the shorter displacement, so
/// flat regions report zero motion.
pub fn estimate_flow(prev: &Frame, next: &Frame, block: usize, radius: usize) -> Result<FlowField> {
    if prev.dims() != next.dims() {
        return Err(input_err!("frame dimensions differ: {:?} vs {:?}", prev.dims(), next.dims()));
    }
    if block < 4 {
        return Err(input_err!("block size must be at least 4, got {block}"));
    }
    if radius < 1 {
        return Err(input_err!("search radius must be at least 1"));
    }
    let (w, h) = prev.dims();
    if w < block || h < block {
        return Err(input_err!("frame {w}x{h} is smaller than one {block}px block"));
    }

    let r = radius as isize;
    let mut candidates: Vec<(isize, isize)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).collect();
    candidates.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dx * dx + dy * dy, dy, dx));

    let mut vectors = vec![[0.0f32; 2]; w * h];
    let wi = w as isize;
    let hi = h as isize;
    for by in (0..h).step_by(block) {
        let bh = block.min(h - by);
        for bx in (0..w).step_by(block) {
            let bw = block.min(w - bx);
            let mut best = (0isize, 0isize);
            let mut best_sad = u64::MAX;
            for &(dx, dy) in &candidates {
                let mut sad = 0u64;
                for y in by..by + bh {
                    let ny = (y as isize + dy).clamp(0, hi - 1) as usize;
                    let prow = &prev.pixels[y * w..(y + 1) * w];
                    let nrow = &next.pixels[ny * w..(ny + 1) * w];
                    for (x, &p) in prow.iter().enumerate().skip(bx).take(bw) {
                        let nx = (x as isize + dx).rem_euclid(wi) as usize;
                        sad += u64::from(p.abs_diff(nrow[nx]));
                    }
                    if sad >= best_sad {
                        break;
                    }
                }
                if sad < best_sad {
                    best_sad = sad;
                    best = (dx, dy);
                }
            }
            let v = [best.0 as f32, best.1 as f32];
            for y in by..by + bh {
                vectors[y * w + bx..y * w + bx + bw].fill(v);
            }
        }
    }
    Ok(FlowField { width: w, height: h, vectors })
}

/// `|F(i,j) - v|` at every pixel: how fast content moves relative to the gaze.
pub fn relative_velocity_map(flow: &FlowField, viewpoint_velocity: [f64; 2]) -> ScalarMap {
    let [vx, vy] = viewpoint_velocity;
    let values = flow.vectors.iter().map(|&[fx, fy]| (f64::from(fx) - vx).hypot(f64::from(fy) - vy)).collect();
    ScalarMap { width: flow.width, height: flow.height, values }
}

/// Normalized motion magnitude with the background zeroed out.
///
/// Pixels moving no faster than `background_eps` are treated as distant
/// background and set to 0; the rest are divided by the largest magnitude so
/// the map lies in `[0, 1]`. Faster motion stands in for nearer content.
pub fn depth_proxy_map(flow: &FlowField, background_eps: f64) -> Result<ScalarMap> {
    if !(background_eps >= 0.0) {
        return Err(input_err!("background_eps must be non-negative, got {background_eps}"));
    }
    let mags: Vec<f64> = flow.vectors.iter().map(|&[x, y]| f64::from(x).hypot(f64::from(y))).collect();
    let max = mags.iter().copied().filter(|&m| m > background_eps).fold(0.0, f64::max);
    let values = if max > 0.0 {
        mags.iter().map(|&m| if m > background_eps { m / max } else { 0.0 }).collect()
    } else {
        vec![0.0; mags.len()]
    };
    Ok(ScalarMap { width: flow.width, height: flow.height, values })
}

/// `|D(i,j) - D(gaze)|`: depth separation of each pixel from what the viewer
/// is looking at.
pub fn relative_depth_map(depth: &ScalarMap, viewpoint: &ViewpointSample) -> Result<ScalarMap> {
    let (col, row) = viewpoint.project(depth.width, depth.height)?;
    let d0 = depth.get(col, row);
    let values = depth.values.iter().map(|&d| (d - d0).abs()).collect();
    Ok(ScalarMap { width: depth.width, height: depth.height, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn textured(w: usize, h: usize, seed: u32) -> Frame {
        // Deterministic hash texture; avoids flat regions that make SAD ambiguous.
        Frame::from_fn(w, h, 8, |x, y| {
            let mut v = (x as u32).wrapping_mul(73_856_093)
                ^ (y as u32).wrapping_mul(19_349_663)
                ^ seed.wrapping_mul(83_492_791);
            v ^= v >> 13;
            v = v.wrapping_mul(0x5bd1_e995);
            v ^= v >> 15;
            (v & 0xff) as u16
        })
        .unwrap()
    }

    fn shifted(f: &Frame, sx: isize, sy: isize) -> Frame {
        let (w, h) = f.dims();
        Frame::from_fn(w, h, 8, |x, y| {
            let ox = (x as isize - sx).rem_euclid(w as isize) as usize;
            let oy = (y as isize - sy).rem_euclid(h as isize) as usize;
            f.get(ox, oy)
        })
        .unwrap()
    }

    #[test]
    fn frame_rejects_bad_dimensions_and_range() {
        assert!(Frame::from_u8(25, 12, &[0; 300]).is_err());
        assert!(Frame::from_u8(24, 12, &[0; 10]).is_err());
        assert!(Frame::new(24, 12, 8, vec![256; 288]).is_err());
        assert!(Frame::new(24, 12, 10, vec![1023; 288]).is_ok());
    }

    #[test]
    fn identical_frames_have_zero_flow() {
        let f = textured(48, 24, 1);
        let flow = estimate_flow(&f, &f, 8, 3).unwrap();
        assert!(flow.vectors().iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn recovers_shift_right_by_two() {
        let prev = textured(96, 48, 7);
        let next = shifted(&prev, 2, 0);
        let flow = estimate_flow(&prev, &next, 8, 3).unwrap();
        assert_eq!(flow.median_vector(), [2.0, 0.0]);
    }

    #[test]
    fn frame_smaller_than_block_is_rejected() {
        let f = Frame::from_u8(24, 12, &[0; 288]).unwrap();
        assert!(matches!(estimate_flow(&f, &f, 32, 3), Err(crate::Error::Input(_))));
    }

    #[test]
    fn mismatched_frames_are_rejected() {
        let a = textured(48, 24, 1);
        let b = textured(24, 12, 1);
        assert!(estimate_flow(&a, &b, 8, 3).is_err());
        assert!(estimate_flow(&a, &a, 3, 3).is_err());
        assert!(estimate_flow(&a, &a, 8, 0).is_err());
    }

    #[test]
    fn relative_velocity_examples() {
        let flow = FlowField::uniform(4, 2, [3.0, 4.0]);
        assert!(relative_velocity_map(&flow, [3.0, 4.0]).values().iter().all(|&v| v == 0.0));
        assert!(relative_velocity_map(&flow, [0.0, 0.0]).values().iter().all(|&v| v == 5.0));
        let flow = FlowField::new(1, 1, vec![[1.0, 0.0]]).unwrap();
        let m = relative_velocity_map(&flow, [0.0, 1.0]);
        assert!((m.get(0, 0) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn depth_proxy_examples() {
        let zero = FlowField::uniform(4, 2, [0.0, 0.0]);
        assert!(depth_proxy_map(&zero, 0.5).unwrap().values().iter().all(|&v| v == 0.0));

        let mut vectors = vec![[2.0, 0.0]; 4];
        vectors.extend(vec![[0.0, 4.0]; 4]);
        let flow = FlowField::new(4, 2, vectors).unwrap();
        let d = depth_proxy_map(&flow, 0.5).unwrap();
        assert_eq!(&d.values()[..4], &[0.5; 4]);
        assert_eq!(&d.values()[4..], &[1.0; 4]);

        let slow = FlowField::uniform(4, 2, [0.3, 0.3]);
        assert!(depth_proxy_map(&slow, 0.5).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(depth_proxy_map(&slow, -1.0).is_err());
    }

    #[test]
    fn relative_depth_examples() {
        let vp = ViewpointSample::new(0.0, 0.0, 0.0);
        let uniform = ScalarMap::filled(24, 12, 0.4);
        assert!(relative_depth_map(&uniform, &vp).unwrap().values().iter().all(|&v| v == 0.0));

        let (c, r) = vp.project(24, 12).unwrap();
        let mut values = vec![0.2; 288];
        values[r * 24 + c] = 0.9;
        let d = relative_depth_map(&ScalarMap::new(24, 12, values).unwrap(), &vp).unwrap();
        for (i, &v) in d.values().iter().enumerate() {
            let want = if i == r * 24 + c { 0.0 } else { 0.7 };
            assert!((v - want).abs() < 1e-12);
        }

        let mut values = vec![0.0; 288];
        values[0] = 1.0;
        let d = relative_depth_map(&ScalarMap::new(24, 12, values).unwrap(), &vp).unwrap();
        assert_eq!(d.get(0, 0), 1.0);
    }

    #[test]
    fn projection_is_linear_and_checked() {
        let vp = ViewpointSample::new(0.0, -180.0, 90.0);
        assert_eq!(vp.project(360, 180).unwrap(), (0, 0));
        let vp = ViewpointSample::new(0.0, 179.9, -90.0);
        assert_eq!(vp.project(360, 180).unwrap(), (359, 179));
        assert_eq!(ViewpointSample::new(0.0, 0.0, 0.0).project(360, 180).unwrap(), (180, 90));
        assert!(ViewpointSample::new(0.0, 180.0, 0.0).project(360, 180).is_err());
        assert!(ViewpointSample::new(0.0, 0.0, 91.0).project(360, 180).is_err());
    }

    #[test]
    fn wrap_yaw_range() {
        assert_eq!(wrap_yaw(185.0), -175.0);
        assert_eq!(wrap_yaw(-180.0), -180.0);
        assert_eq!(wrap_yaw(180.0), -180.0);
        assert!((wrap_yaw(-1e-17)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn velocity_map_symmetric_under_negation(
            fx in -8.0f32..8.0, fy in -8.0f32..8.0, vx in -8.0f64..8.0, vy in -8.0f64..8.0,
        ) {
            let a = relative_velocity_map(&FlowField::uniform(2, 2, [fx, fy]), [vx, vy]);
            let b = relative_velocity_map(&FlowField::uniform(2, 2, [-fx, -fy]), [-vx, -vy]);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn depth_proxy_bounded_and_scale_invariant(
            mags in proptest::collection::vec(0.0f32..6.0, 8),
            scale in 1.0f32..4.0,
        ) {
            let vectors: Vec<[f32; 2]> = mags.iter().map(|&m| [m, 0.0]).collect();
            let eps = 0.5;
            let d = depth_proxy_map(&FlowField::new(4, 2, vectors.clone()).unwrap(), eps).unwrap();
            prop_assert!(d.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
            // scale the moving pixels only, so the background mask is unchanged
            let scaled: Vec<[f32; 2]> = vectors
                .iter()
                .map(|&[m, _]| if f64::from(m) > eps { [m * scale, 0.0] } else { [m, 0.0] })
                .collect();
            let ds = depth_proxy_map(&FlowField::new(4, 2, scaled).unwrap(), eps).unwrap();
            for (a, b) in d.values().iter().zip(ds.values()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn relative_depth_bounded_and_zero_at_gaze(
            values in proptest::collection::vec(0.0f64..=1.0, 288),
            yaw in -180.0f64..180.0, pitch in -90.0f64..=90.0,
        ) {
            let vp = ViewpointSample::new(0.0, yaw, pitch);
            let d = relative_depth_map(&ScalarMap::new(24, 12, values).unwrap(), &vp).unwrap();
            let (c, r) = vp.project(24, 12).unwrap();
            prop_assert_eq!(d.get(c, r), 0.0);
            prop_assert!(d.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        #[test]
        fn integer_translations_are_recovered(sx in -3isize..=3, sy in -3isize..=3, seed in 0u32..50) {
            let prev = textured(96, 48, seed);
            let next = shifted(&prev, sx, sy);
            let flow = estimate_flow(&prev, &next, 8, 3).unwrap();
            prop_assert_eq!(flow.median_vector(), [sx as f32, sy as f32]);
        }
    }
}
