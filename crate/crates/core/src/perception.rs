//! Just-noticeable-difference thresholds driven by relative motion and depth.
//!
//! Distortion is harder to see on content that moves fast relative to the gaze
//! ([`sjnd`]) or sits at a different depth than what the viewer is fixating
//! ([`djnd`]). The two effects are treated as independent, so the joint
//! threshold is their product, scaled by [`JndConfig::lambda`] into grey
//! levels.

use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};
use crate::flowfield::ScalarMap;

/// Product of the velocity and depth factors at zero relative motion and depth.
pub const JND_FLOOR_PRODUCT: f64 = 8.0 * 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JndConfig {
    /// Scale applied to the raw `sjnd * djnd` product. The default maps the
    /// static, flat-depth floor of 96 to 3 grey levels; `1.0` keeps the raw
    /// product.
    pub lambda: f64,
}

impl Default for JndConfig {
    fn default() -> Self {
        JndConfig { lambda: 3.0 / JND_FLOOR_PRODUCT }
    }
}

impl JndConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(input_err!("lambda must be positive and finite, got {lambda}"));
        }
        Ok(JndConfig { lambda })
    }

    /// Smallest threshold any pixel can receive.
    pub fn floor(&self) -> f64 {
        self.lambda * JND_FLOOR_PRODUCT
    }
}

/// Per-pixel distortion tolerance in grey levels.
#[derive(Debug, Clone, PartialEq)]
pub struct JndMap {
    width: usize,
    height: usize,
    thresholds: Vec<f64>,
}

impl JndMap {
    /// Wraps raw thresholds. Only non-negativity is checked here; a map loaded
    /// from disk or built by hand (e.g. all zeros for plain PSNR) need not sit
    /// above the model's floor.
    pub fn new(width: usize, height: usize, thresholds: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || thresholds.len() != width * height {
            return Err(input_err!(
                "JND map {width}x{height} needs {} thresholds, got {}",
                width * height,
                thresholds.len()
            ));
        }
        if thresholds.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(input_err!("JND thresholds must be finite and non-negative"));
        }
        Ok(JndMap { width, height, thresholds })
    }

    /// A map that masks nothing; PSNR-OF over it is plain PSNR.
    pub fn zeros(width: usize, height: usize) -> Self {
        JndMap { width, height, thresholds: vec![0.0; width * height] }
    }

    pub fn filled(width: usize, height: usize, threshold: f64) -> Self {
        assert!(threshold.is_finite() && threshold >= 0.0);
        JndMap { width, height, thresholds: vec![threshold; width * height] }
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

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn thresholds_mut(&mut self) -> &mut [f64] {
        &mut self.thresholds
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.thresholds[y * self.width + x]
    }
}

/// Velocity factor: `2.047 * dv^0.634 + 8`, with `dv` in pixels per frame.
pub fn sjnd(dv: f64) -> Result<f64> {
    if !(dv >= 0.0) {
        return Err(input_err!("relative velocity must be non-negative, got {dv}"));
    }
    Ok(sjnd_unchecked(dv))
}

/// Depth factor: `9*dd + 12` below 1, `29*dd - 8` from 1 upward.
pub fn djnd(dd: f64) -> Result<f64> {
    if !(dd >= 0.0) {
        return Err(input_err!("relative depth must be non-negative, got {dd}"));
    }
    Ok(djnd_unchecked(dd))
}

#[inline]
fn sjnd_unchecked(dv: f64) -> f64 {
    2.047 * dv.powf(0.634) + 8.0
}

#[inline]
fn djnd_unchecked(dd: f64) -> f64 {
    if dd < 1.0 {
        9.0 * dd + 12.0
    } else {
        29.0 * dd - 8.0
    }
}

/// `lambda * sjnd(dv) * djnd(dd)` at every pixel.
pub fn joint_jnd(dv_map: &ScalarMap, dd_map: &ScalarMap, cfg: &JndConfig) -> Result<JndMap> {
    if dv_map.dims() != dd_map.dims() {
        return Err(input_err!("velocity map {:?} and depth map {:?} differ in size", dv_map.dims(), dd_map.dims()));
    }
    let thresholds = dv_map
        .values()
        .iter()
        .zip(dd_map.values())
        .map(|(&dv, &dd)| cfg.lambda * sjnd_unchecked(dv) * djnd_unchecked(dd))
        .collect();
    Ok(JndMap { width: dv_map.width(), height: dv_map.height(), thresholds })
}
