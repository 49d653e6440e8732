use crate::error::{input_err, Error, Result};
use crate::flowfield::{wrap_yaw, ViewpointSample};

/// Available throughput over time, piecewise constant: sample `i` holds from
/// its timestamp until the next one, and the last sample holds forever.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthTrace {
    samples: Vec<(f64, f64)>,
}

impl BandwidthTrace {
    /// `samples` are `(seconds, bits per second)`.
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(input_err!("bandwidth trace needs at least 2 samples, got {}", samples.len()));
        }
        for (i, &(t, bps)) in samples.iter().enumerate() {
            if !t.is_finite() || !bps.is_finite() || bps < 0.0 {
                return Err(input_err!("bandwidth sample {i} ({t}, {bps}) is invalid"));
            }
            if i > 0 && t <= samples[i - 1].0 {
                return Err(input_err!("bandwidth timestamps must strictly increase (sample {i})"));
            }
        }
        Ok(BandwidthTrace { samples })
    }

    pub fn constant(duration: f64, bps: f64) -> Result<Self> {
        Self::new(vec![(0.0, bps), (duration, bps)])
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn start(&self) -> f64 {
        self.samples[0].0
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].0
    }

    fn segment(&self, t: f64) -> usize {
        self.samples.partition_point(|s| s.0 <= t).saturating_sub(1)
    }

    pub fn throughput_at(&self, t: f64) -> f64 {
        self.samples[self.segment(t)].1
    }

    /// Time-weighted mean throughput between the first and last timestamps.
    pub fn mean(&self) -> f64 {
        let bits: f64 = self.samples.windows(2).map(|w| w[0].1 * (w[1].0 - w[0].0)).sum();
        bits / (self.end() - self.start())
    }

    /// Bits deliverable in `[t0, t1]`.
    pub fn bits_between(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        let mut i = self.segment(t0);
        let mut t = t0.max(self.start());
        let mut bits = 0.0;
        while t < t1 {
            let seg_end = self.samples.get(i + 1).map_or(f64::INFINITY, |s| s.0).min(t1);
            bits += self.samples[i].1 * (seg_end - t);
            t = seg_end;
            i += 1;
        }
        bits
    }

    /// Seconds needed to deliver `bytes` starting at `t_start`.
    pub fn download_time(&self, bytes: u64, t_start: f64) -> Result<f64> {
        if !t_start.is_finite() || t_start < self.start() {
            return Err(input_err!("download start {t_start} precedes the trace"));
        }
        if bytes == 0 {
            return Ok(0.0);
        }
        let mut remaining = 8.0 * bytes as f64;
        let mut i = self.segment(t_start);
        let mut t = t_start;
        loop {
            let rate = self.samples[i].1;
            let Some(&(seg_end, _)) = self.samples.get(i + 1) else {
                if rate == 0.0 {
                    return Err(Error::StallBeyondHorizon { bytes, start: t_start });
                }
                return Ok(t + remaining / rate - t_start);
            };
            let cap = rate * (seg_end - t);
            if cap >= remaining && rate > 0.0 {
                return Ok(t + remaining / rate - t_start);
            }
            remaining -= cap;
            t = seg_end;
            i += 1;
        }
    }

    /// Every throughput multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() || factor < 0.0 {
            return Err(input_err!("scale factor must be finite and >= 0, got {factor}"));
        }
        Self::new(self.samples.iter().map(|&(t, b)| (t, b * factor)).collect())
    }

    /// The trace shifted so that `offset` becomes time zero, keeping the
    /// segments after it.
    pub fn starting_at(&self, offset: f64) -> Result<Self> {
        let i = self.segment(offset);
        let mut out = vec![(0.0, self.samples[i].1)];
        out.extend(self.samples[i + 1..].iter().map(|&(t, b)| (t - offset, b)));
        if out.len() < 2 {
            out.push((1.0, self.samples[i].1));
        }
        Self::new(out)
    }
}

/// Head orientation sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewpointTrace {
    samples: Vec<ViewpointSample>,
}

/// Default viewpoint sampling rate, Hz.
pub const DEFAULT_VIEWPOINT_HZ: f64 = 30.0;
/// Samples used for the least-squares slope in [`predict_viewpoint`].
pub const DEFAULT_PREDICT_WINDOW: usize = 30;

impl ViewpointTrace {
    pub fn new(samples: Vec<ViewpointSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(input_err!("viewpoint trace needs at least 2 samples"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_valid()) {
            return Err(input_err!("viewpoint sample {i} is out of range"));
        }
        let dt = samples[1].t - samples[0].t;
        if dt <= 0.0 {
            return Err(input_err!("viewpoint timestamps must increase"));
        }
        for (i, w) in samples.windows(2).enumerate() {
            if ((w[1].t - w[0].t) - dt).abs() > 1e-6 * dt.max(1.0) {
                return Err(input_err!("viewpoint samples must be uniformly spaced (gap after sample {i})"));
            }
        }
        Ok(ViewpointTrace { samples })
    }

    pub fn samples(&self) -> &[ViewpointSample] {
        &self.samples
    }

    pub fn interval(&self) -> f64 {
        self.samples[1].t - self.samples[0].t
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Number of samples with timestamp `<= t`.
    fn count_until(&self, t: f64) -> usize {
        self.samples.partition_point(|s| s.t <= t + 1e-9)
    }

    /// Orientation at `t`, interpolated along the shorter way around in yaw.
    pub fn sample_at(&self, t: f64) -> ViewpointSample {
        let n = self.count_until(t);
        if n == 0 {
            return self.samples[0];
        }
        if n == self.samples.len() {
            return self.samples[n - 1];
        }
        let (a, b) = (self.samples[n - 1], self.samples[n]);
        let f = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let dyaw = wrap_yaw(b.yaw - a.yaw);
        ViewpointSample {
            t,
            yaw: wrap_yaw(a.yaw + f * dyaw),
            pitch: a.pitch + f * (b.pitch - a.pitch),
            velocity: a.velocity,
        }
    }
}

/// Where the viewer will look `horizon` seconds after `t_now`.
///
/// Fits a least-squares line through the last [`DEFAULT_PREDICT_WINDOW`]
/// samples at or before `t_now` (yaw unwrapped across the seam) and
/// extrapolates it. With fewer than two samples of history the latest one is
/// returned unchanged.
pub fn predict_viewpoint(trace: &ViewpointTrace, t_now: f64, horizon: f64) -> ViewpointSample {
    predict_viewpoint_window(trace, t_now, horizon, DEFAULT_PREDICT_WINDOW)
}

pub fn predict_viewpoint_window(trace: &ViewpointTrace, t_now: f64, horizon: f64, window: usize) -> ViewpointSample {
    let n = trace.count_until(t_now);
    if n < 2 || window < 2 {
        return trace.samples[n.saturating_sub(1)];
    }
    let hist = &trace.samples[n - window.min(n)..n];
    let mut yaws = Vec::with_capacity(hist.len());
    let mut acc = hist[0].yaw;
    yaws.push(acc);
    for w in hist.windows(2) {
        acc += wrap_yaw(w[1].yaw - w[0].yaw);
        yaws.push(acc);
    }
    let ts: Vec<f64> = hist.iter().map(|s| s.t).collect();
    let pitches: Vec<f64> = hist.iter().map(|s| s.pitch).collect();
    let last = hist[hist.len() - 1];
    let ahead = t_now + horizon - last.t;
    let yaw = yaws[yaws.len() - 1] + slope(&ts, &yaws) * ahead;
    let pitch = last.pitch + slope(&ts, &pitches) * ahead;
    ViewpointSample::new(t_now + horizon, wrap_yaw(yaw), pitch.clamp(-90.0, 90.0))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}
