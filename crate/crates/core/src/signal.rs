//! Time-series containers and the small numeric kernel the rest of the
//! pipeline is built from: linear resampling, z-scoring, centered moving
//! averages and Pearson correlation. The Butterworth band-pass lives in
//! [`crate::dsp`].
//!
//! All arithmetic is 64-bit. File formats narrow samples to f32 at the
//! disk boundary, never in here.

use crate::error::{Error, Result};

/// Threshold under which a standard deviation is treated as zero.
pub const DEGENERATE_STD: f64 = 1e-12;

/// Uniformly sampled signal. `t0` is the absolute time of `samples[0]`
/// in seconds, so sample `i` lies at `t0 + i / fs`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub t0: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, fs: f64) -> Self {
        TimeSeries { samples, fs, t0: 0.0 }
    }

    pub fn with_t0(samples: Vec<f64>, fs: f64, t0: f64) -> Self {
        TimeSeries { samples, fs, t0 }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds, defined as `len / fs`.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Nearest sample index for an absolute time, unclamped.
    pub fn index_of_time(&self, t: f64) -> i64 {
        ((t - self.t0) * self.fs).round() as i64
    }

    /// Index of `samples[0]` on the absolute sample grid (`round(t0 * fs)`).
    /// Series produced by this crate keep `t0` on the grid, so slices of
    /// different series taken at equal absolute indices stay aligned.
    pub fn abs_start_index(&self) -> i64 {
        (self.t0 * self.fs).round() as i64
    }

    /// Borrow `len` samples starting at absolute grid index `abs_idx`,
    /// or None if the range leaves the series.
    pub fn slice_abs(&self, abs_idx: i64, len: usize) -> Option<&[f64]> {
        let rel = abs_idx - self.abs_start_index();
        if rel < 0 {
            return None;
        }
        let start = rel as usize;
        let end = start.checked_add(len)?;
        self.samples.get(start..end)
    }

    /// Copy out `[start, end)` as a new series; `t0` advances by `start / fs`.
    pub fn slice(&self, start: usize, end: usize) -> Result<TimeSeries> {
        if start >= end || end > self.samples.len() {
            return Err(Error::InvalidInput(format!(
                "slice [{start}, {end}) out of range for length {}",
                self.samples.len()
            )));
        }
        Ok(TimeSeries {
            samples: self.samples[start..end].to_vec(),
            fs: self.fs,
            t0: self.t0 + start as f64 / self.fs,
        })
    }
}

/// One subject's synchronized recording: three optical channels plus the
/// electrical reference, all on the same sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelRecord {
    pub subject_id: String,
    pub green: TimeSeries,
    pub red: TimeSeries,
    pub ir: TimeSeries,
    pub ecg: TimeSeries,
}

impl MultiChannelRecord {
    pub fn new(
        subject_id: String,
        green: TimeSeries,
        red: TimeSeries,
        ir: TimeSeries,
        ecg: TimeSeries,
    ) -> Result<Self> {
        let rec = MultiChannelRecord { subject_id, green, red, ir, ecg };
        rec.validate()?;
        Ok(rec)
    }

    /// All four streams must share fs, t0 and length.
    pub fn validate(&self) -> Result<()> {
        let g = &self.green;
        for (name, ch) in [("red", &self.red), ("ir", &self.ir), ("ecg", &self.ecg)] {
            if ch.fs != g.fs || ch.t0 != g.t0 || ch.len() != g.len() {
                return Err(Error::InvalidInput(format!(
                    "channel {name} grid mismatch: fs {} vs {}, t0 {} vs {}, len {} vs {}",
                    ch.fs,
                    g.fs,
                    ch.t0,
                    g.t0,
                    ch.len(),
                    g.len()
                )));
            }
        }
        if g.is_empty() {
            return Err(Error::InvalidInput("empty record".into()));
        }
        Ok(())
    }

    /// Optical channels in the fixed order the fusion model consumes.
    pub fn optical_channels(&self) -> [(&'static str, &TimeSeries); 3] {
        [("green", &self.green), ("red", &self.red), ("ir", &self.ir)]
    }

    pub fn fs(&self) -> f64 {
        self.green.fs
    }

    pub fn len(&self) -> usize {
        self.green.len()
    }

    pub fn is_empty(&self) -> bool {
        self.green.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.green.duration()
    }
}

/// What the synthetic generator knows and a real sensor would not.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Beat onset times in seconds (electrical, pre pulse-arrival delay).
    pub beat_times: Vec<f64>,
    /// Noise- and artifact-free pulse waveform on the record grid.
    pub clean_ppg: TimeSeries,
}

// ---------------------------------------------------------------------------
// element-wise kernels
// ---------------------------------------------------------------------------

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance (1/N).
pub fn population_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

pub fn population_std(x: &[f64]) -> f64 {
    population_variance(x).sqrt()
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Center to zero mean and scale to unit population standard deviation.
///
/// Errors with `DegenerateSignal` when the standard deviation is below
/// [`DEGENERATE_STD`].
pub fn zscore(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::InvalidInput("zscore of empty slice".into()));
    }
    let m = mean(x);
    let sd = population_std(x);
    if sd < DEGENERATE_STD {
        return Err(Error::DegenerateSignal(format!(
            "standard deviation {sd:.3e} below {DEGENERATE_STD:.0e}"
        )));
    }
    Ok(x.iter().map(|v| (v - m) / sd).collect())
}

/// z-score, mapping a degenerate (near-constant) input to all zeros
/// instead of failing. Network inputs use this so a flatlined channel
/// contributes nothing rather than aborting inference.
pub fn zscore_or_zeros(x: &[f64]) -> Vec<f64> {
    zscore(x).unwrap_or_else(|_| vec![0.0; x.len()])
}

/// Linear interpolation onto `target_len` evenly spaced points with both
/// endpoints preserved. `target_len == len` returns the input unchanged.
pub fn resample(x: &[f64], target_len: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("resample needs >= 2 samples, got {n}")));
    }
    if target_len < 2 {
        return Err(Error::InvalidInput(format!(
            "resample target must be >= 2 samples, got {target_len}"
        )));
    }
    let scale = (n - 1) as f64 / (target_len - 1) as f64;
    let mut out = Vec::with_capacity(target_len);
    for i in 0..target_len {
        let pos = i as f64 * scale;
        let j = pos.floor() as usize;
        if j >= n - 1 {
            out.push(x[n - 1]);
        } else {
            let frac = pos - j as f64;
            out.push(x[j] + (x[j + 1] - x[j]) * frac);
        }
    }
    Ok(out)
}

/// Resample a series to a new length, rescaling `fs` so the duration
/// (`len / fs`) is unchanged.
pub fn resample_series(x: &TimeSeries, target_len: usize) -> Result<TimeSeries> {
    let samples = resample(&x.samples, target_len)?;
    let fs = x.fs * target_len as f64 / x.len() as f64;
    Ok(TimeSeries { samples, fs, t0: x.t0 })
}

/// Centered moving average over `window` samples, truncated at the edges
/// (edge outputs average over however much of the window is in range).
/// For even windows the extra sample is taken from the right.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 || window <= 1 {
        return x.to_vec();
    }
    let left = (window - 1) / 2;
    let right = window / 2;
    // prefix[i] = sum of x[..i]
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in x {
        acc += v;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Centered moving average with the window given in seconds
/// (`round(window_s * fs)` samples, at least one).
pub fn moving_average_s(x: &TimeSeries, window_s: f64) -> Result<TimeSeries> {
    if !(window_s > 0.0) {
        return Err(Error::InvalidInput(format!("window {window_s} s must be positive")));
    }
    let w = ((window_s * x.fs).round() as usize).max(1);
    Ok(TimeSeries {
        samples: moving_average(&x.samples, w),
        fs: x.fs,
        t0: x.t0,
    })
}

/// Pearson correlation coefficient, clamped into [-1, 1].
///
/// Errors with `DegenerateSignal` when either input has (population)
/// standard deviation below [`DEGENERATE_STD`].
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "pearson needs two equal-length slices of >= 2 samples, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let ma = mean(a);
    let mb = mean(b);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    let n = a.len() as f64;
    let sa = (va / n).sqrt();
    let sb = (vb / n).sqrt();
    if sa < DEGENERATE_STD || sb < DEGENERATE_STD {
        return Err(Error::DegenerateSignal(format!(
            "pearson with near-constant input (std {sa:.3e}, {sb:.3e})"
        )));
    }
    Ok((cov / n / (sa * sb)).clamp(-1.0, 1.0))
}
