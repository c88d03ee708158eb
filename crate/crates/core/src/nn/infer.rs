//! Whole-record inference. Long records are covered by half-overlapping
//! windows blended with triangular weights; each window's channels are
//! z-scored independently, matching how training windows are normalized.

use super::model::{forward, FusionModelParams};
use crate::error::{Error, Result};
use crate::signal::{zscore_or_zeros, MultiChannelRecord, TimeSeries};

/// Window start offsets: every half window from zero while a full window
/// fits, plus a flush-right window when the tail would otherwise be bare.
fn window_starts(n: usize, window: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut s = 0usize;
    while s + window <= n {
        starts.push(s);
        s += window / 2;
    }
    if let Some(&last) = starts.last() {
        if last + window < n {
            starts.push(n - window);
        }
    }
    starts
}

/// Run the model across a whole record and return the fused signal.
///
/// A record exactly one window long is returned as the raw forward output;
/// anything longer is the triangular-weighted average of the overlapping
/// window outputs.
pub fn fuse(params: &FusionModelParams, record: &MultiChannelRecord) -> Result<TimeSeries> {
    let cfg = &params.config;
    let channels = record.optical_channels();
    if cfg.in_channels != channels.len() {
        return Err(Error::InvalidInput(format!(
            "model wants {} input channels, record has {}",
            cfg.in_channels,
            channels.len()
        )));
    }
    let window = cfg.window_len;
    let n = record.len();
    if n < window {
        return Err(Error::InvalidInput(format!(
            "record length {n} shorter than the {window}-sample model window"
        )));
    }

    let starts = window_starts(n, window);
    let mut input = vec![0.0; channels.len() * window];

    if starts.len() == 1 {
        fill_input(&mut input, &channels, 0, window);
        let y = forward(params, &input)?;
        return Ok(TimeSeries::with_t0(y, record.fs(), record.green.t0));
    }

    // w[t] = 1 - |2 (t + 0.5) / window - 1|, in (0, 1]
    let weights: Vec<f64> = (0..window)
        .map(|t| 1.0 - (2.0 * (t as f64 + 0.5) / window as f64 - 1.0).abs())
        .collect();

    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for &s in &starts {
        fill_input(&mut input, &channels, s, window);
        let y = forward(params, &input)?;
        for t in 0..window {
            num[s + t] += weights[t] * y[t];
            den[s + t] += weights[t];
        }
    }
    for (v, d) in num.iter_mut().zip(&den) {
        *v /= d;
    }
    Ok(TimeSeries::with_t0(num, record.fs(), record.green.t0))
}

fn fill_input(
    input: &mut [f64],
    channels: &[(&'static str, &TimeSeries)],
    start: usize,
    window: usize,
) {
    for (c, (_, ch)) in channels.iter().enumerate() {
        let z = zscore_or_zeros(&ch.samples[start..start + window]);
        input[c * window..(c + 1) * window].copy_from_slice(&z);
    }
}
