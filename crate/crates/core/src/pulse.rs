//! Heart rate from a pulse signal. The signal is band-passed to the pulse
//! band and compared against its own moving average raised by a trial
//! offset; each region above the raised baseline contributes one peak.
//! The offset is chosen per section by minimizing the variance of the
//! resulting inter-beat intervals, after which implausibly close peaks are
//! pruned and interval outliers are voted away by agreement windows.

use crate::dsp::bandpass;
use crate::error::{Error, Result};
use crate::signal::{self, TimeSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct PulseConfig {
    /// Pulse band edges in Hz.
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    /// Moving-average baseline length in seconds.
    pub ma_window_s: f64,
    /// Trial offsets as multiples of the filtered signal's standard
    /// deviation: 0, step, 2*step, ... up to and including max.
    pub offset_step: f64,
    pub offset_max: f64,
    /// Fewer peaks than this and an offset is not considered.
    pub min_peaks: usize,
    /// Two peaks closer than this many seconds cannot both be real.
    pub min_interval_s: f64,
    /// Agreement window length for interval filtering.
    pub vote_window: usize,
    /// Min/max interval ratio a window must exceed to vouch for its members.
    pub vote_ratio: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig {
            band_lo_hz: 0.6,
            band_hi_hz: 3.3,
            ma_window_s: 0.75,
            offset_step: 0.1,
            offset_max: 2.0,
            min_peaks: 3,
            min_interval_s: 60.0 / 185.0,
            vote_window: 5,
            vote_ratio: 0.51,
        }
    }
}

/// Peaks found in one section, with the diagnostics needed downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakSet {
    /// Peak times in seconds.
    pub times: Vec<f64>,
    /// Filtered-signal amplitude at each peak, used by pruning.
    pub heights: Vec<f64>,
    /// Offset that won, as a multiple of the filtered std.
    pub offset_used: f64,
    pub ma_window_s: f64,
}

fn peaks_above(
    filtered: &[f64],
    baseline: &[f64],
    offset: f64,
    fs: f64,
    t0: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut times = Vec::new();
    let mut heights = Vec::new();
    let mut i = 0usize;
    let n = filtered.len();
    while i < n {
        if filtered[i] > baseline[i] + offset {
            let start = i;
            while i < n && filtered[i] > baseline[i] + offset {
                i += 1;
            }
            let best = (start..i)
                .max_by(|&a, &b| filtered[a].total_cmp(&filtered[b]))
                .unwrap();
            times.push(t0 + best as f64 / fs);
            heights.push(filtered[best]);
        } else {
            i += 1;
        }
    }
    (times, heights)
}

fn interval_variance(times: &[f64]) -> f64 {
    let intervals: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    if intervals.len() < 2 {
        return f64::INFINITY;
    }
    signal::population_variance(&intervals)
}

/// Find pulse peaks in a raw section. Needs at least four seconds of
/// signal. A flat section or one where no offset yields enough peaks is
/// [`Error::NoPeaksFound`].
pub fn detect_pulse_peaks(section: &TimeSeries, cfg: &PulseConfig) -> Result<PeakSet> {
    if section.duration() < 4.0 {
        return Err(Error::InvalidInput(format!(
            "need >= 4 s for pulse peaks, got {:.2} s",
            section.duration()
        )));
    }
    let filtered = bandpass(section, cfg.band_lo_hz, cfg.band_hi_hz)?;
    let sd = signal::population_std(&filtered.samples);
    if sd < signal::DEGENERATE_STD {
        return Err(Error::NoPeaksFound("section is flat after filtering".into()));
    }
    let baseline = signal::moving_average_s(&filtered, cfg.ma_window_s)?;

    let mut best: Option<(f64, PeakSet)> = None;
    let mut c = 0.0;
    while c <= cfg.offset_max + 1e-9 {
        let (times, heights) =
            peaks_above(&filtered.samples, &baseline.samples, c * sd, filtered.fs, filtered.t0);
        if times.len() >= cfg.min_peaks {
            let var = interval_variance(&times);
            // strictly-better keeps the smallest offset on ties
            let better = best.as_ref().map_or(true, |(v, _)| var < *v);
            if better {
                best = Some((
                    var,
                    PeakSet {
                        times,
                        heights,
                        offset_used: c,
                        ma_window_s: cfg.ma_window_s,
                    },
                ));
            }
        }
        c += cfg.offset_step;
    }
    best.map(|(_, p)| p).ok_or_else(|| {
        Error::NoPeaksFound("no offset produced enough pulse peaks".into())
    })
}

/// Drop the lower-amplitude peak of any pair closer than `min_interval_s`,
/// repeatedly, preferring to drop the later peak on exact height ties.
pub fn prune_peaks(peaks: &PeakSet, cfg: &PulseConfig) -> PeakSet {
    let mut times = peaks.times.clone();
    let mut heights = peaks.heights.clone();
    loop {
        let mut victim = None;
        for i in 0..times.len().saturating_sub(1) {
            if times[i + 1] - times[i] < cfg.min_interval_s {
                victim = Some(if heights[i + 1] <= heights[i] { i + 1 } else { i });
                break;
            }
        }
        match victim {
            Some(v) => {
                times.remove(v);
                heights.remove(v);
            }
            None => break,
        }
    }
    PeakSet {
        times,
        heights,
        offset_used: peaks.offset_used,
        ma_window_s: peaks.ma_window_s,
    }
}

/// Keep intervals vouched for by agreement: an interval survives when some
/// window of `vote_window` consecutive intervals containing it has
/// min/max > `vote_ratio`. Short runs use every window that fits; fewer
/// intervals than a window keeps them all only if they agree as one group.
pub fn filter_ibis(intervals: &[f64], cfg: &PulseConfig) -> Vec<f64> {
    let n = intervals.len();
    if n == 0 {
        return Vec::new();
    }
    let w = cfg.vote_window.min(n).max(1);
    let mut keep = vec![false; n];
    for start in 0..=n - w {
        let window = &intervals[start..start + w];
        let lo = window.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > 0.0 && lo / hi > cfg.vote_ratio {
            for k in keep.iter_mut().skip(start).take(w) {
                *k = true;
            }
        }
    }
    intervals
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(v, _)| *v)
        .collect()
}

/// 60 / mean(interval)  over the accepted intervals.
pub fn estimate_hr(intervals: &[f64]) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::NoHrAvailable("no intervals passed the vote".into()));
    }
    let m = intervals.iter().sum::<f64>() / intervals.len() as f64;
    Ok(60.0 / m)
}

/// Full pipeline for one section: detect, prune, vote, estimate.
pub fn section_hr(section: &TimeSeries, cfg: &PulseConfig) -> Result<f64> {
    let peaks = detect_pulse_peaks(section, cfg)?;
    let pruned = prune_peaks(&peaks, cfg);
    let intervals: Vec<f64> = pruned.times.windows(2).map(|w| w[1] - w[0]).collect();
    let accepted = filter_ibis(&intervals, cfg);
    estimate_hr(&accepted)
}
