//! R-peak detection on the ECG channel, following the Pan-Tompkins recipe:
//! band-pass to the QRS band, differentiate, square, integrate over a short
//! moving window, then walk the integrated envelope with adaptive signal
//! and noise thresholds, a refractory period, and a search-back pass for
//! beats the running threshold missed. Every constant lives in
//! [`PanTompkinsConfig`] so tests can pin or perturb them.
//!
//! Detected peak times are refined to the maximum of the band-passed ECG
//! in a small neighborhood, which undoes the smearing introduced by the
//! integration window.

use crate::dsp::bandpass;
use crate::error::{Error, Result};
use crate::signal::{moving_average, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationSource {
    DetectedPanTompkins,
    GroundTruth,
}

/// R-peak times in seconds, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatAnnotation {
    pub r_times: Vec<f64>,
    pub source: AnnotationSource,
}

impl BeatAnnotation {
    pub fn from_ground_truth(beat_times: Vec<f64>) -> Self {
        BeatAnnotation { r_times: beat_times, source: AnnotationSource::GroundTruth }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanTompkinsConfig {
    /// QRS band edges in Hz.
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    /// Moving-window integration length in seconds.
    pub integration_window_s: f64,
    /// Minimum spacing between accepted beats.
    pub refractory_s: f64,
    /// Search back for a missed beat once the gap exceeds this multiple of
    /// the running RR average.
    pub searchback_factor: f64,
    /// Accepted/rejected peaks update their running estimate with this weight.
    pub adaptation: f64,
    /// Search-back acceptances adapt faster.
    pub searchback_adaptation: f64,
    /// Signal threshold sits this fraction of the way from noise to signal.
    pub threshold_fraction: f64,
    /// RR intervals kept for the running average.
    pub rr_history: usize,
    /// Half-width of the R-time refinement window on the band-passed ECG.
    pub refine_radius_s: f64,
}

impl Default for PanTompkinsConfig {
    fn default() -> Self {
        PanTompkinsConfig {
            band_lo_hz: 5.0,
            band_hi_hz: 15.0,
            integration_window_s: 0.150,
            refractory_s: 0.200,
            searchback_factor: 1.66,
            adaptation: 0.125,
            searchback_adaptation: 0.25,
            threshold_fraction: 0.25,
            rr_history: 8,
            refine_radius_s: 0.100,
        }
    }
}

/// Centered five-point derivative, the classic (-1, -2, 0, 2, 1)/8 kernel.
/// The two samples at each edge are zeroed.
fn five_point_derivative(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    if n < 5 {
        return out;
    }
    for i in 2..n - 2 {
        out[i] = (2.0 * (x[i + 1] - x[i - 1]) + x[i + 2] - x[i - 2]) / 8.0;
    }
    out
}

/// Detect R peaks. Requires at least 100 Hz sampling and ten seconds of
/// signal; a flat or beatless record yields an empty annotation rather
/// than an error.
pub fn detect_r_peaks(ecg: &TimeSeries, cfg: &PanTompkinsConfig) -> Result<BeatAnnotation> {
    if ecg.fs < 100.0 {
        return Err(Error::InvalidInput(format!(
            "sampling rate {} Hz below the 100 Hz minimum",
            ecg.fs
        )));
    }
    if ecg.duration() < 10.0 {
        return Err(Error::InvalidInput(format!(
            "need >= 10 s of ECG, got {:.2} s",
            ecg.duration()
        )));
    }
    let fs = ecg.fs;

    let bp = bandpass(ecg, cfg.band_lo_hz, cfg.band_hi_hz)?;
    let deriv = five_point_derivative(&bp.samples);
    let squared: Vec<f64> = deriv.iter().map(|v| v * v).collect();
    let win = ((cfg.integration_window_s * fs).round() as usize).max(1);
    let integ = moving_average(&squared, win);

    // candidate peaks: local maxima of the integrated envelope
    let mut candidates: Vec<(usize, f64)> = Vec::new();
    for i in 1..integ.len().saturating_sub(1) {
        if integ[i] > integ[i - 1] && integ[i] >= integ[i + 1] && integ[i] > 0.0 {
            candidates.push((i, integ[i]));
        }
    }

    // threshold seeds from the first two seconds
    let learn = ((2.0 * fs) as usize).min(integ.len());
    let seed_max = integ[..learn].iter().cloned().fold(0.0f64, f64::max);
    let seed_mean = integ[..learn].iter().sum::<f64>() / learn as f64;
    let mut spk = 0.25 * seed_max;
    let mut npk = 0.5 * seed_mean;

    let refractory = (cfg.refractory_s * fs) as i64;
    let mut accepted: Vec<usize> = Vec::new();
    let mut rejected_since_last: Vec<(usize, f64)> = Vec::new();
    let mut rr: Vec<f64> = Vec::new();

    let mut k = 0usize;
    while k < candidates.len() {
        let (idx, val) = candidates[k];
        let threshold1 = npk + cfg.threshold_fraction * (spk - npk);

        // before judging this candidate, search back over the rejected
        // peaks whenever the gap since the last beat has grown past the
        // expected interval
        if let (Some(&last), Some(rr_avg)) = (accepted.last(), rr_average(&rr)) {
            let gap = (idx - last) as f64 / fs;
            if gap > cfg.searchback_factor * rr_avg {
                let threshold2 = 0.5 * threshold1;
                let pick = rejected_since_last
                    .iter()
                    .filter(|(j, _)| (*j as i64 - last as i64) >= refractory)
                    .filter(|(j, _)| (idx as i64 - *j as i64) >= refractory)
                    .filter(|(_, v)| *v > threshold2)
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .copied();
                if let Some((j, v)) = pick {
                    spk = cfg.searchback_adaptation * v
                        + (1.0 - cfg.searchback_adaptation) * spk;
                    push_rr(&mut rr, (j - last) as f64 / fs, cfg.rr_history);
                    accepted.push(j);
                    rejected_since_last.retain(|(r, _)| *r > j);
                    continue; // re-evaluate the candidate against the new beat
                }
            }
        }

        let since_last = accepted.last().map(|&l| idx as i64 - l as i64);
        let in_refractory = since_last.map_or(false, |d| d < refractory);

        if !in_refractory && val > threshold1 {
            spk = cfg.adaptation * val + (1.0 - cfg.adaptation) * spk;
            if let Some(&last) = accepted.last() {
                push_rr(&mut rr, (idx - last) as f64 / fs, cfg.rr_history);
            }
            accepted.push(idx);
            rejected_since_last.clear();
        } else {
            if !in_refractory {
                npk = cfg.adaptation * val + (1.0 - cfg.adaptation) * npk;
            }
            rejected_since_last.push((idx, val));
        }
        k += 1;
    }

    // refine beat times on the band-passed ECG
    let radius = (cfg.refine_radius_s * fs).round() as i64;
    let n = bp.samples.len() as i64;
    let mut r_times = Vec::with_capacity(accepted.len());
    let mut last_refined = i64::MIN / 2;
    for &idx in &accepted {
        let lo = (idx as i64 - radius).max(0) as usize;
        let hi = ((idx as i64 + radius + 1).min(n)) as usize;
        let best = (lo..hi)
            .max_by(|&a, &b| bp.samples[a].total_cmp(&bp.samples[b]))
            .unwrap_or(idx);
        let best = best as i64;
        if best - last_refined >= refractory {
            r_times.push(ecg.t0 + best as f64 / fs);
            last_refined = best;
        }
    }

    Ok(BeatAnnotation { r_times, source: AnnotationSource::DetectedPanTompkins })
}

fn push_rr(rr: &mut Vec<f64>, interval: f64, keep: usize) {
    rr.push(interval);
    if rr.len() > keep {
        rr.remove(0);
    }
}

fn rr_average(rr: &[f64]) -> Option<f64> {
    if rr.is_empty() {
        None
    } else {
        Some(rr.iter().sum::<f64>() / rr.len() as f64)
    }
}

/// Consecutive R-R intervals in seconds.
pub fn rr_intervals(ann: &BeatAnnotation) -> Result<Vec<f64>> {
    if ann.r_times.len() < 2 {
        return Err(Error::InsufficientBeats(format!(
            "need >= 2 R peaks for intervals, got {}",
            ann.r_times.len()
        )));
    }
    Ok(ann.r_times.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Mean heart rate implied by a set of R-R intervals: 60 / mean(interval).
pub fn hr_from_intervals(intervals: &[f64]) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::InsufficientBeats("no intervals".into()));
    }
    let m = intervals.iter().sum::<f64>() / intervals.len() as f64;
    Ok(60.0 / m)
}

/// Reference heart rate over `[start_s, end_s]`: the mean of R-R intervals
/// lying entirely inside the window.
pub fn reference_hr(ann: &BeatAnnotation, start_s: f64, end_s: f64) -> Result<f64> {
    let inside: Vec<f64> = ann
        .r_times
        .windows(2)
        .filter(|w| w[0] >= start_s && w[1] <= end_s)
        .map(|w| w[1] - w[0])
        .collect();
    if inside.is_empty() {
        return Err(Error::InsufficientBeats(format!(
            "no full R-R interval inside [{start_s:.2}, {end_s:.2}]"
        )));
    }
    hr_from_intervals(&inside)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_subject, HrTrajectory, SubjectProfile};

    fn synth_ecg(bpm: f64, secs: f64, seed: u64, snr_db: f64) -> (TimeSeries, Vec<f64>) {
        let mut profile = SubjectProfile::basic("t", seed, secs);
        profile.hr = HrTrajectory::constant(bpm);
        profile.ecg_snr_db = snr_db;
        let (rec, truth) = generate_subject(&profile).unwrap();
        (rec.ecg, truth.beat_times)
    }

    /// Greedy one-to-one matching inside a tolerance, in time order.
    fn match_counts(detected: &[f64], truth: &[f64], tol: f64) -> (usize, usize, usize) {
        let mut used = vec![false; truth.len()];
        let mut tp = 0;
        for &d in detected {
            let best = truth
                .iter()
                .enumerate()
                .filter(|(i, t)| !used[*i] && (d - **t).abs() <= tol)
                .min_by(|a, b| (a.1 - d).abs().total_cmp(&(b.1 - d).abs()));
            if let Some((i, _)) = best {
                used[i] = true;
                tp += 1;
            }
        }
        (tp, detected.len() - tp, truth.len() - tp)
    }

    #[test]
    fn detects_clean_beats_with_tight_timing() {
        let (ecg, truth) = synth_ecg(70.0, 60.0, 3, 25.0);
        let ann = detect_r_peaks(&ecg, &PanTompkinsConfig::default()).unwrap();
        let (tp, fp, fne) = match_counts(&ann.r_times, &truth, 0.060);
        assert_eq!(fp, 0, "false positives");
        assert!(fne <= 1, "missed {fne}");
        assert!(tp >= truth.len() - 1);
        // timing against matched truth beats
        for &d in &ann.r_times {
            let nearest = truth
                .iter()
                .map(|t| (t - d).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= 0.020, "off by {nearest}");
        }
    }

    #[test]
    fn accuracy_across_the_hr_band() {
        for &bpm in &[40.0, 60.0, 100.0, 140.0, 185.0] {
            let (ecg, truth) = synth_ecg(bpm, 60.0, 7, 20.0);
            let ann = detect_r_peaks(&ecg, &PanTompkinsConfig::default()).unwrap();
            let (tp, fp, fne) = match_counts(&ann.r_times, &truth, 0.070);
            let sens = tp as f64 / (tp + fne) as f64;
            let prec = tp as f64 / (tp + fp).max(1) as f64;
            assert!(sens >= 0.99, "{bpm} bpm sensitivity {sens}");
            assert!(prec >= 0.99, "{bpm} bpm precision {prec}");
        }
    }

    #[test]
    fn tolerates_ten_db_noise() {
        let (ecg, truth) = synth_ecg(80.0, 60.0, 11, 10.0);
        let ann = detect_r_peaks(&ecg, &PanTompkinsConfig::default()).unwrap();
        let (tp, fp, fne) = match_counts(&ann.r_times, &truth, 0.070);
        let sens = tp as f64 / (tp + fne) as f64;
        let prec = tp as f64 / (tp + fp).max(1) as f64;
        assert!(sens >= 0.99, "sensitivity {sens}");
        assert!(prec >= 0.99, "precision {prec}");
    }

    #[test]
    fn flat_signal_yields_empty_annotation() {
        let ecg = TimeSeries::new(vec![0.0; 30 * 128], 128.0);
        let ann = detect_r_peaks(&ecg, &PanTompkinsConfig::default()).unwrap();
        assert!(ann.r_times.is_empty());
    }

    #[test]
    fn r_times_strictly_increase_with_refractory_spacing() {
        let (ecg, _) = synth_ecg(185.0, 60.0, 13, 15.0);
        let ann = detect_r_peaks(&ecg, &PanTompkinsConfig::default()).unwrap();
        for w in ann.r_times.windows(2) {
            assert!(w[1] - w[0] >= 0.2 - 1e-9, "interval {}", w[1] - w[0]);
        }
    }

    #[test]
    fn preconditions_enforced() {
        let short = TimeSeries::new(vec![0.0; 5 * 128], 128.0);
        assert!(matches!(
            detect_r_peaks(&short, &PanTompkinsConfig::default()),
            Err(Error::InvalidInput(_))
        ));
        let slow = TimeSeries::new(vec![0.0; 1000], 50.0);
        assert!(matches!(
            detect_r_peaks(&slow, &PanTompkinsConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn interval_and_hr_helpers() {
        let ann = BeatAnnotation::from_ground_truth(vec![0.5, 1.5, 2.25]);
        assert_eq!(rr_intervals(&ann).unwrap(), vec![1.0, 0.75]);
        assert!((hr_from_intervals(&[0.5, 1.0]).unwrap() - 80.0).abs() < 1e-12);

        let only = BeatAnnotation::from_ground_truth(vec![0.5]);
        assert!(matches!(rr_intervals(&only), Err(Error::InsufficientBeats(_))));
    }

    #[test]
    fn reference_hr_uses_only_contained_intervals() {
        let ann = BeatAnnotation::from_ground_truth(vec![0.2, 1.2, 2.2, 3.2, 4.2]);
        // [1.0, 3.5] fully contains 1.2-2.2 and 2.2-3.2 only
        let hr = reference_hr(&ann, 1.0, 3.5).unwrap();
        assert!((hr - 60.0).abs() < 1e-9);
        assert!(matches!(
            reference_hr(&ann, 0.0, 0.5),
            Err(Error::InsufficientBeats(_))
        ));
    }

    #[test]
    fn searchback_recovers_attenuated_beat() {
        // shrink one QRS below the running threshold but above half of it;
        // the envelope scales with amplitude squared
        let (mut ecg, truth) = synth_ecg(72.0, 60.0, 19, 30.0);
        let victim = truth[20];
        let fs = ecg.fs;
        let (lo, hi) = (
            ((victim - 0.08) * fs) as usize,
            ((victim + 0.08) * fs) as usize,
        );
        for v in &mut ecg.samples[lo..hi] {
            *v *= 0.42;
        }
        let ann = detect_r_peaks(&ecg, &PanTompkinsConfig::default()).unwrap();
        let hit = ann.r_times.iter().any(|t| (t - victim).abs() < 0.08);
        assert!(hit, "attenuated beat at {victim:.2} s not recovered");
    }
}
