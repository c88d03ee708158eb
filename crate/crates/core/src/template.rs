//! Per-window pulse templates and the reference signal synthesized from
//! them. Beats are cut from the band-passed optical channels anchored on
//! ECG R times, z-scored, and gated against an idealized leaning-triangle
//! pulse; the survivors of a window are averaged into that window's
//! template. A subject's reference signal is then laid down beat by beat,
//! blending the two nearest window templates and resampling each blend to
//! the actual beat-to-beat interval.

use crate::error::{Error, Result};
use crate::signal::{self, TimeSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateConfig {
    /// Window length over which beats are pooled into one template.
    pub window_s: f64,
    /// Samples per normalized template.
    pub template_len: usize,
    /// Minimum correlation against the idealized pulse for a beat to count.
    pub gate_r: f64,
    /// Fraction of the idealized pulse spent rising.
    pub rise_frac: f64,
    pub min_hr_bpm: f64,
    pub max_hr_bpm: f64,
    /// Beats shorter than this many samples are discarded outright.
    pub min_beat_samples: usize,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        TemplateConfig {
            window_s: 300.0,
            template_len: 100,
            gate_r: 0.8,
            rise_frac: 0.3,
            min_hr_bpm: 40.0,
            max_hr_bpm: 185.0,
            min_beat_samples: 10,
        }
    }
}

/// Averaged, z-scored pulse shape for one time window.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTemplate {
    pub wave: Vec<f64>,
    /// Center of the source window in seconds.
    pub center_time: f64,
    pub n_contributing: usize,
    pub mean_gate_corr: f64,
}

/// Asymmetric triangle rising over `rise_frac` of its length, the crude
/// systolic-upstroke / diastolic-decay shape used as the beat gate.
/// Returned z-scored. The peak lands at `floor(rise_frac * (len - 1))`.
pub fn leaning_triangle(len: usize, rise_frac: f64) -> Result<Vec<f64>> {
    if len < 3 {
        return Err(Error::InvalidConfig(format!("triangle needs >= 3 samples, got {len}")));
    }
    if !(0.0..=1.0).contains(&rise_frac) {
        return Err(Error::InvalidConfig(format!("rise fraction {rise_frac} outside [0, 1]")));
    }
    let peak = (rise_frac * (len - 1) as f64).floor() as usize;
    let mut wave = vec![0.0; len];
    for (i, w) in wave.iter_mut().enumerate() {
        *w = if i <= peak {
            if peak == 0 {
                1.0
            } else {
                i as f64 / peak as f64
            }
        } else {
            1.0 - (i - peak) as f64 / (len - 1 - peak) as f64
        };
    }
    signal::zscore(&wave)
}

/// One segmented beat: samples between consecutive anchor indices.
#[derive(Debug, Clone)]
pub struct SegmentedBeat {
    /// Absolute sample index of the beat onset.
    pub start_index: usize,
    pub samples: Vec<f64>,
}

/// Cut a channel into beats anchored at `round(t * fs)` for consecutive
/// beat times. Beats whose implied rate falls outside the configured band
/// or that are shorter than `min_beat_samples` are dropped.
pub fn segment_beats(
    channel: &TimeSeries,
    beat_times: &[f64],
    cfg: &TemplateConfig,
) -> Vec<SegmentedBeat> {
    let fs = channel.fs;
    let base = channel.abs_start_index();
    let mut beats = Vec::new();
    for w in beat_times.windows(2) {
        let interval = w[1] - w[0];
        if interval <= 0.0 {
            continue;
        }
        let hr = 60.0 / interval;
        if hr < cfg.min_hr_bpm || hr > cfg.max_hr_bpm {
            continue;
        }
        let a = (w[0] * fs).round() as i64 - base;
        let b = (w[1] * fs).round() as i64 - base;
        if a < 0 || b as usize > channel.len() {
            continue;
        }
        let (a, b) = (a as usize, b as usize);
        if b - a < cfg.min_beat_samples {
            continue;
        }
        beats.push(SegmentedBeat {
            start_index: (base + a as i64) as usize,
            samples: channel.samples[a..b].to_vec(),
        });
    }
    beats
}

/// Gate z-scored, length-normalized beats against the leaning triangle and
/// average the survivors. `None` when no beat passes the gate.
pub fn gate_and_average(
    beats: &[SegmentedBeat],
    cfg: &TemplateConfig,
) -> Result<Option<(Vec<f64>, usize, f64)>> {
    let ideal = leaning_triangle(cfg.template_len, cfg.rise_frac)?;
    let mut sum = vec![0.0; cfg.template_len];
    let mut kept = 0usize;
    let mut corr_sum = 0.0;
    for beat in beats {
        let resampled = match signal::resample(&beat.samples, cfg.template_len) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let z = match signal::zscore(&resampled) {
            Ok(z) => z,
            Err(_) => continue, // degenerate beat carries no shape
        };
        let r = signal::pearson(&z, &ideal)?;
        if r > cfg.gate_r {
            for (s, v) in sum.iter_mut().zip(&z) {
                *s += v;
            }
            kept += 1;
            corr_sum += r;
        }
    }
    if kept == 0 {
        return Ok(None);
    }
    for s in &mut sum {
        *s /= kept as f64;
    }
    Ok(Some((sum, kept, corr_sum / kept as f64)))
}

/// Build one template per `window_s` window, pooling beats from all the
/// given channels. Windows are non-overlapping from the record start;
/// `floor(duration / window_s)` of them, and at least one even for shorter
/// records. Errors with [`Error::NoUsableSignal`] when not a single window
/// produces a template.
pub fn build_window_templates(
    channels: &[&TimeSeries],
    beat_times: &[f64],
    cfg: &TemplateConfig,
) -> Result<Vec<PulseTemplate>> {
    let first = channels.first().ok_or_else(|| {
        Error::InvalidInput("template synthesis needs at least one channel".into())
    })?;
    let t0 = first.t0;
    let duration = first.duration();
    let n_windows = ((duration / cfg.window_s).floor() as usize).max(1);

    let mut per_channel_beats: Vec<Vec<SegmentedBeat>> = Vec::new();
    for ch in channels {
        per_channel_beats.push(segment_beats(ch, beat_times, cfg));
    }
    let fs = first.fs;

    let mut templates = Vec::new();
    for w in 0..n_windows {
        let lo = t0 + w as f64 * cfg.window_s;
        // last window absorbs the remainder
        let hi = if w + 1 == n_windows { t0 + duration } else { lo + cfg.window_s };
        let lo_idx = (lo * fs).round() as usize;
        let hi_idx = (hi * fs).round() as usize;
        let pooled: Vec<SegmentedBeat> = per_channel_beats
            .iter()
            .flatten()
            .filter(|b| b.start_index >= lo_idx && b.start_index < hi_idx)
            .cloned()
            .collect();
        if let Some((wave, kept, mean_r)) = gate_and_average(&pooled, cfg)? {
            templates.push(PulseTemplate {
                wave,
                center_time: (lo + hi) / 2.0,
                n_contributing: kept,
                mean_gate_corr: mean_r,
            });
        }
    }
    if templates.is_empty() {
        return Err(Error::NoUsableSignal(
            "no window yielded a template; every beat failed the gate".into(),
        ));
    }
    Ok(templates)
}

/// Template for time `t`: linear blend of the two bracketing window
/// templates, re-z-scored; the nearest one verbatim outside the bracket.
fn template_at(templates: &[PulseTemplate], t: f64) -> Result<Vec<f64>> {
    debug_assert!(!templates.is_empty());
    if t <= templates[0].center_time {
        return Ok(templates[0].wave.clone());
    }
    if t >= templates[templates.len() - 1].center_time {
        return Ok(templates[templates.len() - 1].wave.clone());
    }
    let hi = templates.partition_point(|tpl| tpl.center_time < t);
    let (a, b) = (&templates[hi - 1], &templates[hi]);
    let w1 = (b.center_time - t) / (b.center_time - a.center_time);
    let blended: Vec<f64> = a
        .wave
        .iter()
        .zip(&b.wave)
        .map(|(x, y)| w1 * x + (1.0 - w1) * y)
        .collect();
    signal::zscore(&blended)
}

/// Lay templates down beat to beat: for each interval the blend is taken at
/// the interval midpoint, resampled to `round(interval * fs)` samples, and
/// written at `round(t_i * fs)`. Samples before the first beat and from the
/// last beat onward stay zero.
pub fn synthesize_reference(
    templates: &[PulseTemplate],
    beat_times: &[f64],
    fs: f64,
    t0: f64,
    n_samples: usize,
) -> Result<TimeSeries> {
    if templates.is_empty() {
        return Err(Error::NoUsableSignal("no templates to synthesize from".into()));
    }
    if beat_times.len() < 2 {
        return Err(Error::InsufficientBeats(format!(
            "reference synthesis needs >= 2 beats, got {}",
            beat_times.len()
        )));
    }
    let base = (t0 * fs).round() as i64;
    let mut out = vec![0.0; n_samples];
    for w in beat_times.windows(2) {
        let interval = w[1] - w[0];
        if interval <= 0.0 {
            continue;
        }
        let len = round_half_away(interval * fs) as usize;
        if len < 2 {
            continue;
        }
        let tpl = template_at(templates, (w[0] + w[1]) / 2.0)?;
        let beat = signal::resample(&tpl, len)?;
        let a = (w[0] * fs).round() as i64 - base;
        for (k, v) in beat.iter().enumerate() {
            let idx = a + k as i64;
            if idx >= 0 && (idx as usize) < n_samples {
                out[idx as usize] = *v;
            }
        }
    }
    Ok(TimeSeries::with_t0(out, fs, t0))
}

fn round_half_away(x: f64) -> f64 {
    x.round()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::bandpass;
    use crate::signal;
    use crate::synth::{generate_subject, SubjectProfile};

    #[test]
    fn triangle_peak_position_and_normalization() {
        let tri = leaning_triangle(100, 0.3).unwrap();
        let peak = tri
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 29); // floor(0.3 * 99)
        let m = signal::mean(&tri);
        assert!(m.abs() < 1e-12);
        assert!((signal::population_std(&tri) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_degenerate_rise_fractions() {
        // rise 0: immediate peak then monotone decay
        let tri = leaning_triangle(10, 0.0).unwrap();
        let peak = tri
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 0);
        assert!(leaning_triangle(2, 0.3).is_err());
        assert!(leaning_triangle(10, 1.5).is_err());
    }

    #[test]
    fn segmentation_anchors_at_rounded_indices() {
        let fs = 128.0;
        let ts = TimeSeries::new((0..1280).map(|i| i as f64).collect(), fs);
        let cfg = TemplateConfig::default();
        let beats = segment_beats(&ts, &[1.0, 2.0, 3.0], &cfg);
        assert_eq!(beats.len(), 2);
        assert_eq!(beats[0].start_index, 128);
        assert_eq!(beats[0].samples.len(), 128);
        assert_eq!(beats[0].samples[0], 128.0);
        assert_eq!(beats[1].start_index, 256);
    }

    #[test]
    fn segmentation_drops_out_of_band_rates() {
        let fs = 128.0;
        let ts = TimeSeries::new(vec![0.0; 128 * 30], fs);
        let cfg = TemplateConfig::default();
        // 0.2 s interval is 300 bpm, 2.0 s is 30 bpm; only the 1.0 s beat stays
        let beats = segment_beats(&ts, &[1.0, 1.2, 2.2, 4.2, 5.2], &cfg);
        assert_eq!(beats.len(), 1);
        assert_eq!(beats[0].start_index, (4.2f64 * fs).round() as usize);
    }

    #[test]
    fn gate_keeps_triangle_like_beats_and_rejects_noise() {
        let cfg = TemplateConfig::default();
        let ideal = leaning_triangle(80, 0.3).unwrap();
        let mut wobbled = ideal.clone();
        for (i, v) in wobbled.iter_mut().enumerate() {
            *v += 0.05 * ((i as f64) * 0.7).sin();
        }
        let alternating: Vec<f64> =
            (0..80).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let beats = vec![
            SegmentedBeat { start_index: 0, samples: wobbled },
            SegmentedBeat { start_index: 80, samples: alternating },
            SegmentedBeat { start_index: 160, samples: vec![0.0; 80] },
        ];
        let (wave, kept, mean_r) = gate_and_average(&beats, &cfg).unwrap().unwrap();
        assert_eq!(kept, 1);
        assert!(mean_r > 0.99);
        assert_eq!(wave.len(), cfg.template_len);
        let r = signal::pearson(&wave, &leaning_triangle(100, 0.3).unwrap()).unwrap();
        assert!(r > 0.99);
    }

    #[test]
    fn gate_returns_none_when_everything_fails() {
        let cfg = TemplateConfig::default();
        let beats = vec![SegmentedBeat {
            start_index: 0,
            samples: (0..50).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect(),
        }];
        assert!(gate_and_average(&beats, &cfg).unwrap().is_none());
    }

    #[test]
    fn window_count_follows_duration() {
        let profile = SubjectProfile::basic("w", 5, 660.0);
        let (rec, truth) = generate_subject(&profile).unwrap();
        let filtered = bandpass(&rec.green, 0.6, 3.3).unwrap();
        let cfg = TemplateConfig::default();
        let templates =
            build_window_templates(&[&filtered], &truth.beat_times, &cfg).unwrap();
        // floor(660 / 300) = 2 windows, remainder folded into the last
        assert_eq!(templates.len(), 2);
        assert!(templates[0].center_time < templates[1].center_time);
        for t in &templates {
            assert!(t.n_contributing > 0);
            assert!(t.mean_gate_corr > 0.8);
        }
    }

    #[test]
    fn short_record_still_gets_one_window() {
        let profile = SubjectProfile::basic("w", 6, 120.0);
        let (rec, truth) = generate_subject(&profile).unwrap();
        let filtered = bandpass(&rec.green, 0.6, 3.3).unwrap();
        let templates =
            build_window_templates(&[&filtered], &truth.beat_times, &TemplateConfig::default())
                .unwrap();
        assert_eq!(templates.len(), 1);
    }

    #[test]
    fn hopeless_input_is_no_usable_signal() {
        let ts = TimeSeries::new(vec![0.0; 128 * 60], 128.0);
        let beats: Vec<f64> = (0..50).map(|i| 1.0 + i as f64).collect();
        let err =
            build_window_templates(&[&ts], &beats, &TemplateConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NoUsableSignal(_)));
    }

    #[test]
    fn reference_is_zero_outside_beat_span() {
        let tpl = PulseTemplate {
            wave: leaning_triangle(100, 0.3).unwrap(),
            center_time: 30.0,
            n_contributing: 5,
            mean_gate_corr: 0.9,
        };
        let fs = 128.0;
        let beats = vec![2.0, 3.0, 4.0];
        let reference = synthesize_reference(&[tpl], &beats, fs, 0.0, 128 * 60).unwrap();
        let first = (2.0 * fs).round() as usize;
        let last = (4.0 * fs).round() as usize;
        assert!(reference.samples[..first].iter().all(|&v| v == 0.0));
        assert!(reference.samples[last..].iter().all(|&v| v == 0.0));
        let mid = &reference.samples[first..last];
        assert!(mid.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn reference_beat_lengths_follow_intervals() {
        let tpl = PulseTemplate {
            wave: leaning_triangle(100, 0.3).unwrap(),
            center_time: 0.0,
            n_contributing: 1,
            mean_gate_corr: 1.0,
        };
        let fs = 128.0;
        // 0.75 s interval: 96 samples, peak near floor(0.3 * 95) after onset
        let reference =
            synthesize_reference(&[tpl], &[1.0, 1.75], fs, 0.0, 128 * 3).unwrap();
        let onset = 128usize;
        let seg = &reference.samples[onset..onset + 96];
        let peak = seg
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((peak as i64 - 28).unsigned_abs() <= 1, "peak at {peak}");
    }

    #[test]
    fn blending_interpolates_between_window_shapes() {
        let early = PulseTemplate {
            wave: leaning_triangle(100, 0.2).unwrap(),
            center_time: 10.0,
            n_contributing: 1,
            mean_gate_corr: 1.0,
        };
        let late = PulseTemplate {
            wave: leaning_triangle(100, 0.6).unwrap(),
            center_time: 30.0,
            n_contributing: 1,
            mean_gate_corr: 1.0,
        };
        let mid = template_at(&[early.clone(), late.clone()], 20.0).unwrap();
        let r_early = signal::pearson(&mid, &early.wave).unwrap();
        let r_late = signal::pearson(&mid, &late.wave).unwrap();
        let even = leaning_triangle(100, 0.4).unwrap();
        let r_even = signal::pearson(&mid, &even).unwrap();
        assert!(r_even > r_early && r_even > r_late);
        // blend is re-normalized
        assert!(signal::mean(&mid).abs() < 1e-12);
        assert!((signal::population_std(&mid) - 1.0).abs() < 1e-12);
        // outside the bracket the nearest template is returned verbatim
        assert_eq!(template_at(&[early.clone(), late], 5.0).unwrap(), early.wave);
    }

    #[test]
    fn synthesized_reference_tracks_clean_pulse() {
        let profile = SubjectProfile::basic("ref", 21, 300.0);
        let (rec, truth) = generate_subject(&profile).unwrap();
        let cfg = TemplateConfig::default();
        let channels: Vec<TimeSeries> = rec
            .optical_channels()
            .iter()
            .map(|(_, ch)| bandpass(ch, 0.6, 3.3).unwrap())
            .collect();
        let refs: Vec<&TimeSeries> = channels.iter().collect();
        let templates = build_window_templates(&refs, &truth.beat_times, &cfg).unwrap();
        let reference = synthesize_reference(
            &templates,
            &truth.beat_times,
            rec.fs(),
            0.0,
            rec.len(),
        )
        .unwrap();
        // compare on an interior stretch fully covered by beats
        let fs = rec.fs();
        let a = (20.0 * fs) as usize;
        let b = (280.0 * fs) as usize;
        let clean = bandpass(&truth.clean_ppg, 0.6, 3.3).unwrap();
        let r = signal::pearson(&reference.samples[a..b], &clean.samples[a..b]).unwrap();
        assert!(r > 0.9, "reference correlation {r}");
    }
}
