//! Deterministic synthetic subjects: a beat train driven by a bounded
//! heart-rate trajectory, a QRS-wavelet ECG, and three optical channels
//! that share one clean pulse waveform but differ in gain, noise floor
//! and artifact exposure. Everything is reproducible from the profile
//! seed, and the returned ground truth carries what a real sensor never
//! sees: the beat times and the clean pulse waveform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dsp::bandpass_slice;
use crate::error::{Error, Result};
use crate::signal::{population_std, GroundTruth, MultiChannelRecord, TimeSeries};

/// Physiological heart-rate bounds in beats per minute; the trajectory is
/// clamped into this band, so ground-truth intervals always imply an HR
/// inside it.
pub const HR_MIN_BPM: f64 = 40.0;
pub const HR_MAX_BPM: f64 = 185.0;

/// Time from the electrical beat to the pulse reaching the sensor.
pub const DEFAULT_PULSE_ARRIVAL_S: f64 = 0.2;

const MIN_DURATION_S: f64 = 60.0;
const FIRST_BEAT_S: f64 = 0.35;

// rng stream tags, one per independent noise purpose
const STREAM_HR_WALK: u64 = 1;
const STREAM_ECG_NOISE: u64 = 2;
const STREAM_CH_NOISE: u64 = 3; // +0 green, +1 red, +2 ir
const STREAM_ARTIFACTS: u64 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct HrTrajectory {
    pub baseline_bpm: f64,
    /// Linear trend applied over the recording.
    pub drift_bpm_per_min: f64,
    /// Per-second random-walk step (standard deviation, bpm).
    pub walk_step_bpm: f64,
    /// The walk is clamped to baseline +- this range.
    pub walk_range_bpm: f64,
}

impl HrTrajectory {
    pub fn constant(bpm: f64) -> Self {
        HrTrajectory {
            baseline_bpm: bpm,
            drift_bpm_per_min: 0.0,
            walk_step_bpm: 0.0,
            walk_range_bpm: 0.0,
        }
    }
}

/// Shape of one pulse over its beat, parameterized by the elapsed beat
/// fraction u in [0, 1).
#[derive(Debug, Clone, PartialEq)]
pub enum PulseShape {
    /// Systolic peak plus a smaller diastolic bump; the everyday shape.
    TwoGaussian {
        systolic_frac: f64,
        systolic_width: f64,
        diastolic_frac: f64,
        diastolic_width: f64,
        diastolic_ratio: f64,
    },
    /// 0.5 * (1 - cos(2 pi u)): a constant-rate train of these is a pure
    /// tone at the beat frequency with its maximum at u = 0.5, which makes
    /// peak timing analytically known. Used by detector oracles.
    RaisedCosine,
}

impl Default for PulseShape {
    fn default() -> Self {
        PulseShape::TwoGaussian {
            systolic_frac: 0.30,
            systolic_width: 0.08,
            diastolic_frac: 0.65,
            diastolic_width: 0.12,
            diastolic_ratio: 0.4,
        }
    }
}

impl PulseShape {
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            PulseShape::TwoGaussian {
                systolic_frac,
                systolic_width,
                diastolic_frac,
                diastolic_width,
                diastolic_ratio,
            } => {
                let ds = (u - systolic_frac) / systolic_width;
                let dd = (u - diastolic_frac) / diastolic_width;
                (-0.5 * ds * ds).exp() + diastolic_ratio * (-0.5 * dd * dd).exp()
            }
            PulseShape::RaisedCosine => 0.5 * (1.0 - (2.0 * std::f64::consts::PI * u).cos()),
        }
    }
}

/// Per-channel signal-to-noise ratios in dB, relative to the clean pulse
/// waveform's AC power on that channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelNoise {
    pub green_snr_db: f64,
    pub red_snr_db: f64,
    pub ir_snr_db: f64,
}

impl Default for ChannelNoise {
    fn default() -> Self {
        // wavelength-dependent noise floors: green best, infrared in
        // between, red worst
        ChannelNoise {
            green_snr_db: 20.0,
            red_snr_db: 6.0,
            ir_snr_db: 12.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelMask {
    pub green: bool,
    pub red: bool,
    pub ir: bool,
}

impl ChannelMask {
    pub const ALL: ChannelMask = ChannelMask { green: true, red: true, ir: true };
}

/// Localized disturbance, additive on the masked channels. Amplitudes are
/// absolute, in the units of the clean pulse waveform (whose peak is ~1).
/// Samples outside every episode are left untouched bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub enum ArtifactEpisode {
    /// Band-limited (0.5-10 Hz) noise burst; the same realization lands on
    /// every masked channel, the way motion couples into all wavelengths.
    MotionBurst {
        start_s: f64,
        duration_s: f64,
        amplitude: f64,
        channels: ChannelMask,
    },
    /// Slow sinusoidal drift, ramped in and out inside the episode.
    BaselineWander {
        start_s: f64,
        duration_s: f64,
        amplitude: f64,
        freq_hz: f64,
        phase: f64,
        channels: ChannelMask,
    },
    /// Ambient-light level change: a plateau with short cosine ramps.
    AmbientStep {
        start_s: f64,
        duration_s: f64,
        height: f64,
        channels: ChannelMask,
    },
}

impl ArtifactEpisode {
    pub fn span(&self) -> (f64, f64) {
        match *self {
            ArtifactEpisode::MotionBurst { start_s, duration_s, .. }
            | ArtifactEpisode::BaselineWander { start_s, duration_s, .. }
            | ArtifactEpisode::AmbientStep { start_s, duration_s, .. } => (start_s, duration_s),
        }
    }

    pub fn channels(&self) -> ChannelMask {
        match *self {
            ArtifactEpisode::MotionBurst { channels, .. }
            | ArtifactEpisode::BaselineWander { channels, .. }
            | ArtifactEpisode::AmbientStep { channels, .. } => channels,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectProfile {
    pub id: String,
    pub seed: u64,
    pub duration_s: f64,
    pub fs: f64,
    pub hr: HrTrajectory,
    pub pulse: PulseShape,
    pub pulse_arrival_s: f64,
    pub ecg_snr_db: f64,
    pub noise: ChannelNoise,
    pub artifacts: Vec<ArtifactEpisode>,
}

impl SubjectProfile {
    /// Clean resting profile; callers override what they need.
    pub fn basic(id: &str, seed: u64, duration_s: f64) -> Self {
        SubjectProfile {
            id: id.to_string(),
            seed,
            duration_s,
            fs: 128.0,
            hr: HrTrajectory {
                baseline_bpm: 72.0,
                drift_bpm_per_min: 0.0,
                walk_step_bpm: 0.2,
                walk_range_bpm: 5.0,
            },
            pulse: PulseShape::default(),
            pulse_arrival_s: DEFAULT_PULSE_ARRIVAL_S,
            ecg_snr_db: 25.0,
            noise: ChannelNoise::default(),
            artifacts: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.duration_s >= MIN_DURATION_S) {
            return Err(Error::InvalidInput(format!(
                "duration {} s below minimum {} s",
                self.duration_s, MIN_DURATION_S
            )));
        }
        if !(self.fs > 0.0) {
            return Err(Error::InvalidInput(format!("fs {} must be positive", self.fs)));
        }
        if !(self.hr.baseline_bpm >= HR_MIN_BPM && self.hr.baseline_bpm <= HR_MAX_BPM) {
            return Err(Error::InvalidInput(format!(
                "baseline {} bpm outside [{HR_MIN_BPM}, {HR_MAX_BPM}]",
                self.hr.baseline_bpm
            )));
        }
        if !(self.pulse_arrival_s >= 0.0) {
            return Err(Error::InvalidInput("pulse arrival must be >= 0".into()));
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ricker (Mexican-hat) wavelet; symmetric, so zero-phase filtering keeps
/// its maximum centered and R-peak timing stays exact.
fn ricker(t: f64, width_s: f64) -> f64 {
    let u = t / width_s;
    (1.0 - u * u) * (-0.5 * u * u).exp()
}

/// Per-second bounded random walk, linearly interpolated between knots.
fn hr_at(traj: &HrTrajectory, walk: &[f64], t: f64) -> f64 {
    let k = t.floor();
    let idx = (k as usize).min(walk.len().saturating_sub(1));
    let next = (idx + 1).min(walk.len() - 1);
    let frac = t - k;
    let w = walk[idx] + (walk[next] - walk[idx]) * frac;
    (traj.baseline_bpm + traj.drift_bpm_per_min * t / 60.0 + w).clamp(HR_MIN_BPM, HR_MAX_BPM)
}

/// Generate one subject. Returns the (possibly artifact-laden) record and
/// the clean ground truth, which artifacts never touch.
pub fn generate_subject(profile: &SubjectProfile) -> Result<(MultiChannelRecord, GroundTruth)> {
    profile.validate()?;
    let fs = profile.fs;
    let n = (profile.duration_s * fs).round() as usize;

    // bounded random walk knots, one per second
    let n_knots = profile.duration_s.ceil() as usize + 2;
    let mut walk = Vec::with_capacity(n_knots);
    {
        let mut rng = stream_rng(profile.seed, STREAM_HR_WALK);
        let step = Normal::new(0.0, profile.hr.walk_step_bpm.max(1e-12)).unwrap();
        let mut w = 0.0f64;
        for _ in 0..n_knots {
            walk.push(w);
            if profile.hr.walk_step_bpm > 0.0 {
                w = (w + step.sample(&mut rng))
                    .clamp(-profile.hr.walk_range_bpm, profile.hr.walk_range_bpm);
            }
        }
    }

    // beat train: each interval is 60 / hr at the beat onset, so implied
    // HR tracks the clamped trajectory exactly
    let mut beat_times = Vec::new();
    let mut t = FIRST_BEAT_S;
    while t < profile.duration_s {
        beat_times.push(t);
        t += 60.0 / hr_at(&profile.hr, &walk, t);
    }
    if beat_times.len() < 2 {
        return Err(Error::InvalidInput("profile produces fewer than two beats".into()));
    }

    // ECG: QRS wavelets at beat times
    let qrs_width = 0.014;
    let mut ecg = vec![0.0; n];
    for &b in &beat_times {
        let lo = (((b - 5.0 * qrs_width) * fs).floor() as i64).max(0) as usize;
        let hi = ((((b + 5.0 * qrs_width) * fs).ceil() as i64) as usize).min(n);
        for (i, v) in ecg.iter_mut().enumerate().take(hi).skip(lo) {
            *v += ricker(i as f64 / fs - b, qrs_width);
        }
    }
    add_noise(&mut ecg, profile.ecg_snr_db, stream_rng(profile.seed, STREAM_ECG_NOISE));

    // clean pulse waveform, delayed by the pulse arrival time; beat
    // boundaries are extended by one interval on both sides so the first
    // and last samples still lie inside some beat
    let mut bounds = Vec::with_capacity(beat_times.len() + 2);
    bounds.push(beat_times[0] - (beat_times[1] - beat_times[0]));
    bounds.extend_from_slice(&beat_times);
    let last_rr = beat_times[beat_times.len() - 1] - beat_times[beat_times.len() - 2];
    bounds.push(beat_times[beat_times.len() - 1] + last_rr);
    while bounds[bounds.len() - 1] < profile.duration_s + 2.0 * last_rr {
        bounds.push(bounds[bounds.len() - 1] + last_rr);
    }

    let mut clean = vec![0.0; n];
    {
        let mut j = 0usize;
        for (i, v) in clean.iter_mut().enumerate() {
            let tp = i as f64 / fs - profile.pulse_arrival_s;
            while j + 1 < bounds.len() && bounds[j + 1] <= tp {
                j += 1;
            }
            while j > 0 && bounds[j] > tp {
                j -= 1;
            }
            let u = (tp - bounds[j]) / (bounds[j + 1] - bounds[j]);
            *v = profile.pulse.value(u);
        }
    }

    // optical channels: shared waveform, per-channel gain and noise floor
    let gains = [1.0, 0.8, 0.9];
    let snrs = [
        profile.noise.green_snr_db,
        profile.noise.red_snr_db,
        profile.noise.ir_snr_db,
    ];
    let mut channels: Vec<Vec<f64>> = Vec::with_capacity(3);
    for (k, (&gain, &snr)) in gains.iter().zip(&snrs).enumerate() {
        let mut ch: Vec<f64> = clean.iter().map(|v| gain * v).collect();
        add_noise(&mut ch, snr, stream_rng(profile.seed, STREAM_CH_NOISE + k as u64));
        channels.push(ch);
    }
    let ir = channels.pop().unwrap();
    let red = channels.pop().unwrap();
    let green = channels.pop().unwrap();

    let mut record = MultiChannelRecord::new(
        profile.id.clone(),
        TimeSeries::new(green, fs),
        TimeSeries::new(red, fs),
        TimeSeries::new(ir, fs),
        TimeSeries::new(ecg, fs),
    )?;

    if !profile.artifacts.is_empty() {
        inject_artifacts(&mut record, &profile.artifacts, profile.seed ^ STREAM_ARTIFACTS)?;
    }

    let truth = GroundTruth {
        beat_times,
        clean_ppg: TimeSeries::new(clean, fs),
    };
    Ok((record, truth))
}

/// Add white Gaussian noise at `snr_db` relative to the slice's AC power.
fn add_noise(x: &mut [f64], snr_db: f64, mut rng: ChaCha8Rng) {
    let p_signal = crate::signal::population_variance(x);
    if p_signal <= 0.0 {
        return;
    }
    let sigma = (p_signal * 10f64.powf(-snr_db / 10.0)).sqrt();
    if sigma <= 0.0 {
        return;
    }
    let dist = Normal::new(0.0, sigma).unwrap();
    for v in x.iter_mut() {
        *v += dist.sample(&mut rng);
    }
}

/// Apply artifact episodes to a record in place. Strictly additive and
/// strictly local: samples outside every episode are not touched at all.
/// Episodes must lie inside the record, otherwise nothing is modified and
/// `InvalidInput` is returned.
pub fn inject_artifacts(
    record: &mut MultiChannelRecord,
    episodes: &[ArtifactEpisode],
    seed: u64,
) -> Result<()> {
    let fs = record.fs();
    let n = record.len();
    let t0 = record.green.t0;
    let duration = record.duration();

    for (i, ep) in episodes.iter().enumerate() {
        let (start, dur) = ep.span();
        if !(start >= t0 && dur > 0.0 && start + dur <= t0 + duration + 1e-9) {
            return Err(Error::InvalidInput(format!(
                "episode {i} [{start}, {}) outside record [{t0}, {})",
                start + dur,
                t0 + duration
            )));
        }
    }

    for (i, ep) in episodes.iter().enumerate() {
        let (start, dur) = ep.span();
        let i0 = (((start - t0) * fs).round() as usize).min(n);
        let i1 = ((((start - t0 + dur) * fs).round() as usize).max(i0)).min(n);
        let len = i1 - i0;
        if len == 0 {
            continue;
        }

        let addition: Vec<f64> = match *ep {
            ArtifactEpisode::MotionBurst { amplitude, .. } => {
                let mut rng = stream_rng(seed, i as u64);
                let dist = Normal::new(0.0, 1.0).unwrap();
                let mut noise: Vec<f64> = (0..len).map(|_| dist.sample(&mut rng)).collect();
                if len >= 4 {
                    noise = bandpass_slice(&noise, fs, 0.5, (10.0f64).min(fs / 2.0 * 0.9))?;
                }
                let sd = population_std(&noise);
                let scale = if sd > 0.0 { amplitude / sd } else { 0.0 };
                let ramp = ((0.25 * fs) as usize).min(len / 2);
                noise
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * scale * edge_taper(j, len, ramp))
                    .collect()
            }
            ArtifactEpisode::BaselineWander { amplitude, freq_hz, phase, .. } => {
                let ramp = ((1.0 * fs) as usize).min(len / 2);
                (0..len)
                    .map(|j| {
                        let tt = j as f64 / fs;
                        amplitude
                            * (2.0 * std::f64::consts::PI * freq_hz * tt + phase).sin()
                            * edge_taper(j, len, ramp)
                    })
                    .collect()
            }
            ArtifactEpisode::AmbientStep { height, .. } => {
                let ramp = ((0.05 * fs) as usize).min(len / 2);
                (0..len).map(|j| height * edge_taper(j, len, ramp)).collect()
            }
        };

        let mask = ep.channels();
        for (on, ch) in [
            (mask.green, &mut record.green),
            (mask.red, &mut record.red),
            (mask.ir, &mut record.ir),
        ] {
            if on {
                for (j, v) in addition.iter().enumerate() {
                    ch.samples[i0 + j] += v;
                }
            }
        }
    }
    Ok(())
}

/// Raised-cosine ramp in and out; 1.0 in the interior.
fn edge_taper(j: usize, len: usize, ramp: usize) -> f64 {
    if ramp == 0 {
        return 1.0;
    }
    let from_end = len - 1 - j;
    let d = j.min(from_end);
    if d >= ramp {
        1.0
    } else {
        0.5 * (1.0 - (std::f64::consts::PI * (d as f64 + 1.0) / (ramp as f64 + 1.0)).cos())
    }
}

// ---------------------------------------------------------------------------
// corpus construction
// ---------------------------------------------------------------------------

/// Everything needed to synthesize a reproducible multi-subject corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub n_subjects: usize,
    pub duration_s: f64,
    pub fs: f64,
    pub seed: u64,
    pub artifacts: bool,
    pub noise: ChannelNoise,
    pub ecg_snr_db: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_subjects: 10,
            duration_s: 1800.0,
            fs: 128.0,
            seed: 42,
            artifacts: true,
            noise: ChannelNoise::default(),
            ecg_snr_db: 25.0,
        }
    }
}

/// Deterministic per-subject profiles: staggered resting rates, small
/// drifts, and (optionally) an artifact schedule drawn from the subject
/// seed. Subject ids are `s00`, `s01`, ...
pub fn corpus_profiles(spec: &CorpusSpec) -> Vec<SubjectProfile> {
    (0..spec.n_subjects)
        .map(|i| {
            let seed = spec
                .seed
                .wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let baseline = 56.0 + ((i * 13) % 36) as f64;
            let drift = ((i % 5) as f64 - 2.0) * 0.6;
            let mut profile = SubjectProfile::basic(&format!("s{i:02}"), seed, spec.duration_s);
            profile.fs = spec.fs;
            profile.hr = HrTrajectory {
                baseline_bpm: baseline,
                drift_bpm_per_min: drift,
                walk_step_bpm: 0.25,
                walk_range_bpm: 6.0,
            };
            profile.noise = spec.noise;
            profile.ecg_snr_db = spec.ecg_snr_db;
            if spec.artifacts {
                profile.artifacts =
                    default_artifact_schedule(seed, spec.duration_s, spec.fs);
            }
            profile
        })
        .collect()
}

/// Artifact schedule with wavelength-dependent exposure: red is hit most,
/// green least. Amplitudes are in clean-pulse units (pulse peak ~1, AC
/// std ~0.3).
fn default_artifact_schedule(seed: u64, duration_s: f64, _fs: f64) -> Vec<ArtifactEpisode> {
    let mut rng = stream_rng(seed, STREAM_ARTIFACTS + 1);
    let mut eps = Vec::new();

    // motion bursts every 40-80 s
    let mut t = 15.0 + rng.gen_range(0.0..30.0);
    while t + 10.0 < duration_s {
        let dur = rng.gen_range(2.0..6.0);
        let mut mask = ChannelMask {
            red: rng.gen_bool(0.9),
            ir: rng.gen_bool(0.55),
            green: rng.gen_bool(0.3),
        };
        if !(mask.red || mask.ir || mask.green) {
            mask.red = true;
        }
        eps.push(ArtifactEpisode::MotionBurst {
            start_s: t,
            duration_s: dur,
            amplitude: rng.gen_range(1.0..2.5),
            channels: mask,
        });
        t += dur + rng.gen_range(35.0..75.0);
    }

    // slow wander episodes, a few per ten minutes, mostly red and infrared
    let n_wander = ((duration_s / 600.0).ceil() as usize) * 2 + 1;
    for _ in 0..n_wander {
        let dur = rng.gen_range(20.0..60.0);
        let start = rng.gen_range(5.0..(duration_s - dur - 5.0).max(6.0));
        eps.push(ArtifactEpisode::BaselineWander {
            start_s: start,
            duration_s: dur,
            amplitude: rng.gen_range(0.4..1.0),
            freq_hz: rng.gen_range(0.1..0.35),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
            channels: ChannelMask {
                red: true,
                ir: true,
                green: rng.gen_bool(0.5),
            },
        });
    }

    // ambient light steps: green and red share the visible photodiode,
    // the infrared one only sometimes reacts
    let n_steps = ((duration_s / 600.0).ceil() as usize) * 2;
    for _ in 0..n_steps {
        let dur = rng.gen_range(5.0..20.0);
        let start = rng.gen_range(5.0..(duration_s - dur - 5.0).max(6.0));
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        eps.push(ArtifactEpisode::AmbientStep {
            start_s: start,
            duration_s: dur,
            height: sign * rng.gen_range(0.6..1.6),
            channels: ChannelMask {
                green: true,
                red: true,
                ir: rng.gen_bool(0.5),
            },
        });
    }

    eps.sort_by(|a, b| a.span().0.total_cmp(&b.span().0));
    eps
}
