//! Zero-phase Butterworth band-pass.
//!
//! The band-pass is a cascade of one second-order high-pass section at the
//! low edge and one second-order low-pass section at the high edge. Each
//! section is the bilinear transform of the analog Butterworth prototype
//! with its own cutoff prewarped, which is exactly the RBJ biquad with
//! Q = 1/sqrt(2). The cascade is run forward and backward, so the net
//! magnitude response is the squared single-pass response and the phase is
//! zero; peak positions survive filtering, which the beat detectors rely on.
//!
//! Edge transients are suppressed by mirror-extending the input by three
//! settling lengths on each side before filtering. The settling length is
//! measured from the cascade's own impulse response: the last index whose
//! magnitude still reaches 1e-6 of the peak. Mirror indexing folds as many
//! times as needed, so short sections (a few seconds) remain filterable
//! even when the low cutoff settles slowly.

use crate::error::{Error, Result};
use crate::signal::TimeSeries;

/// Impulse response magnitudes below `peak * SETTLE_FRACTION` count as settled.
const SETTLE_FRACTION: f64 = 1e-6;
/// Input is mirror-extended by this multiple of the settling length.
const PAD_SETTLING_MULTIPLE: usize = 3;
/// Settling search horizon in seconds; cutoffs slow enough to exceed it are
/// clamped rather than searched further.
const SETTLE_HORIZON_S: f64 = 120.0;

/// One second-order section, coefficients normalized so a0 = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Second-order Butterworth low-pass (bilinear transform, prewarped cutoff).
    pub fn butterworth_lowpass(fc: f64, fs: f64) -> Biquad {
        let w0 = 2.0 * std::f64::consts::PI * fc / fs;
        let (sw, cw) = (w0.sin(), w0.cos());
        let alpha = sw * std::f64::consts::FRAC_1_SQRT_2; // sin(w0) / (2 Q), Q = 1/sqrt(2)
        let a0 = 1.0 + alpha;
        Biquad {
            b0: (1.0 - cw) / 2.0 / a0,
            b1: (1.0 - cw) / a0,
            b2: (1.0 - cw) / 2.0 / a0,
            a1: -2.0 * cw / a0,
            a2: (1.0 - alpha) / a0,
        }
    }

    /// Second-order Butterworth high-pass (bilinear transform, prewarped cutoff).
    pub fn butterworth_highpass(fc: f64, fs: f64) -> Biquad {
        let w0 = 2.0 * std::f64::consts::PI * fc / fs;
        let (sw, cw) = (w0.sin(), w0.cos());
        let alpha = sw * std::f64::consts::FRAC_1_SQRT_2;
        let a0 = 1.0 + alpha;
        Biquad {
            b0: (1.0 + cw) / 2.0 / a0,
            b1: -(1.0 + cw) / a0,
            b2: (1.0 + cw) / 2.0 / a0,
            a1: -2.0 * cw / a0,
            a2: (1.0 - alpha) / a0,
        }
    }

    /// Run the section over `x` in place (direct form II transposed,
    /// zero initial state).
    pub fn apply_in_place(&self, x: &mut [f64]) {
        let mut z1 = 0.0;
        let mut z2 = 0.0;
        for v in x.iter_mut() {
            let y = self.b0 * *v + z1;
            z1 = self.b1 * *v - self.a1 * y + z2;
            z2 = self.b2 * *v - self.a2 * y;
            *v = y;
        }
    }

    /// Magnitude of the section's frequency response at `f` (single pass).
    pub fn magnitude_at(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f / fs;
        let (re1, im1) = (w.cos(), -w.sin()); // z^-1 on the unit circle
        let (re2, im2) = (re1 * re1 - im1 * im1, 2.0 * re1 * im1); // z^-2
        let num_re = self.b0 + self.b1 * re1 + self.b2 * re2;
        let num_im = self.b1 * im1 + self.b2 * im2;
        let den_re = 1.0 + self.a1 * re1 + self.a2 * re2;
        let den_im = self.a1 * im1 + self.a2 * im2;
        (num_re * num_re + num_im * num_im).sqrt() / (den_re * den_re + den_im * den_im).sqrt()
    }
}

/// The two sections making up a band-pass, high-pass first.
pub fn bandpass_sections(lo_hz: f64, hi_hz: f64, fs: f64) -> Result<[Biquad; 2]> {
    if !(lo_hz > 0.0) || !(hi_hz > lo_hz) || !(hi_hz < fs / 2.0) {
        return Err(Error::InvalidInput(format!(
            "band edges must satisfy 0 < lo < hi < fs/2, got lo {lo_hz}, hi {hi_hz}, fs {fs}"
        )));
    }
    Ok([
        Biquad::butterworth_highpass(lo_hz, fs),
        Biquad::butterworth_lowpass(hi_hz, fs),
    ])
}

/// Single forward pass magnitude of the cascade at `f`. The zero-phase
/// filter realizes the square of this.
pub fn cascade_magnitude(sections: &[Biquad], f: f64, fs: f64) -> f64 {
    sections.iter().map(|s| s.magnitude_at(f, fs)).product()
}

/// Samples after which the forward cascade's impulse response stays below
/// 1e-6 of its peak magnitude.
pub fn settling_length(sections: &[Biquad], fs: f64) -> usize {
    let horizon = ((SETTLE_HORIZON_S * fs) as usize).max(16);
    let mut h = vec![0.0; horizon];
    h[0] = 1.0;
    for s in sections {
        s.apply_in_place(&mut h);
    }
    let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return 1;
    }
    let thresh = peak * SETTLE_FRACTION;
    let last = h.iter().rposition(|v| v.abs() >= thresh).unwrap_or(0);
    last + 1
}

/// Mirror an arbitrary integer index into [0, n), reflecting about both
/// ends without repeating the edge samples (period 2(n-1)).
fn mirror_index(i: i64, n: usize) -> usize {
    debug_assert!(n >= 1);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let mut k = i.rem_euclid(period);
    if k >= n as i64 {
        k = period - k;
    }
    k as usize
}

/// Zero-phase Butterworth band-pass over a raw slice.
///
/// See the module docs for the construction. Output has the same length
/// as the input; DC is removed exactly (the high-pass numerator sums to
/// zero) and a symmetric input stays symmetric.
pub fn bandpass_slice(x: &[f64], fs: f64, lo_hz: f64, hi_hz: f64) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "bandpass needs >= 2 samples, got {}",
            x.len()
        )));
    }
    let sections = bandpass_sections(lo_hz, hi_hz, fs)?;
    let pad = PAD_SETTLING_MULTIPLE * settling_length(&sections, fs);

    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for j in 0..(n + 2 * pad) {
        ext.push(x[mirror_index(j as i64 - pad as i64, n)]);
    }

    for s in &sections {
        s.apply_in_place(&mut ext);
    }
    ext.reverse();
    for s in &sections {
        s.apply_in_place(&mut ext);
    }
    ext.reverse();

    Ok(ext[pad..pad + n].to_vec())
}

/// Zero-phase band-pass preserving the time base.
pub fn bandpass(x: &TimeSeries, lo_hz: f64, hi_hz: f64) -> Result<TimeSeries> {
    Ok(TimeSeries {
        samples: bandpass_slice(&x.samples, x.fs, lo_hz, hi_hz)?,
        fs: x.fs,
        t0: x.t0,
    })
}
