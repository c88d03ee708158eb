//! Multi-wavelength reflective pulse processing: signal containers and DSP
//! primitives, an ECG R-peak detector, per-window pulse template synthesis,
//! a 1-D U-Net that fuses the optical channels into a single clean pulse
//! signal, peak-based heart-rate estimation, and the evaluation harness
//! that ties them together.

pub mod dsp;
pub mod ecg;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pulse;
pub mod signal;
pub mod synth;
pub mod template;

pub use error::{Error, Result};
pub use signal::{GroundTruth, MultiChannelRecord, TimeSeries};
