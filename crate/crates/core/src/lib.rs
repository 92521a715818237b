//! Waveform-aware channel augmentation for RF fingerprinting.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! - [`iq`] and [`manifest`]: raw `.bin` I/Q files, dataset manifests, windowing.
//! - [`channel`]: 3GPP TDL/CDL fading channels, delay-spread scaling, AWGN.
//! - [`impairments`]: per-transmitter hardware fingerprints.
//! - [`wavegen`]: 5G-, WiFi- and LTE-like OFDM bursts.
//! - [`augment`]: policies routing each waveform kind to CDL, TDL or passthrough.
//! - [`classifier`]: a small convolutional network trained from scratch.
//! - [`experiment`]: the Day-1 / Day-2 cross-day protocol and its report.

pub mod augment;
pub mod channel;
pub mod classifier;
pub mod error;
pub mod experiment;
pub mod impairments;
pub mod iq;
pub mod manifest;
pub mod seed;
pub mod wavegen;

pub use error::{Error, Result};
pub use iq::{IqBuffer, Example};
pub use manifest::{DatasetManifest, Day, Provenance, RecordingMeta, WaveformKind};
