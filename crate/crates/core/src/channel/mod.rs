//! TDL/CDL fading channel emulation and AWGN.

pub mod fading;
pub mod fir;
pub mod profiles;

use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iq::{mean_power, IqBuffer};
use crate::seed;

pub use fading::{gen_fading, realize, FadingRealization, TapFading};
pub use fir::FractionalDelay;
pub use profiles::{
    cdl_profile, rms_delay_spread, tdl_profile, ChannelModel, ClusterProfile, Family, ProfileId,
    ScaledProfile, TapProfile,
};

/// One randomized channel draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub delay_spread_s: f64,
    pub max_doppler_hz: f64,
    pub sample_rate_hz: f64,
    /// SNR of the AWGN stage that follows the channel, if any.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Config(format!("sample rate {} must be positive", self.sample_rate_hz)));
        }
        if !(self.delay_spread_s.is_finite() && self.delay_spread_s >= 0.0) {
            return Err(Error::Config(format!("delay spread {} must be >= 0", self.delay_spread_s)));
        }
        if !(self.max_doppler_hz >= 0.0 && self.max_doppler_hz < self.sample_rate_hz / 2.0) {
            return Err(Error::Config(format!(
                "max Doppler {} Hz must lie in [0, fs/2)",
                self.max_doppler_hz
            )));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::Config("snr must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Passes `x` through the multipath channel described by `profile`.
///
/// `y[k] = sum_n g_n[k] * x(k - tau_n * fs)`, with fractional delays realized
/// by [`FractionalDelay`]. The output has the input's length.
pub fn apply_channel(x: &IqBuffer, profile: &ScaledProfile, config: &ChannelConfig) -> Result<IqBuffer> {
    config.validate()?;
    let fs = config.sample_rate_hz;
    if ((x.sample_rate_hz() - fs) / fs).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "buffer sample rate {} Hz differs from channel sample rate {fs} Hz",
            x.sample_rate_hz()
        )));
    }
    if x.is_empty() {
        return Ok(x.clone());
    }
    if profile.max_delay_s() >= x.duration_s() {
        return Err(Error::Config(format!(
            "max tap delay {} s is not shorter than the buffer ({} s)",
            profile.max_delay_s(),
            x.duration_s()
        )));
    }

    let n = x.len();
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for tap in 0..profile.num_taps() {
        let delayed = FractionalDelay::new(profile.delays_s[tap] * fs).apply(x.samples());
        let g = gen_fading(tap, profile, config, n);
        for (k, (yk, d)) in y.iter_mut().zip(&delayed).enumerate() {
            *yk += g.gain(k) * d;
        }
    }
    Ok(x.with_samples(y))
}

/// Adds circular complex Gaussian noise with per-sample variance
/// `mean(|x|^2) / 10^(snr_db / 10)`.
pub fn add_awgn(x: &IqBuffer, snr_db: f64, seed_value: u64) -> Result<IqBuffer> {
    let p = mean_power(x.samples());
    if !(p > 0.0) {
        return Err(Error::Degenerate("AWGN reference power is zero".into()));
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("snr {snr_db} dB is not finite")));
    }
    let sigma = (p / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = seed::rng(seed_value);
    Ok(x.map(|s| s + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))))
}

/// Scales `model` to the configured delay spread, applies it, then adds AWGN
/// when `config.snr_db` is set.
pub fn transmit(x: &IqBuffer, model: ChannelModel, config: &ChannelConfig) -> Result<IqBuffer> {
    let profile = model.scaled(config.delay_spread_s)?;
    let y = apply_channel(x, &profile, config)?;
    match config.snr_db {
        Some(snr) => add_awgn(&y, snr, seed::mix(config.seed, AWGN_STREAM)),
        None => Ok(y),
    }
}

const AWGN_STREAM: u64 = 0xA5A5;
