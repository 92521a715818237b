//! Per-tap fading processes.
//!
//! TDL taps use a sum-of-sinusoids Rayleigh process with Jakes spectrum.
//! CDL clusters collapse to a single composite ray each, Doppler-shifted by
//! `f_d * cos(aoa - heading)` where the travel heading is drawn from the seed.
//! LOS profiles add a specular component to the first tap, carrying
//! `K / (K + 1)` of that tap's power.
//!
//! With `f_d = 0` every diffuse tap is a static unit-modulus phasor. The
//! first tap is the receiver's phase reference and gets phase zero (for LOS
//! profiles the specular part takes that role), so a single-tap NLOS channel
//! reduces to a plain gain.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng as _;

use super::profiles::{db_to_lin, ScaledProfile};
use super::ChannelConfig;
use crate::seed;

pub const NUM_SINUSOIDS: usize = 64;

/// Doppler of the TDL LOS component relative to `f_d`.
pub const TDL_LOS_DOPPLER_RATIO: f64 = 0.7;

const HEADING_STREAM: u64 = 0;
// Recurrence phasors are re-anchored to exact values this often.
const REANCHOR: usize = 256;

/// Gain time series of one tap, split into its specular and diffuse parts.
#[derive(Debug, Clone, PartialEq)]
pub struct TapFading {
    pub los: Option<Vec<Complex64>>,
    pub diffuse: Vec<Complex64>,
}

impl TapFading {
    pub fn len(&self) -> usize {
        self.diffuse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diffuse.is_empty()
    }

    pub fn gain(&self, k: usize) -> Complex64 {
        let d = self.diffuse[k];
        match &self.los {
            Some(l) => l[k] + d,
            None => d,
        }
    }

    pub fn gains(&self) -> Vec<Complex64> {
        (0..self.len()).map(|k| self.gain(k)).collect()
    }

    /// True when the gain does not change over time.
    pub fn is_static(&self) -> bool {
        let first = self.gain(0);
        (1..self.len()).all(|k| self.gain(k) == first)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FadingRealization {
    pub taps: Vec<TapFading>,
    pub num_sinusoids: usize,
    /// Direction of travel used for CDL cluster Doppler shifts.
    pub heading_rad: f64,
}

pub fn heading(seed_value: u64) -> f64 {
    seed::rng(seed::mix(seed_value, HEADING_STREAM)).gen_range(0.0..2.0 * PI)
}

/// Accumulates `amp * exp(j(2 pi f k / fs + phase))` into `out`.
fn add_tone(out: &mut [Complex64], amp: f64, freq_hz: f64, fs: f64, phase: f64) {
    let w = 2.0 * PI * freq_hz / fs;
    let rot = Complex64::from_polar(1.0, w);
    let mut cur = Complex64::new(0.0, 0.0);
    for (k, o) in out.iter_mut().enumerate() {
        if k % REANCHOR == 0 {
            cur = Complex64::from_polar(amp, w * k as f64 + phase);
        }
        *o += cur;
        cur *= rot;
    }
}

/// Unit mean-square sum-of-sinusoids process.
///
/// Arrival angles are `(2 pi m - pi + theta) / M`. The common offset `theta`
/// is kept away from 0 and +-pi, where the angle set becomes symmetric and
/// mirror pairs share a Doppler frequency, which slows the time averages.
pub fn sum_of_sinusoids(
    rng: &mut seed::Rng,
    max_doppler_hz: f64,
    fs: f64,
    num_samples: usize,
    num_sinusoids: usize,
) -> Vec<Complex64> {
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let theta = sign * rng.gen_range(PI / 4.0..3.0 * PI / 4.0);
    let amp = 1.0 / (num_sinusoids as f64).sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); num_samples];
    for m in 1..=num_sinusoids {
        let alpha = (2.0 * PI * m as f64 - PI + theta) / num_sinusoids as f64;
        let phase = rng.gen_range(0.0..2.0 * PI);
        add_tone(&mut out, amp, max_doppler_hz * alpha.cos(), fs, phase);
    }
    out
}

fn tone(freq_hz: f64, fs: f64, phase: f64, amp: f64, n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    add_tone(&mut out, amp, freq_hz, fs, phase);
    out
}

/// Fading for tap `tap_index` of `profile`.
pub fn gen_fading(
    tap_index: usize,
    profile: &ScaledProfile,
    config: &ChannelConfig,
    num_samples: usize,
) -> TapFading {
    let fs = config.sample_rate_hz;
    let fd = config.max_doppler_hz;
    let mut rng = seed::rng(seed::mix(config.seed, 1 + tap_index as u64));
    let power = db_to_lin(profile.powers_db[tap_index]);

    let los_k = match profile.rician_k_db {
        Some(k) if tap_index == 0 => Some(db_to_lin(k)),
        _ => None,
    };
    let (los_amp, diffuse_amp) = match los_k {
        Some(k) => ((power * k / (k + 1.0)).sqrt(), (power / (k + 1.0)).sqrt()),
        None => (0.0, power.sqrt()),
    };
    let cluster_doppler = profile.aoa_deg.as_ref().map(|aoa| {
        let h = heading(config.seed);
        fd * (aoa[tap_index].to_radians() - h).cos()
    });

    // Random draw always happens so seeds stay aligned across branches.
    let random_phase = rng.gen_range(0.0..2.0 * PI);
    let is_reference = tap_index == 0 && los_k.is_none();
    let ray_phase = if is_reference { 0.0 } else { random_phase };

    let diffuse = match cluster_doppler {
        Some(f) => tone(f, fs, ray_phase, diffuse_amp, num_samples),
        None if fd == 0.0 => tone(0.0, fs, ray_phase, diffuse_amp, num_samples),
        None => {
            let mut g = sum_of_sinusoids(&mut rng, fd, fs, num_samples, NUM_SINUSOIDS);
            g.iter_mut().for_each(|v| *v *= diffuse_amp);
            g
        }
    };

    let los = los_k.map(|_| {
        let f = cluster_doppler.unwrap_or(TDL_LOS_DOPPLER_RATIO * fd);
        tone(f, fs, 0.0, los_amp, num_samples)
    });

    TapFading { los, diffuse }
}

pub fn realize(profile: &ScaledProfile, config: &ChannelConfig, num_samples: usize) -> FadingRealization {
    FadingRealization {
        taps: (0..profile.num_taps())
            .map(|n| gen_fading(n, profile, config, num_samples))
            .collect(),
        num_sinusoids: NUM_SINUSOIDS,
        heading_rad: heading(config.seed),
    }
}
