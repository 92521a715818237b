//! Transmitter hardware impairments.
//!
//! A [`TransmitterFingerprint`] bundles the imperfections of one transmit
//! chain. [`apply_fingerprint`] runs them in transmit-chain order:
//! DC offset, IQ imbalance, power amplifier, then CFO and phase noise.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iq::IqBuffer;
use crate::seed;

/// The default bank shipped with the crate.
pub const DEFAULT_BANK_TOML: &str = include_str!("../configs/fingerprints_v1.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitterFingerprint {
    /// I/Q amplitude ratio `g`.
    pub iq_gain: f64,
    /// Quadrature phase error in degrees.
    pub iq_phase_deg: f64,
    pub dc_offset: Complex64,
    pub pa_a1: Complex64,
    pub pa_a3: Complex64,
    pub pa_a5: Complex64,
    pub cfo_hz: f64,
    /// Per-sample standard deviation of the phase random walk, radians.
    pub phase_noise_std: f64,
}

impl Default for TransmitterFingerprint {
    fn default() -> Self {
        Self::nominal()
    }
}

impl TransmitterFingerprint {
    /// The impairment-free transmitter.
    pub fn nominal() -> Self {
        Self {
            iq_gain: 1.0,
            iq_phase_deg: 0.0,
            dc_offset: Complex64::new(0.0, 0.0),
            pa_a1: Complex64::new(1.0, 0.0),
            pa_a3: Complex64::new(0.0, 0.0),
            pa_a5: Complex64::new(0.0, 0.0),
            cfo_hz: 0.0,
            phase_noise_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.iq_gain.is_finite() && self.iq_gain > 0.0) {
            return Err(Error::Validation(format!("iq_gain {} must be positive", self.iq_gain)));
        }
        if !(self.iq_phase_deg.abs() < 90.0) {
            return Err(Error::Validation(format!(
                "iq_phase_deg {} must lie in (-90, 90)",
                self.iq_phase_deg
            )));
        }
        let finite = |c: Complex64| c.re.is_finite() && c.im.is_finite();
        if ![self.dc_offset, self.pa_a1, self.pa_a3, self.pa_a5].into_iter().all(finite)
            || !self.cfo_hz.is_finite()
            || !(self.phase_noise_std.is_finite() && self.phase_noise_std >= 0.0)
        {
            return Err(Error::Validation("fingerprint coefficients must be finite".into()));
        }
        Ok(())
    }
}

/// Image-model coefficients `(mu, nu)` for gain ratio `g` and phase error `phi`.
pub fn iq_imbalance_coefficients(gain: f64, phase_deg: f64) -> (Complex64, Complex64) {
    let ge = Complex64::from_polar(gain, phase_deg.to_radians());
    ((1.0 + ge) / 2.0, (1.0 - ge) / 2.0)
}

/// Image rejection ratio `20 log10(|mu| / |nu|)` in dB.
pub fn image_rejection_db(gain: f64, phase_deg: f64) -> f64 {
    let (mu, nu) = iq_imbalance_coefficients(gain, phase_deg);
    20.0 * (mu.norm() / nu.norm()).log10()
}

/// `y = mu x + nu conj(x)`.
pub fn apply_iq_imbalance(x: &IqBuffer, gain: f64, phase_deg: f64) -> IqBuffer {
    let (mu, nu) = iq_imbalance_coefficients(gain, phase_deg);
    x.map(|s| mu * s + nu * s.conj())
}

pub fn apply_dc_offset(x: &IqBuffer, offset: Complex64) -> IqBuffer {
    x.map(|s| s + offset)
}

/// Memoryless odd-order polynomial `a1 x + a3 x|x|^2 + a5 x|x|^4`.
pub fn apply_pa(x: &IqBuffer, a1: Complex64, a3: Complex64, a5: Complex64) -> IqBuffer {
    x.map(|s| {
        let p = s.norm_sqr();
        s * (a1 + a3 * p + a5 * p * p)
    })
}

/// Carrier frequency offset plus a Gaussian phase random walk.
pub fn apply_cfo_phase_noise(
    x: &IqBuffer,
    cfo_hz: f64,
    phase_noise_std: f64,
    seed_value: u64,
) -> Result<IqBuffer> {
    if cfo_hz == 0.0 && phase_noise_std == 0.0 {
        return Ok(x.clone());
    }
    let fs = x.sample_rate_hz();
    let step = Normal::new(0.0, phase_noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = seed::rng(seed_value);
    let mut theta = 0.0;
    let out = x
        .samples()
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            if phase_noise_std > 0.0 {
                theta += step.sample(&mut rng);
            }
            let phase = 2.0 * PI * cfo_hz * k as f64 / fs + theta;
            s * Complex64::from_polar(1.0, phase)
        })
        .collect();
    Ok(x.with_samples(out))
}

/// Runs the full transmit chain of `fp` over `x`.
pub fn apply_fingerprint(x: &IqBuffer, fp: &TransmitterFingerprint, seed_value: u64) -> Result<IqBuffer> {
    fp.validate()?;
    let y = apply_dc_offset(x, fp.dc_offset);
    let y = apply_iq_imbalance(&y, fp.iq_gain, fp.iq_phase_deg);
    let y = apply_pa(&y, fp.pa_a1, fp.pa_a3, fp.pa_a5);
    let y = apply_cfo_phase_noise(&y, fp.cfo_hz, fp.phase_noise_std, seed_value)?;
    IqBuffer::new(y.into_samples(), x.sample_rate_hz())
}

/// A versioned set of transmitter fingerprints, indexed by transmitter id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FingerprintBank {
    pub version: u32,
    #[serde(rename = "transmitter")]
    pub transmitters: Vec<TransmitterFingerprint>,
}

impl FingerprintBank {
    pub fn default_bank() -> Self {
        Self::from_toml(DEFAULT_BANK_TOML).expect("bundled fingerprint bank parses")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let bank: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (i, fp) in bank.transmitters.iter().enumerate() {
            fp.validate().map_err(|e| e.context(format!("transmitter {i}")))?;
        }
        Ok(bank)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn len(&self) -> usize {
        self.transmitters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transmitters.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rustfft::FftPlanner;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random(n: usize, s: u64) -> IqBuffer {
        let mut rng = seed::rng(s);
        IqBuffer::new(
            (0..n).map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect(),
            1e6,
        )
        .unwrap()
    }

    fn tone(n: usize, bin: f64) -> IqBuffer {
        IqBuffer::new(
            (0..n)
                .map(|k| Complex64::from_polar(1.0, 2.0 * PI * bin * k as f64 / n as f64))
                .collect(),
            1e6,
        )
        .unwrap()
    }

    fn spectrum(x: &IqBuffer) -> Vec<f64> {
        let mut v = x.samples().to_vec();
        FftPlanner::new().plan_fft_forward(v.len()).process(&mut v);
        v.iter().map(|s| s.norm_sqr()).collect()
    }

    fn max_diff(a: &IqBuffer, b: &IqBuffer) -> f64 {
        a.samples()
            .iter()
            .zip(b.samples())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn perfect_modulator_is_identity() {
        let (mu, nu) = iq_imbalance_coefficients(1.0, 0.0);
        assert_eq!((mu, nu), (c(1.0, 0.0), c(0.0, 0.0)));
        let x = random(64, 1);
        assert_eq!(apply_iq_imbalance(&x, 1.0, 0.0), x);
    }

    #[test]
    fn one_db_gain_imbalance_irr() {
        // mu = 1.061, nu = -0.061 -> 20 log10(1.061 / 0.061)
        let irr = image_rejection_db(1.122, 0.0);
        let want = 20.0 * (2.122f64 / 0.122).log10();
        assert!((irr - want).abs() < 1e-9);
        assert!((irr - 24.8).abs() < 0.05, "{irr}");
    }

    #[test]
    fn image_tone_power() {
        let n = 1024;
        let (g, phi) = (1.08, 4.0);
        let y = apply_iq_imbalance(&tone(n, 37.0), g, phi);
        let s = spectrum(&y);
        let (mu, nu) = iq_imbalance_coefficients(g, phi);
        let ratio = s[n - 37] / s[37];
        assert!((ratio / (nu.norm_sqr() / mu.norm_sqr()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dc_offset_shifts_mean() {
        let x = random(500, 2);
        assert_eq!(apply_dc_offset(&x, c(0.0, 0.0)), x);
        let z = IqBuffer::new(vec![c(0.0, 0.0); 10], 1.0).unwrap();
        assert!(apply_dc_offset(&z, c(0.1, 0.0)).samples().iter().all(|&s| s == c(0.1, 0.0)));
        let off = c(0.03, -0.07);
        let y = apply_dc_offset(&x, off);
        let mean = |b: &IqBuffer| b.samples().iter().sum::<Complex64>() / b.len() as f64;
        assert!((mean(&y) - mean(&x) - off).norm() < 1e-12);
    }

    #[test]
    fn pa_cases() {
        let x = random(100, 3);
        assert_eq!(apply_pa(&x, c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)), x);
        let unit = tone(64, 3.0);
        let y = apply_pa(&unit, c(1.0, 0.0), c(-0.1, 0.0), c(0.0, 0.0));
        for (a, b) in unit.samples().iter().zip(y.samples()) {
            assert!((b - a * 0.9).norm() < 1e-12);
        }
    }

    #[test]
    fn pa_third_order_intermod() {
        // x = A(e^{j w1 k} + e^{j w2 k}); the cubic term puts a3 A^3 at
        // 2 w1 - w2 and 2 w2 - w1, against (a1 A + 3 a3 A^3) at the tones.
        let n = 1024;
        let (b1, b2) = (100usize, 110usize);
        let amp = 0.3;
        let x = IqBuffer::new(
            (0..n)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / n as f64;
                    Complex64::from_polar(amp, t * b1 as f64) + Complex64::from_polar(amp, t * b2 as f64)
                })
                .collect(),
            1e6,
        )
        .unwrap();
        let a3 = c(-0.2, 0.05);
        let y = apply_pa(&x, c(1.0, 0.0), a3, c(0.0, 0.0));
        let s = spectrum(&y);
        let main = (c(amp, 0.0) + 3.0 * a3 * amp.powi(3)).norm_sqr();
        let im3 = (a3 * amp.powi(3)).norm_sqr();
        let want = im3 / main;
        for bin in [2 * b1 - b2, 2 * b2 - b1] {
            assert!((s[bin] / s[b1] / want - 1.0).abs() < 1e-9, "bin {bin}");
        }
    }

    #[test]
    fn cfo_moves_tone() {
        let fs = 1e6;
        let n = 256;
        let x = IqBuffer::new(vec![c(1.0, 0.0); n], fs).unwrap();
        assert_eq!(apply_cfo_phase_noise(&x, 0.0, 0.0, 1).unwrap(), x);
        let y = apply_cfo_phase_noise(&x, fs / 4.0, 0.0, 1).unwrap();
        let s = spectrum(&y);
        let peak = s.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(peak, n / 4);
    }

    #[test]
    fn phase_noise_is_seeded() {
        let x = random(300, 4);
        let a = apply_cfo_phase_noise(&x, 10.0, 0.01, 5).unwrap();
        assert_eq!(a, apply_cfo_phase_noise(&x, 10.0, 0.01, 5).unwrap());
        assert_ne!(a, apply_cfo_phase_noise(&x, 10.0, 0.01, 6).unwrap());
        // Phase noise never changes magnitudes.
        for (p, q) in x.samples().iter().zip(a.samples()) {
            assert!((p.norm() - q.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn nominal_chain_is_identity() {
        let x = random(256, 6);
        let y = apply_fingerprint(&x, &TransmitterFingerprint::nominal(), 0).unwrap();
        assert!(max_diff(&x, &y) < 1e-12);
    }

    #[test]
    fn chain_matches_manual_composition() {
        let bank = FingerprintBank::default_bank();
        let x = random(512, 7);
        for fp in &bank.transmitters {
            let manual = apply_dc_offset(&x, fp.dc_offset);
            let manual = apply_iq_imbalance(&manual, fp.iq_gain, fp.iq_phase_deg);
            let manual = apply_pa(&manual, fp.pa_a1, fp.pa_a3, fp.pa_a5);
            let manual = apply_cfo_phase_noise(&manual, fp.cfo_hz, fp.phase_noise_std, 9).unwrap();
            assert_eq!(apply_fingerprint(&x, fp, 9).unwrap(), manual);
        }
    }

    #[test]
    fn default_bank_transmitters_differ() {
        let bank = FingerprintBank::default_bank();
        assert_eq!(bank.len(), 4);
        let x = random(512, 8);
        let outs: Vec<_> = bank
            .transmitters
            .iter()
            .map(|fp| apply_fingerprint(&x, fp, 1).unwrap())
            .collect();
        for i in 0..outs.len() {
            for j in i + 1..outs.len() {
                assert!(max_diff(&outs[i], &outs[j]) > 1e-3, "{i} vs {j}");
            }
        }
    }

    #[test]
    fn bank_toml_round_trip() {
        let bank = FingerprintBank::default_bank();
        assert_eq!(FingerprintBank::from_toml(&bank.to_toml().unwrap()).unwrap(), bank);
    }

    #[test]
    fn invalid_fingerprints_rejected() {
        let mut fp = TransmitterFingerprint::nominal();
        fp.iq_gain = 0.0;
        assert!(fp.validate().is_err());
        let mut fp = TransmitterFingerprint::nominal();
        fp.iq_phase_deg = 90.0;
        assert!(fp.validate().is_err());
        let x = random(8, 1);
        assert!(apply_fingerprint(&x, &fp, 0).is_err());
    }
}
