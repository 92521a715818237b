//! Simplified OFDM bursts standing in for 5G, WiFi and LTE captures.
//!
//! Each symbol carries seeded QPSK on the occupied subcarriers (split evenly
//! around an unused DC bin), goes through an inverse FFT, and gets a cyclic
//! prefix. No pilots, preambles or coding.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iq::{self, IqBuffer};
use crate::manifest::WaveformKind;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modulation {
    Qpsk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveformSpec {
    pub kind: WaveformKind,
    pub fft_size: usize,
    pub cp_len: usize,
    pub occupied_subcarriers: usize,
    pub modulation: Modulation,
}

impl WaveformSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.fft_size.is_power_of_two() || self.fft_size < 4 {
            return Err(Error::Config(format!("fft size {} is not a power of two", self.fft_size)));
        }
        if self.cp_len == 0 || self.cp_len >= self.fft_size {
            return Err(Error::Config(format!("cp length {} must be in 1..fft", self.cp_len)));
        }
        let occ = self.occupied_subcarriers;
        if occ == 0 || occ % 2 != 0 || occ > self.fft_size - 2 {
            return Err(Error::Config(format!(
                "occupied subcarriers {occ} must be even, positive and at most fft-2"
            )));
        }
        Ok(())
    }

    pub fn symbol_len(&self) -> usize {
        self.fft_size + self.cp_len
    }

    /// FFT bins carrying data: `1..=occ/2` and `fft-occ/2..fft`.
    pub fn occupied_bins(&self) -> impl Iterator<Item = usize> + '_ {
        let half = self.occupied_subcarriers / 2;
        (1..=half).chain(self.fft_size - half..self.fft_size)
    }

    /// Number of symbols whose burst length is closest to `target_samples`.
    pub fn symbols_for(&self, target_samples: usize) -> usize {
        ((target_samples as f64 / self.symbol_len() as f64).round() as usize).max(1)
    }
}

pub fn default_spec(kind: WaveformKind) -> WaveformSpec {
    let (fft_size, cp_len, occupied_subcarriers) = match kind {
        WaveformKind::FiveG => (512, 36, 300),
        WaveformKind::Wifi => (64, 16, 52),
        WaveformKind::Lte => (512, 40, 300),
    };
    WaveformSpec {
        kind,
        fft_size,
        cp_len,
        occupied_subcarriers,
        modulation: Modulation::Qpsk,
    }
}

/// Generates `num_symbols` CP-OFDM symbols normalized to unit mean power.
pub fn gen_burst(
    spec: &WaveformSpec,
    num_symbols: usize,
    payload_seed: u64,
    sample_rate_hz: f64,
) -> Result<IqBuffer> {
    spec.validate()?;
    if num_symbols == 0 {
        return Err(Error::Config("burst needs at least one symbol".into()));
    }
    let n = spec.fft_size;
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let mut rng = seed::rng(payload_seed);
    let mut out = Vec::with_capacity(num_symbols * spec.symbol_len());
    let mut freq = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..num_symbols {
        freq.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for bin in spec.occupied_bins() {
            let bits: u8 = rng.gen_range(0..4);
            let re = if bits & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            let im = if bits & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
            freq[bin] = Complex64::new(re, im);
        }
        let mut body = freq.clone();
        ifft.process(&mut body);
        out.extend_from_slice(&body[n - spec.cp_len..]);
        out.extend_from_slice(&body);
    }
    let scale = iq::unit_power_scale(&out)?;
    out.iter_mut().for_each(|v| *v *= scale);
    IqBuffer::new(out, sample_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_specs_are_distinct_and_valid() {
        let specs: Vec<_> = WaveformKind::ALL.iter().map(|&k| default_spec(k)).collect();
        for s in &specs {
            s.validate().unwrap();
        }
        for i in 0..3 {
            for j in i + 1..3 {
                assert_ne!(
                    (specs[i].fft_size, specs[i].cp_len),
                    (specs[j].fft_size, specs[j].cp_len)
                );
            }
        }
        let w = default_spec(WaveformKind::Wifi);
        assert_eq!(w.cp_len * 4, w.fft_size);
        assert_eq!(w.occupied_bins().count(), 52);
        assert!(!w.occupied_bins().any(|b| b == 0));
    }

    #[test]
    fn cyclic_prefix_repeats_symbol_tail() {
        for kind in WaveformKind::ALL {
            let spec = default_spec(kind);
            let b = gen_burst(&spec, 4, 3, 20e6).unwrap();
            assert_eq!(b.len(), 4 * spec.symbol_len());
            for sym in b.samples().chunks(spec.symbol_len()) {
                let (cp, body) = sym.split_at(spec.cp_len);
                assert_eq!(cp, &body[spec.fft_size - spec.cp_len..]);
            }
        }
    }

    #[test]
    fn unit_power_and_determinism() {
        let spec = default_spec(WaveformKind::Lte);
        let a = gen_burst(&spec, 6, 42, 20e6).unwrap();
        assert!((a.mean_power() - 1.0).abs() < 1e-6);
        assert_eq!(a, gen_burst(&spec, 6, 42, 20e6).unwrap());
        assert_ne!(a, gen_burst(&spec, 6, 43, 20e6).unwrap());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = default_spec(WaveformKind::FiveG);
        s.cp_len = 512;
        assert!(gen_burst(&s, 1, 0, 1.0).is_err());
        let mut s = default_spec(WaveformKind::FiveG);
        s.occupied_subcarriers = 511;
        assert!(s.validate().is_err());
        assert!(gen_burst(&default_spec(WaveformKind::Wifi), 0, 0, 1.0).is_err());
    }
}
