//! Fractional delay by windowed-sinc interpolation.

use num_complex::Complex64;
use std::f64::consts::PI;

/// Interpolator length.
pub const NUM_TAPS: usize = 63;
const CENTER: usize = NUM_TAPS / 2;

/// Delays a signal by a (possibly fractional) number of samples.
///
/// The integer part is a plain shift. The fractional part uses a 63-tap
/// Hann-windowed sinc centered on the interpolation point, normalized to unit
/// DC gain. The filter's group delay is compensated, so a delay of zero is
/// the identity.
#[derive(Debug, Clone)]
pub struct FractionalDelay {
    shift: isize,
    kernel: Option<[f64; NUM_TAPS]>,
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

impl FractionalDelay {
    pub fn new(delay_samples: f64) -> Self {
        assert!(delay_samples.is_finite() && delay_samples >= 0.0);
        let whole = delay_samples.floor();
        let frac = delay_samples - whole;
        if frac < 1e-9 {
            return Self {
                shift: whole as isize,
                kernel: None,
            };
        }
        // Output y[k] = sum_i h[i] x[k - shift - (i - CENTER)].
        let half_width = (NUM_TAPS + 1) as f64 / 2.0;
        let mut h = [0.0; NUM_TAPS];
        for (i, hi) in h.iter_mut().enumerate() {
            let t = i as f64 - CENTER as f64 - frac;
            let w = if t.abs() < half_width {
                (PI * t / (2.0 * half_width)).cos().powi(2)
            } else {
                0.0
            };
            *hi = sinc(t) * w;
        }
        let dc: f64 = h.iter().sum();
        h.iter_mut().for_each(|v| *v /= dc);
        Self {
            shift: whole as isize,
            kernel: Some(h),
        }
    }

    pub fn kernel(&self) -> Option<&[f64; NUM_TAPS]> {
        self.kernel.as_ref()
    }

    /// Delayed copy of `x`, same length; samples before the start are zero.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len() as isize;
        let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
        match &self.kernel {
            None => {
                for (k, yk) in y.iter_mut().enumerate() {
                    let src = k as isize - self.shift;
                    if (0..n).contains(&src) {
                        *yk = x[src as usize];
                    }
                }
            }
            Some(h) => {
                for (k, yk) in y.iter_mut().enumerate() {
                    // Source index for tap i: k - shift - i + CENTER.
                    let base = k as isize - self.shift + CENTER as isize;
                    let i_lo = (base - (n - 1)).max(0) as usize;
                    let i_hi = (base.min(NUM_TAPS as isize - 1)).max(-1);
                    if i_hi < i_lo as isize {
                        continue;
                    }
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (i, &hi) in h.iter().enumerate().take(i_hi as usize + 1).skip(i_lo) {
                        acc += x[(base - i as isize) as usize] * hi;
                    }
                    *yk = acc;
                }
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn zero_delay_is_identity() {
        let x: Vec<_> = (0..50).map(|k| Complex64::new(k as f64, -(k as f64))).collect();
        assert_eq!(FractionalDelay::new(0.0).apply(&x), x);
    }

    #[test]
    fn integer_delay_shifts() {
        let x: Vec<_> = (0..10).map(|k| c(k as f64 + 1.0)).collect();
        let y = FractionalDelay::new(3.0).apply(&x);
        assert_eq!(&y[..3], &[c(0.0); 3]);
        assert_eq!(&y[3..], &x[..7]);
    }

    #[test]
    fn half_sample_delay_of_sinusoid() {
        // A slow tone delayed by 0.5 samples should match the analytic shift.
        let f = 0.05;
        let x: Vec<_> = (0..400)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * f * k as f64))
            .collect();
        let y = FractionalDelay::new(10.5).apply(&x);
        for k in 100..300 {
            let want = Complex64::from_polar(1.0, 2.0 * PI * f * (k as f64 - 10.5));
            assert!((y[k] - want).norm() < 1e-3, "k={k} err={}", (y[k] - want).norm());
        }
    }

    #[test]
    fn kernel_has_unit_dc_gain_and_peaks_near_center() {
        let fd = FractionalDelay::new(0.25);
        let h = fd.kernel().unwrap();
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let peak = h
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, CENTER);
    }

    #[test]
    fn output_length_matches_input() {
        let x = vec![c(1.0); 5];
        assert_eq!(FractionalDelay::new(2.7).apply(&x).len(), 5);
        assert_eq!(FractionalDelay::new(100.3).apply(&x), vec![c(0.0); 5]);
    }
}
