//! Complex baseband buffers and raw `.bin` sample files.
//!
//! The on-disk format is headerless interleaved `f32` little-endian I,Q pairs
//! (8 bytes per complex sample). Samples are held as `Complex64` in memory;
//! the `f32 -> f64 -> f32` path is exact, so a read followed by a write
//! reproduces the original file byte for byte.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::manifest::RecordingMeta;

/// Bytes per interleaved complex record.
pub const RECORD_BYTES: usize = 8;

/// Contiguous complex baseband samples at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
}

impl IqBuffer {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::Validation(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(k) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::Validation(format!("sample {k} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// Builds a buffer from samples produced by an operation that preserves
    /// finiteness of finite inputs.
    pub(crate) fn from_parts(samples: Vec<Complex64>, sample_rate_hz: f64) -> Self {
        debug_assert!(sample_rate_hz > 0.0);
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }

    /// Applies `f` sample-wise, keeping the sample rate.
    pub fn map(&self, mut f: impl FnMut(Complex64) -> Complex64) -> Self {
        Self::from_parts(self.samples.iter().map(|&s| f(s)).collect(), self.sample_rate_hz)
    }

    /// Same sample rate, new samples.
    pub(crate) fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        Self::from_parts(samples, self.sample_rate_hz)
    }
}

pub fn mean_power(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Decodes interleaved little-endian `f32` I,Q bytes.
pub fn decode_iq(bytes: &[u8], path: &Path) -> Result<Vec<Complex64>> {
    if bytes.len() % RECORD_BYTES != 0 {
        let whole = bytes.len() - bytes.len() % RECORD_BYTES;
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: whole as u64,
            reason: format!(
                "truncated record: {} trailing bytes (file length {})",
                bytes.len() - whole,
                bytes.len()
            ),
        });
    }
    bytes
        .chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(k, rec)| {
            let i = f32::from_le_bytes([rec[0], rec[1], rec[2], rec[3]]);
            let q = f32::from_le_bytes([rec[4], rec[5], rec[6], rec[7]]);
            if !(i.is_finite() && q.is_finite()) {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    offset: (k * RECORD_BYTES) as u64,
                    reason: "non-finite sample".into(),
                });
            }
            Ok(Complex64::new(i as f64, q as f64))
        })
        .collect()
}

pub fn encode_iq(samples: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * RECORD_BYTES);
    for s in samples {
        out.extend_from_slice(&(s.re as f32).to_le_bytes());
        out.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    out
}

pub fn read_iq_bin(path: impl AsRef<Path>, sample_rate_hz: f64) -> Result<IqBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let samples = decode_iq(&bytes, path)?;
    IqBuffer::new(samples, sample_rate_hz)
}

pub fn write_iq_bin(buffer: &IqBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_iq(buffer.samples())).map_err(|e| Error::io(path, e))
}

/// Scales the buffer to unit mean power.
pub fn normalize_power(buffer: &IqBuffer) -> Result<IqBuffer> {
    let scale = unit_power_scale(buffer.samples())?;
    Ok(buffer.map(|s| s * scale))
}

pub(crate) fn unit_power_scale(samples: &[Complex64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Degenerate("cannot normalize an empty buffer".into()));
    }
    let p = mean_power(samples);
    if !(p > 0.0) {
        return Err(Error::Degenerate("buffer has zero power".into()));
    }
    Ok(1.0 / p.sqrt())
}

/// A fixed-length training window with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub window: Vec<Complex64>,
    pub label: usize,
    pub meta: RecordingMeta,
}

/// Number of windows [`slice_examples`] produces for a buffer of `len` samples.
pub fn window_count(len: usize, window_len: usize, stride: usize) -> usize {
    if len < window_len || stride == 0 {
        0
    } else {
        (len - window_len) / stride + 1
    }
}

/// Cuts `buffer` into windows `[i*stride, i*stride + window_len)`.
pub fn slice_examples(
    buffer: &IqBuffer,
    meta: &RecordingMeta,
    window_len: usize,
    stride: usize,
) -> Result<Vec<Example>> {
    if window_len < 16 {
        return Err(Error::Config(format!("window length {window_len} is below 16")));
    }
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let n = window_count(buffer.len(), window_len, stride);
    Ok((0..n)
        .map(|i| Example {
            window: buffer.samples()[i * stride..i * stride + window_len].to_vec(),
            label: meta.transmitter_id,
            meta: meta.clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{Day, Provenance, WaveformKind};

    fn meta() -> RecordingMeta {
        RecordingMeta {
            waveform: WaveformKind::FiveG,
            transmitter_id: 2,
            day: Day::Day1,
            provenance: Provenance::Original,
        }
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_sample_decode() {
        let mut bytes = 1.0f32.to_le_bytes().to_vec();
        bytes.extend_from_slice(&2.0f32.to_le_bytes());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("one.bin");
        fs::write(&p, &bytes).unwrap();
        let buf = read_iq_bin(&p, 1e6).unwrap();
        assert_eq!(buf.samples(), &[c(1.0, 2.0)]);
    }

    #[test]
    fn empty_file_is_empty_buffer() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.bin");
        fs::write(&p, []).unwrap();
        assert!(read_iq_bin(&p, 1e6).unwrap().is_empty());

        let out = dir.path().join("out.bin");
        write_iq_bin(&IqBuffer::new(vec![], 1e6).unwrap(), &out).unwrap();
        assert_eq!(fs::metadata(&out).unwrap().len(), 0);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.bin");
        fs::write(&p, [0u8; 13]).unwrap();
        match read_iq_bin(&p, 1e6) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 8),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_iq_bin("/nonexistent/dir/x.bin", 1e6),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn nan_sample_is_rejected() {
        let mut bytes = f32::NAN.to_le_bytes().to_vec();
        bytes.extend_from_slice(&0f32.to_le_bytes());
        assert!(matches!(
            decode_iq(&bytes, Path::new("x")),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn write_length_is_eight_bytes_per_sample() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.bin");
        let samples: Vec<_> = (0..1000).map(|k| c(k as f64 * 0.5, -(k as f64))).collect();
        write_iq_bin(&IqBuffer::new(samples.clone(), 1e6).unwrap(), &p).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 8000);
        assert_eq!(read_iq_bin(&p, 1e6).unwrap().samples(), &samples[..]);
    }

    #[test]
    fn invalid_buffers_rejected() {
        assert!(IqBuffer::new(vec![], 0.0).is_err());
        assert!(IqBuffer::new(vec![c(f64::INFINITY, 0.0)], 1.0).is_err());
    }

    #[test]
    fn window_counts() {
        let m = meta();
        let buf = |n| IqBuffer::new(vec![c(1.0, 0.0); n], 1e6).unwrap();
        assert_eq!(slice_examples(&buf(1024), &m, 256, 128).unwrap().len(), 7);
        assert_eq!(slice_examples(&buf(256), &m, 256, 128).unwrap().len(), 1);
        assert_eq!(slice_examples(&buf(255), &m, 256, 128).unwrap().len(), 0);
        assert!(slice_examples(&buf(64), &m, 8, 1).is_err());
    }

    #[test]
    fn windows_cover_expected_ranges() {
        let samples: Vec<_> = (0..1000).map(|k| c(k as f64, 0.0)).collect();
        let buf = IqBuffer::new(samples, 1e6).unwrap();
        let ex = slice_examples(&buf, &meta(), 100, 70).unwrap();
        assert_eq!(ex.len(), (1000 - 100) / 70 + 1);
        for (i, e) in ex.iter().enumerate() {
            assert_eq!(e.window.len(), 100);
            assert_eq!(e.window[0].re, (i * 70) as f64);
            assert_eq!(e.label, 2);
        }
        let last = ex.last().unwrap();
        assert!(last.window[99].re < 1000.0);
    }

    #[test]
    fn normalize_fixed_points() {
        let ones = IqBuffer::new(vec![c(1.0, 0.0); 8], 1.0).unwrap();
        assert_eq!(normalize_power(&ones).unwrap(), ones);
        let twos = IqBuffer::new(vec![c(2.0, 0.0); 8], 1.0).unwrap();
        assert_eq!(normalize_power(&twos).unwrap(), ones);
        let zeros = IqBuffer::new(vec![c(0.0, 0.0); 8], 1.0).unwrap();
        assert!(matches!(normalize_power(&zeros), Err(Error::Degenerate(_))));
        let empty = IqBuffer::new(vec![], 1.0).unwrap();
        assert!(normalize_power(&empty).is_err());
    }
}
