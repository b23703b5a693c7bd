//! Feature sequences and the MFCC front end.
//!
//! Feature files use a small little-endian binary layout:
//!
//! ```text
//! magic   4 bytes  "EFT1"
//! dim     u32
//! frames  u64
//! period  f64      seconds between frames
//! payload frames * dim f32, row-major
//! ```

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EFT1";
const HEADER_LEN: usize = 4 + 4 + 8 + 8;
const LOG_FLOOR: f64 = 1e-10;
const DELTA_WINDOW: usize = 2;

/// A T x D matrix of frames at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f32>,
    dim: usize,
    frame_period: f64,
}

impl FeatureSequence {
    pub fn new(data: Vec<f32>, dim: usize, frame_period: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidCorpus("feature dimension must be positive".into()));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidCorpus(format!(
                "feature payload of {} values is not a positive multiple of dimension {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidCorpus(format!(
                "non-finite feature value at frame {}, dim {}",
                i / dim,
                i % dim
            )));
        }
        Ok(FeatureSequence {
            data,
            dim,
            frame_period,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>], frame_period: f64) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidCorpus("ragged feature rows".into()));
        }
        Self::new(rows.concat(), dim, frame_period)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Frames `start..end` as a borrowed slice.
    pub fn slice(&self, start: usize, end: usize) -> FrameSlice<'_> {
        FrameSlice {
            data: &self.data[start * self.dim..end * self.dim],
            dim: self.dim,
        }
    }

    pub fn as_slice(&self) -> FrameSlice<'_> {
        self.slice(0, self.len())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        buf.extend_from_slice(&self.frame_period.to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))
    }
}

/// Borrowed view over consecutive frames.
#[derive(Debug, Clone, Copy)]
pub struct FrameSlice<'a> {
    data: &'a [f32],
    dim: usize,
}

impl<'a> FrameSlice<'a> {
    pub fn new(data: &'a [f32], dim: usize) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim));
        FrameSlice { data, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, t: usize) -> &'a [f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &'a [f32]> + 'a {
        self.data.chunks_exact(self.dim)
    }
}

/// Reads a feature file, optionally checking its dimension.
pub fn load_features(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |offset: usize, message: &str| Error::FeatureFormat {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.to_string(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(bytes.len(), "truncated header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad(0, "bad magic"));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let frames = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let frame_period = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if dim == 0 {
        return Err(bad(4, "zero dimension"));
    }
    if frames == 0 {
        return Err(bad(8, "zero frames"));
    }
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(Error::DimensionMismatch { expected, found: dim });
        }
    }
    let want = frames
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad(8, "frame count overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < want {
        // Offset of the first value that could not be read.
        let offset = HEADER_LEN + payload.len() / 4 * 4;
        return Err(bad(offset, "truncated payload"));
    }
    if payload.len() > want {
        return Err(bad(HEADER_LEN + want, "trailing bytes after payload"));
    }
    let mut data = Vec::with_capacity(frames * dim);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(bad(HEADER_LEN + i * 4, "non-finite value"));
        }
        data.push(v);
    }
    Ok(FeatureSequence {
        data,
        dim,
        frame_period,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Analysis window in seconds.
    pub window: f64,
    /// Frame shift in seconds.
    pub shift: f64,
    pub preemphasis: f64,
    pub mel_filters: usize,
    pub cepstra: usize,
    pub energy: bool,
    /// Number of derivative orders appended (0, 1 or 2).
    pub deltas: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window: 0.025,
            shift: 0.010,
            preemphasis: 0.97,
            mel_filters: 26,
            cepstra: 12,
            energy: true,
            deltas: 2,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shift > 0.0 && self.window >= self.shift) {
            return Err(Error::Config("require window >= shift > 0".into()));
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return Err(Error::Config("preemphasis must be in [0, 1)".into()));
        }
        if self.mel_filters == 0 || self.cepstra == 0 || self.cepstra >= self.mel_filters {
            return Err(Error::Config("need 0 < cepstra < mel_filters".into()));
        }
        if self.deltas > 2 {
            return Err(Error::Config("deltas must be 0, 1 or 2".into()));
        }
        Ok(())
    }

    /// Static coefficients per frame before deltas.
    pub fn static_dim(&self) -> usize {
        self.cepstra + usize::from(self.energy)
    }

    pub fn output_dim(&self) -> usize {
        self.static_dim() * (self.deltas + 1)
    }

    /// Window and shift in samples at `rate` Hz.
    pub fn frame_geometry(&self, rate: u32) -> (usize, usize) {
        let window = (self.window * f64::from(rate)).round() as usize;
        let shift = (self.shift * f64::from(rate)).round() as usize;
        (window, shift)
    }
}

/// Number of frames produced for `samples` input samples.
pub fn frame_count(samples: usize, window: usize, shift: usize) -> usize {
    if samples < window {
        0
    } else {
        (samples - window) / shift + 1
    }
}

/// MFCC extraction: pre-emphasis, Hamming window, power spectrum, mel
/// filterbank, log, DCT-II. Log energy is appended last among the static
/// coefficients, then regression deltas.
pub fn extract_features(samples: &[f64], rate: u32, cfg: &FeatureConfig) -> Result<FeatureSequence> {
    let full = extract_f64(samples, rate, cfg)?;
    let data = full.into_iter().map(|v| v as f32).collect();
    FeatureSequence::new(data, cfg.output_dim(), cfg.shift)
}

fn extract_f64(samples: &[f64], rate: u32, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if rate < 8000 {
        return Err(Error::Config(format!("sample rate {rate} Hz is below 8 kHz")));
    }
    if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidCorpus(format!("non-finite sample at index {i}")));
    }
    let (window, shift) = cfg.frame_geometry(rate);
    if window == 0 || shift == 0 {
        return Err(Error::Config("window or shift rounds to zero samples".into()));
    }
    let frames = frame_count(samples.len(), window, shift);
    if frames == 0 {
        return Err(Error::InvalidCorpus(format!(
            "signal of {} samples is shorter than one window ({window})",
            samples.len()
        )));
    }

    let fft_len = window.next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_len);
    let hamming: Vec<f64> = (0..window)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (window as f64 - 1.0)).cos())
        .collect();
    let bank = mel_filterbank(cfg.mel_filters, fft_len, rate);
    let dct = dct_matrix(cfg.cepstra, cfg.mel_filters);

    let static_dim = cfg.static_dim();
    let mut statics = Vec::with_capacity(frames * static_dim);
    let mut frame = vec![0.0; window];
    let mut spectrum = vec![Complex::new(0.0, 0.0); fft_len];
    let mut log_mel = vec![0.0; cfg.mel_filters];

    for f in 0..frames {
        let start = f * shift;
        let raw = &samples[start..start + window];
        for n in 0..window {
            let prev = if n > 0 { raw[n - 1] } else { raw[0] };
            frame[n] = raw[n] - cfg.preemphasis * prev;
        }
        let energy: f64 = frame.iter().map(|x| x * x).sum();
        for (slot, (x, w)) in spectrum.iter_mut().zip(frame.iter().zip(&hamming)) {
            *slot = Complex::new(x * w, 0.0);
        }
        for slot in spectrum.iter_mut().skip(window) {
            *slot = Complex::new(0.0, 0.0);
        }
        fft.process(&mut spectrum);
        let power: Vec<f64> = spectrum[..fft_len / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        for (out, filter) in log_mel.iter_mut().zip(&bank) {
            let e: f64 = filter.iter().map(|&(bin, w)| w * power[bin]).sum();
            *out = e.max(LOG_FLOOR).ln();
        }
        for row in &dct {
            statics.push(row.iter().zip(&log_mel).map(|(a, b)| a * b).sum::<f64>());
        }
        if cfg.energy {
            statics.push(energy.max(LOG_FLOOR).ln());
        }
    }

    Ok(append_deltas(&statics, static_dim, frames, cfg.deltas))
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters as sparse (bin, weight) lists.
fn mel_filterbank(count: usize, fft_len: usize, rate: u32) -> Vec<Vec<(usize, f64)>> {
    let nyquist = f64::from(rate) / 2.0;
    let top = hz_to_mel(nyquist);
    let centers: Vec<f64> = (0..count + 2)
        .map(|i| mel_to_hz(top * i as f64 / (count + 1) as f64))
        .collect();
    let bin_hz = f64::from(rate) / fft_len as f64;
    (0..count)
        .map(|m| {
            let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
            (0..=fft_len / 2)
                .filter_map(|bin| {
                    let hz = bin as f64 * bin_hz;
                    let w = if hz > lo && hz <= mid {
                        (hz - lo) / (mid - lo)
                    } else if hz > mid && hz < hi {
                        (hi - hz) / (hi - mid)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((bin, w))
                })
                .collect()
        })
        .collect()
}

/// Rows 1..=cepstra of the orthonormal DCT-II.
fn dct_matrix(cepstra: usize, filters: usize) -> Vec<Vec<f64>> {
    let scale = (2.0 / filters as f64).sqrt();
    (1..=cepstra)
        .map(|k| {
            (0..filters)
                .map(|n| scale * (PI * k as f64 * (n as f64 + 0.5) / filters as f64).cos())
                .collect()
        })
        .collect()
}

fn append_deltas(statics: &[f64], dim: usize, frames: usize, orders: usize) -> Vec<f64> {
    let mut blocks = vec![statics.to_vec()];
    for _ in 0..orders {
        let prev = blocks.last().unwrap();
        blocks.push(regression(prev, dim, frames));
    }
    let total = dim * (orders + 1);
    let mut out = Vec::with_capacity(frames * total);
    for t in 0..frames {
        for block in &blocks {
            out.extend_from_slice(&block[t * dim..(t + 1) * dim]);
        }
    }
    out
}

fn regression(values: &[f64], dim: usize, frames: usize) -> Vec<f64> {
    let norm: f64 = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    let at = |t: isize, d: usize| {
        let t = t.clamp(0, frames as isize - 1) as usize;
        values[t * dim + d]
    };
    let mut out = vec![0.0; values.len()];
    for t in 0..frames {
        for d in 0..dim {
            let mut acc = 0.0;
            for n in 1..=DELTA_WINDOW {
                let n_i = n as isize;
                acc += n as f64 * (at(t as isize + n_i, d) - at(t as isize - n_i, d));
            }
            out[t * dim + d] = acc / norm;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, amp: f64, rate: u32, seconds: f64) -> Vec<f64> {
        let n = (f64::from(rate) * seconds) as usize;
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / f64::from(rate)).sin())
            .collect()
    }

    #[test]
    fn one_second_gives_98_frames() {
        let signal = sine(440.0, 1000.0, 16000, 1.0);
        let feats = extract_features(&signal, 16000, &FeatureConfig::default()).unwrap();
        assert_eq!(feats.len(), 98);
        assert_eq!(feats.dim(), 39);
    }

    #[test]
    fn frame_count_formula() {
        for window in 1..40 {
            for shift in 1..=window {
                for len in window..window + 100 {
                    let expected = (len - window) / shift + 1;
                    assert_eq!(frame_count(len, window, shift), expected);
                }
            }
        }
        assert_eq!(frame_count(10, 11, 1), 0);
    }

    #[test]
    fn silence_is_finite() {
        let feats = extract_features(&vec![0.0; 8000], 16000, &FeatureConfig::default()).unwrap();
        assert!(feats.frames().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn cepstra_are_scale_invariant() {
        let cfg = FeatureConfig::default();
        let base = sine(1000.0, 3000.0, 16000, 0.2);
        let doubled: Vec<f64> = base.iter().map(|x| 2.0 * x).collect();
        let a = extract_f64(&base, 16000, &cfg).unwrap();
        let b = extract_f64(&doubled, 16000, &cfg).unwrap();
        let dim = cfg.output_dim();
        let energy_dims: Vec<usize> = (0..=cfg.deltas).map(|k| k * cfg.static_dim() + cfg.cepstra).collect();
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            let d = i % dim;
            if d == cfg.cepstra {
                assert!((y - x - 4f64.ln()).abs() < 1e-9, "log energy shifts by ln 4");
            } else if !energy_dims.contains(&d) {
                assert!((x - y).abs() < 1e-6, "frame {} dim {d}: {x} vs {y}", i / dim);
            }
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let signal = sine(300.0, 500.0, 16000, 0.3);
        let cfg = FeatureConfig::default();
        let a = extract_features(&signal, 16000, &cfg).unwrap();
        let b = extract_features(&signal, 16000, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_short_and_non_finite_signals() {
        let cfg = FeatureConfig::default();
        assert!(extract_features(&vec![0.0; 100], 16000, &cfg).is_err());
        let mut signal = vec![0.0; 1000];
        signal[3] = f64::NAN;
        assert!(extract_features(&signal, 16000, &cfg).is_err());
        assert!(extract_features(&vec![0.0; 1000], 4000, &cfg).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f32> = (0..40).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let feats = FeatureSequence::new(data, 4, 0.01).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        feats.save(&path).unwrap();
        assert_eq!(load_features(&path, None).unwrap(), feats);
        assert!(matches!(
            load_features(&path, Some(39)),
            Err(Error::DimensionMismatch { expected: 39, found: 4 })
        ));
    }

    #[test]
    fn truncated_file_reports_offset() {
        let feats = FeatureSequence::new(vec![1.0; 40], 4, 0.01).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        feats.save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 6]).unwrap();
        match load_features(&path, None) {
            Err(Error::FeatureFormat { offset, .. }) => assert_eq!(offset, (HEADER_LEN + 38 * 4) as u64),
            other => panic!("unexpected {other:?}"),
        }
        fs::write(&path, &bytes[..10]).unwrap();
        assert!(matches!(load_features(&path, None), Err(Error::FeatureFormat { .. })));
    }

    #[test]
    fn nan_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.feat");
        FeatureSequence::new(vec![1.0; 8], 4, 0.01)
            .unwrap()
            .save(&path)
            .unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[HEADER_LEN + 4..HEADER_LEN + 8].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_features(&path, None), Err(Error::FeatureFormat { .. })));
    }
}
