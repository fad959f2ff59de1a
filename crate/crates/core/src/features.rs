//! Feature extraction: semitone log-frequency spectra, rectified spectral
//! difference (the tracking feature), a mean-pooled low-resolution variant for
//! the rough position estimator, and chroma for offline evaluation.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::audio::FrameStream;
use crate::error::{Error, Result};

/// Lowest analyzed pitch, A0.
pub const LOW_MIDI: u32 = 21;
/// Highest analyzed pitch, C8.
pub const HIGH_MIDI: u32 = 108;
/// Semitone band count (piano range).
pub const N_SEMITONE_BANDS: usize = (HIGH_MIDI - LOW_MIDI + 1) as usize;
/// Pitch classes per octave.
pub const N_CHROMA: usize = 12;

/// Default time downsampling for the low-resolution feature (160 ms frames).
pub const DEFAULT_LOW_RES_TIME_FACTOR: usize = 8;
/// Default band downsampling for the low-resolution feature (22 bands).
pub const DEFAULT_LOW_RES_BAND_FACTOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    SemitoneSpectrum,
    RectifiedSpectralDiff,
    LowResSpectrum,
    Chroma,
}

impl FeatureKind {
    fn code(self) -> u8 {
        match self {
            FeatureKind::SemitoneSpectrum => 0,
            FeatureKind::RectifiedSpectralDiff => 1,
            FeatureKind::LowResSpectrum => 2,
            FeatureKind::Chroma => 3,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => FeatureKind::SemitoneSpectrum,
            1 => FeatureKind::RectifiedSpectralDiff,
            2 => FeatureKind::LowResSpectrum,
            3 => FeatureKind::Chroma,
            other => return Err(Error::MalformedFile(format!("unknown feature kind {other}"))),
        })
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FeatureKind::SemitoneSpectrum => "semitone-spectrum",
            FeatureKind::RectifiedSpectralDiff => "rectified-spectral-diff",
            FeatureKind::LowResSpectrum => "low-res-spectrum",
            FeatureKind::Chroma => "chroma",
        };
        f.write_str(name)
    }
}

/// A time-indexed matrix of feature vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub kind: FeatureKind,
    pub frame_period_ms: f64,
    pub dim: usize,
    data: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(kind: FeatureKind, frame_period_ms: f64, dim: usize) -> Self {
        Self {
            kind,
            frame_period_ms,
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows(
        kind: FeatureKind,
        frame_period_ms: f64,
        dim: usize,
        rows: Vec<Vec<f32>>,
    ) -> Result<Self> {
        let mut seq = Self::new(kind, frame_period_ms, dim);
        for row in rows {
            seq.push_row(&row)?;
        }
        Ok(seq)
    }

    pub fn push_row(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "row has {} values, sequence dim is {}",
                row.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Contiguous sub-sequence [start, end).
    pub fn slice(&self, start: usize, end: usize) -> FeatureSequence {
        FeatureSequence {
            kind: self.kind,
            frame_period_ms: self.frame_period_ms,
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
        }
    }

    /// Serialize to the binary feature container (see docs/formats.md).
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"DFEA")?;
        w.write_all(&1u16.to_le_bytes())?;
        w.write_all(&[self.kind.code(), 0])?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        w.write_all(&self.frame_period_ms.to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; 24];
        r.read_exact(&mut head)?;
        if &head[0..4] != b"DFEA" {
            return Err(Error::MalformedFile("bad feature container magic".into()));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != 1 {
            return Err(Error::UnsupportedFormat(format!(
                "feature container version {version}"
            )));
        }
        let kind = FeatureKind::from_code(head[6])?;
        let dim = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let rows = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
        let frame_period_ms = f64::from_le_bytes(head[16..24].try_into().unwrap());
        let mut data = vec![0f32; rows * dim];
        let mut buf = vec![0u8; rows * dim * 4];
        r.read_exact(&mut buf)?;
        for (v, b) in data.iter_mut().zip(buf.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
        Ok(Self {
            kind,
            frame_period_ms,
            dim,
            data,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        self.write_to(&mut f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path)?;
        Self::read_from(&mut f)
    }
}

/// Reusable semitone-spectrum analyzer: Hann window, zero-padded FFT, and
/// magnitude pooling into equal-tempered semitone bands.
///
/// The FFT length is chosen so that every band down to A0 contains at least
/// one bin center; at 44.1 kHz that is 32768 (bin spacing 1.35 Hz vs. the
/// 1.59 Hz A0 band width).
pub struct SemitoneAnalyzer {
    window_size: usize,
    fft_len: usize,
    fft: Arc<dyn Fft<f32>>,
    hann: Vec<f32>,
    bin_band: Vec<(usize, usize)>, // (bin, band) for bins that fall inside a band
    buf: Vec<Complex<f32>>,
    scratch: Vec<Complex<f32>>,
}

impl SemitoneAnalyzer {
    pub fn new(sample_rate: u32, window_size: usize) -> Self {
        let min_band_width = midi_to_hz(LOW_MIDI as f64) * (cents(50.0) - cents(-50.0));
        let min_len = (sample_rate as f64 / min_band_width).ceil() as usize;
        let fft_len = min_len.max(window_size).next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(fft_len);
        let hann: Vec<f32> = (0..window_size)
            .map(|n| {
                let x = 2.0 * std::f64::consts::PI * n as f64 / (window_size.max(2) - 1) as f64;
                (0.5 * (1.0 - x.cos())) as f32
            })
            .collect();
        let mut bin_band = Vec::new();
        for bin in 1..fft_len / 2 {
            let freq = bin as f64 * sample_rate as f64 / fft_len as f64;
            let pitch = 69.0 + 12.0 * (freq / 440.0).log2();
            let nearest = pitch.round();
            if (LOW_MIDI as f64..=HIGH_MIDI as f64).contains(&nearest) {
                bin_band.push((bin, (nearest as u32 - LOW_MIDI) as usize));
            }
        }
        let scratch_len = fft.get_inplace_scratch_len();
        Self {
            window_size,
            fft_len,
            fft,
            hann,
            bin_band,
            buf: vec![Complex::default(); fft_len],
            scratch: vec![Complex::default(); scratch_len],
        }
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    /// One semitone-spectrum row from one sample window.
    pub fn spectrum_row(&mut self, frame: &[f32]) -> Result<Vec<f32>> {
        if frame.len() != self.window_size {
            return Err(Error::DimensionMismatch(format!(
                "frame has {} samples, analyzer window is {}",
                frame.len(),
                self.window_size
            )));
        }
        for (b, (&s, &w)) in self.buf.iter_mut().zip(frame.iter().zip(&self.hann)) {
            *b = Complex::new(s * w, 0.0);
        }
        for b in self.buf.iter_mut().skip(frame.len()) {
            *b = Complex::default();
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        let mut row = vec![0f32; N_SEMITONE_BANDS];
        for &(bin, band) in &self.bin_band {
            row[band] += self.buf[bin].norm();
        }
        Ok(row)
    }
}

fn midi_to_hz(midi: f64) -> f64 {
    440.0 * ((midi - 69.0) / 12.0).exp2()
}

fn cents(c: f64) -> f64 {
    (c / 1200.0).exp2()
}

/// Log-frequency magnitude spectrum pooled into semitone bands, one row per frame.
pub fn semitone_spectrum(frames: &FrameStream) -> Result<FeatureSequence> {
    if frames.is_empty() {
        return Err(Error::InvalidParam("empty frame stream".into()));
    }
    let mut analyzer = SemitoneAnalyzer::new(frames.sample_rate, frames.window_size);
    let mut seq = FeatureSequence::new(
        FeatureKind::SemitoneSpectrum,
        frames.frame_period_ms,
        N_SEMITONE_BANDS,
    );
    for frame in &frames.frames {
        let row = analyzer.spectrum_row(frame)?;
        seq.push_row(&row)?;
    }
    Ok(seq)
}

/// One rectified-difference row given the previous spectrum row (if any).
///
/// Row 0 is the rectified spectrum itself so onsets at t=0 stay visible.
pub fn rectify_row(prev: Option<&[f32]>, cur: &[f32]) -> Vec<f32> {
    match prev {
        None => cur.iter().map(|&v| v.max(0.0)).collect(),
        Some(p) => cur.iter().zip(p).map(|(&c, &p)| (c - p).max(0.0)).collect(),
    }
}

/// First-order difference of the spectrum with negative elements zeroed.
pub fn rectified_spectral_difference(spec: &FeatureSequence) -> Result<FeatureSequence> {
    if spec.kind != FeatureKind::SemitoneSpectrum {
        return Err(Error::InvalidParam(format!(
            "rectified difference expects a semitone spectrum, got {}",
            spec.kind
        )));
    }
    if spec.is_empty() {
        return Err(Error::EmptyInput("spectrum has no rows".into()));
    }
    let mut out = FeatureSequence::new(
        FeatureKind::RectifiedSpectralDiff,
        spec.frame_period_ms,
        spec.dim,
    );
    let mut prev: Option<&[f32]> = None;
    for row in spec.rows() {
        out.push_row(&rectify_row(prev, row))?;
        prev = Some(row);
    }
    Ok(out)
}

/// Mean-pool a chunk of spectrum rows over time, then over band groups.
pub fn pool_chunk(rows: &[&[f32]], band_factor: usize) -> Vec<f32> {
    let dim = rows[0].len();
    let mut time_mean = vec![0f32; dim];
    for row in rows {
        for (acc, &v) in time_mean.iter_mut().zip(*row) {
            *acc += v;
        }
    }
    let inv = 1.0 / rows.len() as f32;
    for v in &mut time_mean {
        *v *= inv;
    }
    time_mean
        .chunks_exact(band_factor)
        .map(|g| g.iter().sum::<f32>() / band_factor as f32)
        .collect()
}

/// Non-overlapping mean pooling by `time_factor` frames and `band_factor` bands.
/// Trailing remainders are dropped on both axes.
pub fn low_res_features(
    spec: &FeatureSequence,
    time_factor: usize,
    band_factor: usize,
) -> Result<FeatureSequence> {
    if time_factor < 1 || band_factor < 1 {
        return Err(Error::InvalidParam("pooling factors must be >= 1".into()));
    }
    let out_dim = spec.dim / band_factor;
    let mut out = FeatureSequence::new(
        FeatureKind::LowResSpectrum,
        spec.frame_period_ms * time_factor as f64,
        out_dim,
    );
    let rows: Vec<&[f32]> = spec.rows().collect();
    for chunk in rows.chunks_exact(time_factor) {
        out.push_row(&pool_chunk(chunk, band_factor))?;
    }
    Ok(out)
}

/// Fold a semitone-spectrum row into 12 pitch classes (C=0).
pub fn fold_chroma_row(row: &[f32]) -> Vec<f32> {
    let mut folded = vec![0f32; N_CHROMA];
    for (band, &v) in row.iter().enumerate() {
        let pitch_class = ((LOW_MIDI as usize + band) % N_CHROMA) as usize;
        folded[pitch_class] += v;
    }
    folded
}

/// Chroma features: semitone spectrum folded modulo 12, rows L2-normalized
/// when nonzero.
pub fn chroma(frames: &FrameStream) -> Result<FeatureSequence> {
    let spec = semitone_spectrum(frames)?;
    let mut out = FeatureSequence::new(FeatureKind::Chroma, spec.frame_period_ms, N_CHROMA);
    for row in spec.rows() {
        let mut folded = fold_chroma_row(row);
        let norm = folded.iter().map(|v| v * v).sum::<f32>().sqrt();
        if norm > 0.0 {
            for v in &mut folded {
                *v /= norm;
            }
        }
        out.push_row(&folded)?;
    }
    Ok(out)
}
