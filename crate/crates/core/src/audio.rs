//! Audio ingestion: WAV decoding and segmentation into fixed-period analysis frames.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::{Condvar, Mutex};

use crate::error::{Error, Result};

/// Default analysis frame period.
pub const DEFAULT_FRAME_PERIOD_MS: f64 = 20.0;
/// Default analysis window length. Three-plus hops keeps low semitone bands stable.
pub const DEFAULT_WINDOW_MS: f64 = 64.0;

/// A decoded mono audio clip with samples normalized to [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidParam("sample_rate must be positive".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn duration_ms(&self) -> f64 {
        1000.0 * self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// A clip cut into contiguous, fixed-hop analysis windows.
#[derive(Debug, Clone)]
pub struct FrameStream {
    pub frame_period_ms: f64,
    pub sample_rate: u32,
    pub window_size: usize,
    pub hop_size: usize,
    pub frames: Vec<Vec<f32>>,
}

impl FrameStream {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Decode a PCM WAV file (16-bit int or 32-bit float, mono or stereo) into a
/// normalized mono clip. Stereo is averaged down.
pub fn decode_wav(path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::UnsupportedFormat(format!(
            "{} channels (only mono and stereo supported)",
            spec.channels
        )));
    }
    let channels = spec.channels as usize;
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!(
                "{bits}-bit {fmt:?} PCM (supported: 16-bit int, 32-bit float)"
            )))
        }
    };
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(2)
            .map(|lr| (lr[0] + lr[1]) * 0.5)
            .collect()
    };
    AudioClip::new(samples, spec.sample_rate)
}

/// Write a clip as 16-bit PCM WAV. Samples are clamped to [-1, 1].
pub fn encode_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

fn wav_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::MalformedFile(other.to_string()),
    }
}

/// Cut a clip into frames of `window_ms` every `frame_period_ms`.
///
/// The tail that does not fill a whole window is dropped; nothing is zero-padded.
pub fn frame(clip: &AudioClip, frame_period_ms: f64, window_ms: f64) -> Result<FrameStream> {
    if frame_period_ms <= 0.0 {
        return Err(Error::InvalidParam("frame_period_ms must be positive".into()));
    }
    if window_ms < frame_period_ms {
        return Err(Error::InvalidParam(
            "window_ms must be at least frame_period_ms".into(),
        ));
    }
    let hop_size = (clip.sample_rate as f64 * frame_period_ms / 1000.0).round() as usize;
    let window_size = (clip.sample_rate as f64 * window_ms / 1000.0).round() as usize;
    if hop_size == 0 || window_size == 0 {
        return Err(Error::InvalidParam("frame shorter than one sample".into()));
    }
    let mut frames = Vec::new();
    if clip.samples.len() >= window_size {
        let count = (clip.samples.len() - window_size) / hop_size + 1;
        frames.reserve(count);
        for i in 0..count {
            let start = i * hop_size;
            frames.push(clip.samples[start..start + window_size].to_vec());
        }
    }
    Ok(FrameStream {
        frame_period_ms,
        sample_rate: clip.sample_rate,
        window_size,
        hop_size,
        frames,
    })
}

/// Append-only sample queue connecting a capture thread to the analysis thread.
///
/// One producer, one consumer. A sound-card adapter pushes samples; the tracker
/// pops whole analysis windows as they fill.
pub struct LiveQueue {
    inner: Mutex<LiveQueueInner>,
    ready: Condvar,
}

struct LiveQueueInner {
    buf: VecDeque<f32>,
    consumed: usize,
    closed: bool,
}

impl LiveQueue {
    pub fn new() -> Self {
        Self {
            inner: Mutex::new(LiveQueueInner {
                buf: VecDeque::new(),
                consumed: 0,
                closed: false,
            }),
            ready: Condvar::new(),
        }
    }

    pub fn push(&self, samples: &[f32]) {
        let mut inner = self.inner.lock().unwrap();
        inner.buf.extend(samples.iter().copied());
        self.ready.notify_one();
    }

    /// Signal end of stream; blocked consumers wake up.
    pub fn close(&self) {
        self.inner.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    /// Block until the next full window is available, then pop one hop.
    ///
    /// Returns `None` once the queue is closed and drained below one window.
    pub fn next_window(&self, window_size: usize, hop_size: usize) -> Option<Vec<f32>> {
        let mut inner = self.inner.lock().unwrap();
        loop {
            if inner.buf.len() >= window_size {
                let window: Vec<f32> = inner.buf.iter().take(window_size).copied().collect();
                inner.buf.drain(..hop_size.min(window_size));
                inner.consumed += hop_size;
                return Some(window);
            }
            if inner.closed {
                return None;
            }
            inner = self.ready.wait(inner).unwrap();
        }
    }
}

impl Default for LiveQueue {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, sr: u32, seconds: f64, amp: f32) -> AudioClip {
        let n = (sr as f64 * seconds) as usize;
        let samples = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin() as f32)
            .collect();
        AudioClip::new(samples, sr).unwrap()
    }

    #[test]
    fn decode_roundtrips_pcm16_sine() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let clip = sine(440.0, 44100, 1.0, 0.5);
        encode_wav(&path, &clip).unwrap();
        let back = decode_wav(&path).unwrap();
        assert_eq!(back.samples.len(), 44100);
        assert_eq!(back.sample_rate, 44100);
        let peak = back.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()));
        assert!((peak - 0.5).abs() < 2.0 / 32768.0, "peak {peak}");
        // within 1 LSB of 16-bit PCM
        for (a, b) in clip.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn stereo_opposite_dc_cancels_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..100 {
            w.write_sample(0.5f32).unwrap();
            w.write_sample(-0.5f32).unwrap();
        }
        w.finalize().unwrap();
        let clip = decode_wav(&path).unwrap();
        assert_eq!(clip.samples.len(), 100);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn empty_file_decodes_to_empty_clip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.wav");
        let clip = AudioClip::new(vec![], 44100).unwrap();
        encode_wav(&path, &clip).unwrap();
        let back = decode_wav(&path).unwrap();
        assert!(back.samples.is_empty());
        assert_eq!(back.duration_ms(), 0.0);
    }

    #[test]
    fn framing_arithmetic_matches_definition() {
        let clip = sine(440.0, 44100, 1.0, 0.5);
        let fs = frame(&clip, 20.0, 40.0).unwrap();
        assert_eq!(fs.hop_size, 882);
        assert_eq!(fs.window_size, 1764);
        assert_eq!(fs.len(), 49);
    }

    #[test]
    fn clip_shorter_than_window_gives_no_frames() {
        let clip = AudioClip::new(vec![0.0; 100], 44100).unwrap();
        let fs = frame(&clip, 20.0, 40.0).unwrap();
        assert_eq!(fs.len(), 0);
    }

    #[test]
    fn frames_are_contiguous_at_hop_offsets() {
        let clip = sine(100.0, 44100, 2.0, 0.5);
        let fs = frame(&clip, 20.0, 40.0).unwrap();
        for (i, fr) in fs.frames.iter().enumerate() {
            let start = i * fs.hop_size;
            assert_eq!(fr[0], clip.samples[start]);
        }
    }

    #[test]
    fn invalid_period_is_rejected() {
        let clip = sine(100.0, 44100, 0.5, 0.5);
        assert!(frame(&clip, 0.0, 40.0).is_err());
        assert!(frame(&clip, 20.0, 10.0).is_err());
    }

    #[test]
    fn live_queue_hands_windows_across_threads() {
        let q = std::sync::Arc::new(LiveQueue::new());
        let q2 = q.clone();
        let producer = std::thread::spawn(move || {
            for chunk in (0..1000i32).collect::<Vec<_>>().chunks(100) {
                q2.push(&chunk.iter().map(|&v| v as f32).collect::<Vec<_>>());
            }
            q2.close();
        });
        let mut windows = Vec::new();
        while let Some(w) = q.next_window(200, 100) {
            windows.push(w);
        }
        producer.join().unwrap();
        assert_eq!(windows.len(), 9);
        assert_eq!(windows[0][0], 0.0);
        assert_eq!(windows[1][0], 100.0);
    }
}
