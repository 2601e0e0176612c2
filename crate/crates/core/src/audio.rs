//! Mono audio buffers and PCM WAV input/output.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("audio file not found: {0}")]
    NotFound(PathBuf),
    #[error("unsupported audio format in {path}: {reason}")]
    Unsupported { path: PathBuf, reason: String },
    #[error("audio file contains no samples: {0}")]
    Empty(PathBuf),
    #[error("malformed WAV file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("slice start {start_s}s is beyond the buffer end ({duration_s}s)")]
    StartBeyondEnd { start_s: f64, duration_s: f64 },
    #[error("invalid slice: {0}")]
    InvalidSlice(String),
    #[error("invalid buffer: {0}")]
    InvalidBuffer(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, AudioError>;

/// Immutable mono signal. Samples live behind an `Arc` so buffers can be
/// handed to many workers without copying.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Arc<[f64]>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    /// Builds a buffer, clamping samples into `[-1, 1]`.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(AudioError::InvalidBuffer("sample rate must be positive".into()));
        }
        let mut samples = samples;
        let mut clamped = 0usize;
        for s in samples.iter_mut() {
            if !s.is_finite() {
                return Err(AudioError::InvalidBuffer("non-finite sample".into()));
            }
            if s.abs() > 1.0 {
                *s = s.clamp(-1.0, 1.0);
                clamped += 1;
            }
        }
        if clamped > 0 {
            log::warn!("clamped {clamped} out-of-range samples to [-1, 1]");
        }
        Ok(Self {
            samples: samples.into(),
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Converts a time offset to a sample index. A small slack absorbs
    /// floating error so that times landing on a sample boundary map onto it.
    pub fn seconds_to_samples(&self, seconds: f64) -> usize {
        seconds_to_samples(seconds, self.sample_rate_hz)
    }

    /// Samples covering `[start_s, start_s + dur_s)`, clamped to the end of
    /// the buffer.
    pub fn slice(&self, start_s: f64, dur_s: f64) -> Result<AudioBuffer> {
        if !(start_s >= 0.0) || !start_s.is_finite() {
            return Err(AudioError::InvalidSlice(format!("start {start_s} must be >= 0")));
        }
        if !(dur_s > 0.0) {
            return Err(AudioError::InvalidSlice(format!("duration {dur_s} must be > 0")));
        }
        let start = self.seconds_to_samples(start_s);
        if start >= self.len() {
            return Err(AudioError::StartBeyondEnd {
                start_s,
                duration_s: self.duration_s(),
            });
        }
        let end = if dur_s.is_finite() {
            self.seconds_to_samples(start_s + dur_s).min(self.len())
        } else {
            self.len()
        };
        if end <= start {
            return Err(AudioError::InvalidSlice(format!(
                "duration {dur_s}s is shorter than one sample"
            )));
        }
        Ok(self.slice_samples(start, end))
    }

    /// Sub-buffer by sample indices; `end` is exclusive. Panics on an
    /// out-of-range or empty range.
    pub fn slice_samples(&self, start: usize, end: usize) -> AudioBuffer {
        assert!(start < end && end <= self.len(), "bad sample range {start}..{end}");
        if start == 0 && end == self.len() {
            return self.clone();
        }
        AudioBuffer {
            samples: self.samples[start..end].into(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

pub fn seconds_to_samples(seconds: f64, sample_rate_hz: u32) -> usize {
    (seconds * sample_rate_hz as f64 + 1e-6).floor().max(0.0) as usize
}

/// Header facts about a WAV file, read without decoding the samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavInfo {
    pub sample_rate_hz: u32,
    pub channels: u16,
    pub frames: u32,
}

impl WavInfo {
    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / self.sample_rate_hz as f64
    }
}

fn open_reader(path: &Path) -> Result<WavReader<BufReader<File>>> {
    if !path.exists() {
        return Err(AudioError::NotFound(path.to_path_buf()));
    }
    let reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(AudioError::Unsupported {
            path: path.to_path_buf(),
            reason: format!("{} channels (only mono or stereo is supported)", spec.channels),
        });
    }
    match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 8 | 16 | 24) | (SampleFormat::Float, 32) => {}
        (fmt, bits) => {
            return Err(AudioError::Unsupported {
                path: path.to_path_buf(),
                reason: format!("{bits}-bit {fmt:?} samples"),
            })
        }
    }
    if spec.sample_rate == 0 {
        return Err(AudioError::Malformed {
            path: path.to_path_buf(),
            reason: "zero sample rate".into(),
        });
    }
    Ok(reader)
}

fn map_hound(path: &Path, err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(source) if source.kind() == std::io::ErrorKind::NotFound => {
            AudioError::NotFound(path.to_path_buf())
        }
        hound::Error::IoError(source) => AudioError::Io {
            path: path.to_path_buf(),
            source,
        },
        hound::Error::Unsupported => AudioError::Unsupported {
            path: path.to_path_buf(),
            reason: "compressed or non-PCM encoding".into(),
        },
        other => AudioError::Malformed {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

pub fn wav_info(path: &Path) -> Result<WavInfo> {
    let reader = open_reader(path)?;
    let spec = reader.spec();
    Ok(WavInfo {
        sample_rate_hz: spec.sample_rate,
        channels: spec.channels,
        frames: reader.duration(),
    })
}

/// Loads a PCM WAV file as a mono buffer. Stereo is mixed down by averaging
/// the channels; integer samples are divided by the magnitude of the type's
/// most negative value.
pub fn load_wav(path: &Path) -> Result<AudioBuffer> {
    let mut reader = WavChunkReader::open(path)?;
    let mut samples = Vec::with_capacity(reader.total_frames());
    while let Some(chunk) = reader.next_chunk(1 << 16)? {
        samples.extend_from_slice(&chunk);
    }
    if samples.is_empty() {
        return Err(AudioError::Empty(path.to_path_buf()));
    }
    AudioBuffer::new(samples, reader.sample_rate_hz())
}

/// Incremental mono reader for recordings too long to decode up front.
pub struct WavChunkReader {
    reader: WavReader<BufReader<File>>,
    path: PathBuf,
    channels: usize,
    scale: f64,
    float: bool,
    clamped: usize,
}

impl WavChunkReader {
    pub fn open(path: &Path) -> Result<Self> {
        let reader = open_reader(path)?;
        let spec = reader.spec();
        let float = spec.sample_format == SampleFormat::Float;
        let scale = if float {
            1.0
        } else {
            (1u64 << (spec.bits_per_sample - 1)) as f64
        };
        Ok(Self {
            reader,
            path: path.to_path_buf(),
            channels: spec.channels as usize,
            scale,
            float,
            clamped: 0,
        })
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.reader.spec().sample_rate
    }

    pub fn total_frames(&self) -> usize {
        self.reader.duration() as usize
    }

    /// Positions the reader at sample frame `frame` (clamped to the end).
    pub fn seek(&mut self, frame: usize) -> Result<()> {
        let frame = frame.min(self.total_frames()) as u32;
        self.reader.seek(frame).map_err(|source| AudioError::Io {
            path: self.path.clone(),
            source,
        })
    }

    /// Next run of up to `max_frames` mono samples, or `None` at the end.
    pub fn next_chunk(&mut self, max_frames: usize) -> Result<Option<Vec<f64>>> {
        let want = max_frames * self.channels;
        let mut raw: Vec<f64> = Vec::with_capacity(want);
        if self.float {
            for s in self.reader.samples::<f32>().take(want) {
                raw.push(s.map_err(|e| map_hound(&self.path, e))? as f64);
            }
        } else {
            for s in self.reader.samples::<i32>().take(want) {
                raw.push(s.map_err(|e| map_hound(&self.path, e))? as f64 / self.scale);
            }
        }
        if raw.is_empty() {
            if self.clamped > 0 {
                log::warn!(
                    "{}: clamped {} out-of-range float samples to [-1, 1]",
                    self.path.display(),
                    self.clamped
                );
                self.clamped = 0;
            }
            return Ok(None);
        }
        let mut mono: Vec<f64> = raw
            .chunks(self.channels)
            .map(|frame| frame.iter().sum::<f64>() / frame.len() as f64)
            .collect();
        for s in mono.iter_mut() {
            if s.abs() > 1.0 {
                *s = s.clamp(-1.0, 1.0);
                self.clamped += 1;
            }
        }
        Ok(Some(mono))
    }
}

/// Decodes `frames` mono samples starting at `start`, stopping early at the
/// end of the file.
pub fn read_wav_range(path: &Path, start: usize, frames: usize) -> Result<AudioBuffer> {
    let mut reader = WavChunkReader::open(path)?;
    reader.seek(start)?;
    let mut samples = Vec::with_capacity(frames.min(reader.total_frames()));
    while samples.len() < frames {
        match reader.next_chunk((frames - samples.len()).min(1 << 16))? {
            Some(chunk) => samples.extend_from_slice(&chunk),
            None => break,
        }
    }
    if samples.is_empty() {
        return Err(AudioError::Empty(path.to_path_buf()));
    }
    AudioBuffer::new(samples, reader.sample_rate_hz())
}

/// Writes a buffer as 16-bit mono PCM.
pub fn write_wav(path: &Path, buffer: &AudioBuffer) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let io_err = |e: hound::Error| map_hound(path, e);
    let mut writer = WavWriter::create(path, spec).map_err(io_err)?;
    for &s in buffer.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(io_err)?;
    }
    writer.finalize().map_err(io_err)
}
