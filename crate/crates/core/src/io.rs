//! Binary interchange format shared by feature, emission and transition files.
//!
//! Layout, all little endian:
//!
//! | bytes | content                        |
//! |-------|--------------------------------|
//! | 4     | magic `LSTB`                   |
//! | 4     | `u32` row count `T`            |
//! | 4     | `u32` column count `d`         |
//! | 4     | `f32` frame stride in ms       |
//! | 4·T·d | `f32` values, row major        |
//!
//! Transition tables are stored as `|L|+1` rows of `|L|` columns: row 0 holds
//! the start scores, rows `1..=|L|` the matrix `g[i][j]`. Their stride is 0.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::criterion::{EmissionTable, TransitionTable};
use crate::features::{FeatureSequence, Waveform};
use crate::matrix::Matrix;
use crate::scalar::Real;

pub const TABLE_MAGIC: [u8; 4] = *b"LSTB";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, expected LSTB")]
    BadMagic([u8; 4]),
    #[error("table is {rows}x{cols}, expected {expected}")]
    Shape { rows: usize, cols: usize, expected: String },
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("unsupported audio: {0}")]
    Audio(String),
}

/// A raw table as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub values: Matrix<f32>,
    pub stride_ms: f32,
}

pub fn write_table<W: Write>(mut w: W, values: &Matrix<f32>, stride_ms: f32) -> std::io::Result<()> {
    w.write_all(&TABLE_MAGIC)?;
    w.write_all(&(values.rows() as u32).to_le_bytes())?;
    w.write_all(&(values.cols() as u32).to_le_bytes())?;
    w.write_all(&stride_ms.to_le_bytes())?;
    for v in values.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_table<R: Read>(mut r: R) -> Result<Table, IoError> {
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    if word != TABLE_MAGIC {
        return Err(IoError::BadMagic(word));
    }
    r.read_exact(&mut word)?;
    let rows = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let stride_ms = f32::from_le_bytes(word);
    let mut bytes = vec![0u8; rows * cols * 4];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Table {
        values: Matrix::from_vec(rows, cols, data),
        stride_ms,
    })
}

pub fn read_table_file(path: impl AsRef<Path>) -> Result<Table, IoError> {
    read_table(BufReader::new(File::open(path)?))
}

pub fn write_table_file(path: impl AsRef<Path>, values: &Matrix<f32>, stride_ms: f32) -> Result<(), IoError> {
    write_table(BufWriter::new(File::create(path)?), values, stride_ms)?;
    Ok(())
}

pub fn save_features<R: Real>(path: impl AsRef<Path>, f: &FeatureSequence<R>) -> Result<(), IoError> {
    write_table_file(path, &f.frames().cast(), f.stride_ms() as f32)
}

pub fn load_features<R: Real>(path: impl AsRef<Path>) -> Result<FeatureSequence<R>, IoError> {
    let t = read_table_file(path)?;
    Ok(FeatureSequence::new(t.values.cast(), t.stride_ms as f64))
}

pub fn save_emissions<R: Real>(path: impl AsRef<Path>, f: &EmissionTable<R>) -> Result<(), IoError> {
    write_table_file(path, &f.scores().cast(), 0.0)
}

pub fn load_emissions<R: Real>(path: impl AsRef<Path>) -> Result<EmissionTable<R>, IoError> {
    Ok(EmissionTable::new(read_table_file(path)?.values.cast()))
}

pub fn transitions_to_matrix<R: Real>(tr: &TransitionTable<R>) -> Matrix<f32> {
    let n = tr.labels();
    Matrix::from_fn(n + 1, n, |r, c| {
        let v = if r == 0 { tr.start(c) } else { tr.get(r - 1, c) };
        v.wide() as f32
    })
}

pub fn transitions_from_matrix<R: Real>(m: &Matrix<f32>) -> Result<TransitionTable<R>, IoError> {
    let n = m.cols();
    if m.rows() != n + 1 {
        return Err(IoError::Shape {
            rows: m.rows(),
            cols: n,
            expected: format!("{}x{n} (start row + matrix)", n + 1),
        });
    }
    let start = m.row(0).iter().map(|&v| R::lit(v as f64)).collect();
    let trans = Matrix::from_fn(n, n, |i, j| R::lit(m[(i + 1, j)] as f64));
    Ok(TransitionTable::new(trans, start).expect("square by construction"))
}

pub fn save_transitions<R: Real>(path: impl AsRef<Path>, tr: &TransitionTable<R>) -> Result<(), IoError> {
    write_table_file(path, &transitions_to_matrix(tr), 0.0)
}

pub fn load_transitions<R: Real>(path: impl AsRef<Path>) -> Result<TransitionTable<R>, IoError> {
    transitions_from_matrix(&read_table_file(path)?.values)
}

/// Reads a 16-bit mono WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, IoError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(IoError::Audio(format!(
            "expected 16-bit mono PCM, got {} channel(s) of {}-bit {:?}",
            spec.channels, spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Waveform::new(samples, spec.sample_rate))
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<(), IoError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in w.samples() {
        writer.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
    }
    writer.finalize()?;
    Ok(())
}

/// Reads raw little-endian signed 16-bit PCM with a declared sample rate.
pub fn read_raw_pcm(path: impl AsRef<Path>, sample_rate: u32) -> Result<Waveform, IoError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 2 != 0 {
        return Err(IoError::Audio("odd byte count in 16-bit PCM".into()));
    }
    let samples = bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    Ok(Waveform::new(samples, sample_rate))
}
