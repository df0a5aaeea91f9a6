//! Binary checkpoint: `LSCK`, u32 version, u32 layer count, one header per
//! layer (u32 d_in, d_out, kw, dw, u8 nonlinearity), then each layer's f32
//! weights followed by its f32 biases. Little-endian throughout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AcousticError, ConvLayerSpec, LayerParams, ModelParams, NetworkSpec, Nonlinearity};
use crate::scalar::Real;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LSCK";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write, R: Real>(
    mut w: W,
    spec: &NetworkSpec,
    params: &ModelParams<R>,
) -> Result<(), AcousticError> {
    params.check(spec)?;
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(spec.layers().len() as u32).to_le_bytes())?;
    for l in spec.layers() {
        for v in [l.d_in, l.d_out, l.kw, l.dw] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&[l.nonlinearity.code()])?;
    }
    for p in &params.layers {
        for v in p.weight.iter().chain(&p.bias) {
            w.write_all(&(v.wide() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<Rd: Read>(r: &mut Rd) -> Result<u32, AcousticError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32s<Rd: Read, R: Real>(r: &mut Rd, n: usize) -> Result<Vec<R>, AcousticError> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| R::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect())
}

pub fn read_checkpoint<Rd: Read, R: Real>(mut r: Rd) -> Result<(NetworkSpec, ModelParams<R>), AcousticError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(AcousticError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(AcousticError::Checkpoint(format!("unsupported version {version}")));
    }
    let n = read_u32(&mut r)? as usize;
    if n == 0 || n > 4096 {
        return Err(AcousticError::Checkpoint(format!("implausible layer count {n}")));
    }
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let d_in = read_u32(&mut r)? as usize;
        let d_out = read_u32(&mut r)? as usize;
        let kw = read_u32(&mut r)? as usize;
        let dw = read_u32(&mut r)? as usize;
        let mut code = [0u8; 1];
        r.read_exact(&mut code)?;
        let nl = Nonlinearity::from_code(code[0])
            .ok_or_else(|| AcousticError::Checkpoint(format!("unknown nonlinearity code {}", code[0])))?;
        layers.push(ConvLayerSpec::new(d_in, d_out, kw, dw, nl));
    }
    let spec = NetworkSpec::new(layers)?;
    let mut params = Vec::with_capacity(n);
    for l in spec.layers() {
        let weight = read_f32s(&mut r, l.num_weights())?;
        let bias = read_f32s(&mut r, l.d_out)?;
        params.push(LayerParams { weight, bias });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(AcousticError::Checkpoint("trailing bytes".into()));
    }
    Ok((spec, ModelParams { layers: params }))
}

pub fn save_checkpoint<R: Real>(
    path: impl AsRef<Path>,
    spec: &NetworkSpec,
    params: &ModelParams<R>,
) -> Result<(), AcousticError> {
    write_checkpoint(BufWriter::new(File::create(path)?), spec, params)
}

pub fn load_checkpoint<R: Real>(path: impl AsRef<Path>) -> Result<(NetworkSpec, ModelParams<R>), AcousticError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
