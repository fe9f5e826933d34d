//! Binary network checkpoints.
//!
//! Layout, all integers little-endian:
//!   magic "PERC" | version u32 | layer count u32 |
//!   (rows u32, cols u32) per layer | weights f32 row-major per layer.
//!
//! Weights are f64 in memory and f32 on disk; a load-after-save
//! reproduces the f32 rounding of every weight exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::Network;

pub const MAGIC: [u8; 4] = *b"PERC";
pub const VERSION: u32 = 1;

/// Serialize the network to `path`.
pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    for layer in net.layers() {
        buf.extend_from_slice(&(layer.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.cols() as u32).to_le_bytes());
    }
    for layer in net.layers() {
        for &w in layer.as_slice() {
            buf.extend_from_slice(&(w as f32).to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

fn read_exact(data: &[u8], at: &mut usize, len: usize, what: &str) -> Result<Vec<u8>> {
    if *at + len > data.len() {
        return Err(Error::Data(format!("checkpoint truncated reading {what}")));
    }
    let out = data[*at..*at + len].to_vec();
    *at += len;
    Ok(out)
}

fn read_u32(data: &[u8], at: &mut usize, what: &str) -> Result<u32> {
    let b = read_exact(data, at, 4, what)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Load a network saved by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let mut at = 0usize;
    let magic = read_exact(&data, &mut at, 4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Data(format!(
            "bad checkpoint magic {:?} in {}",
            magic,
            path.display()
        )));
    }
    let version = read_u32(&data, &mut at, "version")?;
    if version != VERSION {
        return Err(Error::Data(format!("unsupported checkpoint version {version}")));
    }
    let n_layers = read_u32(&data, &mut at, "layer count")? as usize;
    if n_layers == 0 {
        return Err(Error::Data("checkpoint holds no layers".into()));
    }
    let mut shapes = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let rows = read_u32(&data, &mut at, "layer shape")? as usize;
        let cols = read_u32(&data, &mut at, "layer shape")? as usize;
        if rows == 0 || cols < 2 {
            return Err(Error::Data(format!("layer {l} has degenerate shape {rows}x{cols}")));
        }
        shapes.push((rows, cols));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for &(rows, cols) in &shapes {
        let raw = read_exact(&data, &mut at, rows * cols * 4, "weights")?;
        let mut values = Vec::with_capacity(rows * cols);
        for chunk in raw.chunks_exact(4) {
            let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
            if !v.is_finite() {
                return Err(Error::Data("checkpoint holds non-finite weight".into()));
            }
            values.push(v as f64);
        }
        layers.push(Matrix::from_vec(rows, cols, values)?);
    }
    if at != data.len() {
        return Err(Error::Data(format!(
            "checkpoint has {} trailing bytes",
            data.len() - at
        )));
    }
    let input_dim = shapes[0].1 - 1;
    Network::from_layers(layers, input_dim)
}
