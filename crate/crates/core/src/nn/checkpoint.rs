//! Binary network checkpoints.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes   "FASNNCK\0"
//! version      u32       1
//! net_count    u32
//! per network:
//!   output     u8        0 = linear, 1 = scale·tanh
//!   scale      f64       tanh scale (0 for linear)
//!   late       u64       auxiliary input width, 0 = none
//!   dim_count  u32
//!   dims       u64 × dim_count
//!   per layer: weights f64 × (out·in) row-major, then bias f64 × out
//!   has_adam   u8
//!   if has_adam = 1:
//!     step u64, learning_rate f64, beta1 f64, beta2 f64, epsilon f64,
//!     weight_decay f64,
//!     first moments  (same layout as the parameters)
//!     second moments (same layout as the parameters)
//! ```

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use super::{AdamState, Layer, Mlp, OutputActivation};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FASNNCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u8<W: Write>(w: &mut W, v: u8) -> Result<()> {
    Ok(w.write_all(&[v])?)
}
fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}
fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn get<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}
fn get_u8<R: Read>(r: &mut R) -> Result<u8> {
    Ok(get::<1, R>(r)?[0])
}
fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(get(r)?))
}
fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(get(r)?))
}
fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(get(r)?))
}

fn put_layers<W: Write>(w: &mut W, layers: &[Layer]) -> Result<()> {
    for layer in layers {
        for r in 0..layer.weights.nrows() {
            for c in 0..layer.weights.ncols() {
                put_f64(w, layer.weights[(r, c)])?;
            }
        }
        for v in layer.bias.iter() {
            put_f64(w, *v)?;
        }
    }
    Ok(())
}

fn get_layers<R: Read>(r: &mut R, shapes: &[(usize, usize)]) -> Result<Vec<Layer>> {
    shapes
        .iter()
        .map(|&(rows, cols)| {
            let mut weights = DMatrix::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    weights[(i, j)] = get_f64(r)?;
                }
            }
            let mut bias = DVector::zeros(rows);
            for i in 0..rows {
                bias[i] = get_f64(r)?;
            }
            Ok(Layer { weights, bias })
        })
        .collect()
}

/// Writes networks (each with optional optimizer state) in order.
pub fn write_checkpoint<W: Write>(w: &mut W, nets: &[(&Mlp, Option<&AdamState>)]) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    put_u32(w, nets.len() as u32)?;
    for (net, adam) in nets {
        match net.output_activation() {
            OutputActivation::Linear => {
                put_u8(w, 0)?;
                put_f64(w, 0.0)?;
            }
            OutputActivation::TanhScaled(s) => {
                put_u8(w, 1)?;
                put_f64(w, s)?;
            }
        }
        put_u64(w, net.late_concat_dim().unwrap_or(0) as u64)?;
        put_u32(w, net.layer_dims().len() as u32)?;
        for d in net.layer_dims() {
            put_u64(w, *d as u64)?;
        }
        put_layers(w, net.layers())?;
        match adam {
            None => put_u8(w, 0)?,
            Some(st) => {
                put_u8(w, 1)?;
                put_u64(w, st.step_count)?;
                for v in [st.learning_rate, st.beta1, st.beta2, st.epsilon, st.weight_decay] {
                    put_f64(w, v)?;
                }
                put_layers(w, &st.first_moment)?;
                put_layers(w, &st.second_moment)?;
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Vec<(Mlp, Option<AdamState>)>> {
    let magic: [u8; 8] = get(r)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic header".into()));
    }
    let version = get_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = get_u32(r)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let kind = get_u8(r)?;
        let scale = get_f64(r)?;
        let output = match kind {
            0 => OutputActivation::Linear,
            1 => OutputActivation::TanhScaled(scale),
            k => return Err(Error::Checkpoint(format!("unknown output activation {k}"))),
        };
        let late = match get_u64(r)? {
            0 => None,
            d => Some(d as usize),
        };
        let dim_count = get_u32(r)? as usize;
        if !(2..=64).contains(&dim_count) {
            return Err(Error::Checkpoint(format!("implausible layer count {dim_count}")));
        }
        let dims = (0..dim_count)
            .map(|_| get_u64(r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let skeleton = Mlp::zeros(&dims, output, late).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let shapes: Vec<(usize, usize)> = skeleton.layers().iter().map(|l| l.weights.shape()).collect();
        let layers = get_layers(r, &shapes)?;
        let net = Mlp::from_parts(dims, layers, output, late)?;
        let adam = match get_u8(r)? {
            0 => None,
            1 => {
                let step_count = get_u64(r)?;
                let mut st = AdamState::new(&net, get_f64(r)?);
                st.step_count = step_count;
                st.beta1 = get_f64(r)?;
                st.beta2 = get_f64(r)?;
                st.epsilon = get_f64(r)?;
                st.weight_decay = get_f64(r)?;
                st.first_moment = get_layers(r, &shapes)?;
                st.second_moment = get_layers(r, &shapes)?;
                Some(st)
            }
            f => return Err(Error::Checkpoint(format!("bad optimizer flag {f}"))),
        };
        out.push((net, adam));
    }
    Ok(out)
}
