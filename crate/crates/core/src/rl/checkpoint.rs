//! Binary network checkpoints: magic `BDQ1`, little-endian `u32` layer
//! count, `(n_in, n_out)` per layer, then each layer's weights and biases
//! as little-endian `f32`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::rl::net::{Bdq, LayerShape};

const MAGIC: &[u8; 4] = b"BDQ1";

pub fn write_checkpoint<T: Scalar, W: Write>(net: &Bdq<T>, mut w: W) -> Result<()> {
    let shapes = net.spec().layer_shapes();
    w.write_all(MAGIC)?;
    w.write_all(&(shapes.len() as u32).to_le_bytes())?;
    for s in &shapes {
        w.write_all(&(s.n_in as u32).to_le_bytes())?;
        w.write_all(&(s.n_out as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(net.param_count() * 4);
    for p in net.params() {
        buf.extend_from_slice(&(p.to_f64_lossy() as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a checkpoint into its layer shapes and flat parameters.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(Vec<LayerShape>, Vec<f32>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a BDQ1 checkpoint".into()));
    }
    let count = read_u32(&mut r)? as usize;
    if count > 1 << 20 {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    let mut shapes = Vec::with_capacity(count);
    let mut total = 0usize;
    for _ in 0..count {
        let n_in = read_u32(&mut r)? as usize;
        let n_out = read_u32(&mut r)? as usize;
        total = total
            .checked_add(n_in.checked_mul(n_out).and_then(|x| x.checked_add(n_out)).ok_or_else(|| Error::Format("layer too large".into()))?)
            .ok_or_else(|| Error::Format("checkpoint too large".into()))?;
        shapes.push(LayerShape { n_in, n_out });
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != total * 4 {
        return Err(Error::Format(format!("expected {} parameter bytes, found {}", total * 4, bytes.len())));
    }
    let params = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((shapes, params))
}

/// Loads checkpoint parameters into `net`, checking every layer shape.
pub fn load_into<T: Scalar, R: Read>(net: &mut Bdq<T>, r: R) -> Result<()> {
    let (shapes, params) = read_checkpoint(r)?;
    if shapes != net.spec().layer_shapes() {
        return Err(Error::Dimension(format!("checkpoint layers {shapes:?} do not match {:?}", net.spec().layer_shapes())));
    }
    let p: Vec<T> = params.into_iter().map(|v| T::lit(v as f64)).collect();
    net.set_params(&p)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
