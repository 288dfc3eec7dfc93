//! Flat binary checkpoint for a weight set.
//!
//! Layout (little-endian): magic `OESW`, format version u32, input_dim u32,
//! hidden layer count u32, hidden sizes u32 each, batch_norm u8,
//! stats_ready u8, then f64 parameter arrays in layer order: per dense layer
//! the weight matrix row-major then the bias; per batch-norm layer gamma,
//! beta, running mean, running variance. Round-trips are bit-exact.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::{Topology, WeightSet};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"OESW";
const VERSION: u32 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64_slice<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    for &x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf)?;
    Ok(buf[0])
}

fn read_f64_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

pub fn write_checkpoint<W: Write>(topo: &Topology, weights: &WeightSet, out: &mut W) -> Result<()> {
    if !weights.shape_matches(topo) {
        return Err(Error::DimensionMismatch(
            "checkpoint weights do not match topology".into(),
        ));
    }
    out.write_all(MAGIC)?;
    write_u32(out, VERSION)?;
    write_u32(out, topo.input_dim as u32)?;
    write_u32(out, topo.hidden_sizes.len() as u32)?;
    for &h in &topo.hidden_sizes {
        write_u32(out, h as u32)?;
    }
    out.write_all(&[u8::from(topo.batch_norm), u8::from(weights.stats_ready)])?;
    for d in &weights.dense {
        write_f64_slice(out, d.w.as_slice().expect("contiguous"))?;
        write_f64_slice(out, d.b.as_slice().expect("contiguous"))?;
    }
    for bn in &weights.bnorm {
        write_f64_slice(out, bn.gamma.as_slice().expect("contiguous"))?;
        write_f64_slice(out, bn.beta.as_slice().expect("contiguous"))?;
        write_f64_slice(out, bn.running_mean.as_slice().expect("contiguous"))?;
        write_f64_slice(out, bn.running_var.as_slice().expect("contiguous"))?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<(Topology, WeightSet)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = read_u32(input)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let input_dim = read_u32(input)? as usize;
    let n_hidden = read_u32(input)? as usize;
    let mut hidden = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        hidden.push(read_u32(input)? as usize);
    }
    let batch_norm = read_u8(input)? != 0;
    let stats_ready = read_u8(input)? != 0;
    let topo = Topology::new(input_dim, hidden, batch_norm)?;

    let mut weights = WeightSet::zeros(&topo);
    for d in &mut weights.dense {
        let (fi, fo) = d.w.dim();
        let w = read_f64_vec(input, fi * fo)?;
        d.w = Array2::from_shape_vec((fi, fo), w).expect("shape");
        d.b = Array1::from_vec(read_f64_vec(input, fo)?);
    }
    for bn in &mut weights.bnorm {
        let h = bn.gamma.len();
        bn.gamma = Array1::from_vec(read_f64_vec(input, h)?);
        bn.beta = Array1::from_vec(read_f64_vec(input, h)?);
        bn.running_mean = Array1::from_vec(read_f64_vec(input, h)?);
        bn.running_var = Array1::from_vec(read_f64_vec(input, h)?);
    }
    weights.stats_ready = stats_ready;
    Ok((topo, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::forward_train;
    use crate::rng::SeedStream;
    use ndarray::Array2;

    #[test]
    fn round_trip_is_bit_exact() {
        let topo = Topology::new(7, vec![5, 3], true).unwrap();
        let mut stream = SeedStream::new(99);
        let mut w = WeightSet::init(&topo, &mut stream);
        let mut x = Array2::zeros((9, 7));
        for v in x.iter_mut() {
            *v = stream.normal();
        }
        forward_train(&topo, &mut w, x.view()).unwrap();

        let mut buf = Vec::new();
        write_checkpoint(&topo, &w, &mut buf).unwrap();
        let (topo2, w2) = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(topo, topo2);
        assert_eq!(w, w2);

        // Bit-exactness: serialize again and compare bytes.
        let mut buf2 = Vec::new();
        write_checkpoint(&topo2, &w2, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn corrupt_magic_rejected() {
        let bytes = b"NOPE\x01\x00\x00\x00";
        assert!(read_checkpoint(&mut &bytes[..]).is_err());
    }
}
