//! MMCK checkpoint format.
//!
//! Layout (all integers little-endian):
//!   magic "MMCK" | u32 version=1 | u32 count
//!   per entry: u32 name_len | name bytes (utf-8) | u8 dtype (0=f64, 1=f32)
//!              | u32 rank | u32 dims[rank] | raw LE data

use std::io::{self, Read, Write};

use super::{Params, Tensor};

const MAGIC: &[u8; 4] = b"MMCK";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(w: &mut W, params: &Params) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[0u8])?; // f64
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn bad(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> io::Result<Params> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not an MMCK checkpoint"));
    }
    if read_u32(r)? != VERSION {
        return Err(bad("unsupported MMCK version"));
    }
    let count = read_u32(r)?;
    let mut params = Params::new();
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("invalid parameter name"))?;
        let mut dtype = [0u8; 1];
        r.read_exact(&mut dtype)?;
        let rank = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        match dtype[0] {
            0 => {
                let mut b = [0u8; 8];
                for _ in 0..numel {
                    r.read_exact(&mut b)?;
                    data.push(f64::from_le_bytes(b));
                }
            }
            1 => {
                let mut b = [0u8; 4];
                for _ in 0..numel {
                    r.read_exact(&mut b)?;
                    data.push(f32::from_le_bytes(b) as f64);
                }
            }
            _ => return Err(bad("unknown dtype tag")),
        }
        let t = Tensor::new(shape, data).map_err(|e| bad(&e.to_string()))?;
        params.insert(name, t);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut params = Params::new();
        params.insert("encoder.pos.h".into(), Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap());
        params.insert("decoder.queries".into(), Tensor::scalar(-0.5));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &params).unwrap();
        let back = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(back, params);
    }

    #[test]
    fn rejects_wrong_magic() {
        let buf = b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00".to_vec();
        assert!(read_checkpoint(&mut buf.as_slice()).is_err());
    }
}
