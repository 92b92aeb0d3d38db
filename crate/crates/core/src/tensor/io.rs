//! `.cvt` binary tensor files.
//!
//! Layout: magic `CVT1`, dtype byte (0 = real f32, 1 = complex f32
//! interleaved), ndim byte, `ndim` little-endian u32 dims, then the
//! little-endian f32 payload in row-major order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex;

use super::{AnyTensor, CTensor, Real, RTensor};
use crate::error::{Error, Result};

pub const CVT_MAGIC: &[u8; 4] = b"CVT1";

pub(crate) fn encode_into<T: Real>(t: &AnyTensor<T>, out: &mut Vec<u8>) {
    let (dtype, shape) = match t {
        AnyTensor::Real(r) => (0u8, r.shape()),
        AnyTensor::Complex(c) => (1u8, c.shape()),
    };
    out.push(dtype);
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match t {
        AnyTensor::Real(r) => {
            for &v in r.data() {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        AnyTensor::Complex(c) => {
            for z in c.data() {
                out.extend_from_slice(&(z.re.as_f64() as f32).to_le_bytes());
                out.extend_from_slice(&(z.im.as_f64() as f32).to_le_bytes());
            }
        }
    }
}

pub fn encode_cvt<T: Real>(t: &AnyTensor<T>) -> Vec<u8> {
    let mut out = CVT_MAGIC.to_vec();
    encode_into(t, &mut out);
    out
}

pub(crate) struct Cursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub(crate) fn decode_from<T: Real>(cur: &mut Cursor<'_>) -> Result<AnyTensor<T>> {
    let dtype = cur.u8()?;
    let ndim = cur.u8()? as usize;
    let shape = (0..ndim).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let count: usize = shape.iter().product();
    match dtype {
        0 => {
            let data = (0..count).map(|_| cur.f32().map(|v| T::lit(v as f64))).collect::<Result<Vec<_>>>()?;
            Ok(AnyTensor::Real(RTensor::new(&shape, data)?))
        }
        1 => {
            let data = (0..count)
                .map(|_| Ok(Complex::new(T::lit(cur.f32()? as f64), T::lit(cur.f32()? as f64))))
                .collect::<Result<Vec<_>>>()?;
            Ok(AnyTensor::Complex(CTensor::new(&shape, data)?))
        }
        other => Err(Error::Format(format!("unknown dtype byte {other}"))),
    }
}

pub fn decode_cvt<T: Real>(bytes: &[u8]) -> Result<AnyTensor<T>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != CVT_MAGIC {
        return Err(Error::Format("missing CVT1 magic".into()));
    }
    let t = decode_from(&mut cur)?;
    if cur.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(t)
}

pub fn write_cvt<T: Real>(path: impl AsRef<Path>, t: &AnyTensor<T>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_cvt(t))?;
    Ok(())
}

pub fn read_cvt<T: Real>(path: impl AsRef<Path>) -> Result<AnyTensor<T>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_cvt(&bytes)
}
