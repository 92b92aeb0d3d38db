//! Binary greyscale PGM (`P5`, maxval 255).

use std::f64::consts::PI;

use cvmri::tensor::{AnyTensor, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Mag,
    Phase,
    Re,
    Im,
}

impl std::str::FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mag" => Ok(Channel::Mag),
            "phase" => Ok(Channel::Phase),
            "re" => Ok(Channel::Re),
            "im" => Ok(Channel::Im),
            _ => Err(format!("unknown channel `{s}`; expected mag, phase, re or im")),
        }
    }
}

pub fn encode(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Parses a `P5` file into `(width, height, pixels)`.
#[cfg(test)]
pub fn decode(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), String> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if bytes.get(pos) == Some(&b'#') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "non-ASCII PGM header")?.to_string());
    }
    if fields[0] != "P5" {
        return Err(format!("expected P5, found {}", fields[0]));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad PGM header field `{s}`"));
    let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max != 255 {
        return Err(format!("only maxval 255 is supported, found {max}"));
    }
    let data = bytes.get(pos + 1..).unwrap_or(&[]);
    if data.len() != w * h {
        return Err(format!("expected {} pixels, found {}", w * h, data.len()));
    }
    Ok((w, h, data.to_vec()))
}

/// 8-bit rendering of the last two dims of `t`. Magnitude scales `[0, max]`,
/// real and imaginary parts scale `[−max|·|, max|·|]`, phase maps `(−π, π]`.
pub fn render<T: Real>(t: &AnyTensor<T>, channel: Channel) -> Result<(usize, usize, Vec<u8>), String> {
    let shape = t.shape();
    if shape.len() < 2 || shape[..shape.len() - 2].iter().any(|&d| d != 1) {
        return Err(format!("export needs a single image plane, got shape {shape:?}"));
    }
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let c = match t {
        AnyTensor::Real(r) => r.to_complex(),
        AnyTensor::Complex(c) => c.clone(),
    };
    let values: Vec<f64> = match channel {
        Channel::Mag => c.magnitude().data().iter().map(|v| v.as_f64()).collect(),
        Channel::Phase => c.phase().data().iter().map(|v| v.as_f64()).collect(),
        Channel::Re => c.re().data().iter().map(|v| v.as_f64()).collect(),
        Channel::Im => c.im().data().iter().map(|v| v.as_f64()).collect(),
    };
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let level = |v: f64| -> u8 {
        let u = match channel {
            Channel::Mag if peak > 0.0 => v / peak,
            Channel::Mag => 0.0,
            Channel::Re | Channel::Im if peak > 0.0 => 0.5 + 0.5 * v / peak,
            Channel::Re | Channel::Im => 0.5,
            Channel::Phase => (v + PI) / (2.0 * PI),
        };
        (255.0 * u).round().clamp(0.0, 255.0) as u8
    };
    Ok((w, h, values.into_iter().map(level).collect()))
}
