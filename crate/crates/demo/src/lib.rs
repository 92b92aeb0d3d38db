//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Everything exported to JavaScript is a thin wrapper over a plain Rust
//! function so the same code paths are tested natively.

use std::f64::consts::PI;

use wasm_bindgen::prelude::*;

use cvmri::activations::{cardioid_gain, SsParams, SsVariant};
use cvmri::losses;
use cvmri::mri::{self, MaskPattern};
use cvmri::training::to_grey;
use cvmri::wavelet;

/// `points` phases evenly spaced over `(−π, π]`.
pub fn phase_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|i| -PI + 2.0 * PI * i as f64 / points as f64).collect()
}

fn variant(name: &str) -> Result<Option<SsVariant>, String> {
    match name {
        "cardioid" => Ok(None),
        "pp-ss" => Ok(Some(SsVariant::PpSs)),
        "tip-ss" => Ok(Some(SsVariant::TipSs)),
        "pc-ss" => Ok(Some(SsVariant::PcSs)),
        _ => Err(format!("unknown activation `{name}`")),
    }
}

/// Phase-dependent gain of a sum-of-sinusoids activation (or the cardioid)
/// over [`phase_grid`].
pub fn gains(name: &str, w: [f64; 3], theta: [f64; 3], points: usize) -> Result<Vec<f64>, String> {
    let grid = phase_grid(points);
    Ok(match variant(name)? {
        None => grid.into_iter().map(cardioid_gain).collect(),
        Some(v) => {
            let p = SsParams { w, theta, phi: 0.0 };
            grid.into_iter().map(|t| p.gain(t, v)).collect()
        }
    })
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn gain_curve(name: &str, w0: f64, w1: f64, w2: f64, t0: f64, t1: f64, t2: f64, points: usize) -> Result<Vec<f64>, JsError> {
    gains(name, [w0, w1, w2], [t0, t1, t2], points).map_err(|e| JsError::new(&e))
}

/// A phantom, its sampling mask and the zero-filled reconstruction, as
/// 8-bit greyscale planes.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct Preview {
    size: usize,
    mask: Vec<u8>,
    phantom: Vec<u8>,
    zfr: Vec<u8>,
    ratio: f64,
    psnr: f64,
}

#[wasm_bindgen]
impl Preview {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    #[wasm_bindgen(getter)]
    pub fn mask(&self) -> Vec<u8> {
        self.mask.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn phantom(&self) -> Vec<u8> {
        self.phantom.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn zfr(&self) -> Vec<u8> {
        self.zfr.clone()
    }

    /// Fraction of k-space actually sampled.
    #[wasm_bindgen(getter)]
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// PSNR of the zero-filled magnitude in dB.
    #[wasm_bindgen(getter)]
    pub fn psnr(&self) -> f64 {
        self.psnr
    }
}

pub fn make_preview(pattern: &str, ratio: f64, size: usize, seed: u64, noise_pct: f64) -> cvmri::Result<Preview> {
    let pattern: MaskPattern = pattern.parse()?;
    let mask = mri::make_mask(pattern, ratio, size, seed)?;
    let x = mri::make_phantoms::<f32>(1, size, seed)?.remove(0).image;
    let y = mri::acquire(&x, &mask, noise_pct, seed)?;
    let z = mri::zfr(&y, &mask)?;
    let (zm, xm) = losses::normalize_pair(&z.magnitude(), &x.magnitude())?;
    Ok(Preview {
        size,
        mask: mask.grid.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        phantom: to_grey(&x.magnitude()),
        zfr: to_grey(&z.magnitude()),
        ratio: mask.achieved_ratio(),
        psnr: losses::psnr(&zm, &xm, 1.0)?,
    })
}

#[wasm_bindgen]
pub fn preview(pattern: &str, ratio: f64, size: usize, seed: u32, noise_pct: f64) -> Result<Preview, JsError> {
    make_preview(pattern, ratio, size, seed as u64, noise_pct).map_err(|e| JsError::new(&e.to_string()))
}

/// Gaussian weights of the wavelet-packet subbands in sequency order.
#[wasm_bindgen]
pub fn wavelet_weights(levels: usize, variance: f64) -> Result<Vec<f64>, JsError> {
    wavelet::gaussian_weights(1 << (2 * levels), variance).map_err(|e| JsError::new(&e.to_string()))
}
