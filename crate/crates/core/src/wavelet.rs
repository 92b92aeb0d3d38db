//! Haar wavelet packet transform and Gaussian subband weights.
//!
//! Each level filters rows and columns with the averaging pair
//! `h = (1/√2, 1/√2)` and the differencing pair `l = (1/√2, −1/√2)` and
//! downsamples by two, splitting every node into four children ordered
//! `(h_y h_x, h_y l_x, l_y h_x, l_y l_x)`. Leaves are numbered depth-first,
//! so the child digit of the first level is the most significant base-4
//! digit of the leaf index.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{AnyTensor, Array, Real, RTensor};

pub const DEFAULT_LEVELS: usize = 3;
pub const DEFAULT_VARIANCE: f64 = 12.5;

fn check_size(k: usize, levels: usize) -> Result<usize> {
    let block = 1usize << levels;
    if levels == 0 || k == 0 || !k.is_multiple_of(block) {
        return Err(Error::dim(format!("image size {k} is not divisible by 2^{levels}")));
    }
    Ok(k / block)
}

/// One analysis level of an `s×s` block into four `(s/2)²` children.
fn split<T: Real>(block: &[T], s: usize) -> [Vec<T>; 4] {
    let r = T::FRAC_1_SQRT_2();
    let half = s / 2;
    let mut out: [Vec<T>; 4] = std::array::from_fn(|_| vec![T::zero(); half * half]);
    for y in 0..half {
        for x in 0..half {
            let a = block[2 * y * s + 2 * x];
            let b = block[2 * y * s + 2 * x + 1];
            let c = block[(2 * y + 1) * s + 2 * x];
            let d = block[(2 * y + 1) * s + 2 * x + 1];
            // Columns first (x), then rows (y); the Haar steps commute.
            let (top_h, top_l) = ((a + b) * r, (a - b) * r);
            let (bot_h, bot_l) = ((c + d) * r, (c - d) * r);
            let i = y * half + x;
            out[0][i] = (top_h + bot_h) * r;
            out[1][i] = (top_l + bot_l) * r;
            out[2][i] = (top_h - bot_h) * r;
            out[3][i] = (top_l - bot_l) * r;
        }
    }
    out
}

fn merge<T: Real>(children: [&[T]; 4], half: usize) -> Vec<T> {
    let r = T::FRAC_1_SQRT_2();
    let s = 2 * half;
    let mut block = vec![T::zero(); s * s];
    for y in 0..half {
        for x in 0..half {
            let i = y * half + x;
            let (hh, hl, lh, ll) = (children[0][i], children[1][i], children[2][i], children[3][i]);
            let (top_h, bot_h) = ((hh + lh) * r, (hh - lh) * r);
            let (top_l, bot_l) = ((hl + ll) * r, (hl - ll) * r);
            block[2 * y * s + 2 * x] = (top_h + top_l) * r;
            block[2 * y * s + 2 * x + 1] = (top_h - top_l) * r;
            block[(2 * y + 1) * s + 2 * x] = (bot_h + bot_l) * r;
            block[(2 * y + 1) * s + 2 * x + 1] = (bot_h - bot_l) * r;
        }
    }
    block
}

fn analyze<T: Real>(block: &[T], s: usize, levels: usize, out: &mut Vec<T>) {
    if levels == 0 {
        out.extend_from_slice(block);
        return;
    }
    for child in split(block, s) {
        analyze(&child, s / 2, levels - 1, out);
    }
}

fn synthesize<T: Real>(leaves: &[T], s: usize, levels: usize) -> Vec<T> {
    if levels == 0 {
        return leaves.to_vec();
    }
    let quarter = leaves.len() / 4;
    let parts: Vec<Vec<T>> = (0..4).map(|j| synthesize(&leaves[j * quarter..(j + 1) * quarter], s / 2, levels - 1)).collect();
    merge([&parts[0], &parts[1], &parts[2], &parts[3]], s / 2)
}

/// Packet coefficients of one image: `4^levels` subbands of `k_w × k_w`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletPacket<T: Real> {
    pub levels: usize,
    pub k_w: usize,
    /// Subbands in depth-first order, each `k_w²` values row-major.
    pub coeffs: Vec<T>,
}

impl<T: Real> WaveletPacket<T> {
    pub fn num_subbands(&self) -> usize {
        1 << (2 * self.levels)
    }

    pub fn subband(&self, p: usize) -> &[T] {
        let n = self.k_w * self.k_w;
        &self.coeffs[p * n..(p + 1) * n]
    }

    pub fn energy(&self) -> T {
        self.coeffs.iter().map(|&c| c * c).sum()
    }

    /// Inverse transform back to the `K×K` image.
    pub fn inverse(&self) -> RTensor<T> {
        let k = self.k_w << self.levels;
        Array::new(&[k, k], synthesize(&self.coeffs, k, self.levels)).expect("packet size")
    }
}

/// Forward packet transform of a square `[K, K]` image.
pub fn wpt<T: Real>(image: &RTensor<T>, levels: usize) -> Result<WaveletPacket<T>> {
    let (k, kx) = match image.shape() {
        [h, w] => (*h, *w),
        s => return Err(Error::dim(format!("wpt expects a [K, K] image, got {s:?}"))),
    };
    if k != kx {
        return Err(Error::dim(format!("wpt expects a square image, got {k}x{kx}")));
    }
    let k_w = check_size(k, levels)?;
    let mut coeffs = Vec::with_capacity(k * k);
    analyze(image.data(), k, levels, &mut coeffs);
    Ok(WaveletPacket { levels, k_w, coeffs })
}

/// Number of sign changes of the 1-D Haar packet basis function reached by
/// the low/high `path` (first level first).
fn sequency(path: &[bool]) -> usize {
    let n = 1usize << path.len();
    let mut basis = vec![1.0f64; n];
    for (level, &high) in path.iter().enumerate() {
        // Level `l` pairs neighbours at distance 2^l, so a high branch
        // negates samples whose bit `l` is set.
        let seg = 1 << level;
        if high {
            for (i, b) in basis.iter_mut().enumerate() {
                if (i / seg) % 2 == 1 {
                    *b = -*b;
                }
            }
        }
    }
    basis.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
}

/// Leaf indices in ascending two-dimensional sequency: sorted by
/// `(s_y + s_x, s_y)` where `s_y`, `s_x` count sign changes of the row and
/// column basis functions.
pub fn sequency_order(levels: usize) -> Vec<usize> {
    let count = 1usize << (2 * levels);
    let mut keyed: Vec<((usize, usize), usize)> = (0..count)
        .map(|leaf| {
            let digits: Vec<usize> = (0..levels).map(|l| (leaf >> (2 * (levels - 1 - l))) & 3).collect();
            let ys: Vec<bool> = digits.iter().map(|d| d & 2 != 0).collect();
            let xs: Vec<bool> = digits.iter().map(|d| d & 1 != 0).collect();
            let (sy, sx) = (sequency(&ys), sequency(&xs));
            ((sy + sx, sy), leaf)
        })
        .collect();
    keyed.sort();
    keyed.into_iter().map(|(_, leaf)| leaf).collect()
}

/// Normalized Gaussian weights `γ_p ∝ exp(−(p − (P−1)/2)² / 2σ²)`.
pub fn gaussian_weights(count: usize, variance: f64) -> Result<Vec<f64>> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::contract(format!("subband variance must be positive, got {variance}")));
    }
    if count == 0 {
        return Err(Error::contract("at least one subband is required"));
    }
    let mean = (count as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..count).map(|p| (-(p as f64 - mean).powi(2) / (2.0 * variance)).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Gaussian weight of every leaf (indexed depth-first), assigned by the
/// leaf's rank in [`sequency_order`].
pub fn subband_weights(levels: usize, variance: f64) -> Result<Vec<f64>> {
    let gamma = gaussian_weights(1 << (2 * levels), variance)?;
    let mut by_leaf = vec![0.0; gamma.len()];
    for (rank, leaf) in sequency_order(levels).into_iter().enumerate() {
        by_leaf[leaf] = gamma[rank];
    }
    Ok(by_leaf)
}

impl<T: Real> Tape<T> {
    /// Packet transform of every plane of a real `[N, C, K, K]` tensor into
    /// `[N, C·4^levels, K_w, K_w]` (subbands of plane `c` occupy channels
    /// `c·4^levels ..`).
    pub fn wpt(&mut self, x: Var, levels: usize) -> Result<Var> {
        let xv = self.real(x)?;
        let (n, c, k, kx) = xv.nchw()?;
        if k != kx {
            return Err(Error::dim(format!("wpt expects square planes, got {k}x{kx}")));
        }
        let k_w = check_size(k, levels)?;
        let p = 1usize << (2 * levels);
        let mut out = Vec::with_capacity(xv.len());
        for plane in xv.data().chunks_exact(k * k) {
            analyze(plane, k, levels, &mut out);
        }
        let out = Array::new(&[n, c * p, k_w, k_w], out)?;
        Ok(self.push(
            out,
            vec![x],
            Box::new(move |g, _, _| {
                // Orthonormal: the adjoint is the inverse transform.
                let mut dx = Vec::with_capacity(g.len());
                for leaves in g.as_real()?.data().chunks_exact(k * k) {
                    dx.extend(synthesize(leaves, k, levels));
                }
                Ok(vec![Some(AnyTensor::Real(Array::new(&[n, c, k, k], dx)?))])
            }),
        ))
    }
}
