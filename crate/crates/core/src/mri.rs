//! Cartesian CS-MRI acquisition: sampling masks, undersampled noisy k-space,
//! zero-filled reconstruction and synthetic complex phantoms.
//!
//! Masks are stored centred (DC at `(K/2, K/2)`), which is how they are
//! viewed and written to disk. k-space measurements use the natural DFT
//! layout of [`fft2`], so the mask is `ifftshift`ed before it is applied.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{fft2, ifft2, ifftshift, AnyTensor, CTensor, Real, RTensor};

/// Columns that every gauss1d mask keeps around DC.
pub const CENTER_COLUMNS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaskPattern {
    Gauss1d,
    Radial,
    Spiral,
}

impl MaskPattern {
    pub fn name(self) -> &'static str {
        match self {
            MaskPattern::Gauss1d => "gauss1d",
            MaskPattern::Radial => "radial",
            MaskPattern::Spiral => "spiral",
        }
    }
}

impl fmt::Display for MaskPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gauss1d" | "1d-g" | "1dg" | "cartesian" => Ok(MaskPattern::Gauss1d),
            "radial" => Ok(MaskPattern::Radial),
            "spiral" => Ok(MaskPattern::Spiral),
            _ => Err(Error::Config { key: "mask".into(), message: format!("unknown pattern `{s}`") }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    pub pattern: MaskPattern,
    pub ratio: f64,
    pub seed: u64,
    pub k: usize,
    /// Centred `K×K` grid of 0/1, row-major.
    pub grid: Vec<bool>,
}

impl SamplingMask {
    pub fn popcount(&self) -> usize {
        self.grid.iter().filter(|&&b| b).count()
    }

    pub fn achieved_ratio(&self) -> f64 {
        self.popcount() as f64 / (self.k * self.k) as f64
    }

    /// Centred grid as a real `[K, K]` tensor of 0/1.
    pub fn to_tensor<T: Real>(&self) -> RTensor<T> {
        RTensor::from_fn(&[self.k, self.k], |i| if self.grid[i] { T::one() } else { T::zero() })
    }

    /// Reads a centred 0/1 tensor back. Pattern metadata is not stored in
    /// the file, so the caller supplies it.
    pub fn from_tensor<T: Real>(t: &RTensor<T>, pattern: MaskPattern, seed: u64) -> Result<Self> {
        let (_, h, w) = t.spatial()?;
        if h != w || t.len() != h * w {
            return Err(Error::dim(format!("mask must be a single K×K plane, got {:?}", t.shape())));
        }
        let grid: Vec<bool> = t.data().iter().map(|&v| v > T::lit(0.5)).collect();
        let mut m = Self { pattern, ratio: 0.0, seed, k: h, grid };
        m.ratio = m.achieved_ratio();
        Ok(m)
    }

    /// The grid in natural DFT layout.
    pub fn unshifted<T: Real>(&self) -> RTensor<T> {
        ifftshift(&self.to_tensor()).expect("square mask")
    }

    /// ASCII preview, one row per line.
    pub fn render(&self) -> String {
        let mut s = String::with_capacity(self.k * (self.k + 1));
        for row in self.grid.chunks(self.k) {
            s.extend(row.iter().map(|&b| if b { '#' } else { '.' }));
            s.push('\n');
        }
        s
    }
}

/// Builds a centred sampling mask with an exact popcount.
///
/// gauss1d keeps `round(ratio·K)` whole columns, so its popcount is that
/// column count times `K`. Radial and spiral masks hit `round(ratio·K²)`
/// points and are symmetric under `(y, x) → ((K−y) % K, (K−x) % K)`.
pub fn make_mask(pattern: MaskPattern, ratio: f64, k: usize, seed: u64) -> Result<SamplingMask> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::contract(format!("sampling ratio must lie in (0, 1], got {ratio}")));
    }
    if k < 4 || !k.is_power_of_two() {
        return Err(Error::UnsupportedSize(format!("mask size must be a power of two ≥ 4, got {k}")));
    }
    let grid = match pattern {
        MaskPattern::Gauss1d => gauss1d(ratio, k, seed),
        MaskPattern::Radial => {
            let target = (ratio * (k * k) as f64).round() as usize;
            let mut best = radial(1, k);
            for n in 2..=4 * k {
                if count(&best) >= target {
                    break;
                }
                let g = radial(n, k);
                if count(&g).abs_diff(target) <= count(&best).abs_diff(target) {
                    best = g;
                } else {
                    break;
                }
            }
            adjust_symmetric(best, k, target)
        }
        MaskPattern::Spiral => {
            let target = (ratio * (k * k) as f64).round() as usize;
            let (mut lo, mut hi) = (0.25f64, k as f64);
            let mut best = spiral(lo, k);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                let g = spiral(mid, k);
                if count(&g).abs_diff(target) < count(&best).abs_diff(target) {
                    best = g.clone();
                }
                if count(&g) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            adjust_symmetric(best, k, target)
        }
    };
    Ok(SamplingMask { pattern, ratio, seed, k, grid })
}

fn count(g: &[bool]) -> usize {
    g.iter().filter(|&&b| b).count()
}

fn gauss1d(ratio: f64, k: usize, seed: u64) -> Vec<bool> {
    let c = k / 2;
    let want = ((ratio * k as f64).round() as usize).clamp(1, k);
    let mut chosen = vec![false; k];
    // Centre columns in order of distance from DC.
    for &col in [c, c - 1, c + 1, c - 2].iter().take(want.min(CENTER_COLUMNS)) {
        chosen[col] = true;
    }
    let sigma = k as f64 / 6.0;
    let mut weights: Vec<f64> = (0..k)
        .map(|x| if chosen[x] { 0.0 } else { (-((x as f64 - c as f64).powi(2)) / (2.0 * sigma * sigma)).exp() })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut have = want.min(CENTER_COLUMNS);
    while have < want {
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = weights.iter().rposition(|&w| w > 0.0).expect("columns left");
        for (x, &w) in weights.iter().enumerate() {
            if w > 0.0 && u < w {
                pick = x;
                break;
            }
            u -= w;
        }
        chosen[pick] = true;
        weights[pick] = 0.0;
        have += 1;
    }
    (0..k * k).map(|i| chosen[i % k]).collect()
}

fn mirror(k: usize, y: usize, x: usize) -> (usize, usize) {
    ((k - y) % k, (k - x) % k)
}

fn plot(g: &mut [bool], k: usize, fy: f64, fx: f64) {
    let c = (k / 2) as f64;
    let (y, x) = ((c + fy).round(), (c + fx).round());
    if y >= 0.0 && x >= 0.0 && (y as usize) < k && (x as usize) < k {
        let (y, x) = (y as usize, x as usize);
        g[y * k + x] = true;
        let (my, mx) = mirror(k, y, x);
        g[my * k + mx] = true;
    }
}

fn radial(rays: usize, k: usize) -> Vec<bool> {
    let mut g = vec![false; k * k];
    let reach = (k / 2) as f64 * std::f64::consts::SQRT_2;
    for r in 0..rays {
        let angle = std::f64::consts::PI * r as f64 / rays as f64;
        let (s, c) = angle.sin_cos();
        let mut t = -reach;
        while t <= reach {
            plot(&mut g, k, t * s, t * c);
            t += 0.25;
        }
    }
    g
}

/// Two-arm Archimedean spiral `r = (K/2)·θ/(2π·turns)`.
fn spiral(turns: f64, k: usize) -> Vec<bool> {
    let mut g = vec![false; k * k];
    let r_max = (k / 2) as f64;
    let theta_max = 2.0 * std::f64::consts::PI * turns;
    let mut theta = 0.0;
    while theta <= theta_max {
        let r = r_max * theta / theta_max;
        plot(&mut g, k, r * theta.sin(), r * theta.cos());
        // Step so that consecutive samples are at most a quarter pixel apart.
        let speed = (r * r + (r_max / theta_max).powi(2)).sqrt();
        theta += 0.25 / speed.max(1e-3);
    }
    g
}

/// Trims or fills a symmetric grid to exactly `target` points. Selected
/// points are kept from DC outwards, so the highest-frequency ones are the
/// first dropped, and missing points are filled from the lowest frequency
/// unselected ones. Mirror pairs move together; the four self-mirrored
/// points (DC and the Nyquist corners) are only taken to fix parity.
fn adjust_symmetric(g: Vec<bool>, k: usize, target: usize) -> Vec<bool> {
    let c = (k / 2) as f64;
    let radius = |i: usize| {
        let (y, x) = ((i / k) as f64 - c, (i % k) as f64 - c);
        y * y + x * x
    };
    let partner = |i: usize| {
        let (my, mx) = mirror(k, i / k, i % k);
        my * k + mx
    };
    let dc = (k / 2) * k + k / 2;
    let mut order: Vec<usize> = (0..k * k).filter(|&i| i <= partner(i)).collect();
    // Ties broken by index so the result is deterministic.
    order.sort_by(|&a, &b| {
        (a != dc).cmp(&(b != dc)).then((!g[a]).cmp(&!g[b])).then(radius(a).total_cmp(&radius(b))).then(a.cmp(&b))
    });
    let mut out = vec![false; k * k];
    let mut remaining = target;
    // Pair points not yet visited, so singletons are also taken when the
    // pairs alone cannot reach the target.
    let mut pair_points: usize = order.iter().filter(|&&i| partner(i) != i).count() * 2;
    for i in order {
        if remaining == 0 {
            break;
        }
        let j = partner(i);
        let size = if i == j { 1 } else { 2 };
        if size == 2 {
            pair_points -= 2;
        }
        let take = if size == 1 { i == dc || remaining % 2 == 1 || remaining > pair_points } else { remaining >= 2 };
        if take {
            out[i] = true;
            out[j] = true;
            remaining -= size;
        }
    }
    debug_assert_eq!(remaining, 0);
    out
}

fn masked<T: Real>(a: &CTensor<T>, mask: &RTensor<T>) -> Result<CTensor<T>> {
    let (_, h, w) = a.spatial()?;
    if mask.len() != h * w || mask.shape()[mask.ndim() - 2..] != [h, w] {
        return Err(Error::dim(format!("mask {:?} does not match k-space {:?}", mask.shape(), a.shape())));
    }
    let mut out = a.clone();
    for plane in out.data_mut().chunks_exact_mut(h * w) {
        for (z, &m) in plane.iter_mut().zip(mask.data()) {
            *z = z.scale(m);
        }
    }
    Ok(out)
}

/// `Φx = U F x` without noise. Works on `[.., K, K]` batches.
pub fn forward_op<T: Real>(x: &CTensor<T>, mask: &SamplingMask) -> Result<CTensor<T>> {
    masked(&fft2(x)?, &mask.unshifted())
}

/// `Φᴴy = Fᴴ Uᴴ y`.
pub fn adjoint_op<T: Real>(y: &CTensor<T>, mask: &SamplingMask) -> Result<CTensor<T>> {
    ifft2(&masked(y, &mask.unshifted())?)
}

/// `y = U F x + ζ` with complex Gaussian noise on sampled bins only. Each
/// component of ζ has std `noise_pct/100 · mean|Fx|` over the sampled bins
/// of the same image.
pub fn acquire<T: Real>(x: &CTensor<T>, mask: &SamplingMask, noise_pct: f64, seed: u64) -> Result<CTensor<T>> {
    if !(noise_pct >= 0.0 && noise_pct.is_finite()) {
        return Err(Error::contract(format!("noise percentage must be finite and ≥ 0, got {noise_pct}")));
    }
    let mut y = forward_op(x, mask)?;
    if noise_pct == 0.0 {
        return Ok(y);
    }
    let (_, h, w) = y.spatial()?;
    let m = mask.unshifted::<f64>();
    let sampled: Vec<usize> = (0..h * w).filter(|&i| m.data()[i] > 0.5).collect();
    if sampled.is_empty() {
        return Ok(y);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for plane in y.data_mut().chunks_exact_mut(h * w) {
        let mean = sampled.iter().map(|&i| plane[i].norm().as_f64()).sum::<f64>() / sampled.len() as f64;
        let std = noise_pct / 100.0 * mean;
        if std == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, std).map_err(|e| Error::Internal(e.to_string()))?;
        for &i in &sampled {
            plane[i] += Complex::new(T::lit(normal.sample(&mut rng)), T::lit(normal.sample(&mut rng)));
        }
    }
    Ok(y)
}

/// Zero-filled reconstruction `x_u = Fᴴ(U ⊙ y)`.
pub fn zfr<T: Real>(y: &CTensor<T>, mask: &SamplingMask) -> Result<CTensor<T>> {
    adjoint_op(y, mask)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom<T: Real> {
    pub image: CTensor<T>,
    pub seed: u64,
    pub index: usize,
    pub shapes: usize,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Soft-edged ellipses and rectangles over an elliptical support, with a
/// smooth quadratic phase in `[−π/2, π/2]`. Phantom `i` uses stream `i` of
/// the seeded generator.
pub fn make_phantoms<T: Real>(count: usize, k: usize, seed: u64) -> Result<Vec<Phantom<T>>> {
    if k < 8 || !k.is_power_of_two() {
        return Err(Error::UnsupportedSize(format!("phantom size must be a power of two ≥ 8, got {k}")));
    }
    Ok((0..count).map(|i| phantom(k, seed, i)).collect())
}

fn phantom<T: Real>(k: usize, seed: u64, index: usize) -> Phantom<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let edge = 0.6 * k as f64 / 2.0;
    let coord = |i: usize| (i as f64 + 0.5) / k as f64 * 2.0 - 1.0;
    let mut mag = vec![0.0f64; k * k];

    // Outer support, then interior structures composited on top.
    let mut layers = vec![(0.0, 0.0, rng.random_range(0.65..0.9), rng.random_range(0.6..0.85), rng.random_range(-0.3..0.3), false, rng.random_range(0.55..0.85))];
    let shapes = rng.random_range(3..=7);
    for _ in 0..shapes {
        layers.push((
            rng.random_range(-0.45..0.45),
            rng.random_range(-0.45..0.45),
            rng.random_range(0.08..0.35),
            rng.random_range(0.08..0.35),
            rng.random_range(0.0..std::f64::consts::PI),
            rng.random::<f64>() < 0.3,
            rng.random_range(0.0..1.0),
        ));
    }
    for &(cy, cx, ay, ax, rot, rect, value) in &layers {
        let (s, c) = f64::sin_cos(rot);
        for y in 0..k {
            for x in 0..k {
                let (dy, dx) = (coord(y) - cy, coord(x) - cx);
                let (u, v) = ((c * dx + s * dy) / ax, (-s * dx + c * dy) / ay);
                let d = if rect { u.abs().max(v.abs()) } else { (u * u + v * v).sqrt() };
                let alpha = sigmoid((1.0 - d) * edge * ax.min(ay));
                let m = &mut mag[y * k + x];
                *m = *m * (1.0 - alpha) + value * alpha;
            }
        }
    }

    let coeffs: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let poly = |y: f64, x: f64| coeffs[0] * x + coeffs[1] * y + coeffs[2] * x * x + coeffs[3] * x * y + coeffs[4] * y * y + 0.2 * coeffs[5];
    let raw: Vec<f64> = (0..k * k).map(|i| poly(coord(i / k), coord(i % k))).collect();
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let span = rng.random_range(0.5..1.0) * std::f64::consts::FRAC_PI_2 / peak;

    let image = CTensor::from_fn(&[k, k], |i| {
        let z = Complex::from_polar(mag[i].clamp(0.0, 1.0), raw[i] * span);
        Complex::new(T::lit(z.re), T::lit(z.im))
    });
    Phantom { image, seed, index, shapes: layers.len() }
}

/// Share of clean, 10% and 20% noise instances in a simulated set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseMix {
    pub clean: f64,
    pub pct10: f64,
    pub pct20: f64,
}

impl Default for NoiseMix {
    fn default() -> Self {
        Self { clean: 0.7, pct10: 0.15, pct20: 0.15 }
    }
}

impl NoiseMix {
    /// Noise percentage per instance, with counts rounded and the order
    /// shuffled deterministically.
    pub fn assign(&self, count: usize, seed: u64) -> Result<Vec<f64>> {
        let total = self.clean + self.pct10 + self.pct20;
        if [self.clean, self.pct10, self.pct20].iter().any(|&p| p < 0.0) || total <= 0.0 {
            return Err(Error::contract("noise mix shares must be ≥ 0 with a positive sum"));
        }
        let n10 = (self.pct10 / total * count as f64).round() as usize;
        let n20 = ((self.pct20 / total * count as f64).round() as usize).min(count - n10.min(count));
        let mut levels: Vec<f64> = std::iter::repeat_n(10.0, n10.min(count))
            .chain(std::iter::repeat_n(20.0, n20))
            .collect();
        levels.resize(count, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..count).rev() {
            levels.swap(i, rng.random_range(0..=i));
        }
        Ok(levels)
    }
}

/// One line of `manifest.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub file: String,
    pub seed: u64,
    pub noise_pct: f64,
}

pub const MANIFEST_HEADER: &str = "file,seed,noise_pct";

pub fn write_manifest(rows: &[ManifestRow]) -> String {
    let mut s = format!("{MANIFEST_HEADER}\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.file, r.seed, r.noise_pct));
    }
    s
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(MANIFEST_HEADER) {
        return Err(Error::Format(format!("manifest must start with `{MANIFEST_HEADER}`")));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let bad = || Error::Format(format!("manifest line {}: `{line}`", n + 2));
            let mut parts = line.split(',');
            let (file, seed, pct) = (parts.next().ok_or_else(bad)?, parts.next().ok_or_else(bad)?, parts.next().ok_or_else(bad)?);
            if parts.next().is_some() {
                return Err(bad());
            }
            Ok(ManifestRow {
                file: file.trim().to_string(),
                seed: seed.trim().parse().map_err(|_| bad())?,
                noise_pct: pct.trim().parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Convenience for writing masks as `.cvt`.
pub fn mask_tensor<T: Real>(mask: &SamplingMask) -> AnyTensor<T> {
    AnyTensor::Real(mask.to_tensor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use std::collections::HashSet;

    fn rand_c(k: usize, seed: u64) -> CTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CTensor::from_fn(&[k, k], |_| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn symmetric(m: &SamplingMask) -> bool {
        let k = m.k;
        (0..k * k).all(|i| {
            let (y, x) = mirror(k, i / k, i % k);
            m.grid[i] == m.grid[y * k + x]
        })
    }

    #[test]
    fn gauss1d_column_count() {
        let m = make_mask(MaskPattern::Gauss1d, 0.3, 64, 0).unwrap();
        assert_eq!(m.popcount(), 19 * 64);
        let cols: Vec<usize> = (0..64).filter(|&x| m.grid[x]).collect();
        assert_eq!(cols.len(), 19);
        for x in 30..34 {
            assert!(cols.contains(&x));
        }
        // Whole columns only.
        for y in 0..64 {
            for x in 0..64 {
                assert_eq!(m.grid[y * 64 + x], m.grid[x]);
            }
        }
    }

    #[test]
    fn mask_determinism_and_limits() {
        let a = make_mask(MaskPattern::Gauss1d, 0.3, 64, 5).unwrap();
        assert_eq!(a, make_mask(MaskPattern::Gauss1d, 0.3, 64, 5).unwrap());
        assert_ne!(a.grid, make_mask(MaskPattern::Gauss1d, 0.3, 64, 6).unwrap().grid);
        for p in [MaskPattern::Gauss1d, MaskPattern::Radial, MaskPattern::Spiral] {
            assert!(make_mask(p, 1.0, 32, 0).unwrap().grid.iter().all(|&b| b));
            assert!(make_mask(p, 1.5, 32, 0).is_err());
            assert!(make_mask(p, 0.0, 32, 0).is_err());
        }
        assert!(make_mask(MaskPattern::Radial, 0.3, 48, 0).is_err());
    }

    #[test]
    fn radial_and_spiral_are_exact_and_symmetric() {
        for p in [MaskPattern::Radial, MaskPattern::Spiral] {
            for &k in &[16usize, 32, 64] {
                for &r in &[0.1, 0.2, 0.3] {
                    let m = make_mask(p, r, k, 0).unwrap();
                    assert_eq!(m.popcount(), (r * (k * k) as f64).round() as usize, "{p} {k} {r}");
                    assert!((m.achieved_ratio() - r).abs() <= 1.0 / (k * k) as f64);
                    assert!(symmetric(&m), "{p} {k} {r}");
                    assert!(m.grid[k / 2 * k + k / 2], "DC sampled");
                }
            }
        }
    }

    #[test]
    fn mask_tensor_round_trip() {
        let m = make_mask(MaskPattern::Spiral, 0.2, 32, 0).unwrap();
        let back = SamplingMask::from_tensor(&m.to_tensor::<f32>(), MaskPattern::Spiral, 0).unwrap();
        assert_eq!(back.grid, m.grid);
        assert_eq!(back.render().lines().count(), 32);
        assert_eq!("1D-G".parse::<MaskPattern>().unwrap(), MaskPattern::Gauss1d);
        assert!("zigzag".parse::<MaskPattern>().is_err());
    }

    #[test]
    fn acquisition_examples() {
        let x = rand_c(16, 1);
        let full = make_mask(MaskPattern::Gauss1d, 1.0, 16, 0).unwrap();
        let y = acquire(&x, &full, 0.0, 0).unwrap();
        assert!(y.sub(&fft2(&x).unwrap()).unwrap().max_abs() < 1e-12);
        assert!(zfr(&y, &full).unwrap().sub(&x).unwrap().max_abs() < 1e-5);
        let mut none = full.clone();
        none.grid.iter_mut().for_each(|b| *b = false);
        assert_eq!(acquire(&x, &none, 10.0, 0).unwrap().max_abs(), 0.0);
        assert_eq!(zfr(&CTensor::<f64>::zeros(&[16, 16]), &full).unwrap().max_abs(), 0.0);
        assert!(acquire(&x, &full, -1.0, 0).is_err());
    }

    #[test]
    fn noise_level_matches_request() {
        let x = make_phantoms::<f64>(1, 64, 3).unwrap().remove(0).image;
        let mask = make_mask(MaskPattern::Gauss1d, 0.3, 64, 0).unwrap();
        let clean = forward_op(&x, &mask).unwrap();
        let noisy = acquire(&x, &mask, 10.0, 9).unwrap();
        let m = mask.unshifted::<f64>();
        let idx: Vec<usize> = (0..4096).filter(|&i| m.data()[i] > 0.5).collect();
        let mean = idx.iter().map(|&i| clean.data()[i].norm()).sum::<f64>() / idx.len() as f64;
        let comps: Vec<f64> = idx.iter().flat_map(|&i| {
            let d = noisy.data()[i] - clean.data()[i];
            [d.re, d.im]
        }).collect();
        let std = (comps.iter().map(|v| v * v).sum::<f64>() / comps.len() as f64).sqrt();
        assert!((std / (0.1 * mean) - 1.0).abs() < 0.05, "{std} vs {}", 0.1 * mean);
        let off: f64 = (0..4096).filter(|&i| m.data()[i] < 0.5).map(|i| noisy.data()[i].norm()).sum();
        assert_eq!(off, 0.0);
    }

    #[test]
    fn adjoint_identity() {
        let mask = make_mask(MaskPattern::Radial, 0.25, 32, 0).unwrap();
        for s in 0..20 {
            let (x, y) = (rand_c(32, 2 * s), rand_c(32, 2 * s + 1));
            let lhs = forward_op(&x, &mask).unwrap().inner(&y).unwrap();
            let rhs = x.inner(&adjoint_op(&y, &mask).unwrap()).unwrap();
            assert!((lhs - rhs).norm() <= 1e-5 * x.norm_l2() * y.norm_l2());
        }
    }

    #[test]
    fn zfr_error_is_masked_out_energy() {
        let x = rand_c(32, 4);
        let mask = make_mask(MaskPattern::Gauss1d, 0.3, 32, 1).unwrap();
        let xu = zfr(&acquire(&x, &mask, 0.0, 0).unwrap(), &mask).unwrap();
        let err: f64 = xu.sub(&x).unwrap().data().iter().map(|z| z.norm_sqr()).sum();
        let m = mask.unshifted::<f64>();
        let fx = fft2(&x).unwrap();
        let lost: f64 = (0..1024).filter(|&i| m.data()[i] < 0.5).map(|i| fx.data()[i].norm_sqr()).sum();
        assert!((err - lost).abs() < 1e-5);
    }

    #[test]
    fn phantoms_are_deterministic_and_distinct() {
        let a = make_phantoms::<f64>(8, 64, 11).unwrap();
        let b = make_phantoms::<f64>(8, 64, 11).unwrap();
        assert_eq!(a, b);
        for p in &a {
            let mag = p.image.magnitude();
            assert!(mag.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            let ph = p.image.phase();
            assert!(ph.data().iter().all(|&v| v.abs() <= std::f64::consts::FRAC_PI_2 + 1e-12));
            let (lo, hi) = ph.data().iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
            assert!(hi - lo > 0.1, "phase must vary");
        }
        let mut seen = HashSet::new();
        for s in 0..100 {
            let p = make_phantoms::<f32>(1, 16, s).unwrap().remove(0);
            let bits: Vec<u32> = p.image.data().iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect();
            assert!(seen.insert(bits), "seed {s} repeats");
        }
    }

    #[test]
    fn noise_mix_and_manifest() {
        let levels = NoiseMix::default().assign(100, 0).unwrap();
        assert_eq!(levels.iter().filter(|&&v| v == 0.0).count(), 70);
        assert_eq!(levels.iter().filter(|&&v| v == 10.0).count(), 15);
        let rows = vec![ManifestRow { file: "y/0000.cvt".into(), seed: 4, noise_pct: 10.0 }];
        assert_eq!(parse_manifest(&write_manifest(&rows)).unwrap(), rows);
        assert!(parse_manifest("nope\n").is_err());
        assert!(parse_manifest("file,seed,noise_pct\na,b,c\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn acquire_is_linear(seed in 0u64..1000, a in -2.0f64..2.0) {
            let mask = make_mask(MaskPattern::Spiral, 0.3, 16, seed).unwrap();
            let (x1, x2) = (rand_c(16, seed), rand_c(16, seed + 1));
            let lhs = forward_op(&x1.scale(a).add(&x2).unwrap(), &mask).unwrap();
            let rhs = forward_op(&x1, &mask).unwrap().scale(a).add(&forward_op(&x2, &mask).unwrap()).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-10);
        }

        #[test]
        fn mask_popcount_exact(seed in 0u64..1000, ratio in 0.05f64..1.0) {
            let g = make_mask(MaskPattern::Gauss1d, ratio, 32, seed).unwrap();
            prop_assert!(g.popcount() == ((ratio * 32.0).round() as usize).max(1) * 32);
            let r = make_mask(MaskPattern::Radial, ratio, 16, seed).unwrap();
            prop_assert!(r.popcount() == (ratio * 256.0).round() as usize);
            prop_assert!(symmetric(&r));
        }
    }
}
