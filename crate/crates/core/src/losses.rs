//! Training losses and evaluation metrics.
//!
//! Images are batches `[N, 1, K, K]`. The complex ℓ1 term compares complex
//! images; mSSIM, the wavelet term and PSNR compare magnitudes after both
//! are divided by the ground-truth maximum of each image.

use num_complex::Complex;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{phase_of, AnyTensor, Array, CTensor, Real, RTensor};
use crate::wavelet;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub stride: usize,
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self { window: 7, stride: 4, eps1: 1e-4, eps2: 9e-4 }
    }
}

impl SsimConfig {
    /// Patch origins along one axis of length `size`.
    pub fn origins(&self, size: usize) -> Result<Vec<usize>> {
        if self.window == 0 || self.stride == 0 || !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return Err(Error::contract("SSIM needs a positive window, stride and slack values"));
        }
        if size < self.window {
            return Err(Error::dim(format!("SSIM window {} does not fit in {size} pixels", self.window)));
        }
        Ok((0..=(size - self.window) / self.stride).map(|i| i * self.stride).collect())
    }
}

/// `λ₁ L_GAN + λ₂ L_ℓ1 + λ₃ L_mSSIM + λ₄ L_wvt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub gan: f64,
    pub l1: f64,
    pub mssim: f64,
    pub wavelet: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { gan: 0.01, l1: 20.0, mssim: 1.0, wavelet: 100.0 }
    }
}

/// SSIM of two equally sized patches with population moments.
pub fn ssim<T: Real>(m: &[T], n: &[T], cfg: &SsimConfig) -> T {
    assert_eq!(m.len(), n.len());
    let k = T::lit(m.len() as f64);
    let mu_m = m.iter().copied().sum::<T>() / k;
    let mu_n = n.iter().copied().sum::<T>() / k;
    let (mut vm, mut vn, mut cov) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in m.iter().zip(n) {
        vm += (a - mu_m) * (a - mu_m);
        vn += (b - mu_n) * (b - mu_n);
        cov += (a - mu_m) * (b - mu_n);
    }
    let (vm, vn, cov) = (vm / k, vn / k, cov / k);
    let (e1, e2, two) = (T::lit(cfg.eps1), T::lit(cfg.eps2), T::lit(2.0));
    (two * mu_m * mu_n + e1) / (mu_m * mu_m + mu_n * mu_n + e1) * (two * cov + e2) / (vm + vn + e2)
}

fn patch<T: Real>(plane: &[T], w: usize, y0: usize, x0: usize, size: usize, out: &mut Vec<T>) {
    out.clear();
    for y in y0..y0 + size {
        out.extend_from_slice(&plane[y * w + x0..y * w + x0 + size]);
    }
}

/// Mean patch SSIM over every plane of two `[N, C, H, W]` tensors.
pub fn mssim<T: Real>(a: &RTensor<T>, b: &RTensor<T>, cfg: &SsimConfig) -> Result<T> {
    a.check_same_shape(b)?;
    let (_, _, h, w) = a.nchw()?;
    let (ys, xs) = (cfg.origins(h)?, cfg.origins(w)?);
    let (mut pa, mut pb) = (Vec::new(), Vec::new());
    let mut total = T::zero();
    let mut count = 0usize;
    for (qa, qb) in a.data().chunks_exact(h * w).zip(b.data().chunks_exact(h * w)) {
        for &y in &ys {
            for &x in &xs {
                patch(qa, w, y, x, cfg.window, &mut pa);
                patch(qb, w, y, x, cfg.window, &mut pb);
                total += ssim(&pa, &pb, cfg);
                count += 1;
            }
        }
    }
    Ok(total / T::lit(count as f64))
}

/// Divides both magnitude batches by the ground-truth maximum of each image.
pub fn normalize_pair<T: Real>(gen: &RTensor<T>, gt: &RTensor<T>) -> Result<(RTensor<T>, RTensor<T>)> {
    gen.check_same_shape(gt)?;
    let scale = gt_scale(gt)?;
    Ok((gen.mul(&scale)?, gt.mul(&scale)?))
}

/// Elementwise `1 / max(gt_n)` broadcast over each image (1 for empty images).
fn gt_scale<T: Real>(gt: &RTensor<T>) -> Result<RTensor<T>> {
    let n = gt.shape().first().copied().unwrap_or(1);
    let per = gt.len() / n.max(1);
    let mut data = Vec::with_capacity(gt.len());
    for img in gt.data().chunks_exact(per) {
        let m = img.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        let s = if m > T::zero() { T::one() / m } else { T::one() };
        data.extend(std::iter::repeat_n(s, per));
    }
    Array::new(gt.shape(), data)
}

/// PSNR in dB; `f64::INFINITY` when the images are identical.
pub fn psnr<T: Real>(gen: &RTensor<T>, gt: &RTensor<T>, peak: T) -> Result<f64> {
    gen.check_same_shape(gt)?;
    let mse = gen.data().iter().zip(gt.data()).map(|(&a, &b)| (a - b).as_f64().powi(2)).sum::<f64>() / gen.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak.as_f64().powi(2) / mse).log10())
}

/// PSNR of magnitudes normalized by the ground-truth maximum (peak 1).
pub fn psnr_normalized<T: Real>(gen: &RTensor<T>, gt: &RTensor<T>) -> Result<f64> {
    let (g, t) = normalize_pair(gen, gt)?;
    psnr(&g, &t, T::one())
}

/// RMS of wrapped phase differences over pixels with `|gt| > 0.05·max|gt|`.
pub fn phase_rmse<T: Real>(gen: &CTensor<T>, gt: &CTensor<T>) -> Result<f64> {
    gen.check_same_shape(gt)?;
    let thresh = 0.05 * gt.max_abs().as_f64();
    let (mut acc, mut count) = (0.0, 0usize);
    for (&a, &b) in gen.data().iter().zip(gt.data()) {
        if b.norm().as_f64() > thresh {
            let d = wrap_phase(phase_of(a).as_f64() - phase_of(b).as_f64());
            acc += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok((acc / count as f64).sqrt())
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_phase(d: f64) -> f64 {
    use std::f64::consts::PI;
    let w = (d + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// `(d_loss, g_loss)` from mean critic scores.
pub fn wasserstein_losses<T: Real>(d_real: T, d_fake: T) -> (T, T) {
    (-(d_real - d_fake), -d_fake)
}

/// Mean complex ℓ1 distance per pixel.
pub fn l1_loss<T: Real>(gen: &CTensor<T>, gt: &CTensor<T>) -> Result<T> {
    gen.check_same_shape(gt)?;
    Ok(gen.data().iter().zip(gt.data()).map(|(&a, &b)| (a - b).norm()).sum::<T>() / T::lit(gen.len() as f64))
}

/// `1 − mSSIM` of normalized magnitudes.
pub fn mssim_loss<T: Real>(gen_mag: &RTensor<T>, gt_mag: &RTensor<T>, cfg: &SsimConfig) -> Result<T> {
    let (g, t) = normalize_pair(gen_mag, gt_mag)?;
    Ok(T::one() - mssim(&g, &t, cfg)?)
}

/// Precomputed per-leaf weights of the wavelet loss.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletLossConfig {
    pub levels: usize,
    /// Weight of every leaf subband in depth-first order.
    pub weights: Vec<f64>,
}

impl WaveletLossConfig {
    pub fn new(levels: usize, variance: f64) -> Result<Self> {
        Ok(Self { levels, weights: wavelet::subband_weights(levels, variance)? })
    }
}

impl Default for WaveletLossConfig {
    fn default() -> Self {
        Self::new(wavelet::DEFAULT_LEVELS, wavelet::DEFAULT_VARIANCE).expect("default wavelet weights")
    }
}

/// `1/(P_w K_w²) Σ_p γ_p Σ |C_gen − C_gt|` on normalized magnitudes, averaged
/// over the batch.
pub fn wavelet_loss<T: Real>(gen_mag: &RTensor<T>, gt_mag: &RTensor<T>, cfg: &WaveletLossConfig) -> Result<T> {
    let (g, t) = normalize_pair(gen_mag, gt_mag)?;
    let (n, c, k, _) = g.nchw()?;
    let p_w = cfg.weights.len();
    let mut total = 0.0;
    for (a, b) in g.data().chunks_exact(k * k).zip(t.data().chunks_exact(k * k)) {
        let wa = wavelet::wpt(&RTensor::new(&[k, k], a.to_vec())?, cfg.levels)?;
        let wb = wavelet::wpt(&RTensor::new(&[k, k], b.to_vec())?, cfg.levels)?;
        for (p, gamma) in cfg.weights.iter().enumerate() {
            let d: f64 = wa.subband(p).iter().zip(wb.subband(p)).map(|(&x, &y)| (x - y).abs().as_f64()).sum();
            total += gamma * d / (p_w * wa.k_w * wa.k_w) as f64;
        }
    }
    Ok(T::lit(total / (n * c) as f64))
}

/// Loss components of one generator evaluation, as tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorLoss {
    pub total: Var,
    pub gan: Option<Var>,
    pub l1: Var,
    pub mssim: Var,
    pub wavelet: Var,
}

impl<T: Real> Tape<T> {
    /// Mean patch SSIM of two real `[N, C, H, W]` nodes.
    pub fn mssim(&mut self, a: Var, b: Var, cfg: SsimConfig) -> Result<Var> {
        let (av, bv) = (self.real(a)?, self.real(b)?);
        let value = mssim(av, bv, &cfg)?;
        Ok(self.push(
            RTensor::scalar(value),
            vec![a, b],
            Box::new(move |g, inp, _| {
                let g = g.as_real()?.item()?;
                let (x, y) = (inp[0].as_real()?, inp[1].as_real()?);
                let (da, db) = mssim_backward(x, y, &cfg)?;
                Ok(vec![Some(AnyTensor::Real(da.scale(g))), Some(AnyTensor::Real(db.scale(g)))])
            }),
        ))
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&mut self, a: Var, c: &RTensor<T>) -> Result<Var> {
        let out = match self.value(a) {
            AnyTensor::Real(x) => AnyTensor::Real(x.mul(c)?),
            AnyTensor::Complex(x) => {
                x.check_same_shape(c)?;
                AnyTensor::Complex(x.zip_map(&c.to_complex(), |z, s| z.scale(s.re))?)
            }
        };
        let c = c.clone();
        Ok(self.push(
            out,
            vec![a],
            Box::new(move |g, _, _| {
                Ok(vec![Some(match g {
                    AnyTensor::Real(g) => AnyTensor::Real(g.mul(&c)?),
                    AnyTensor::Complex(g) => AnyTensor::Complex(g.zip_map(&c.to_complex(), |z, s| z.scale(s.re))?),
                })])
            }),
        ))
    }

    /// Mean complex ℓ1 distance between `gen` and a constant target.
    pub fn l1_loss(&mut self, gen: Var, gt: &CTensor<T>) -> Result<Var> {
        let neg = self.leaf(gt.mul_scalar(Complex::new(-T::one(), T::zero())));
        let d = self.add(gen, neg)?;
        let m = self.magnitude(d)?;
        self.mean(m)
    }

    /// `1 − mSSIM` between normalized `|gen|` and a constant magnitude target.
    pub fn mssim_loss(&mut self, gen_mag: Var, gt_mag: &RTensor<T>, cfg: SsimConfig) -> Result<Var> {
        let scale = gt_scale(gt_mag)?;
        let g = self.mul_const(gen_mag, &scale)?;
        let t = self.leaf(gt_mag.mul(&scale)?);
        let s = self.mssim(g, t, cfg)?;
        let neg = self.scale(s, -T::one())?;
        self.add_scalar(neg, T::one())
    }

    pub fn wavelet_loss(&mut self, gen_mag: Var, gt_mag: &RTensor<T>, cfg: &WaveletLossConfig) -> Result<Var> {
        let scale = gt_scale(gt_mag)?;
        let (n, c, k, _) = gt_mag.nchw()?;
        let p_w = cfg.weights.len();
        let k_w = k >> cfg.levels;
        let g = self.mul_const(gen_mag, &scale)?;
        let cg = self.wpt(g, cfg.levels)?;
        let t = self.leaf(gt_mag.mul(&scale)?);
        let ct = self.wpt(t, cfg.levels)?;
        let d = self.sub(cg, ct)?;
        let a = self.abs(d)?;
        let norm = 1.0 / ((p_w * k_w * k_w * n * c) as f64);
        let weights = RTensor::from_fn(&[n, c * p_w, k_w, k_w], |i| T::lit(cfg.weights[(i / (k_w * k_w)) % p_w] * norm));
        let w = self.mul_const(a, &weights)?;
        self.sum(w)
    }

    /// Composite generator objective. `d_fake` is the mean critic score of
    /// `|gen|`; it is required whenever `weights.gan ≠ 0`.
    pub fn generator_loss(
        &mut self,
        gen: Var,
        gt: &CTensor<T>,
        d_fake: Option<Var>,
        weights: &LossWeights,
        ssim_cfg: SsimConfig,
        wvt_cfg: &WaveletLossConfig,
    ) -> Result<GeneratorLoss> {
        let gt_mag = gt.magnitude();
        let l1 = self.l1_loss(gen, gt)?;
        let mag = self.magnitude(gen)?;
        let ms = self.mssim_loss(mag, &gt_mag, ssim_cfg)?;
        let wv = self.wavelet_loss(mag, &gt_mag, wvt_cfg)?;
        let gan = match d_fake {
            Some(d) => Some(self.scale(d, -T::one())?),
            None if weights.gan != 0.0 => {
                return Err(Error::contract("adversarial weight is non-zero but no critic score was given"))
            }
            None => None,
        };
        let mut total = self.scale(l1, T::lit(weights.l1))?;
        for (v, w) in [(ms, weights.mssim), (wv, weights.wavelet)] {
            let s = self.scale(v, T::lit(w))?;
            total = self.add(total, s)?;
        }
        if let Some(g) = gan {
            let s = self.scale(g, T::lit(weights.gan))?;
            total = self.add(total, s)?;
        }
        Ok(GeneratorLoss { total, gan, l1, mssim: ms, wavelet: wv })
    }
}

/// Gradients of the mean patch SSIM with respect to both inputs.
fn mssim_backward<T: Real>(a: &RTensor<T>, b: &RTensor<T>, cfg: &SsimConfig) -> Result<(RTensor<T>, RTensor<T>)> {
    let (_, _, h, w) = a.nchw()?;
    let (ys, xs) = (cfg.origins(h)?, cfg.origins(w)?);
    let planes = a.len() / (h * w);
    let count = T::lit((planes * ys.len() * xs.len()) as f64);
    let mut da = vec![T::zero(); a.len()];
    let mut db = vec![T::zero(); b.len()];
    let (e1, e2, two) = (T::lit(cfg.eps1), T::lit(cfg.eps2), T::lit(2.0));
    let win = cfg.window;
    let k = T::lit((win * win) as f64);
    for pl in 0..planes {
        let off = pl * h * w;
        let (qa, qb) = (&a.data()[off..off + h * w], &b.data()[off..off + h * w]);
        for &y0 in &ys {
            for &x0 in &xs {
                let idx = |i: usize| off + (y0 + i / win) * w + x0 + i % win;
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
                for i in 0..win * win {
                    let (p, q) = (qa[idx(i) - off], qb[idx(i) - off]);
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
                let (mu_a, mu_b) = (sa / k, sb / k);
                let va = saa / k - mu_a * mu_a;
                let vb = sbb / k - mu_b * mu_b;
                let cov = sab / k - mu_a * mu_b;
                let d1 = mu_a * mu_a + mu_b * mu_b + e1;
                let d2 = va + vb + e2;
                let lum = (two * mu_a * mu_b + e1) / d1;
                let cs = (two * cov + e2) / d2;
                // ∂lum/∂μ and the contrast-structure partials, per patch.
                let dl_da = two * (mu_b - lum * mu_a) / d1;
                let dl_db = two * (mu_a - lum * mu_b) / d1;
                for i in 0..win * win {
                    let j = idx(i);
                    let (p, q) = (a.data()[j], b.data()[j]);
                    let gpa = cs * dl_da / k + lum * (two * (q - mu_b) - two * cs * (p - mu_a)) / (d2 * k);
                    let gpb = cs * dl_db / k + lum * (two * (p - mu_a) - two * cs * (q - mu_b)) / (d2 * k);
                    da[j] += gpa / count;
                    db[j] += gpb / count;
                }
            }
        }
    }
    Ok((Array::new(a.shape(), da)?, Array::new(b.shape(), db)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, GradCheckConfig};
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_r(shape: &[usize], seed: u64) -> RTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RTensor::from_fn(shape, |_| rng.random::<f64>())
    }

    fn rand_c(shape: &[usize], seed: u64) -> CTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CTensor::from_fn(shape, |_| Complex::new(rng.random::<f64>() - 0.3, rng.random::<f64>() - 0.6))
    }

    /// SSIM written directly from the definition with two-pass moments.
    fn ssim_oracle(m: &[f64], n: &[f64]) -> f64 {
        let k = m.len() as f64;
        let mm = m.iter().sum::<f64>() / k;
        let mn = n.iter().sum::<f64>() / k;
        let vm = m.iter().map(|a| (a - mm).powi(2)).sum::<f64>() / k;
        let vn = n.iter().map(|b| (b - mn).powi(2)).sum::<f64>() / k;
        let c = m.iter().zip(n).map(|(a, b)| (a - mm) * (b - mn)).sum::<f64>() / k;
        ((2.0 * mm * mn + 1e-4) / (mm * mm + mn * mn + 1e-4)) * ((2.0 * c + 9e-4) / (vm + vn + 9e-4))
    }

    #[test]
    fn ssim_examples() {
        let cfg = SsimConfig::default();
        let a = rand_r(&[49], 1);
        assert!((ssim(a.data(), a.data(), &cfg) - 1.0).abs() < 1e-12);
        let (ca, cb) = (vec![0.3f64; 49], vec![0.7f64; 49]);
        let want = (2.0 * 0.3 * 0.7 + 1e-4) / (0.09 + 0.49 + 1e-4);
        assert!((ssim(&ca, &cb, &cfg) - want).abs() < 1e-12);
        let b = rand_r(&[49], 2);
        assert!((ssim(a.data(), b.data(), &cfg) - ssim_oracle(a.data(), b.data())).abs() < 1e-7);
    }

    #[test]
    fn mssim_matches_patch_loop() {
        let cfg = SsimConfig::default();
        let a = rand_r(&[1, 1, 32, 32], 3);
        let b = rand_r(&[1, 1, 32, 32], 4);
        let mut sum = 0.0;
        let mut count = 0;
        for y in (0..=25).step_by(4) {
            for x in (0..=25).step_by(4) {
                let pa: Vec<f64> = (0..49).map(|i| a.data()[(y + i / 7) * 32 + x + i % 7]).collect();
                let pb: Vec<f64> = (0..49).map(|i| b.data()[(y + i / 7) * 32 + x + i % 7]).collect();
                sum += ssim_oracle(&pa, &pb);
                count += 1;
            }
        }
        assert_eq!(count, 49);
        assert!((mssim(&a, &b, &cfg).unwrap() - sum / count as f64).abs() < 1e-6);
        assert_eq!(cfg.origins(64).unwrap().len(), 15);
        assert!(mssim_loss(&a, &a, &cfg).unwrap().abs() < 1e-12);
    }

    #[test]
    fn l1_examples() {
        let gt = CTensor::new(&[1, 1, 1, 1], vec![Complex::new(1.0f64, 1.0)]).unwrap();
        let gen = CTensor::new(&[1, 1, 1, 1], vec![Complex::new(4.0, 5.0)]).unwrap();
        assert!((l1_loss(&gen, &gt).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(l1_loss(&gt, &gt).unwrap(), 0.0);
        let (a, b) = (rand_c(&[2, 1, 4, 4], 5), rand_c(&[2, 1, 4, 4], 6));
        let mut acc = 0.0;
        for i in 0..a.len() {
            let d = a.data()[i] - b.data()[i];
            acc += (d.re * d.re + d.im * d.im).sqrt();
        }
        assert!((l1_loss(&a, &b).unwrap() - acc / 32.0).abs() < 1e-6);
        assert!(l1_loss(&a, &CTensor::zeros(&[2, 1, 4, 5])).is_err());
    }

    #[test]
    fn wavelet_loss_examples() {
        let cfg = WaveletLossConfig::new(1, DEFAULT_VARIANCE_FOR_TEST).unwrap();
        let gt = rand_r(&[1, 1, 8, 8], 7);
        assert_eq!(wavelet_loss(&gt, &gt, &cfg).unwrap(), 0.0);
        // Constant difference c on an image normalized to unit maximum: only
        // the first subband differs, by 2c per coefficient.
        let mut gt1 = RTensor::zeros(&[1, 1, 8, 8]);
        gt1.data_mut()[0] = 1.0;
        let c = 0.3;
        let gen1 = gt1.add_scalar(c);
        let got = wavelet_loss(&gen1, &gt1, &cfg).unwrap();
        assert!((got - cfg.weights[0] * c / 2.0).abs() < 1e-12, "{got}");
    }

    const DEFAULT_VARIANCE_FOR_TEST: f64 = 12.5;

    #[test]
    fn wavelet_loss_matches_transcription() {
        let cfg = WaveletLossConfig::default();
        let (a, b) = (rand_r(&[2, 1, 16, 16], 8), rand_r(&[2, 1, 16, 16], 9));
        // Direct transcription with the filter-bank written out level by level.
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut want = 0.0;
        for img in 0..2 {
            let slice = |t: &RTensor<f64>| -> Vec<f64> {
                let d = &t.data()[img * 256..(img + 1) * 256];
                let m = b.data()[img * 256..(img + 1) * 256].iter().cloned().fold(0.0, f64::max);
                d.iter().map(|v| v / m).collect()
            };
            let mut nodes_a = vec![slice(&a)];
            let mut nodes_b = vec![slice(&b)];
            let mut s = 16;
            for _ in 0..3 {
                let lvl = |nodes: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                    let mut out = Vec::new();
                    for n in nodes {
                        let half = s / 2;
                        for (fy, fx) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                            let mut c = vec![0.0; half * half];
                            for y in 0..half {
                                for x in 0..half {
                                    let p = |yy: usize, xx: usize| n[yy * s + xx];
                                    c[y * half + x] = r * r
                                        * (p(2 * y, 2 * x) + fx * p(2 * y, 2 * x + 1) + fy * p(2 * y + 1, 2 * x) + fy * fx * p(2 * y + 1, 2 * x + 1));
                                }
                            }
                            out.push(c);
                        }
                    }
                    out
                };
                nodes_a = lvl(&nodes_a);
                nodes_b = lvl(&nodes_b);
                s /= 2;
            }
            for p in 0..64 {
                let d: f64 = nodes_a[p].iter().zip(&nodes_b[p]).map(|(x, y)| (x - y).abs()).sum();
                want += cfg.weights[p] * d / (64.0 * 4.0);
            }
        }
        want /= 2.0;
        assert!((wavelet_loss(&a, &b, &cfg).unwrap() - want).abs() < 1e-6);
    }

    #[test]
    fn metric_examples() {
        let a = rand_r(&[1, 1, 4, 4], 10);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b = a.add_scalar(0.1);
        assert!((psnr(&b, &a, 1.0).unwrap() - 20.0).abs() < 1e-9);
        // Hand-computed: squared errors 0.01, 0.04, 0, 0.09 → MSE 0.035.
        let gt = RTensor::new(&[1, 1, 2, 2], vec![0.5, 1.0, 0.2, 0.0]).unwrap();
        let gen = RTensor::new(&[1, 1, 2, 2], vec![0.6, 0.8, 0.2, 0.3]).unwrap();
        assert!((psnr(&gen, &gt, 1.0).unwrap() - 14.559319556497243).abs() < 1e-6);
        let (d_loss, g_loss) = wasserstein_losses(1.0, 0.0);
        assert_eq!((d_loss, g_loss), (-1.0, -0.0));
        assert_eq!(wasserstein_losses(0.4, 0.4).0, 0.0);
        assert!(wasserstein_losses(0.0, 0.5).1 < wasserstein_losses(0.0, 0.2).1);
    }

    #[test]
    fn phase_rmse_example() {
        use std::f64::consts::PI;
        let gt = CTensor::new(
            &[4],
            vec![Complex::from_polar(1.0, 0.0), Complex::from_polar(1.0, 3.0), Complex::from_polar(0.5, -1.0), Complex::from_polar(0.01, 0.0)],
        )
        .unwrap();
        let gen = CTensor::new(
            &[4],
            vec![Complex::from_polar(1.0, 0.1), Complex::from_polar(1.0, -3.0), Complex::from_polar(0.5, -1.0), Complex::from_polar(1.0, 2.0)],
        )
        .unwrap();
        // Last pixel is below 5% of the maximum; 3 → −3 wraps to 2π − 6.
        let want = ((0.01 + (2.0 * PI - 6.0).powi(2) + 0.0) / 3.0f64).sqrt();
        assert!((phase_rmse(&gen, &gt).unwrap() - want).abs() < 1e-6);
        assert!((wrap_phase(PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
    }

    #[test]
    fn loss_gradients() {
        let cfg = SsimConfig::default();
        let wcfg = WaveletLossConfig::new(2, 12.5).unwrap();
        let gt = rand_c(&[2, 1, 8, 8], 11);
        let gen = rand_c(&[2, 1, 8, 8], 12);
        let gcfg = GradCheckConfig::default();
        let gt_mag = gt.magnitude();
        let cases: Vec<(&str, Box<dyn Fn(&mut Tape<f64>, Var) -> Result<Var>>)> = vec![
            ("l1", Box::new(|t, g| t.l1_loss(g, &gt))),
            ("mssim", Box::new(|t, g| {
                let m = t.magnitude(g)?;
                t.mssim_loss(m, &gt_mag, cfg)
            })),
            ("wavelet", Box::new(|t, g| {
                let m = t.magnitude(g)?;
                t.wavelet_loss(m, &gt_mag, &wcfg)
            })),
            ("composite", Box::new(|t, g| {
                let w = LossWeights { gan: 0.0, ..LossWeights::default() };
                Ok(t.generator_loss(g, &gt, None, &w, cfg, &wcfg)?.total)
            })),
        ];
        for (name, f) in cases {
            let report = grad_check(&[gen.clone().into()], &gcfg, |t, v| f(t, v[0])).unwrap();
            assert!(report.max_rel_err < 1e-5, "{name}: {report:?}");
        }
    }

    #[test]
    fn fused_total_matches_components() {
        let gt = rand_c(&[2, 1, 16, 16], 13);
        let gen = rand_c(&[2, 1, 16, 16], 14);
        let (cfg, wcfg, w) = (SsimConfig::default(), WaveletLossConfig::default(), LossWeights::default());
        let mut tape = Tape::<f64>::new();
        let g = tape.leaf(gen.clone());
        let d = tape.leaf(RTensor::scalar(0.37));
        let parts = tape.generator_loss(g, &gt, Some(d), &w, cfg, &wcfg).unwrap();
        let (gm, tm) = (gen.magnitude(), gt.magnitude());
        let want = w.gan * (-0.37)
            + w.l1 * l1_loss(&gen, &gt).unwrap()
            + w.mssim * mssim_loss(&gm, &tm, &cfg).unwrap()
            + w.wavelet * wavelet_loss(&gm, &tm, &wcfg).unwrap();
        assert!((tape.scalar(parts.total).unwrap() - want).abs() < 1e-6);
        let mut tape = Tape::<f64>::new();
        let g = tape.leaf(gen);
        assert!(tape.generator_loss(g, &gt, None, &w, cfg, &wcfg).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn losses_are_nonnegative_and_bounded(seed in 0u64..10_000) {
            let gt = rand_c(&[1, 1, 16, 16], seed);
            let gen = rand_c(&[1, 1, 16, 16], seed + 7);
            let (gm, tm) = (gen.magnitude(), gt.magnitude());
            prop_assert!(l1_loss(&gen, &gt).unwrap() >= 0.0);
            let m = mssim_loss(&gm, &tm, &SsimConfig::default()).unwrap();
            prop_assert!((0.0..=2.0).contains(&m));
            prop_assert!(wavelet_loss(&gm, &tm, &WaveletLossConfig::default()).unwrap() >= 0.0);
            prop_assert!(mssim_loss(&tm, &tm, &SsimConfig::default()).unwrap().abs() < 1e-12);
            prop_assert!(wavelet_loss(&tm, &tm, &WaveletLossConfig::default()).unwrap() == 0.0);
        }
    }
}
