//! Conditional WGAN training with weight clipping, evaluation and
//! inference.

mod adam;

pub use adam::{clip_weights, learning_rate, Adam, AdamConfig};

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activations::ActivationKind;
use crate::autodiff::Tape;
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::losses::{self, LossWeights, SsimConfig, WaveletLossConfig};
use crate::models::{write_checkpoint, Checkpoint, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use crate::mri::{self, MaskPattern, NoiseMix, SamplingMask};
use crate::nn::{apply_updates, Ctx, Mode, ParamStore};
use crate::tensor::{write_cvt, AnyTensor, CTensor, Real, RTensor};

pub const CSV_HEADER: &str = "step,L_GAN,L_l1,L_mSSIM,L_wvt,total,d_loss";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub n_d: usize,
    pub clip: f64,
    pub adam: AdamConfig,
    pub lr: f64,
    pub decay: f64,
    pub epochs: usize,
    /// Stops early after this many generator updates (0 = no limit).
    pub max_steps: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub wavelet_levels: usize,
    pub wavelet_variance: f64,
    pub gen: GeneratorConfig,
    pub disc: DiscriminatorConfig,
    pub mask: MaskPattern,
    pub ratio: f64,
    pub mask_seed: u64,
    pub noise: NoiseMix,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 4,
            n_d: 3,
            clip: 0.05,
            adam: AdamConfig::default(),
            lr: 1e-4,
            decay: 1.39e-3,
            epochs: 10,
            max_steps: 0,
            seed: 0,
            weights: LossWeights::default(),
            wavelet_levels: 3,
            wavelet_variance: 12.5,
            gen: GeneratorConfig::default(),
            disc: DiscriminatorConfig::default(),
            mask: MaskPattern::Gauss1d,
            ratio: 0.3,
            mask_seed: 0,
            noise: NoiseMix::default(),
        }
    }
}

const TRAIN_KEYS: [&str; 23] = [
    "train.batch",
    "train.n_d",
    "train.clip",
    "train.beta1",
    "train.beta2",
    "train.adam_eps",
    "train.lr",
    "train.decay",
    "train.epochs",
    "train.max_steps",
    "train.seed",
    "loss.gan",
    "loss.l1",
    "loss.mssim",
    "loss.wavelet",
    "loss.wavelet_levels",
    "loss.wavelet_variance",
    "data.mask",
    "data.ratio",
    "data.mask_seed",
    "data.noise_clean",
    "data.noise_10",
    "data.noise_20",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| Err(Error::Config { key: key.into(), message: message.into() });
        if self.batch < 2 {
            return bad("train.batch", "batch normalization needs at least 2 samples");
        }
        if self.n_d == 0 {
            return bad("train.n_d", "must be ≥ 1");
        }
        if !(self.clip > 0.0) {
            return bad("train.clip", "must be > 0");
        }
        if !(self.lr > 0.0) || self.decay < 0.0 {
            return bad("train.lr", "learning rate must be > 0 and decay ≥ 0");
        }
        let w = self.weights;
        if [w.gan, w.l1, w.mssim, w.wavelet].iter().any(|&v| !(v >= 0.0)) {
            return bad("loss.gan", "loss weights must be ≥ 0");
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return bad("data.ratio", "must lie in (0, 1]");
        }
        self.gen.validate()?;
        self.disc.validate()
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let known: Vec<&str> = TRAIN_KEYS.iter().chain(&GeneratorConfig::KEYS).chain(&DiscriminatorConfig::KEYS).copied().collect();
        kv.reject_unknown(&known)?;
        let mut c = Self::default();
        kv.load("train.batch", &mut c.batch)?;
        kv.load("train.n_d", &mut c.n_d)?;
        kv.load("train.clip", &mut c.clip)?;
        kv.load("train.beta1", &mut c.adam.beta1)?;
        kv.load("train.beta2", &mut c.adam.beta2)?;
        kv.load("train.adam_eps", &mut c.adam.eps)?;
        kv.load("train.lr", &mut c.lr)?;
        kv.load("train.decay", &mut c.decay)?;
        kv.load("train.epochs", &mut c.epochs)?;
        kv.load("train.max_steps", &mut c.max_steps)?;
        kv.load("train.seed", &mut c.seed)?;
        kv.load("loss.gan", &mut c.weights.gan)?;
        kv.load("loss.l1", &mut c.weights.l1)?;
        kv.load("loss.mssim", &mut c.weights.mssim)?;
        kv.load("loss.wavelet", &mut c.weights.wavelet)?;
        kv.load("loss.wavelet_levels", &mut c.wavelet_levels)?;
        kv.load("loss.wavelet_variance", &mut c.wavelet_variance)?;
        kv.load("data.mask", &mut c.mask)?;
        kv.load("data.ratio", &mut c.ratio)?;
        kv.load("data.mask_seed", &mut c.mask_seed)?;
        kv.load("data.noise_clean", &mut c.noise.clean)?;
        kv.load("data.noise_10", &mut c.noise.pct10)?;
        kv.load("data.noise_20", &mut c.noise.pct20)?;
        c.gen.read_kv(kv)?;
        c.disc.read_kv(kv)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("train.batch", self.batch);
        kv.set("train.n_d", self.n_d);
        kv.set("train.clip", self.clip);
        kv.set("train.beta1", self.adam.beta1);
        kv.set("train.beta2", self.adam.beta2);
        kv.set("train.adam_eps", self.adam.eps);
        kv.set("train.lr", self.lr);
        kv.set("train.decay", self.decay);
        kv.set("train.epochs", self.epochs);
        kv.set("train.max_steps", self.max_steps);
        kv.set("train.seed", self.seed);
        kv.set("loss.gan", self.weights.gan);
        kv.set("loss.l1", self.weights.l1);
        kv.set("loss.mssim", self.weights.mssim);
        kv.set("loss.wavelet", self.weights.wavelet);
        kv.set("loss.wavelet_levels", self.wavelet_levels);
        kv.set("loss.wavelet_variance", self.wavelet_variance);
        kv.set("data.mask", self.mask);
        kv.set("data.ratio", self.ratio);
        kv.set("data.mask_seed", self.mask_seed);
        kv.set("data.noise_clean", self.noise.clean);
        kv.set("data.noise_10", self.noise.pct10);
        kv.set("data.noise_20", self.noise.pct20);
        self.gen.write_kv(&mut kv);
        self.disc.write_kv(&mut kv);
        kv
    }

    pub fn with_activation(mut self, kind: ActivationKind) -> Self {
        self.gen.activation = kind;
        self
    }
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossRow {
    pub step: usize,
    pub gan: f64,
    pub l1: f64,
    pub mssim: f64,
    pub wavelet: f64,
    pub total: f64,
    pub d_loss: f64,
}

impl LossRow {
    pub fn csv(&self) -> String {
        format!("{},{},{},{},{},{},{}", self.step, self.gan, self.l1, self.mssim, self.wavelet, self.total, self.d_loss)
    }
}

/// Clean phantoms plus the fixed mask; degraded inputs are made per draw.
#[derive(Clone, Debug)]
pub struct Dataset<T: Real> {
    pub images: Vec<CTensor<T>>,
    pub mask: SamplingMask,
    pub noise: NoiseMix,
}

/// A training batch: inputs, targets and the noise level of each sample.
#[derive(Clone, Debug)]
pub struct Batch<T: Real> {
    pub x_u: CTensor<T>,
    pub gt: CTensor<T>,
    pub noise: Vec<f64>,
}

impl<T: Real> Dataset<T> {
    pub fn new(images: Vec<CTensor<T>>, mask: SamplingMask, noise: NoiseMix) -> Result<Self> {
        let k = mask.k;
        if let Some(bad) = images.iter().find(|im| im.shape() != [k, k]) {
            return Err(Error::dim(format!("dataset image {:?} does not match mask size {k}", bad.shape())));
        }
        Ok(Self { images, mask, noise })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn size(&self) -> usize {
        self.mask.k
    }

    fn noise_level<R: Rng>(&self, rng: &mut R) -> f64 {
        let total = self.noise.clean + self.noise.pct10 + self.noise.pct20;
        let u = rng.random::<f64>() * total;
        if u < self.noise.clean {
            0.0
        } else if u < self.noise.clean + self.noise.pct10 {
            10.0
        } else {
            20.0
        }
    }

    /// Degrades `indices` with fresh noise into a `[B, 1, K, K]` batch.
    pub fn batch<R: Rng>(&self, indices: &[usize], rng: &mut R) -> Result<Batch<T>> {
        let k = self.size();
        let mut xu = Vec::with_capacity(indices.len() * k * k);
        let mut gt = Vec::with_capacity(indices.len() * k * k);
        let mut noise = Vec::with_capacity(indices.len());
        for &i in indices {
            let pct = self.noise_level(rng);
            let y = mri::acquire(&self.images[i], &self.mask, pct, rng.random())?;
            xu.extend_from_slice(mri::zfr(&y, &self.mask)?.data());
            gt.extend_from_slice(self.images[i].data());
            noise.push(pct);
        }
        let shape = [indices.len(), 1, k, k];
        Ok(Batch { x_u: CTensor::new(&shape, xu)?, gt: CTensor::new(&shape, gt)?, noise })
    }

    /// Noise-free zero-filled inputs for evaluation.
    pub fn clean_batch(&self, indices: &[usize]) -> Result<Batch<T>> {
        let k = self.size();
        let mut xu = Vec::new();
        let mut gt = Vec::new();
        for &i in indices {
            let y = mri::acquire(&self.images[i], &self.mask, 0.0, 0)?;
            xu.extend_from_slice(mri::zfr(&y, &self.mask)?.data());
            gt.extend_from_slice(self.images[i].data());
        }
        let shape = [indices.len(), 1, k, k];
        Ok(Batch { x_u: CTensor::new(&shape, xu)?, gt: CTensor::new(&shape, gt)?, noise: vec![0.0; indices.len()] })
    }
}

/// Endless shuffled index stream, reshuffled at each pass.
#[derive(Clone, Debug)]
struct Sampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(n: usize, rng: ChaCha8Rng) -> Self {
        let mut s = Self { order: (0..n).collect(), pos: n, rng };
        s.reshuffle_if_done(n);
        s
    }

    fn reshuffle_if_done(&mut self, need: usize) {
        if self.pos + need > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
    }

    fn next(&mut self, b: usize) -> Vec<usize> {
        self.reshuffle_if_done(b);
        let out = self.order[self.pos..self.pos + b].to_vec();
        self.pos += b;
        out
    }
}

/// Generator, discriminator, their optimizers and the data streams.
pub struct Trainer<T: Real> {
    pub cfg: TrainConfig,
    pub generator: Generator,
    pub gen_params: ParamStore<T>,
    pub discriminator: Discriminator,
    pub disc_params: ParamStore<T>,
    pub gen_opt: Adam,
    pub disc_opt: Adam,
    /// Completed generator updates.
    pub step: usize,
    pub dataset: Dataset<T>,
    ssim: SsimConfig,
    wavelet: WaveletLossConfig,
    g_sampler: Sampler,
    d_sampler: Sampler,
    noise_rng: ChaCha8Rng,
    /// Where to dump the offending batch when a loss turns non-finite.
    pub dump_dir: Option<PathBuf>,
}

impl<T: Real> Trainer<T> {
    pub fn new(cfg: TrainConfig, dataset: Dataset<T>) -> Result<Self> {
        cfg.validate()?;
        if dataset.len() < cfg.batch {
            return Err(Error::contract(format!("dataset of {} images is smaller than a batch of {}", dataset.len(), cfg.batch)));
        }
        let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut gen_params = ParamStore::new();
        let generator = Generator::new(&mut gen_params, &cfg.gen, &mut init)?;
        generator.check_size(dataset.size())?;
        let mut disc_params = ParamStore::new();
        let discriminator = Discriminator::new(&mut disc_params, &cfg.disc, &mut init)?;
        clip_weights(&mut disc_params, cfg.clip);
        let stream = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
            r.set_stream(s);
            r
        };
        Ok(Self {
            gen_opt: Adam::new(&gen_params, cfg.adam),
            disc_opt: Adam::new(&disc_params, cfg.adam),
            ssim: SsimConfig::default(),
            wavelet: WaveletLossConfig::new(cfg.wavelet_levels, cfg.wavelet_variance)?,
            g_sampler: Sampler::new(dataset.len(), stream(1)),
            d_sampler: Sampler::new(dataset.len(), stream(2)),
            noise_rng: stream(3),
            generator,
            gen_params,
            discriminator,
            disc_params,
            step: 0,
            dataset,
            dump_dir: None,
            cfg,
        })
    }

    pub fn steps_per_epoch(&self) -> usize {
        (self.dataset.len() / self.cfg.batch).max(1)
    }

    pub fn learning_rate(&self) -> f64 {
        learning_rate(self.cfg.lr, self.cfg.decay, self.step)
    }

    pub fn disc_max_abs(&self) -> f64 {
        self.disc_params.trainable_ids().map(|id| self.disc_params.get(id).max_abs_component().as_f64()).fold(0.0, f64::max)
    }

    fn generate(&self, x_u: &CTensor<T>, mode: Mode) -> Result<CTensor<T>> {
        let mut tape = Tape::new();
        let mut cx = Ctx::new(&mut tape, &self.gen_params, mode);
        let x = cx.tape.leaf(x_u.clone());
        let y = self.generator.forward(&mut cx, x)?;
        Ok(tape.complex(y)?.clone())
    }

    fn fail(&self, what: &str, batch: &Batch<T>) -> Error {
        let mut msg = format!("{what} at generator step {}", self.step);
        if let Some(dir) = &self.dump_dir {
            let stem = dir.join(format!("nan_step{}", self.step));
            let written = std::fs::create_dir_all(dir).is_ok()
                && write_cvt(stem.with_extension("xu.cvt"), &AnyTensor::Complex(batch.x_u.clone())).is_ok()
                && write_cvt(stem.with_extension("gt.cvt"), &AnyTensor::Complex(batch.gt.clone())).is_ok();
            if written {
                msg.push_str(&format!("; batch dumped to {}.{{xu,gt}}.cvt", stem.display()));
            }
        }
        Error::NonFinite(msg)
    }

    /// One critic update on a fresh batch; returns `d_loss`.
    pub fn disc_step(&mut self) -> Result<f64> {
        let idx = self.d_sampler.next(self.cfg.batch);
        let batch = self.dataset.batch(&idx, &mut self.noise_rng)?;
        let fake = self.generate(&batch.x_u, Mode::Train)?.magnitude();
        let real = batch.gt.magnitude();

        let mut tape = Tape::new();
        let mut cx = Ctx::new(&mut tape, &self.disc_params, Mode::Train);
        let r = cx.tape.leaf(real);
        let f = cx.tape.leaf(fake);
        let d_real = self.discriminator.forward(&mut cx, r)?;
        let d_fake = self.discriminator.forward(&mut cx, f)?;
        let (vars, updates) = cx.finish();
        let diff = tape.sub(d_real, d_fake)?;
        let loss = tape.scale(diff, -T::one())?;
        let value = tape.scalar(loss)?.as_f64();
        if !value.is_finite() {
            return Err(self.fail("non-finite discriminator loss", &batch));
        }
        let grads = tape.backward(loss)?;
        let lr = self.learning_rate();
        self.disc_opt.step(&mut self.disc_params, lr, |id| grads.get(vars[id.index()]))?;
        clip_weights(&mut self.disc_params, self.cfg.clip);
        apply_updates(&mut self.disc_params, updates);
        Ok(value)
    }

    /// One generator update with the composite loss.
    pub fn gen_step(&mut self) -> Result<LossRow> {
        let idx = self.g_sampler.next(self.cfg.batch);
        let batch = self.dataset.batch(&idx, &mut self.noise_rng)?;
        let mut tape = Tape::new();
        let mut gcx = Ctx::new(&mut tape, &self.gen_params, Mode::Train);
        let x = gcx.tape.leaf(batch.x_u.clone());
        let y = self.generator.forward(&mut gcx, x)?;
        let (gvars, gupdates) = gcx.finish();

        let d_fake = if self.cfg.weights.gan != 0.0 {
            let mag = tape.magnitude(y)?;
            let mut dcx = Ctx::new(&mut tape, &self.disc_params, Mode::Train);
            Some(self.discriminator.forward(&mut dcx, mag)?)
        } else {
            None
        };
        let parts = tape.generator_loss(y, &batch.gt, d_fake, &self.cfg.weights, self.ssim, &self.wavelet)?;
        let val = |v| tape.scalar(v).map(|s| s.as_f64());
        let row = LossRow {
            step: self.step + 1,
            gan: parts.gan.map(val).transpose()?.unwrap_or(0.0),
            l1: val(parts.l1)?,
            mssim: val(parts.mssim)?,
            wavelet: val(parts.wavelet)?,
            total: val(parts.total)?,
            d_loss: f64::NAN,
        };
        if !row.total.is_finite() {
            return Err(self.fail("non-finite generator loss", &batch));
        }
        let grads = tape.backward(parts.total)?;
        let lr = self.learning_rate();
        self.gen_opt.step(&mut self.gen_params, lr, |id| grads.get(gvars[id.index()]))?;
        apply_updates(&mut self.gen_params, gupdates);
        self.step += 1;
        Ok(row)
    }

    /// `n_D` critic updates (skipped when the adversarial weight is 0)
    /// followed by one generator update. `after_disc` sees the trainer after
    /// every critic update.
    pub fn train_step_with(&mut self, mut after_disc: impl FnMut(&Self)) -> Result<LossRow> {
        let mut d_loss = f64::NAN;
        if self.cfg.weights.gan != 0.0 {
            for _ in 0..self.cfg.n_d {
                d_loss = self.disc_step()?;
                after_disc(self);
            }
        }
        let mut row = self.gen_step()?;
        row.d_loss = d_loss;
        Ok(row)
    }

    pub fn train_step(&mut self) -> Result<LossRow> {
        self.train_step_with(|_| {})
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        let mut kv = self.cfg.to_kv();
        kv.set("state.step", self.step);
        kv.set("data.size", self.dataset.size());
        let mut ck = Checkpoint::new(kv);
        ck.push_store("gen/", &self.gen_params);
        ck.push_store("disc/", &self.disc_params);
        ck
    }

    /// Runs the configured epochs (or `max_steps`), writing a CSV row per
    /// step to `log` and a checkpoint per epoch into `out_dir`.
    pub fn run(&mut self, mut log: Option<&mut dyn Write>, out_dir: Option<&Path>) -> Result<Vec<LossRow>> {
        if let Some(w) = log.as_mut() {
            writeln!(w, "{CSV_HEADER}")?;
        }
        let per_epoch = self.steps_per_epoch();
        let mut rows = Vec::new();
        'epochs: for epoch in 0..self.cfg.epochs {
            for _ in 0..per_epoch {
                if self.cfg.max_steps > 0 && self.step >= self.cfg.max_steps {
                    break 'epochs;
                }
                let row = self.train_step()?;
                if let Some(w) = log.as_mut() {
                    writeln!(w, "{}", row.csv())?;
                }
                rows.push(row);
            }
            if let Some(dir) = out_dir {
                let ck = self.checkpoint();
                write_checkpoint(dir.join(format!("epoch{:03}.cvck", epoch + 1)), &ck)?;
                write_checkpoint(dir.join("latest.cvck"), &ck)?;
            }
        }
        if let Some(dir) = out_dir {
            write_checkpoint(dir.join("latest.cvck"), &self.checkpoint())?;
        }
        Ok(rows)
    }
}

/// Trained generator ready for inference.
#[derive(Clone, Debug)]
pub struct Reconstructor<T: Real> {
    pub generator: Generator,
    pub params: ParamStore<T>,
    pub size: Option<usize>,
}

impl<T: Real> Reconstructor<T> {
    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        let mut cfg = GeneratorConfig::default();
        cfg.read_kv(&ck.config)?;
        let mut params = ParamStore::new();
        let generator = Generator::new(&mut params, &cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
        ck.restore_store("gen/", &mut params)?;
        let size = ck.config.parsed("data.size")?;
        Ok(Self { generator, params, size })
    }

    pub fn from_trainer(t: &Trainer<T>) -> Self {
        Self { generator: t.generator.clone(), params: t.gen_params.clone(), size: Some(t.dataset.size()) }
    }

    /// Inference-mode forward of `[K, K]` or `[N, 1, K, K]` inputs.
    pub fn reconstruct(&self, x_u: &CTensor<T>) -> Result<CTensor<T>> {
        let shape = x_u.shape().to_vec();
        let input = match shape.len() {
            2 => x_u.clone().reshape(&[1, 1, shape[0], shape[1]])?,
            4 => x_u.clone(),
            _ => return Err(Error::dim(format!("expected [K, K] or [N, 1, K, K], got {shape:?}"))),
        };
        let k = input.shape()[2];
        if let Some(s) = self.size {
            if s != k {
                return Err(Error::dim(format!("model was trained on {s}×{s} images, input is {k}×{k}")));
            }
        }
        let mut tape = Tape::new();
        let mut cx = Ctx::new(&mut tape, &self.params, Mode::Infer);
        let x = cx.tape.leaf(input);
        let y = self.generator.forward(&mut cx, x)?;
        tape.complex(y)?.clone().reshape(&shape)
    }
}

/// Mean metrics over a set of images.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub psnr: f64,
    pub mssim: f64,
    pub phase_rmse: f64,
}

/// Metrics for `recon` against `gt`, both `[N, 1, K, K]`; magnitudes are
/// normalized by each ground-truth maximum.
pub fn metrics<T: Real>(recon: &CTensor<T>, gt: &CTensor<T>) -> Result<Metrics> {
    recon.check_same_shape(gt)?;
    let (n, _, k, _) = gt.nchw()?;
    let ssim = SsimConfig::default();
    let mut m = Metrics::default();
    for i in 0..n {
        let slice = |t: &CTensor<T>| CTensor::new(&[1, 1, k, k], t.data()[i * k * k..(i + 1) * k * k].to_vec());
        let (r, g) = (slice(recon)?, slice(gt)?);
        let (rm, gm) = losses::normalize_pair(&r.magnitude(), &g.magnitude())?;
        m.psnr += losses::psnr(&rm, &gm, T::one())?;
        m.mssim += losses::mssim(&rm, &gm, &ssim)?.as_f64();
        m.phase_rmse += losses::phase_rmse(&r, &g)?;
    }
    let n = n as f64;
    Ok(Metrics { psnr: m.psnr / n, mssim: m.mssim / n, phase_rmse: m.phase_rmse / n })
}

/// Side-by-side metrics of the zero-filled input and the reconstruction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub zfr: Metrics,
    pub recon: Metrics,
}

pub fn evaluate<T: Real>(model: &Reconstructor<T>, data: &Dataset<T>) -> Result<EvalReport> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let batch = data.clean_batch(&idx)?;
    let mut recon = Vec::with_capacity(batch.x_u.len());
    let k = data.size();
    for i in 0..data.len() {
        let x = CTensor::new(&[1, 1, k, k], batch.x_u.data()[i * k * k..(i + 1) * k * k].to_vec())?;
        recon.extend_from_slice(model.reconstruct(&x)?.data());
    }
    let recon = CTensor::new(batch.x_u.shape(), recon)?;
    Ok(EvalReport { zfr: metrics(&batch.x_u, &batch.gt)?, recon: metrics(&recon, &batch.gt)? })
}

/// Magnitude of a `[K, K]` complex image scaled to 8-bit grey levels.
pub fn to_grey<T: Real>(mag: &RTensor<T>) -> Vec<u8> {
    let peak = mag.max_abs().as_f64();
    mag.data().iter().map(|v| if peak > 0.0 { (v.as_f64() / peak * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 }).collect()
}
