//! Dense U-net generator with residual-in-residual dense blocks, and the
//! patch-scoring discriminator.

mod checkpoint;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::Rng;

use crate::activations::{Activation, ActivationKind};
use crate::autodiff::Var;
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::nn::{BatchNorm, ComplexBatchNorm, ComplexConv2d, Ctx, ParamStore, RealConv2d};
use crate::tensor::Real;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    /// Down/up-sampling steps.
    pub depth: usize,
    /// Feature maps per layer.
    pub channels: usize,
    /// Dense-connection reach.
    pub reach: usize,
    pub n_rrdb: usize,
    pub dense_blocks: usize,
    pub conv_units: usize,
    pub alpha: f64,
    pub activation: ActivationKind,
    pub kernel: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            channels: 8,
            reach: 3,
            n_rrdb: 1,
            dense_blocks: 3,
            conv_units: 4,
            alpha: 0.2,
            activation: ActivationKind::PcSs,
            kernel: 3,
        }
    }
}

impl GeneratorConfig {
    /// Full-size network: depth 5, 32 maps, 4 RRDBs.
    pub fn paper_scale() -> Self {
        Self { depth: 5, channels: 32, n_rrdb: 4, ..Self::default() }
    }

    pub const KEYS: [&'static str; 9] = [
        "gen.depth",
        "gen.channels",
        "gen.reach",
        "gen.n_rrdb",
        "gen.dense_blocks",
        "gen.conv_units",
        "gen.alpha",
        "gen.activation",
        "gen.kernel",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| Err(Error::Config { key: key.into(), message: message.into() });
        if self.depth == 0 {
            return bad("gen.depth", "must be ≥ 1");
        }
        if self.channels == 0 {
            return bad("gen.channels", "must be ≥ 1");
        }
        if self.reach == 0 {
            return bad("gen.reach", "must be ≥ 1");
        }
        if self.dense_blocks == 0 || self.conv_units == 0 {
            return bad("gen.conv_units", "dense blocks need at least one block and one unit");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("gen.alpha", "must lie in [0, 1]");
        }
        if self.kernel.is_multiple_of(2) {
            return bad("gen.kernel", "must be odd");
        }
        Ok(())
    }

    pub fn write_kv(&self, kv: &mut KeyValues) {
        kv.set("gen.depth", self.depth);
        kv.set("gen.channels", self.channels);
        kv.set("gen.reach", self.reach);
        kv.set("gen.n_rrdb", self.n_rrdb);
        kv.set("gen.dense_blocks", self.dense_blocks);
        kv.set("gen.conv_units", self.conv_units);
        kv.set("gen.alpha", self.alpha);
        kv.set("gen.activation", self.activation);
        kv.set("gen.kernel", self.kernel);
    }

    pub fn read_kv(&mut self, kv: &KeyValues) -> Result<()> {
        kv.load("gen.depth", &mut self.depth)?;
        kv.load("gen.channels", &mut self.channels)?;
        kv.load("gen.reach", &mut self.reach)?;
        kv.load("gen.n_rrdb", &mut self.n_rrdb)?;
        kv.load("gen.dense_blocks", &mut self.dense_blocks)?;
        kv.load("gen.conv_units", &mut self.conv_units)?;
        kv.load("gen.alpha", &mut self.alpha)?;
        kv.load("gen.activation", &mut self.activation)?;
        kv.load("gen.kernel", &mut self.kernel)?;
        self.validate()
    }
}

/// Conv → CBN → activation.
#[derive(Clone, Debug)]
struct Stage {
    conv: ComplexConv2d,
    norm: ComplexBatchNorm,
    act: Activation,
}

impl Stage {
    #[allow(clippy::too_many_arguments)]
    fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, k: usize, stride: usize, act: ActivationKind, rng: &mut R) -> Self {
        Self {
            conv: ComplexConv2d::new(store, &format!("{name}.conv"), cin, cout, k, stride, false, rng),
            norm: ComplexBatchNorm::new(store, &format!("{name}.cbn"), cout),
            act: Activation::new(store, &format!("{name}.act"), act, cout),
        }
    }

    fn forward<T: Real>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let h = self.conv.forward(cx, x)?;
        let h = self.norm.forward(cx, h)?;
        self.act.forward(cx, h)
    }
}

/// Densely connected conv units; the last unit maps back to the block width
/// without an activation.
#[derive(Clone, Debug)]
pub struct DenseBlock {
    units: Vec<(ComplexConv2d, Option<Activation>)>,
    alpha: f64,
}

impl DenseBlock {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, ch: usize, units: usize, k: usize, alpha: f64, act: ActivationKind, rng: &mut R) -> Self {
        let units = (0..units)
            .map(|u| {
                let conv = ComplexConv2d::new(store, &format!("{name}.u{u}"), ch * (u + 1), ch, k, 1, true, rng);
                let act = (u + 1 < units).then(|| Activation::new(store, &format!("{name}.u{u}.act"), act, ch));
                (conv, act)
            })
            .collect();
        Self { units, alpha }
    }

    /// `x + α·block(x)`.
    pub fn forward<T: Real>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let mut feats = vec![x];
        let mut last = x;
        for (conv, act) in &self.units {
            let inp = if feats.len() == 1 { x } else { cx.tape.concat_channels(&feats)? };
            let mut h = conv.forward(cx, inp)?;
            if let Some(a) = act {
                h = a.forward(cx, h)?;
                feats.push(h);
            }
            last = h;
        }
        let scaled = cx.tape.scale(last, T::lit(self.alpha))?;
        cx.tape.add(x, scaled)
    }
}

#[derive(Clone, Debug)]
pub struct Rrdb {
    blocks: Vec<DenseBlock>,
    alpha: f64,
}

impl Rrdb {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, name: &str, cfg: &GeneratorConfig, rng: &mut R) -> Self {
        let blocks = (0..cfg.dense_blocks)
            .map(|b| DenseBlock::new(store, &format!("{name}.db{b}"), cfg.channels, cfg.conv_units, cfg.kernel, cfg.alpha, cfg.activation, rng))
            .collect();
        Self { blocks, alpha: cfg.alpha }
    }

    /// `x + α·((DB_n ∘ … ∘ DB_1)(x) − x)`: the group residual is scaled, so
    /// zero conv weights give the identity.
    pub fn forward<T: Real>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let mut h = x;
        for b in &self.blocks {
            h = b.forward(cx, h)?;
        }
        let residual = cx.tape.sub(h, x)?;
        let scaled = cx.tape.scale(residual, T::lit(self.alpha))?;
        cx.tape.add(x, scaled)
    }
}

#[derive(Clone, Debug)]
pub struct Generator {
    pub cfg: GeneratorConfig,
    head: Stage,
    down: Vec<Stage>,
    rrdbs: Vec<Rrdb>,
    up: Vec<Stage>,
    out: ComplexConv2d,
}

impl Generator {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, cfg: &GeneratorConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let (c, k, r, d) = (cfg.channels, cfg.kernel, cfg.reach, cfg.depth);
        let head = Stage::new(store, "g.head", 1, c, k, 1, cfg.activation, rng);
        let down = (1..=d).map(|s| Stage::new(store, &format!("g.down{s}"), c * r.min(s), c, k, 2, cfg.activation, rng)).collect();
        let rrdbs = (0..cfg.n_rrdb).map(|i| Rrdb::new(store, &format!("g.rrdb{i}"), cfg, rng)).collect();
        let up = (1..=d)
            .rev()
            .map(|s| {
                let dense = 1 + (1..r).filter(|j| s + j <= d).count();
                let skip = usize::from(s < d);
                Stage::new(store, &format!("g.up{s}"), c * (dense + skip), c, k, 1, cfg.activation, rng)
            })
            .collect();
        let out = ComplexConv2d::new(store, "g.out", 2 * c + 1, 1, k, 1, true, rng);
        Ok(Self { cfg: cfg.clone(), head, down, rrdbs, up, out })
    }

    pub fn check_size(&self, k: usize) -> Result<()> {
        let f = 1usize << self.cfg.depth;
        if !k.is_multiple_of(f) || k < f {
            return Err(Error::dim(format!("image size {k} is not divisible by 2^depth = {f}")));
        }
        Ok(())
    }

    /// Maps `x_u` `[N, 1, K, K]` to a reconstruction of the same shape.
    pub fn forward<T: Real>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let shape = cx.tape.complex(x)?.shape().to_vec();
        if shape.len() != 4 || shape[1] != 1 || shape[2] != shape[3] {
            return Err(Error::dim(format!("generator expects [N, 1, K, K], got {shape:?}")));
        }
        self.check_size(shape[2])?;
        let r = self.cfg.reach;

        let mut enc = vec![self.head.forward(cx, x)?];
        for (i, stage) in self.down.iter().enumerate() {
            let s = i + 1;
            let mut parts = vec![enc[s - 1]];
            for j in 1..r.min(s) {
                let p = cx.tape.avg_pool(enc[s - 1 - j], 1 << j)?;
                parts.push(p);
            }
            let inp = if parts.len() == 1 { parts[0] } else { cx.tape.concat_channels(&parts)? };
            enc.push(stage.forward(cx, inp)?);
        }

        let d = self.cfg.depth;
        let mut bottom = enc[d];
        for b in &self.rrdbs {
            bottom = b.forward(cx, bottom)?;
        }
        // dec[s] is the decoder map at resolution K / 2^s.
        let mut dec: Vec<Option<Var>> = vec![None; d + 1];
        dec[d] = Some(bottom);
        for (i, stage) in self.up.iter().enumerate() {
            let s = d - i;
            let mut parts = vec![dec[s].expect("decoded")];
            for j in (1..r).filter(|j| s + j <= d) {
                let u = cx.tape.upsample(dec[s + j].expect("decoded"), 1 << j)?;
                parts.push(u);
            }
            if s < d {
                parts.push(enc[s]);
            }
            let inp = if parts.len() == 1 { parts[0] } else { cx.tape.concat_channels(&parts)? };
            let up = cx.tape.upsample(inp, 2)?;
            dec[s - 1] = Some(stage.forward(cx, up)?);
        }
        let top = cx.tape.concat_channels(&[dec[0].expect("decoded"), enc[0], x])?;
        let y = self.out.forward(cx, top)?;
        cx.tape.tanh_out(y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub kernel: usize,
    pub slope: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { channels: vec![8, 16, 32, 32], strides: vec![2, 2, 2, 1], kernel: 3, slope: LEAKY_SLOPE }
    }
}

fn list(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list(key: &str, s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| Error::Config { key: key.into(), message: format!("bad list `{s}`") }))
        .collect()
}

impl DiscriminatorConfig {
    pub const KEYS: [&'static str; 4] = ["disc.channels", "disc.strides", "disc.kernel", "disc.slope"];

    /// Conv layers including the score head.
    pub fn layers(&self) -> usize {
        self.channels.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.len() != self.strides.len() || self.channels.contains(&0) {
            return Err(Error::Config { key: "disc.channels".into(), message: "need one positive width per stride".into() });
        }
        if self.strides.iter().any(|s| !matches!(s, 1 | 2)) {
            return Err(Error::Config { key: "disc.strides".into(), message: "strides must be 1 or 2".into() });
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Config { key: "disc.kernel".into(), message: "must be odd".into() });
        }
        Ok(())
    }

    pub fn write_kv(&self, kv: &mut KeyValues) {
        kv.set("disc.channels", list(&self.channels));
        kv.set("disc.strides", list(&self.strides));
        kv.set("disc.kernel", self.kernel);
        kv.set("disc.slope", self.slope);
    }

    pub fn read_kv(&mut self, kv: &KeyValues) -> Result<()> {
        if let Some(s) = kv.get("disc.channels") {
            self.channels = parse_list("disc.channels", s)?;
        }
        if let Some(s) = kv.get("disc.strides") {
            self.strides = parse_list("disc.strides", s)?;
        }
        kv.load("disc.kernel", &mut self.kernel)?;
        kv.load("disc.slope", &mut self.slope)?;
        self.validate()
    }
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    pub cfg: DiscriminatorConfig,
    body: Vec<(RealConv2d, BatchNorm)>,
    head: RealConv2d,
}

impl Discriminator {
    pub fn new<T: Real, R: Rng>(store: &mut ParamStore<T>, cfg: &DiscriminatorConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut cin = 1;
        let mut body = Vec::new();
        for (i, (&c, &s)) in cfg.channels.iter().zip(&cfg.strides).enumerate() {
            let conv = RealConv2d::new(store, &format!("d.conv{i}"), cin, c, cfg.kernel, s, false, rng);
            body.push((conv, BatchNorm::new(store, &format!("d.bn{i}"), c)));
            cin = c;
        }
        let head = RealConv2d::new(store, "d.head", cin, 1, cfg.kernel, 1, true, rng);
        Ok(Self { cfg: cfg.clone(), body, head })
    }

    /// Mean patch score over the batch for a real `[N, 1, H, W]` input.
    pub fn forward<T: Real>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let mut h = x;
        for (conv, bn) in &self.body {
            h = conv.forward(cx, h)?;
            h = bn.forward(cx, h)?;
            h = cx.tape.leaky_relu(h, T::lit(self.cfg.slope))?;
        }
        let map = self.head.forward(cx, h)?;
        cx.tape.mean(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::crelu_scalar;
    use crate::autodiff::{grad_check, GradCheckConfig, Tape};
    use crate::nn::Mode;
    use crate::tensor::{AnyTensor, CTensor, RTensor};
    use num_complex::Complex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_c(shape: &[usize], seed: u64) -> CTensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CTensor::from_fn(shape, |_| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn run_gen(g: &Generator, store: &ParamStore<f64>, x: &CTensor<f64>, mode: Mode) -> Result<CTensor<f64>> {
        let mut tape = Tape::new();
        let mut cx = Ctx::new(&mut tape, store, mode);
        let xv = cx.tape.leaf(x.clone());
        let y = g.forward(&mut cx, xv)?;
        Ok(tape.complex(y)?.clone())
    }

    #[test]
    fn generator_shapes_and_range() {
        for &depth in &[2usize, 3] {
            for &ch in &[4usize, 8] {
                for &k in &[32usize, 64] {
                    let mut store = ParamStore::<f64>::new();
                    let cfg = GeneratorConfig { depth, channels: ch, ..Default::default() };
                    let g = Generator::new(&mut store, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
                    let y = run_gen(&g, &store, &rand_c(&[2, 1, k, k], 1), Mode::Train).unwrap();
                    assert_eq!(y.shape(), &[2, 1, k, k]);
                    assert!(y.data().iter().all(|z| z.re.abs() < 1.0 && z.im.abs() < 1.0));
                }
            }
        }
    }

    #[test]
    fn generator_rejects_indivisible_size() {
        let mut store = ParamStore::<f64>::new();
        let g = Generator::new(&mut store, &GeneratorConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let err = run_gen(&g, &store, &rand_c(&[2, 1, 12, 12], 0), Mode::Train).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn parameter_count_depends_on_width() {
        let count = |ch| {
            let mut store = ParamStore::<f64>::new();
            Generator::new(&mut store, &GeneratorConfig { channels: ch, ..Default::default() }, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            store.trainable_scalars()
        };
        assert!(count(4) < count(8));
        assert!(count(8) < count(16));
    }

    #[test]
    fn zero_input_gives_finite_output() {
        let mut store = ParamStore::<f64>::new();
        let g = Generator::new(&mut store, &GeneratorConfig::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let y = run_gen(&g, &store, &CTensor::zeros(&[2, 1, 32, 32]), Mode::Train).unwrap();
        assert!(y.all_finite());
        let y = run_gen(&g, &store, &CTensor::zeros(&[1, 1, 32, 32]), Mode::Infer).unwrap();
        assert!(y.all_finite());
    }

    #[test]
    fn every_parameter_gets_a_gradient() {
        let mut store = ParamStore::<f64>::new();
        let cfg = GeneratorConfig { activation: ActivationKind::PcSs, ..Default::default() };
        let g = Generator::new(&mut store, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut tape = Tape::new();
        let mut cx = Ctx::new(&mut tape, &store, Mode::Train);
        let xv = cx.tape.leaf(rand_c(&[2, 1, 32, 32], 4));
        let y = g.forward(&mut cx, xv).unwrap();
        let (vars, _) = cx.finish();
        let m = tape.magnitude(y).unwrap();
        let loss = tape.mean(m).unwrap();
        let grads = tape.backward(loss).unwrap();
        let ids: Vec<_> = store.trainable_ids().collect();
        let live = ids
            .iter()
            .filter(|id| grads.get(vars[id.index()]).is_some_and(|t| t.max_abs_component() > 0.0))
            .count();
        assert!(live as f64 >= 0.99 * ids.len() as f64, "{live} of {}", ids.len());
    }

    fn zero_convs(store: &mut ParamStore<f64>) {
        let names: Vec<String> = store.iter().filter(|p| p.name.contains(".u")).map(|p| p.name.clone()).collect();
        for n in names {
            let id = store.find(&n).unwrap();
            if n.ends_with(".w") || n.ends_with(".b") {
                let v = store.get(id).zeros_like();
                *store.get_mut(id) = v;
            }
        }
    }

    fn run_rrdb(block: &Rrdb, store: &ParamStore<f64>, x: &CTensor<f64>) -> CTensor<f64> {
        let mut tape = Tape::new();
        let mut cx = Ctx::new(&mut tape, store, Mode::Train);
        let xv = cx.tape.leaf(x.clone());
        let y = block.forward(&mut cx, xv).unwrap();
        tape.complex(y).unwrap().clone()
    }

    #[test]
    fn rrdb_identities() {
        let cfg = GeneratorConfig { channels: 3, ..Default::default() };
        let x = rand_c(&[1, 3, 8, 8], 5);

        let mut store = ParamStore::<f64>::new();
        let b = Rrdb::new(&mut store, "r", &cfg, &mut ChaCha8Rng::seed_from_u64(6));
        zero_convs(&mut store);
        assert!(run_rrdb(&b, &store, &x).sub(&x).unwrap().max_abs() < 1e-15);

        let mut store = ParamStore::<f64>::new();
        let b = Rrdb::new(&mut store, "r", &GeneratorConfig { alpha: 0.0, ..cfg }, &mut ChaCha8Rng::seed_from_u64(6));
        assert!(run_rrdb(&b, &store, &x).sub(&x).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn rrdb_matches_unrolled_scalar_case() {
        // One channel on a 1×1 image: only the centre tap of each kernel acts.
        let cfg = GeneratorConfig { channels: 1, conv_units: 2, activation: ActivationKind::CRelu, ..Default::default() };
        let mut store = ParamStore::<f64>::new();
        let b = Rrdb::new(&mut store, "r", &cfg, &mut ChaCha8Rng::seed_from_u64(7));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();
        for n in &names {
            let id = store.find(n).unwrap();
            let shape = store.get(id).shape().to_vec();
            *store.get_mut(id) = AnyTensor::Complex(CTensor::from_fn(&shape, |_| Complex::new(rng.random::<f64>() - 0.3, rng.random::<f64>() - 0.4)));
        }
        let centre = |name: &str, o: usize, i: usize| {
            let t = store.get(store.find(name).unwrap()).as_complex().unwrap().clone();
            let (cin, k) = (t.shape()[1], t.shape()[2]);
            t.data()[((o * cin + i) * k + k / 2) * k + k / 2]
        };
        let bias = |name: &str| store.get(store.find(name).unwrap()).as_complex().unwrap().data()[0];

        let x0 = Complex::new(0.7, -0.3);
        let a = 0.2;
        let mut h = x0;
        for db in 0..3 {
            let p = format!("r.db{db}");
            let u0 = crelu_scalar(centre(&format!("{p}.u0.w"), 0, 0) * h + bias(&format!("{p}.u0.b")));
            let u1 = centre(&format!("{p}.u1.w"), 0, 0) * h + centre(&format!("{p}.u1.w"), 0, 1) * u0 + bias(&format!("{p}.u1.b"));
            h += u1 * a;
        }
        let want = x0 + (h - x0) * a;
        let got = run_rrdb(&b, &store, &CTensor::new(&[1, 1, 1, 1], vec![x0]).unwrap());
        assert!((got.data()[0] - want).norm() < 1e-5, "{:?} vs {want}", got.data()[0]);
    }

    fn run_disc(d: &Discriminator, store: &ParamStore<f64>, x: &RTensor<f64>) -> f64 {
        let mut tape = Tape::new();
        let mut cx = Ctx::new(&mut tape, store, Mode::Train);
        let xv = cx.tape.leaf(x.clone());
        let s = d.forward(&mut cx, xv).unwrap();
        tape.scalar(s).unwrap()
    }

    #[test]
    fn discriminator_is_size_agnostic_and_nonconstant() {
        let mut store = ParamStore::<f64>::new();
        let d = Discriminator::new(&mut store, &DiscriminatorConfig::default(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let x64 = rand_c(&[2, 1, 64, 64], 10).magnitude();
        let x96 = rand_c(&[2, 1, 96, 96], 11).magnitude();
        assert!(run_disc(&d, &store, &x64).is_finite());
        assert!(run_disc(&d, &store, &x96).is_finite());
        // Contrast change within the batch survives batch normalization.
        let mut mixed = x64.clone();
        let half = mixed.len() / 2;
        mixed.data_mut()[..half].iter_mut().for_each(|v| *v *= 2.0);
        assert_ne!(run_disc(&d, &store, &mixed), run_disc(&d, &store, &x64));
    }

    #[test]
    fn degenerate_discriminator_returns_its_bias() {
        let mut store = ParamStore::<f64>::new();
        let d = Discriminator::new(&mut store, &DiscriminatorConfig::default(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let names: Vec<String> = store.iter().filter(|p| p.name.ends_with(".w")).map(|p| p.name.clone()).collect();
        for n in names {
            let id = store.find(&n).unwrap();
            let z = store.get(id).zeros_like();
            *store.get_mut(id) = z;
        }
        store.set("d.head.b", AnyTensor::Real(RTensor::full(&[1], 0.042))).unwrap();
        let s = run_disc(&d, &store, &rand_c(&[2, 1, 32, 32], 12).magnitude());
        assert!((s - 0.042).abs() < 1e-12);
    }

    #[test]
    fn config_round_trip() {
        let mut kv = KeyValues::new();
        let g = GeneratorConfig { depth: 2, activation: ActivationKind::ZRelu, ..Default::default() };
        let d = DiscriminatorConfig { channels: vec![4, 4], strides: vec![2, 1], ..Default::default() };
        g.write_kv(&mut kv);
        d.write_kv(&mut kv);
        let (mut g2, mut d2) = (GeneratorConfig::default(), DiscriminatorConfig::default());
        g2.read_kv(&kv).unwrap();
        d2.read_kv(&kv).unwrap();
        assert_eq!((g2, d2), (g, d));
        kv.set("gen.alpha", 3);
        assert!(GeneratorConfig::default().read_kv(&kv).is_err());
    }

    #[test]
    fn small_generator_gradient() {
        let cfg = GeneratorConfig { depth: 2, channels: 2, reach: 2, conv_units: 2, dense_blocks: 1, ..Default::default() };
        let mut store = ParamStore::<f64>::new();
        let g = Generator::new(&mut store, &cfg, &mut ChaCha8Rng::seed_from_u64(13)).unwrap();
        let x = rand_c(&[2, 1, 8, 8], 14);
        let params: Vec<AnyTensor<f64>> = store.iter().map(|p| p.value.clone()).collect();
        let report = grad_check(&params, &GradCheckConfig { max_components: 300, ..Default::default() }, |t, vars| {
            let mut cx = Ctx::with_vars(t, &store, Mode::Train, vars.to_vec());
            let xv = cx.tape.leaf(x.clone());
            let y = g.forward(&mut cx, xv)?;
            let m = t.magnitude(y)?;
            t.mean(m)
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-3, "{report:?}");
    }
}
