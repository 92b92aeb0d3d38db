//! Finite-difference verification of every differentiable layer and loss.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activations::{Activation, ActivationKind};
use crate::autodiff::{grad_check, GradCheckConfig, GradCheckReport, Tape, Var};
use crate::error::Result;
use crate::losses::{LossWeights, SsimConfig, WaveletLossConfig};
use crate::models::{Generator, GeneratorConfig};
use crate::nn::{BatchNorm, ComplexBatchNorm, ComplexConv2d, Ctx, Mode, ParamStore, RealConv2d};
use crate::tensor::{AnyTensor, CTensor, RTensor};

/// Relative-error bound for single layers and losses.
pub const LAYER_TOLERANCE: f64 = 1e-4;
/// Relative-error bound for the whole generator.
pub const GENERATOR_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct SuiteCase {
    pub name: String,
    pub tolerance: f64,
    pub report: GradCheckReport,
}

impl SuiteCase {
    pub fn passed(&self) -> bool {
        self.report.checked > 0 && self.report.max_rel_err <= self.tolerance
    }
}

fn rand_c(shape: &[usize], rng: &mut ChaCha8Rng) -> CTensor<f64> {
    CTensor::from_fn(shape, |_| Complex::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0))
}

fn rand_r(shape: &[usize], rng: &mut ChaCha8Rng) -> RTensor<f64> {
    RTensor::from_fn(shape, |_| rng.random::<f64>() * 2.0 - 1.0)
}

/// Reduces a complex output to a real scalar through fixed random weights,
/// so that every output element carries a distinct gradient.
fn project_c(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(y).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.leaf(rand_c(&shape, &mut rng));
    let p = tape.mul(y, w)?;
    let m = tape.magnitude(p)?;
    let q = tape.mul(m, m)?;
    tape.sum(q)
}

fn project_r(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(y).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.leaf(rand_r(&shape, &mut rng));
    let p = tape.mul(y, w)?;
    let q = tape.mul(p, p)?;
    tape.sum(q)
}

/// Checks a layer built in `store`: its parameters and the input `x` are
/// all perturbed.
fn layer_case<F>(store: &ParamStore<f64>, x: AnyTensor<f64>, cfg: &GradCheckConfig, forward: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Ctx<'_, f64>, Var) -> Result<Var>,
{
    let mut params: Vec<AnyTensor<f64>> = store.iter().map(|p| p.value.clone()).collect();
    params.push(x);
    grad_check(&params, cfg, |tape, v| {
        let (pv, xv) = v.split_at(v.len() - 1);
        let mut cx = Ctx::with_vars(tape, store, Mode::Train, pv.to_vec());
        let y = forward(&mut cx, xv[0])?;
        match tape.value(y) {
            AnyTensor::Complex(_) => project_c(tape, y, 99),
            AnyTensor::Real(_) => project_r(tape, y, 99),
        }
    })
}

/// Runs every case in 64-bit with central differences of step `1e-5`.
pub fn run_suite(seed: u64) -> Result<Vec<SuiteCase>> {
    let cfg = GradCheckConfig { seed, ..GradCheckConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    let mut push = |name: &str, tolerance: f64, report: GradCheckReport| {
        cases.push(SuiteCase { name: name.to_string(), tolerance, report });
    };

    for stride in [1, 2] {
        let mut store = ParamStore::new();
        let conv = ComplexConv2d::new(&mut store, "c", 2, 3, 3, stride, true, &mut rng);
        let x = rand_c(&[2, 2, 6, 6], &mut rng);
        push(&format!("complex conv (stride {stride})"), LAYER_TOLERANCE, layer_case(&store, x.into(), &cfg, |cx, x| conv.forward(cx, x))?);
    }
    {
        let mut store = ParamStore::new();
        let conv = RealConv2d::new(&mut store, "r", 2, 3, 3, 2, true, &mut rng);
        let x = rand_r(&[2, 2, 6, 6], &mut rng);
        push("real conv", LAYER_TOLERANCE, layer_case(&store, x.into(), &cfg, |cx, x| conv.forward(cx, x))?);
    }
    {
        let mut store = ParamStore::new();
        let bn = ComplexBatchNorm::new(&mut store, "cbn", 2);
        for id in store.trainable_ids().collect::<Vec<_>>() {
            let v = store.get_mut(id);
            for i in 0..v.real_len() {
                v.set_component(i, rng.random::<f64>() - 0.3);
            }
        }
        let x = CTensor::from_fn(&[3, 2, 3, 3], |_| {
            let (u, v) = (rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            Complex::new(3.0 * u + 1.5, 2.0 * u + 2.0 * v - 0.7)
        });
        push("complex batch norm", LAYER_TOLERANCE, layer_case(&store, x.into(), &cfg, |cx, x| bn.forward(cx, x))?);
    }
    {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 2);
        let x = RTensor::from_fn(&[3, 2, 3, 3], |_| 4.0 * rng.random::<f64>());
        push("batch norm", LAYER_TOLERANCE, layer_case(&store, x.into(), &cfg, |cx, x| bn.forward(cx, x))?);
    }
    for kind in ActivationKind::ALL {
        let mut store = ParamStore::new();
        let act = Activation::new(&mut store, "a", kind, 2);
        for &id in act.param_ids() {
            let v = store.get_mut(id);
            for i in 0..v.real_len() {
                v.set_component(i, rng.random::<f64>() * 1.6 - 0.8);
            }
        }
        let x = rand_c(&[2, 2, 3, 3], &mut rng);
        push(&format!("activation {kind}"), LAYER_TOLERANCE, layer_case(&store, x.into(), &cfg, |cx, x| act.forward(cx, x))?);
    }
    let store = ParamStore::new();
    let x = rand_c(&[1, 2, 4, 4], &mut rng);
    push("tanh output", LAYER_TOLERANCE, layer_case(&store, x.clone().into(), &cfg, |cx, x| cx.tape.tanh_out(x))?);
    push("average pooling", LAYER_TOLERANCE, layer_case(&store, x.clone().into(), &cfg, |cx, x| cx.tape.avg_pool(x, 2))?);
    push("bilinear upsampling", LAYER_TOLERANCE, layer_case(&store, x.into(), &cfg, |cx, x| cx.tape.upsample(x, 2))?);
    let xr = rand_r(&[1, 2, 4, 4], &mut rng);
    push("leaky relu", LAYER_TOLERANCE, layer_case(&store, xr.into(), &cfg, |cx, x| cx.tape.leaky_relu(x, 0.2))?);

    let (ssim, wvt) = (SsimConfig::default(), WaveletLossConfig::new(2, 12.5)?);
    let gt = rand_c(&[2, 1, 8, 8], &mut rng);
    let gen = rand_c(&[2, 1, 8, 8], &mut rng);
    let gt_mag = gt.magnitude();
    let check = |f: &dyn Fn(&mut Tape<f64>, Var) -> Result<Var>| grad_check(&[gen.clone().into()], &cfg, |t, v| f(t, v[0]));
    push("L1 loss", LAYER_TOLERANCE, check(&|t, g| t.l1_loss(g, &gt))?);
    push("mSSIM loss", LAYER_TOLERANCE, check(&|t, g| {
        let m = t.magnitude(g)?;
        t.mssim_loss(m, &gt_mag, ssim)
    })?);
    push("wavelet loss", LAYER_TOLERANCE, check(&|t, g| {
        let m = t.magnitude(g)?;
        t.wavelet_loss(m, &gt_mag, &wvt)
    })?);
    let no_gan = LossWeights { gan: 0.0, ..LossWeights::default() };
    push("composite loss", LAYER_TOLERANCE, check(&|t, g| Ok(t.generator_loss(g, &gt, None, &no_gan, ssim, &wvt)?.total))?);

    let gcfg = GeneratorConfig::default();
    let mut store = ParamStore::new();
    let g = Generator::new(&mut store, &gcfg, &mut rng)?;
    let x = rand_c(&[2, 1, 8, 8], &mut rng);
    let params: Vec<AnyTensor<f64>> = store.iter().map(|p| p.value.clone()).collect();
    let report = grad_check(&params, &GradCheckConfig { max_components: 400, ..cfg.clone() }, |t, vars| {
        let mut cx = Ctx::with_vars(t, &store, Mode::Train, vars.to_vec());
        let xv = cx.tape.leaf(x.clone());
        let y = g.forward(&mut cx, xv)?;
        let m = t.magnitude(y)?;
        t.mean(m)
    })?;
    push("generator", GENERATOR_TOLERANCE, report);
    Ok(cases)
}

/// Fixed-width pass/fail table.
pub fn render_table(cases: &[SuiteCase]) -> String {
    let mut s = format!("{:<28} {:>12} {:>9} {:>8} {:>7}  result\n", "case", "max rel err", "tolerance", "checked", "skipped");
    for c in cases {
        s.push_str(&format!(
            "{:<28} {:>12.3e} {:>9.0e} {:>8} {:>7}  {}\n",
            c.name,
            c.report.max_rel_err,
            c.tolerance,
            c.report.checked,
            c.report.skipped,
            if c.passed() { "PASS" } else { "FAIL" }
        ));
    }
    s
}
