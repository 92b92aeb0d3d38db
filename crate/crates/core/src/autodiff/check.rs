//! Central finite-difference verification of [`Tape::backward`].

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::AnyTensor;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub h: f64,
    pub seed: u64,
    /// Above this many real components a random subsample is checked.
    pub max_components: usize,
    /// Denominator floor of the relative error.
    pub floor: f64,
    /// Components within this distance of a branch boundary are skipped.
    pub kink_margin: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { h: 1e-5, seed: 0, max_components: 1000, floor: 1e-6, kink_margin: 1e-3 }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Components whose ±h probe crossed a non-differentiable boundary.
    pub skipped: usize,
    /// `(parameter index, real component)` of the worst mismatch.
    pub worst: Option<(usize, usize)>,
}

fn evaluate<F>(params: &[AnyTensor<f64>], f: &F) -> Result<(f64, u64)>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::with_branch_tracking();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    Ok((tape.scalar(loss)?, tape.signature()))
}

/// Compares the Wirtinger gradient of the real scalar built by `f` against
/// central differences on every real and imaginary component of `params`.
/// Components whose branch signature changes within `kink_margin` sit next
/// to a kink and are replaced by fresh samples.
pub fn grad_check<F>(params: &[AnyTensor<f64>], cfg: &GradCheckConfig, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::with_branch_tracking();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let base_signature = tape.signature();
    let grads = tape.backward(loss)?;

    let mut all: Vec<(usize, usize)> =
        params.iter().enumerate().flat_map(|(p, t)| (0..t.real_len()).map(move |i| (p, i))).collect();
    let sampled = all.len() > cfg.max_components;
    if sampled {
        all.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    }

    let mut report = GradCheckReport { max_rel_err: 0.0, checked: 0, skipped: 0, worst: None };
    let mut work = params.to_vec();
    for (p, i) in all {
        if sampled && report.checked >= cfg.max_components {
            break;
        }
        let analytic = match (grads.get(vars[p]), &params[p]) {
            (None, _) => 0.0,
            (Some(AnyTensor::Real(g)), AnyTensor::Real(_)) => g.data()[i],
            (Some(AnyTensor::Complex(g)), AnyTensor::Complex(_)) => {
                let z = g.data()[i / 2];
                // ∂f/∂w_R = 2 Re(∂f/∂w̄), ∂f/∂w_I = 2 Im(∂f/∂w̄)
                2.0 * if i % 2 == 0 { z.re } else { z.im }
            }
            _ => return Err(Error::Internal("gradient kind differs from parameter kind".into())),
        };
        let x0 = params[p].component(i);
        work[p].set_component(i, x0 + cfg.h);
        let (fp, sp) = evaluate(&work, &f)?;
        work[p].set_component(i, x0 - cfg.h);
        let (fm, sm) = evaluate(&work, &f)?;
        let mut near_kink = sp != base_signature || sm != base_signature;
        if !near_kink && cfg.kink_margin > cfg.h {
            for d in [cfg.kink_margin, -cfg.kink_margin] {
                work[p].set_component(i, x0 + d);
                near_kink |= evaluate(&work, &f)?.1 != base_signature;
            }
        }
        work[p].set_component(i, x0);
        if near_kink {
            report.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * cfg.h);
        let denom = analytic.abs().max(numeric.abs()).max(cfg.floor);
        let rel = (analytic - numeric).abs() / denom;
        report.checked += 1;
        if rel > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(rel);
            if rel >= report.max_rel_err {
                report.worst = Some((p, i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{CTensor, RTensor};
    use num_complex::Complex;

    #[test]
    fn smooth_mixed_function_passes() {
        let w = AnyTensor::Complex(CTensor::new(&[3], vec![Complex::new(0.4, -1.2), Complex::new(2.0, 0.3), Complex::new(-0.7, 0.9)]).unwrap());
        let s = AnyTensor::Real(RTensor::new(&[3], vec![0.5, -1.5, 2.5]).unwrap());
        let report = grad_check(&[w, s], &GradCheckConfig::default(), |tape, v| {
            let m = tape.magnitude(v[0])?;
            let p = tape.mul(m, v[1])?;
            let q = tape.mul(p, p)?;
            let r = tape.re(v[0])?;
            let t = tape.mul(q, r)?;
            tape.sum(t)
        })
        .unwrap();
        assert_eq!(report.checked, 9);
        assert!(report.max_rel_err < 1e-7, "{report:?}");
    }

    #[test]
    fn detects_a_wrong_rule() {
        // y = x² with a backward rule that forgets the factor 2.
        let x = AnyTensor::Real(RTensor::new(&[1], vec![2.0]).unwrap());
        let report = grad_check(&[x], &GradCheckConfig::default(), |tape, v| {
            let sq = tape.real(v[0])?.map(|a| a * a);
            let y = tape.push(
                sq,
                vec![v[0]],
                Box::new(|g, inp, _| Ok(vec![Some(AnyTensor::Real(g.as_real()?.mul(inp[0].as_real()?)?))])),
            );
            tape.sum(y)
        })
        .unwrap();
        assert!((report.max_rel_err - 0.5).abs() < 1e-6, "{report:?}");
    }

    #[test]
    fn kink_crossing_probes_are_skipped() {
        // |w| at w = 0 is non-differentiable; the probe changes the branch bit.
        let w = AnyTensor::Complex(CTensor::new(&[2], vec![Complex::new(0.0, 0.0), Complex::new(1.0, 1.0)]).unwrap());
        let report = grad_check(&[w], &GradCheckConfig::default(), |tape, v| {
            let m = tape.magnitude(v[0])?;
            tape.sum(m)
        })
        .unwrap();
        assert_eq!(report.skipped, 2);
        assert_eq!(report.checked, 2);
        assert!(report.max_rel_err < 1e-8);
    }
}
