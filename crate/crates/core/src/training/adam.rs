use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore};
use crate::tensor::{AnyTensor, Real};

/// `ρ_t = ρ₀ / (1 + decay·t)`, with `t` counted in generator updates.
pub fn learning_rate(lr0: f64, decay: f64, step: usize) -> f64 {
    lr0 / (1.0 + decay * step as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam over the real components of every trainable tensor; a complex
/// parameter is treated as its `(re, im)` pairs.
#[derive(Clone, Debug)]
pub struct Adam {
    pub cfg: AdamConfig,
    /// First and second moments per store entry (`None` for buffers).
    moments: Vec<Option<(Vec<f64>, Vec<f64>)>>,
    pub steps: usize,
}

impl Adam {
    pub fn new<T: Real>(store: &ParamStore<T>, cfg: AdamConfig) -> Self {
        let moments = store
            .iter()
            .map(|p| p.trainable.then(|| (vec![0.0; p.value.real_len()], vec![0.0; p.value.real_len()])))
            .collect();
        Self { cfg, moments, steps: 0 }
    }

    pub fn moments(&self, id: ParamId) -> Option<(&[f64], &[f64])> {
        self.moments[id.index()].as_ref().map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    /// One update. `grad(id)` returns the tape gradient of entry `id`
    /// (Wirtinger cogradient for complex tensors), or `None` for zero.
    pub fn step<'g, T: Real>(
        &mut self,
        store: &mut ParamStore<T>,
        lr: f64,
        mut grad: impl FnMut(ParamId) -> Option<&'g AnyTensor<T>>,
    ) -> Result<()> {
        if self.moments.len() != store.len() {
            return Err(Error::contract("optimizer state does not match the parameter store"));
        }
        self.steps += 1;
        let AdamConfig { beta1: b1, beta2: b2, eps } = self.cfg;
        let t = self.steps as i32;
        let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
        let ids: Vec<ParamId> = store.trainable_ids().collect();
        for id in ids {
            let g = grad(id);
            let (m, v) = self.moments[id.index()].as_mut().expect("trainable entry has moments");
            let value = store.get_mut(id);
            if let Some(g) = g {
                if g.kind() != value.kind() || g.shape() != value.shape() {
                    return Err(Error::dim(format!("gradient {:?} for parameter {:?}", g.shape(), value.shape())));
                }
            }
            // Complex cogradients ∂f/∂z̄ carry half of (∂f/∂x, ∂f/∂y).
            let scale = if matches!(value, AnyTensor::Complex(_)) { 2.0 } else { 1.0 };
            for i in 0..m.len() {
                let gi = g.map_or(0.0, |g| scale * g.component(i).as_f64());
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let update = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                let p = value.component(i).as_f64() - update;
                value.set_component(i, T::lit(p));
            }
        }
        Ok(())
    }
}

/// Clamps every trainable component of `store` to `[−c, c]`. When `c` is
/// not representable in `T` the bound is the nearest value below it, so the
/// clamp never exceeds `c`.
pub fn clip_weights<T: Real>(store: &mut ParamStore<T>, c: f64) {
    let mut bound = T::lit(c);
    if bound.as_f64() > c {
        bound *= T::one() - T::epsilon();
    }
    let c = bound;
    let ids: Vec<ParamId> = store.trainable_ids().collect();
    for id in ids {
        let value = store.get_mut(id);
        for i in 0..value.real_len() {
            let v = value.component(i);
            value.set_component(i, v.max(-c).min(c));
        }
    }
}
