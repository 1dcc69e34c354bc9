//! Adaptive optimizer with decoupled weight decay and the linear-warmup,
//! then-constant learning-rate schedule used by every training stage.

use std::collections::HashMap;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::params::{GradMap, ParamId, ParamStore};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            warmup_steps: 0,
        }
    }
}

/// Learning rate at a zero-based step index: linear warmup to `lr`, then
/// constant.
pub fn lr_at_step(cfg: &AdamWConfig, step: usize) -> f64 {
    if cfg.warmup_steps > 0 && step < cfg.warmup_steps {
        cfg.lr * step as f64 / cfg.warmup_steps as f64
    } else {
        cfg.lr
    }
}

pub struct AdamW<F: Scalar> {
    pub cfg: AdamWConfig,
    trainable: Vec<ParamId>,
    step: usize,
    m: HashMap<usize, ArrayD<F>>,
    v: HashMap<usize, ArrayD<F>>,
}

impl<F: Scalar> AdamW<F> {
    /// `trainable` pins exactly which parameters this optimizer may touch;
    /// everything else is frozen by construction.
    pub fn new(cfg: AdamWConfig, trainable: Vec<ParamId>) -> Self {
        AdamW {
            cfg,
            trainable,
            step: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn trainable(&self) -> &[ParamId] {
        &self.trainable
    }

    /// Applies one update. Missing gradients are treated as zero.
    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &GradMap<F>) {
        let lr = F::of_f64(lr_at_step(&self.cfg, self.step));
        self.step += 1;
        let t = self.step as i32;
        let b1 = F::of_f64(self.cfg.beta1);
        let b2 = F::of_f64(self.cfg.beta2);
        let eps = F::of_f64(self.cfg.eps);
        let wd = F::of_f64(self.cfg.weight_decay);
        let bc1 = F::one() - b1.powi(t);
        let bc2 = F::one() - b2.powi(t);

        for &id in &self.trainable {
            let Some(g) = grads.get(id) else { continue };
            let m = self
                .m
                .entry(id.0)
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            let v = self
                .v
                .entry(id.0)
                .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
            m.zip_mut_with(g, |mi, &gi| *mi = b1 * *mi + (F::one() - b1) * gi);
            v.zip_mut_with(g, |vi, &gi| *vi = b2 * *vi + (F::one() - b2) * gi * gi);

            let p = store.value_mut(id);
            let ps = p.as_slice_mut().unwrap();
            let ms = m.as_slice().unwrap();
            let vs = v.as_slice().unwrap();
            for i in 0..ps.len() {
                let mhat = ms[i] / bc1;
                let vhat = vs[i] / bc2;
                ps[i] = ps[i] - lr * (mhat / (vhat.sqrt() + eps) + wd * ps[i]);
            }
        }
    }

    /// Serializable optimizer state for checkpoint resume.
    pub fn export_state(&self, store: &ParamStore<F>) -> OptimState {
        let mut moments = Vec::new();
        for &id in &self.trainable {
            let m = self.m.get(&id.0);
            let v = self.v.get(&id.0);
            moments.push(MomentEntry {
                name: store.name(id).to_string(),
                m: m.map(|a| a.iter().map(|x| x.into_f64()).collect()),
                v: v.map(|a| a.iter().map(|x| x.into_f64()).collect()),
            });
        }
        OptimState {
            step: self.step,
            moments,
        }
    }

    /// Restores state captured by [`AdamW::export_state`].
    pub fn import_state(&mut self, store: &ParamStore<F>, state: &OptimState) {
        self.step = state.step;
        for entry in &state.moments {
            let Some(id) = store.id_by_name(&entry.name) else {
                continue;
            };
            let dim = store.value(id).raw_dim();
            if let Some(m) = &entry.m {
                let arr = ArrayD::from_shape_vec(dim.clone(), m.iter().map(|&x| F::of_f64(x)).collect())
                    .expect("moment shape");
                self.m.insert(id.0, arr);
            }
            if let Some(v) = &entry.v {
                let arr = ArrayD::from_shape_vec(dim, v.iter().map(|&x| F::of_f64(x)).collect())
                    .expect("moment shape");
                self.v.insert(id.0, arr);
            }
        }
    }
}

#[derive(Serialize, Deserialize, Clone)]
pub struct OptimState {
    pub step: usize,
    pub moments: Vec<MomentEntry>,
}

#[derive(Serialize, Deserialize, Clone)]
pub struct MomentEntry {
    pub name: String,
    pub m: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
}
