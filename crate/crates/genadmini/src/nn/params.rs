//! Named, grouped parameter storage.
//!
//! Parameters live outside the tape in a [`ParamStore`]; each forward pass
//! injects them as graph leaves through a [`Ctx`]. Groups implement the
//! two-stage training discipline: a context created with a set of trainable
//! groups inserts all other parameters as constants, so gradients for frozen
//! partitions are structurally zero rather than merely discarded.

use std::collections::HashMap;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::graph::{Graph, Var};
use crate::rng::SeedRng;
use crate::scalar::Scalar;

/// Disjoint parameter partitions used by the training stages.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum ParamGroup {
    /// Stage-one spatial denoiser parameters (includes the text pathway).
    Theta,
    /// Temporal reasoning block parameters introduced in stage two.
    Phi,
    /// Trajectory-condition projection for action fine-tuning.
    Action,
    /// Autoencoder parameters.
    Codec,
    /// Planner head.
    Planner,
    /// Inverse dynamics model.
    Idm,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct ParamId(pub(crate) usize);

pub struct ParamEntry<F: Scalar> {
    pub name: String,
    pub group: ParamGroup,
    pub value: ArrayD<F>,
}

/// All parameters of one model, in creation order.
pub struct ParamStore<F: Scalar> {
    entries: Vec<ParamEntry<F>>,
    by_name: HashMap<String, usize>,
}

impl<F: Scalar> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, group: ParamGroup, value: ArrayD<F>) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        self.by_name.insert(name.clone(), self.entries.len());
        self.entries.push(ParamEntry { name, group, value });
        ParamId(self.entries.len() - 1)
    }

    pub fn value(&self, id: ParamId) -> &ArrayD<F> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut ArrayD<F> {
        &mut self.entries[id.0].value
    }

    pub fn group(&self, id: ParamId) -> ParamGroup {
        self.entries[id.0].group
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn ids_in_group(&self, group: ParamGroup) -> Vec<ParamId> {
        self.ids().filter(|&id| self.group(id) == group).collect()
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    /// Number of scalar parameters in a group.
    pub fn scalar_count(&self, group: ParamGroup) -> usize {
        self.entries
            .iter()
            .filter(|e| e.group == group)
            .map(|e| e.value.len())
            .sum()
    }

    pub fn total_scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Per-parameter (name, element count) manifest for a group.
    pub fn manifest(&self, group: ParamGroup) -> Vec<(String, usize)> {
        self.entries
            .iter()
            .filter(|e| e.group == group)
            .map(|e| (e.name.clone(), e.value.len()))
            .collect()
    }

    /// SHA-256 over the canonical little-endian `f64` encoding of every
    /// parameter in the group, in creation order, names included. Used by
    /// the freeze ledger to prove partitions were untouched.
    pub fn hash_group(&self, group: ParamGroup) -> String {
        let mut hasher = Sha256::new();
        for e in self.entries.iter().filter(|e| e.group == group) {
            hasher.update(e.name.as_bytes());
            for v in e.value.iter() {
                hasher.update(v.into_f64().to_le_bytes());
            }
        }
        hex_digest(hasher)
    }

    pub fn hash_all(&self) -> String {
        let mut hasher = Sha256::new();
        for e in &self.entries {
            hasher.update(e.name.as_bytes());
            for v in e.value.iter() {
                hasher.update(v.into_f64().to_le_bytes());
            }
        }
        hex_digest(hasher)
    }
}

fn hex_digest(hasher: Sha256) -> String {
    let out = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// How a parameter tensor is filled at creation.
#[derive(Clone, Copy, Debug)]
pub enum InitKind {
    Zeros,
    Ones,
    Normal(f64),
    /// He-normal with the given fan-in (convolutions, hidden linears).
    He(usize),
    /// Glorot-uniform with the given (fan-in, fan-out).
    Glorot(usize, usize),
}

/// Helper passed to module constructors: owns the init RNG and points every
/// new parameter at the right store slot and group.
pub struct ModuleBuilder<'a, F: Scalar> {
    pub store: &'a mut ParamStore<F>,
    pub rng: &'a mut SeedRng,
    pub group: ParamGroup,
}

impl<'a, F: Scalar> ModuleBuilder<'a, F> {
    pub fn new(store: &'a mut ParamStore<F>, rng: &'a mut SeedRng, group: ParamGroup) -> Self {
        ModuleBuilder { store, rng, group }
    }

    pub fn with_group(&mut self, group: ParamGroup) -> ModuleBuilder<'_, F> {
        ModuleBuilder {
            store: self.store,
            rng: self.rng,
            group,
        }
    }

    pub fn param(&mut self, name: impl Into<String>, shape: &[usize], init: InitKind) -> ParamId {
        let value = match init {
            InitKind::Zeros => ArrayD::zeros(ndarray::IxDyn(shape)),
            InitKind::Ones => ArrayD::from_elem(ndarray::IxDyn(shape), F::one()),
            InitKind::Normal(std) => crate::rng::normal_array::<F>(self.rng, shape)
                .mapv(|v| v * F::of_f64(std)),
            InitKind::He(fan_in) => {
                let std = (2.0 / fan_in as f64).sqrt();
                crate::rng::normal_array::<F>(self.rng, shape).mapv(|v| v * F::of_f64(std))
            }
            InitKind::Glorot(fan_in, fan_out) => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                crate::rng::uniform_array::<F>(self.rng, shape, -bound, bound)
            }
        };
        self.store.insert(name, self.group, value)
    }
}

/// One forward pass: a tape plus the parameter-to-leaf bookkeeping.
pub struct Ctx<'s, F: Scalar> {
    pub g: Graph<F>,
    store: &'s ParamStore<F>,
    trainable: Vec<ParamGroup>,
    param_vars: HashMap<usize, Var>,
    probes: Option<Vec<(String, ArrayD<F>)>>,
}

impl<'s, F: Scalar> Ctx<'s, F> {
    /// `trainable` lists the groups whose parameters enter as differentiable
    /// leaves; every other group enters as a constant.
    pub fn new(store: &'s ParamStore<F>, trainable: &[ParamGroup]) -> Self {
        Ctx {
            g: Graph::new(),
            store,
            trainable: trainable.to_vec(),
            param_vars: HashMap::new(),
            probes: None,
        }
    }

    /// Evaluation context: nothing is trainable, nothing tracks gradients.
    pub fn eval(store: &'s ParamStore<F>) -> Self {
        Self::new(store, &[])
    }

    pub fn store(&self) -> &ParamStore<F> {
        self.store
    }

    /// Enables recording of named intermediate values (attention weights in
    /// tests, for example).
    pub fn enable_probes(&mut self) {
        self.probes = Some(Vec::new());
    }

    pub fn probe(&mut self, name: &str, v: Var) {
        if self.probes.is_some() {
            let value = self.g.val(v).clone();
            self.probes.as_mut().unwrap().push((name.to_string(), value));
        }
    }

    pub fn probed(&self, name: &str) -> Option<&ArrayD<F>> {
        self.probes
            .as_ref()
            .and_then(|p| p.iter().find(|(n, _)| n == name).map(|(_, v)| v))
    }

    /// Graph leaf for a parameter; trainable groups get gradient tracking.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id.0) {
            return v;
        }
        let value = self.store.value(id).clone();
        let v = if self.trainable.contains(&self.store.group(id)) {
            self.g.leaf(value)
        } else {
            self.g.constant(value)
        };
        self.param_vars.insert(id.0, v);
        v
    }

    /// Runs backward from `loss` and gathers per-parameter gradients for the
    /// trainable groups. Parameters never touched by the graph get zeros.
    pub fn grads(&self, loss: Var) -> GradMap<F> {
        let mut grads = self.g.backward(loss);
        let mut table = HashMap::new();
        for (&pid, &var) in &self.param_vars {
            if self.trainable.contains(&self.store.group(ParamId(pid))) {
                let g = grads
                    .take(var)
                    .unwrap_or_else(|| ArrayD::zeros(self.store.value(ParamId(pid)).raw_dim()));
                table.insert(pid, g);
            }
        }
        GradMap { table }
    }

    /// Gradient with respect to an arbitrary graph leaf (inputs in tests).
    pub fn input_grad(&self, loss: Var, input: Var) -> Option<ArrayD<F>> {
        let mut grads = self.g.backward(loss);
        grads.take(input)
    }
}

/// Per-parameter gradients keyed by [`ParamId`].
pub struct GradMap<F: Scalar> {
    table: HashMap<usize, ArrayD<F>>,
}

impl<F: Scalar> GradMap<F> {
    pub fn get(&self, id: ParamId) -> Option<&ArrayD<F>> {
        self.table.get(&id.0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.table
            .values()
            .map(|g| g.iter().map(|v| v.into_f64() * v.into_f64()).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

/// Collects gradients computed by [`Ctx::grads`] for optimizer consumption.
pub fn grads_or_zeros<F: Scalar>(store: &ParamStore<F>, map: &GradMap<F>, id: ParamId) -> ArrayD<F> {
    map.get(id)
        .cloned()
        .unwrap_or_else(|| ArrayD::zeros(store.value(id).raw_dim()))
}
