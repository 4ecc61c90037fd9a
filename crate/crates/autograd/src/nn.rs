//! Named parameter storage and optimizers.

use std::collections::HashMap;

use crate::element::Element;
use crate::tensor::Tensor;
use crate::var::{Gradients, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer; gradients are tracked.
    Trainable,
    /// Persistent non-differentiable state (e.g. power-iteration vectors).
    Buffer,
}

#[derive(Clone)]
struct Entry<T: Element> {
    name: String,
    kind: ParamKind,
    var: Var<T>,
}

/// Ordered, named collection of parameters and buffers.
///
/// Insertion order is stable and is the serialization order.
#[derive(Clone)]
pub struct ParamStore<T: Element> {
    entries: Vec<Entry<T>>,
    index: HashMap<String, usize>,
}

impl<T: Element> std::fmt::Debug for ParamStore<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map()
            .entries(self.entries.iter().map(|e| (&e.name, e.var.shape())))
            .finish()
    }
}

impl<T: Element> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new(), index: HashMap::new() }
    }

    pub fn root(&mut self) -> Path<'_, T> {
        Path { store: self, prefix: String::new() }
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>, kind: ParamKind) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter name {name}");
        let id = ParamId(self.entries.len());
        let var = match kind {
            ParamKind::Trainable => Var::leaf(value),
            ParamKind::Buffer => Var::constant(value),
        };
        self.entries.push(Entry { name: name.to_string(), kind, var });
        self.index.insert(name.to_string(), id.0);
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn var(&self, id: ParamId) -> &Var<T> {
        &self.entries[id.0].var
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        self.entries[id.0].var.value()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn kind(&self, id: ParamId) -> ParamKind {
        self.entries[id.0].kind
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.ids().filter(|&id| self.kind(id) == ParamKind::Trainable)
    }

    /// Replaces a value; the shape must not change.
    pub fn set(&mut self, id: ParamId, value: Tensor<T>) {
        let e = &mut self.entries[id.0];
        assert_eq!(e.var.shape(), value.shape(), "set {}: shape change", e.name);
        e.var = match e.kind {
            ParamKind::Trainable => Var::leaf(value),
            ParamKind::Buffer => Var::constant(value),
        };
    }

    /// A copy whose entries are all constants: forward passes through it
    /// record no parameter gradients.
    pub fn frozen(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| Entry { name: e.name.clone(), kind: e.kind, var: e.var.detach() })
            .collect();
        ParamStore { entries, index: self.index.clone() }
    }

    pub fn num_scalars(&self, kind: ParamKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).map(|e| e.var.value().numel()).sum()
    }

    /// FNV-1a over names and raw values of the selected entries.
    pub fn fingerprint(&self, mut select: impl FnMut(&str) -> bool) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        let mut buf = Vec::new();
        for e in &self.entries {
            if !select(&e.name) {
                continue;
            }
            eat(e.name.as_bytes());
            buf.clear();
            for &x in e.var.value().data() {
                x.write_le(&mut buf);
            }
            eat(&buf);
        }
        h
    }
}

/// Prefixed view of a [`ParamStore`] used while building a model.
pub struct Path<'a, T: Element> {
    store: &'a mut ParamStore<T>,
    prefix: String,
}

impl<'a, T: Element> Path<'a, T> {
    fn full(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    pub fn sub(&mut self, name: &str) -> Path<'_, T> {
        let prefix = self.full(name);
        Path { store: self.store, prefix }
    }

    pub fn param(&mut self, name: &str, value: Tensor<T>) -> ParamId {
        let full = self.full(name);
        self.store.add(&full, value, ParamKind::Trainable)
    }

    pub fn buffer(&mut self, name: &str, value: Tensor<T>) -> ParamId {
        let full = self.full(name);
        self.store.add(&full, value, ParamKind::Buffer)
    }
}

/// First and second moment state of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamSlot<T: Element> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub t: u64,
}

/// Adam with per-parameter bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T: Element> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    slots: Vec<Option<AdamSlot<T>>>,
}

impl<T: Element> Adam<T> {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr: T::from_f64_lossy(lr),
            beta1: T::from_f64_lossy(beta1),
            beta2: T::from_f64_lossy(beta2),
            eps: T::from_f64_lossy(eps),
            slots: Vec::new(),
        }
    }

    pub fn slot(&self, id: ParamId) -> Option<&AdamSlot<T>> {
        self.slots.get(id.0).and_then(Option::as_ref)
    }

    pub fn set_slot(&mut self, id: ParamId, slot: Option<AdamSlot<T>>) {
        if self.slots.len() <= id.0 {
            self.slots.resize(id.0 + 1, None);
        }
        self.slots[id.0] = slot;
    }

    /// Updates every trainable parameter accepted by `active` that has a
    /// gradient. Returns the number of parameters touched.
    pub fn step(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &Gradients<T>,
        mut active: impl FnMut(ParamId, &str) -> bool,
    ) -> usize {
        let ids: Vec<ParamId> = store.trainable_ids().collect();
        let mut touched = 0;
        for id in ids {
            if !active(id, store.name(id)) {
                continue;
            }
            let Some(g) = grads.get(store.var(id)) else { continue };
            let g = g.value();
            if self.slots.len() <= id.0 {
                self.slots.resize(id.0 + 1, None);
            }
            let slot = self.slots[id.0].get_or_insert_with(|| AdamSlot {
                m: Tensor::zeros(g.shape()),
                v: Tensor::zeros(g.shape()),
                t: 0,
            });
            slot.t += 1;
            let (b1, b2, one) = (self.beta1, self.beta2, T::one());
            let t = i32::try_from(slot.t).unwrap_or(i32::MAX);
            let c1 = one - b1.powi(t);
            let c2 = one - b2.powi(t);
            let mut p = store.value(id).clone();
            let m = slot.m.data_mut();
            let v = slot.v.data_mut();
            for (((pi, mi), vi), &gi) in p.data_mut().iter_mut().zip(m).zip(v).zip(g.data()) {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            store.set(id, p);
            touched += 1;
        }
        touched
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::var::backward;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::<f64>::new();
        let id = store.root().sub("lin").param("w", Tensor::from_f64(&[2], &[1.0, -1.0]));
        assert_eq!(store.name(id), "lin.w");
        let loss = store.var(id).mul(&Var::constant(Tensor::from_f64(&[2], &[3.0, -0.5]))).sum_all();
        let grads = backward(&loss, false);
        let mut adam = Adam::new(0.1, 0.0, 0.99, 1e-12);
        assert_eq!(adam.step(&mut store, &grads, |_, _| true), 1);
        let p = store.value(id).data();
        assert!((p[0] - 0.9).abs() < 1e-9 && (p[1] + 0.9).abs() < 1e-9, "{p:?}");
    }

    #[test]
    fn fingerprint_tracks_values() {
        let mut store = ParamStore::<f32>::new();
        let a = store.add("a", Tensor::zeros(&[3]), ParamKind::Trainable);
        store.add("b", Tensor::ones(&[2]), ParamKind::Buffer);
        let before = store.fingerprint(|_| true);
        let only_b = store.fingerprint(|n| n == "b");
        store.set(a, Tensor::ones(&[3]));
        assert_ne!(before, store.fingerprint(|_| true));
        assert_eq!(only_b, store.fingerprint(|n| n == "b"));
    }
}
