//! Named trainable parameters and their gradient accumulators.
//!
//! Parameters are stored in insertion order, which fixes iteration order
//! for the optimizer and the checkpoint layout. Checkpoint data is carried
//! as `f64`, which embeds both supported precisions exactly, so files
//! round-trip bitwise.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::tensor::{Real, Shape, Tensor};

/// L2 regularization policy for one parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum L2Policy {
    Apply,
    Exempt,
    /// Row-level exemption (used for pretrained embedding rows);
    /// `true` marks an exempt row.
    ExemptRows(Vec<bool>),
}

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub l2: L2Policy,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>, l2: L2Policy) -> usize {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let idx = self.params.len();
        self.params.push(Param {
            name: name.to_string(),
            value,
            l2,
        });
        self.index.insert(name.to_string(), idx);
        idx
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn idx(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> &Tensor<T> {
        &self.params[self.index[name]].value
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor<T> {
        let idx = self.index[name];
        &mut self.params[idx].value
    }

    pub fn by_idx(&self, idx: usize) -> &Param<T> {
        &self.params[idx]
    }

    pub fn by_idx_mut(&mut self, idx: usize) -> &mut Param<T> {
        &mut self.params[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn total_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.shape().numel()).sum()
    }

    /// Sum of squares of all parameters subject to L2.
    pub fn l2_penalty(&self) -> T {
        let mut acc = T::zero();
        for p in &self.params {
            match &p.l2 {
                L2Policy::Exempt => {}
                L2Policy::Apply => {
                    for &v in p.value.data() {
                        acc += v * v;
                    }
                }
                L2Policy::ExemptRows(mask) => {
                    let cols = p.value.shape().dim(p.value.shape().rank() - 1);
                    for (r, exempt) in mask.iter().enumerate() {
                        if !exempt {
                            for &v in &p.value.data()[r * cols..(r + 1) * cols] {
                                acc += v * v;
                            }
                        }
                    }
                }
            }
        }
        acc
    }

    pub fn to_entries(&self) -> Vec<ParamEntry> {
        self.params
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().dims().to_vec(),
                data: p.value.data().iter().map(|v| v.as_f64()).collect(),
            })
            .collect()
    }

    /// Overwrite values from checkpoint entries. Every entry must name an
    /// existing parameter of the same shape; the error names the offender.
    pub fn load_entries(&mut self, entries: &[ParamEntry]) -> Result<(), String> {
        if entries.len() != self.params.len() {
            return Err(format!(
                "checkpoint has {} parameters, model expects {}",
                entries.len(),
                self.params.len()
            ));
        }
        for entry in entries {
            let idx = self
                .index
                .get(&entry.name)
                .copied()
                .ok_or_else(|| format!("unexpected parameter '{}'", entry.name))?;
            let expected = self.params[idx].value.shape().clone();
            let got = Shape::new(entry.shape.clone());
            if expected != got {
                return Err(format!(
                    "parameter '{}' has shape {got}, model expects {expected}",
                    entry.name
                ));
            }
            let data: Vec<T> = entry.data.iter().map(|&v| T::from_f64(v)).collect();
            self.params[idx].value = Tensor::new(expected, data).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

/// One named tensor in a checkpoint file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Bridges a [`ParamStore`] and one [`Graph`]: parameters enter the graph
/// as leaves on first use, and their gradients are collected back into a
/// [`GradAccum`] after the backward pass. Embedding rows enter through
/// `gather_rows`, whose gradients scatter-add into the full table.
pub struct BoundParams<'a, T: Real> {
    store: &'a ParamStore<T>,
    train: bool,
    nodes: Vec<Option<crate::tensor::NodeId>>,
    gathers: Vec<(usize, Vec<usize>, crate::tensor::NodeId)>,
}

impl<'a, T: Real> BoundParams<'a, T> {
    pub fn new(store: &'a ParamStore<T>, train: bool) -> Self {
        BoundParams {
            store,
            train,
            nodes: vec![None; store.len()],
            gathers: Vec::new(),
        }
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    /// Leaf node for a whole parameter tensor.
    pub fn node(&mut self, g: &mut crate::tensor::Graph<T>, name: &str) -> crate::tensor::NodeId {
        let idx = self
            .store
            .idx(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        if let Some(id) = self.nodes[idx] {
            return id;
        }
        let id = g.leaf(self.store.by_idx(idx).value.clone(), self.train);
        self.nodes[idx] = Some(id);
        id
    }

    /// Leaf node holding selected rows of a matrix parameter.
    pub fn gather_rows(
        &mut self,
        g: &mut crate::tensor::Graph<T>,
        name: &str,
        rows: &[usize],
    ) -> crate::tensor::NodeId {
        let idx = self
            .store
            .idx(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        let table = &self.store.by_idx(idx).value;
        let cols = table.shape().dim(1);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            data.extend_from_slice(table.row(r));
        }
        let leaf = Tensor::new(Shape::matrix(rows.len(), cols), data).expect("gather shape");
        let id = g.leaf(leaf, self.train);
        self.gathers.push((idx, rows.to_vec(), id));
        id
    }

    /// Accumulate the graph's leaf gradients into `accum`.
    pub fn collect_grads(&self, g: &crate::tensor::Graph<T>, accum: &mut GradAccum<T>) {
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Some(id) = node {
                if let Some(grad) = g.grad_slice(*id) {
                    accum.add(idx, grad);
                }
            }
        }
        for (idx, rows, id) in &self.gathers {
            if let Some(grad) = g.grad_slice(*id) {
                let cols = self.store.by_idx(*idx).value.shape().dim(1);
                accum.add_rows(*idx, rows, cols, grad);
            }
        }
    }
}

/// Per-parameter gradient accumulator aligned with a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct GradAccum<T> {
    grads: Vec<Vec<T>>,
}

impl<T: Real> GradAccum<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        GradAccum {
            grads: store
                .iter()
                .map(|p| vec![T::zero(); p.value.shape().numel()])
                .collect(),
        }
    }

    pub fn add(&mut self, idx: usize, delta: &[T]) {
        let slot = &mut self.grads[idx];
        debug_assert_eq!(slot.len(), delta.len());
        for (g, &d) in slot.iter_mut().zip(delta) {
            *g += d;
        }
    }

    /// Scatter-add `delta` rows into the rows named by `rows` of a matrix
    /// parameter (embedding gradient path).
    pub fn add_rows(&mut self, idx: usize, rows: &[usize], cols: usize, delta: &[T]) {
        let slot = &mut self.grads[idx];
        for (r, &row) in rows.iter().enumerate() {
            for c in 0..cols {
                slot[row * cols + c] += delta[r * cols + c];
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for g in &mut self.grads {
            for v in g.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn get(&self, idx: usize) -> &[T] {
        &self.grads[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut [T] {
        &mut self.grads[idx]
    }

    pub fn is_finite(&self) -> bool {
        self.grads
            .iter()
            .all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn global_norm(&self) -> T {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    /// Add the analytic gradient of `lambda * sum(theta^2)`, honoring each
    /// parameter's L2 policy.
    pub fn add_l2(&mut self, store: &ParamStore<T>, lambda: T) {
        if lambda == T::zero() {
            return;
        }
        let two = T::from_f64(2.0);
        for (idx, p) in store.iter().enumerate() {
            match &p.l2 {
                L2Policy::Exempt => {}
                L2Policy::Apply => {
                    for (g, &v) in self.grads[idx].iter_mut().zip(p.value.data()) {
                        *g += two * lambda * v;
                    }
                }
                L2Policy::ExemptRows(mask) => {
                    let cols = p.value.shape().dim(p.value.shape().rank() - 1);
                    for (r, exempt) in mask.iter().enumerate() {
                        if !exempt {
                            for c in 0..cols {
                                self.grads[idx][r * cols + c] +=
                                    two * lambda * p.value.data()[r * cols + c];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(), L2Policy::Apply);
        s.insert(
            "emb",
            Tensor::matrix(2, 2, vec![1.0, 1.0, 2.0, 2.0]).unwrap(),
            L2Policy::ExemptRows(vec![true, false]),
        );
        s.insert("b", Tensor::vector(vec![5.0]), L2Policy::Exempt);
        s
    }

    #[test]
    fn l2_penalty_honors_policies() {
        let s = store();
        // w: 1+4+9+16 = 30; emb row 1 only: 4+4 = 8; b exempt
        assert_eq!(s.l2_penalty(), 38.0);
    }

    #[test]
    fn l2_gradients_match_policies() {
        let s = store();
        let mut g = GradAccum::zeros_like(&s);
        g.add_l2(&s, 0.5);
        assert_eq!(g.get(0), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g.get(1), &[0.0, 0.0, 2.0, 2.0]);
        assert_eq!(g.get(2), &[0.0]);
    }

    #[test]
    fn entries_roundtrip_bitwise() {
        let mut s = store();
        let entries = s.to_entries();
        let json = serde_json::to_string(&entries).unwrap();
        let parsed: Vec<ParamEntry> = serde_json::from_str(&json).unwrap();
        s.load_entries(&parsed).unwrap();
        let again = s.to_entries();
        for (a, b) in entries.iter().zip(&again) {
            assert_eq!(a.name, b.name);
            assert!(a
                .data
                .iter()
                .zip(&b.data)
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn load_rejects_shape_mismatch_by_name() {
        let mut s = store();
        let mut entries = s.to_entries();
        entries[1].shape = vec![4];
        let err = s.load_entries(&entries).unwrap_err();
        assert!(err.contains("emb"), "{err}");
    }

    #[test]
    fn scatter_rows_accumulate() {
        let s = store();
        let mut g = GradAccum::zeros_like(&s);
        g.add_rows(1, &[1, 1], 2, &[1.0, 2.0, 10.0, 20.0]);
        assert_eq!(g.get(1), &[0.0, 0.0, 11.0, 22.0]);
    }
}
