//! Named parameter tensors in a fixed canonical order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tape::{Tape, ValueId};
use crate::nn::tensor::Tensor;

/// One named learnable tensor. Names use `group.member` form, e.g.
/// `msg_sf.w1` or `upd_h.uz`; the group prefix is what gradient reports
/// and serialization key on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered collection of named parameters.
///
/// Order is canonical: gradients, optimizer state, and serialization all use
/// the insertion order, so two stores built the same way align element-wise.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParameterStore {
    entries: Vec<Param>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, mut tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|p| p.name == name) {
            return Err(Error::Usage(format!("duplicate parameter name {name:?}")));
        }
        tensor.set_requires_grad(true);
        self.entries.push(Param { name, tensor });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.tensor)
    }

    pub fn tensor_at(&self, idx: usize) -> &Tensor {
        &self.entries[idx].tensor
    }

    pub fn tensor_at_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.entries[idx].tensor
    }

    pub fn name_at(&self, idx: usize) -> &str {
        &self.entries[idx].name
    }

    /// Distinct group prefixes in canonical order.
    pub fn groups(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.entries {
            let group = p.name.split('.').next().unwrap_or(&p.name).to_string();
            if !out.contains(&group) {
                out.push(group);
            }
        }
        out
    }

    /// Register every parameter on a tape, returning ids in canonical order.
    pub fn register_all(&self, tape: &mut Tape) -> Vec<ValueId> {
        self.entries
            .iter()
            .map(|p| tape.leaf(p.tensor.clone()))
            .collect()
    }

    /// Collect gradients from a tape for the given ids, zeros where absent.
    pub fn collect_grads(&self, tape: &Tape, ids: &[ValueId]) -> Vec<Tensor> {
        self.entries
            .iter()
            .zip(ids)
            .map(|(p, &id)| match tape.grad(id) {
                Some(g) => g.clone(),
                None => Tensor::zeros(p.tensor.shape()),
            })
            .collect()
    }

    /// True if the stores have identical names and shapes in the same order.
    pub fn layout_matches(&self, other: &ParameterStore) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.tensor.shape() == b.tensor.shape())
    }
}

/// Scale-accumulate `acc += scale * delta` over aligned tensor lists.
pub fn axpy_grads(acc: &mut [Tensor], delta: &[Tensor], scale: f64) {
    debug_assert_eq!(acc.len(), delta.len());
    for (a, d) in acc.iter_mut().zip(delta) {
        a.data_mut()
            .iter_mut()
            .zip(d.data())
            .for_each(|(x, &y)| *x += scale * y);
    }
}
