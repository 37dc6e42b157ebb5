//! Named, ordered collections of learnable tensors.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Parameters {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl Parameters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total learnable scalars.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Places every parameter on `tape` as a leaf, in order.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Vec<Var> {
        self.tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), requires_grad))
            .collect()
    }

    /// Reads gradients of previously bound leaves, in parameter order.
    pub fn grads(&self, tape: &Tape, bound: &[Var]) -> Vec<Tensor> {
        bound.iter().map(|&v| tape.grad_or_zeros(v)).collect()
    }

    /// Replaces values with `other`'s, requiring identical names and shapes.
    pub fn load_from(&mut self, other: &Parameters) -> Result<()> {
        if self.names != other.names {
            return Err(Error::invalid(
                "Parameters::load_from",
                "parameter names differ",
            ));
        }
        for (i, (dst, src)) in self.tensors.iter_mut().zip(&other.tensors).enumerate() {
            if dst.shape() != src.shape() {
                return Err(Error::Shape {
                    op: "Parameters::load_from",
                    lhs_name: "expected",
                    lhs: dst.shape(),
                    rhs_name: if i == 0 { "first" } else { "loaded" },
                    rhs: src.shape(),
                });
            }
            *dst = src.clone();
        }
        Ok(())
    }
}
