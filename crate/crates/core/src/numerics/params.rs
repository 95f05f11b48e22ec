use std::collections::HashMap;

use super::{NumericsError, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameters with same-shaped gradient accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor2>,
    grads: Vec<Tensor2>,
    touched: Vec<bool>,
    index: HashMap<String, ParamId>,
    /// Optimizer updates applied so far.
    step: u64,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            touched: Vec::new(),
            index: HashMap::new(),
            step: 0,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor2) -> Result<ParamId, NumericsError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NumericsError::DuplicateParameter(name));
        }
        let id = ParamId(self.values.len());
        self.grads.push(Tensor2::zeros(value.rows(), value.cols()));
        self.values.push(value);
        self.touched.push(false);
        self.index.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor2 {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor2 {
        &self.grads[id.0]
    }

    pub fn has_grad(&self, id: ParamId) -> bool {
        self.touched[id.0]
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn advance_step(&mut self) {
        self.step += 1;
    }

    pub fn accumulate(&mut self, id: ParamId, grad: &Tensor2) -> Result<(), NumericsError> {
        self.grads[id.0].add_assign(grad)?;
        self.touched[id.0] = true;
        Ok(())
    }

    pub fn accumulate_slice(&mut self, id: ParamId, grad: &[f64]) -> Result<(), NumericsError> {
        let g = &mut self.grads[id.0];
        if g.data().len() != grad.len() {
            return Err(NumericsError::DimensionMismatch(format!(
                "gradient of length {} for {}",
                grad.len(),
                self.names[id.0]
            )));
        }
        for (a, b) in g.data_mut().iter_mut().zip(grad) {
            *a += b;
        }
        self.touched[id.0] = true;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        self.touched.iter_mut().for_each(|t| *t = false);
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.scale(factor);
        }
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.data().len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_grads_shaped() {
        let mut s = ParamStore::new();
        let a = s.add("a", Tensor2::zeros(2, 3)).unwrap();
        assert!(matches!(s.add("a", Tensor2::zeros(1, 1)), Err(NumericsError::DuplicateParameter(_))));
        assert_eq!(s.grad(a).shape(), (2, 3));
        assert!(!s.has_grad(a));
        s.accumulate(a, &Tensor2::from_fn(2, 3, |_, _| 1.0)).unwrap();
        s.accumulate_slice(a, &[1.0; 6]).unwrap();
        assert_eq!(s.grad(a).data(), &[2.0; 6]);
        assert!(s.accumulate(a, &Tensor2::zeros(3, 2)).is_err());
        s.zero_grads();
        assert_eq!(s.grad(a).data(), &[0.0; 6]);
        assert!(!s.has_grad(a));
        assert_eq!(s.id("a"), Some(a));
        assert_eq!(s.num_scalars(), 6);
    }
}
