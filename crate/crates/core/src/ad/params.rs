use indexmap::IndexMap;

use super::array::{NumericArray, Scalar};
use crate::error::{Error, Result};

/// Learning rate used when none is configured.
pub const DEFAULT_LEARNING_RATE: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub value: NumericArray<T>,
    pub grad: Vec<T>,
}

/// Named parameters with accumulated gradients, in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore<T> {
    entries: IndexMap<String, Parameter<T>>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: NumericArray<T>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::DuplicateParameter(name));
        }
        let grad = vec![T::zero(); value.len()];
        self.entries.insert(name, Parameter { value, grad });
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Parameter<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&NumericArray<T>> {
        Ok(&self.get(name)?.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut NumericArray<T>> {
        self.entries
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn grad(&self, name: &str) -> Result<&[T]> {
        Ok(&self.get(name)?.grad)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &[T]) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        if p.grad.len() != grad.len() {
            return Err(Error::Shape {
                op: "accumulate_grad",
                detail: format!("`{name}` has {} values, gradient {}", p.grad.len(), grad.len()),
            });
        }
        for (acc, &g) in p.grad.iter_mut().zip(grad) {
            *acc = *acc + g;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Plain SGD: `value -= lr * grad`, then gradients are zeroed. Nothing
    /// is modified if any gradient is non-finite.
    pub fn sgd_step(&mut self, learning_rate: f64) -> Result<()> {
        if let Some((name, _)) = self
            .entries
            .iter()
            .find(|(_, p)| p.grad.iter().any(|g| !g.is_finite()))
        {
            return Err(Error::NonFiniteGradient { name: name.clone() });
        }
        let lr = T::from_f64_lossy(learning_rate);
        for p in self.entries.values_mut() {
            for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.iter_mut()) {
                *v = *v - lr * *g;
                *g = T::zero();
            }
        }
        Ok(())
    }

    /// Same names and shapes, values converted to another precision,
    /// gradients reset.
    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        let mut out = ParameterStore::new();
        for (name, p) in &self.entries {
            out.insert(name.clone(), p.value.cast()).expect("names are unique");
        }
        out
    }
}
