//! Named trainable parameters, stored outside any tape and bound as leaves
//! each forward pass.

use crate::error::{Error, Result};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Ordered collection of parameters with unique names; iteration order is
/// insertion order, which fixes the optimizer-state layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<Parameter>,
    index: BTreeMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn add(&mut self, name: &str, shape: Vec<usize>, values: Vec<f64>) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::domain(format!("duplicate parameter name {name:?}")));
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::domain(format!(
                "parameter {name:?}: {} values for shape {shape:?}",
                values.len()
            )));
        }
        let idx = self.entries.len();
        self.entries.push(Parameter {
            name: name.to_string(),
            shape,
            values,
        });
        self.index.insert(name.to_string(), idx);
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn by_index(&self, idx: usize) -> &Parameter {
        &self.entries[idx]
    }

    pub fn by_index_mut(&mut self, idx: usize) -> &mut Parameter {
        &mut self.entries[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.entries.iter()
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|p| p.values.len()).sum()
    }
}
