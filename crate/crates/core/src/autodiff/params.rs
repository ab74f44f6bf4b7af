use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::{Error, Result, Scalar};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Ordered collection of named trainable arrays.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            self.params.iter().all(|p| p.name != name),
            "parameter `{name}` registered twice"
        );
        self.params.push(Param { name, value });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn sq_norm(&self) -> T {
        self.params.iter().map(|p| p.value.sq_norm()).sum()
    }

    /// Records every parameter as a trainable leaf; the returned ids are
    /// indexed by [`ParamId`].
    pub fn register<'a>(&'a self, g: &mut Graph<'a, T>) -> Vec<NodeId> {
        self.params.iter().map(|p| g.param(&p.value)).collect()
    }

    /// Overwrites values from `(name, shape, data)` triples, checking that the
    /// set of names and every shape match exactly.
    pub fn load_arrays(&mut self, arrays: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        if arrays.len() != self.params.len() {
            return Err(Error::Version(format!(
                "expected {} arrays, found {}",
                self.params.len(),
                arrays.len()
            )));
        }
        for (name, shape, data) in arrays {
            let id = self
                .find(name)
                .ok_or_else(|| Error::Version(format!("unexpected array `{name}`")))?;
            let p = &mut self.params[id.0];
            if p.value.shape() != shape.as_slice() {
                return Err(Error::Version(format!(
                    "array `{name}` has shape {shape:?}, model expects {:?}",
                    p.value.shape()
                )));
            }
            p.value = Tensor::from_f64(shape.clone(), data)?;
        }
        Ok(())
    }

    pub fn to_arrays(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.value.shape().to_vec(), p.value.to_f64_vec()))
            .collect()
    }
}
