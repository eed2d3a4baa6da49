use crate::tape::{Tape, VarId};
use numkit::{RandomStream, Tensor};
use std::collections::HashMap;

/// Initialization rule for one parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Square identity matrix.
    Identity,
    /// Gaussian entries with the given standard deviation.
    Gauss(f64),
    Const(f64),
}

/// Declared shape and init of one parameter.
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, init: Init) -> Self {
        Self {
            name: name.into(),
            shape,
            init,
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.shape.iter().product()
    }
}

/// One named parameter with its value and a same-shaped gradient slot.
#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Ordered, named parameter store. Order is declaration order and is part
/// of the contract: initialization draws and optimizer state both follow it.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Materialize a list of specs, drawing Gaussian entries from `stream`
    /// in declaration order.
    pub fn from_specs(specs: &[ParamSpec], stream: &mut RandomStream) -> Self {
        let mut set = Self::new();
        for spec in specs {
            let n = spec.num_scalars();
            let data = match spec.init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::Const(c) => vec![c; n],
                Init::Gauss(std) => stream.gauss_vec(n, std),
                Init::Identity => {
                    assert_eq!(spec.shape.len(), 2);
                    assert_eq!(spec.shape[0], spec.shape[1]);
                    let d = spec.shape[0];
                    let mut v = vec![0.0; n];
                    for i in 0..d {
                        v[i * d + i] = 1.0;
                    }
                    v
                }
            };
            set.push(&spec.name, Tensor::new(spec.shape.clone(), data).unwrap());
        }
        set
    }

    pub fn push(&mut self, name: &str, value: Tensor) {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        self.index.insert(name.to_string(), self.entries.len());
        let grad = Tensor::zeros(value.shape().to_vec());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            grad,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn position(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get(&self, name: &str) -> &ParamEntry {
        &self.entries[self.position(name)]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ParamEntry {
        let i = self.position(name);
        &mut self.entries[i]
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            for g in e.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    /// Register every parameter as a differentiable leaf on a fresh tape.
    pub fn bind(&self, tape: &mut Tape) -> ParamBinding {
        let ids = self
            .entries
            .iter()
            .map(|e| tape.leaf(e.value.clone(), true))
            .collect();
        ParamBinding {
            ids,
            index: self.index.clone(),
        }
    }

    /// Pull leaf gradients from a finished backward pass into the grad slots.
    pub fn absorb(&mut self, binding: &ParamBinding, grads: &mut crate::tape::Gradients) {
        for (entry, &id) in self.entries.iter_mut().zip(&binding.ids) {
            if let Some(g) = grads.take(id) {
                for (slot, v) in entry.grad.data_mut().iter_mut().zip(g.data()) {
                    *slot += v;
                }
            }
        }
    }
}

/// Map from parameter names to leaf VarIds for one forward pass.
pub struct ParamBinding {
    ids: Vec<VarId>,
    index: HashMap<String, usize>,
}

impl ParamBinding {
    pub fn var(&self, name: &str) -> VarId {
        self.ids[*self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))]
    }

    pub fn ids(&self) -> &[VarId] {
        &self.ids
    }
}
