use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::tape::Tape;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// One named, shaped parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Ordered collection of model parameters.
///
/// Order is the construction order and is part of a model's identity: the
/// optimizer state, gradient routing, and the checkpoint layout all index
/// into it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a zero-initialized parameter, returning its index.
    pub fn zeros(&mut self, name: &str, shape: Vec<usize>) -> usize {
        let len = shape.iter().product();
        self.push(name, shape, vec![0.0; len])
    }

    /// Register a parameter filled with `value`.
    pub fn filled(&mut self, name: &str, shape: Vec<usize>, value: f64) -> usize {
        let len = shape.iter().product();
        self.push(name, shape, vec![value; len])
    }

    /// Register a parameter with explicit values.
    pub fn from_values(&mut self, name: &str, shape: Vec<usize>, values: Vec<f64>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.push(name, shape, values)
    }

    /// Index of a parameter by name.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    /// Register a parameter drawn uniformly from ±1/sqrt(fan_in).
    pub fn uniform_fan_in(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let len: usize = shape.iter().product();
        let values = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
        self.push(name, shape, values)
    }

    fn push(&mut self, name: &str, shape: Vec<usize>, values: Vec<f64>) -> usize {
        debug_assert!(
            !self.params.iter().any(|p| p.name == name),
            "duplicate parameter name {name}"
        );
        self.params.push(Param {
            name: name.to_string(),
            shape,
            values,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Param {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Param {
        &mut self.params[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Replace all values from another store with identical layout.
    pub fn load_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Contract(format!(
                "parameter count mismatch: {} vs {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (dst, src) in self.params.iter_mut().zip(other.params.iter()) {
            if dst.name != src.name || dst.shape != src.shape {
                return Err(Error::Contract(format!(
                    "parameter layout mismatch at `{}`: {:?} vs `{}` {:?}",
                    dst.name, dst.shape, src.name, src.shape
                )));
            }
            dst.values.clone_from(&src.values);
        }
        Ok(())
    }
}

/// Per-step binding of parameters onto a tape.
///
/// Training binds every parameter as a tracked leaf; inference skips the
/// tape so forward passes stay pure.
pub struct Binder<'a> {
    tape: Option<&'a Tape>,
    bound: Vec<(usize, Tensor)>,
}

impl<'a> Binder<'a> {
    pub fn new(tape: Option<&'a Tape>) -> Self {
        Binder {
            tape,
            bound: Vec::new(),
        }
    }

    /// Tensor view of parameter `idx`, tracked iff a tape is attached.
    pub fn bind(&mut self, store: &ParamStore, idx: usize) -> Result<Tensor> {
        let p = store.get(idx);
        let t = match self.tape {
            Some(tape) => {
                let t = tape.leaf(p.shape.clone(), &p.values)?;
                self.bound.push((idx, t.clone()));
                t
            }
            None => Tensor::from_vec(p.shape.clone(), p.values.clone())?,
        };
        Ok(t)
    }

    /// Bound (parameter index, leaf tensor) pairs, in bind order.
    pub fn bound(&self) -> &[(usize, Tensor)] {
        &self.bound
    }
}
