use rand::Rng;

use super::matrix::Matrix;
use crate::error::{MftError, Result};

/// A learnable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Parameter {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Parameter { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Handle into a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named, ordered collection of parameters belonging to one network.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        debug_assert!(self.id(&name).is_none(), "duplicate parameter {name}");
        self.names.push(name);
        self.params.push(Parameter::new(value));
        ParamId(self.params.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn require(&self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        let id = self
            .id(name)
            .ok_or_else(|| MftError::contract(format!("parameter {name} missing")))?;
        let shape = self.params[id.0].value.shape();
        if shape != (rows, cols) {
            return Err(MftError::contract(format!(
                "parameter {name} has shape {shape:?}, expected ({rows}, {cols})"
            )));
        }
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter)> {
        self.names.iter().map(String::as_str).zip(self.params.iter_mut())
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn grads_all_zero(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.grad.as_slice().iter().all(|g| *g == 0.0))
    }
}

/// Parameters of one LSTM cell. Gate rows are stacked (input, forget, cell, output).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl LstmParams {
    /// Xavier weights, zero biases except the forget gate at +1.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Self {
        let gates = 4 * hidden_size;
        let w_input = store.add(
            format!("{prefix}.w_input"),
            Matrix::xavier(gates, input_size, rng),
        );
        let w_hidden = store.add(
            format!("{prefix}.w_hidden"),
            Matrix::xavier(gates, hidden_size, rng),
        );
        let mut b = Matrix::zeros(gates, 1);
        for k in hidden_size..2 * hidden_size {
            b.set(k, 0, 1.0);
        }
        let bias = store.add(format!("{prefix}.bias"), b);
        LstmParams {
            w_input,
            w_hidden,
            bias,
            input_size,
            hidden_size,
        }
    }

    /// Re-binds to parameters already in `store` (e.g. after loading a checkpoint).
    pub fn bind(store: &ParamStore, prefix: &str) -> Result<Self> {
        let w_input = store
            .id(&format!("{prefix}.w_input"))
            .ok_or_else(|| MftError::contract(format!("{prefix}.w_input missing")))?;
        let (gates, input_size) = store.value(w_input).shape();
        if gates % 4 != 0 || gates == 0 {
            return Err(MftError::contract(format!(
                "{prefix}: gate dimension {gates} is not a positive multiple of 4"
            )));
        }
        let hidden_size = gates / 4;
        let w_hidden = store.require(&format!("{prefix}.w_hidden"), gates, hidden_size)?;
        let bias = store.require(&format!("{prefix}.bias"), gates, 1)?;
        Ok(LstmParams {
            w_input,
            w_hidden,
            bias,
            input_size,
            hidden_size,
        })
    }
}
