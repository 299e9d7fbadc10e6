use super::{axpy, dot, Real};
use crate::{Error, Result};

/// Fully connected layer `y = W·x + b`, `W` row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    inputs: usize,
    outputs: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T> {
    pub input_grad: Vec<T>,
    pub weight_grad: Vec<T>,
    pub bias_grad: Vec<T>,
}

impl<T: Real> DenseLayer<T> {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::Dimension(format!(
                "dense layer needs positive shape, got {outputs}x{inputs}"
            )));
        }
        if weights.len() != inputs * outputs {
            return Err(Error::Dimension(format!(
                "dense layer {outputs}x{inputs} got {} weights",
                weights.len()
            )));
        }
        if bias.len() != outputs {
            return Err(Error::Dimension(format!(
                "dense layer with {outputs} outputs got {} biases",
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dense layer contains a non-finite value".into()));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    pub fn weights_and_bias_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn cast<U: Real>(&self) -> DenseLayer<U> {
        DenseLayer {
            inputs: self.inputs,
            outputs: self.outputs,
            weights: self.weights.iter().map(|v| U::of(v.as_f64())).collect(),
            bias: self.bias.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

pub fn dense_forward<T: Real>(x: &[T], layer: &DenseLayer<T>) -> Result<Vec<T>> {
    if x.len() != layer.inputs {
        return Err(Error::Dimension(format!(
            "dense layer expects {} inputs, got {}",
            layer.inputs,
            x.len()
        )));
    }
    Ok(layer
        .weights
        .chunks_exact(layer.inputs)
        .zip(&layer.bias)
        .map(|(row, &b)| dot(row, x) + b)
        .collect())
}

pub fn dense_backward<T: Real>(x: &[T], layer: &DenseLayer<T>, upstream: &[T]) -> Result<DenseGrads<T>> {
    if x.len() != layer.inputs || upstream.len() != layer.outputs {
        return Err(Error::Dimension(format!(
            "dense backward expects {} inputs and {} upstream values, got {} and {}",
            layer.inputs,
            layer.outputs,
            x.len(),
            upstream.len()
        )));
    }
    let mut input_grad = vec![T::zero(); layer.inputs];
    let mut weight_grad = vec![T::zero(); layer.weights.len()];
    for (o, &g) in upstream.iter().enumerate() {
        let row = o * layer.inputs..(o + 1) * layer.inputs;
        axpy(g, x, &mut weight_grad[row.clone()]);
        axpy(g, &layer.weights[row], &mut input_grad);
    }
    Ok(DenseGrads {
        input_grad,
        weight_grad,
        bias_grad: upstream.to_vec(),
    })
}
