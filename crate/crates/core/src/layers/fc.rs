//! Fully-connected layer over the flattened input volume.

use crate::error::{Error, Result};
use crate::volume::Volume;

/// Dense weights (`outputs x inputs`, row-major) and one bias per output.
/// The input volume is flattened in its canonical row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct FcParams {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl FcParams {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::Dimension(format!(
                "fc sizes must be positive, got {inputs} -> {outputs}"
            )));
        }
        if weights.len() != inputs * outputs {
            return Err(Error::Shape(format!(
                "fc expects {} weights for {inputs} -> {outputs}, got {}",
                inputs * outputs,
                weights.len()
            )));
        }
        if biases.len() != outputs {
            return Err(Error::Shape(format!(
                "fc expects {outputs} biases, got {}",
                biases.len()
            )));
        }
        Ok(FcParams { inputs, outputs, weights, biases })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Result<Self> {
        FcParams::new(inputs, outputs, vec![0.0; inputs * outputs], vec![0.0; outputs])
    }

    /// Square identity map, handy for wiring tests.
    pub fn identity(n: usize) -> Result<Self> {
        let mut params = FcParams::zeros(n, n)?;
        for i in 0..n {
            params.weights[i * n + i] = 1.0;
        }
        Ok(params)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    /// `outputs * inputs + outputs`.
    pub fn param_count(&self) -> usize {
        self.outputs * self.inputs + self.outputs
    }
}

/// Gradients of an fc layer plus the gradient with respect to its input,
/// reshaped back to the input volume's shape.
#[derive(Debug, Clone)]
pub struct FcGrads {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub input: Volume,
}

/// `out_j = bias_j + sum_i w[j][i] * flat(input)_i`, output shape `1x1xN`.
pub fn fc_forward(input: &Volume, params: &FcParams) -> Result<Volume> {
    if input.len() != params.inputs {
        return Err(Error::Shape(format!(
            "fc expects {} inputs, got volume {:?} with {}",
            params.inputs,
            input.shape(),
            input.len()
        )));
    }
    let flat = input.data();
    let mut out = Vec::with_capacity(params.outputs);
    for j in 0..params.outputs {
        let row = &params.weights[j * params.inputs..(j + 1) * params.inputs];
        let mut acc = params.biases[j];
        for (w, x) in row.iter().zip(flat) {
            acc += w * x;
        }
        out.push(acc);
    }
    Volume::from_vec(1, 1, params.outputs, out)
}

/// Standard affine-layer gradients: the weight gradient is the outer
/// product of upstream and the flattened input.
pub fn fc_backward(input: &Volume, params: &FcParams, upstream: &Volume) -> Result<FcGrads> {
    if input.len() != params.inputs {
        return Err(Error::Shape(format!(
            "fc backward: expected {} inputs, got {}",
            params.inputs,
            input.len()
        )));
    }
    if upstream.shape() != (1, 1, params.outputs) {
        return Err(Error::Shape(format!(
            "fc backward: upstream {:?}, expected (1, 1, {})",
            upstream.shape(),
            params.outputs
        )));
    }
    let flat = input.data();
    let up = upstream.data();
    let mut dw = vec![0.0; params.inputs * params.outputs];
    let mut dx = vec![0.0; params.inputs];
    for j in 0..params.outputs {
        let u = up[j];
        let row = &params.weights[j * params.inputs..(j + 1) * params.inputs];
        let drow = &mut dw[j * params.inputs..(j + 1) * params.inputs];
        for i in 0..params.inputs {
            drow[i] = u * flat[i];
            dx[i] += u * row[i];
        }
    }
    let (h, w, d) = input.shape();
    Ok(FcGrads {
        weights: dw,
        biases: up.to_vec(),
        input: Volume::from_vec(h, w, d, dx)?,
    })
}
