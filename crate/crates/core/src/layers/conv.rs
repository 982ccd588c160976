//! Convolutional layer: shared kernels slid across the input.

use crate::error::{Error, Result};
use crate::planner::output_shape;
use crate::volume::Volume;

/// Learnable state of a convolutional layer: `K` square kernels of shape
/// `field x field x input_depth` (one shared weight set per activation map)
/// and one bias per kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    kernels: Vec<Volume>,
    biases: Vec<f64>,
    stride: usize,
    pad: usize,
}

impl ConvParams {
    pub fn new(kernels: Vec<Volume>, biases: Vec<f64>, stride: usize, pad: usize) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::Dimension("a conv layer needs at least one kernel".to_string()));
        }
        let (h, w, d) = kernels[0].shape();
        if h != w {
            return Err(Error::Shape(format!("kernels must be square, got {h}x{w}x{d}")));
        }
        for (k, kernel) in kernels.iter().enumerate() {
            if kernel.shape() != (h, w, d) {
                return Err(Error::Shape(format!(
                    "kernel {k} has shape {:?}, expected {:?}",
                    kernel.shape(),
                    (h, w, d)
                )));
            }
        }
        if biases.len() != kernels.len() {
            return Err(Error::Shape(format!(
                "{} kernels but {} biases",
                kernels.len(),
                biases.len()
            )));
        }
        if stride == 0 {
            return Err(Error::Dimension("stride must be positive".to_string()));
        }
        Ok(ConvParams { kernels, biases, stride, pad })
    }

    /// All-zero parameters for the given geometry.
    pub fn zeros(field: usize, input_depth: usize, kernel_count: usize, stride: usize, pad: usize) -> Result<Self> {
        let kernel = Volume::zeros(field, field, input_depth)?;
        ConvParams::new(vec![kernel; kernel_count], vec![0.0; kernel_count], stride, pad)
    }

    /// Receptive field size R.
    pub fn field(&self) -> usize {
        self.kernels[0].height()
    }

    pub fn input_depth(&self) -> usize {
        self.kernels[0].depth()
    }

    pub fn kernel_count(&self) -> usize {
        self.kernels.len()
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn kernel(&self, k: usize) -> &Volume {
        &self.kernels[k]
    }

    pub fn kernels(&self) -> &[Volume] {
        &self.kernels
    }

    pub fn kernels_mut(&mut self) -> &mut [Volume] {
        &mut self.kernels
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    /// `field * field * input_depth * kernel_count + kernel_count`.
    pub fn param_count(&self) -> usize {
        let r = self.field();
        r * r * self.input_depth() * self.kernel_count() + self.kernel_count()
    }
}

/// Gradients of a conv layer, shaped like its parameters, plus the gradient
/// with respect to the layer input.
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub kernels: Vec<Volume>,
    pub biases: Vec<f64>,
    pub input: Volume,
}

impl ConvGrads {
    fn zeros(params: &ConvParams, input: &Volume) -> Result<Self> {
        let r = params.field();
        let kernel = Volume::zeros(r, r, params.input_depth())?;
        let (h, w, d) = input.shape();
        Ok(ConvGrads {
            kernels: vec![kernel; params.kernel_count()],
            biases: vec![0.0; params.kernel_count()],
            input: Volume::zeros(h, w, d)?,
        })
    }
}

fn check_input_depth(input: &Volume, params: &ConvParams) -> Result<()> {
    if input.depth() != params.input_depth() {
        return Err(Error::Shape(format!(
            "conv expects input depth {}, got {}",
            params.input_depth(),
            input.depth()
        )));
    }
    Ok(())
}

fn conv_output_dims(input: &Volume, params: &ConvParams) -> Result<(usize, usize)> {
    let r = params.field();
    let oh = output_shape(input.height(), r, params.pad, params.stride)?;
    let ow = output_shape(input.width(), r, params.pad, params.stride)?;
    Ok((oh, ow))
}

/// Slides every kernel across the zero-padded input and writes one
/// activation map per kernel: `out(x, y, k)` is the bias plus the scalar
/// product of kernel `k` with the receptive field at `(x, y)`.
pub fn conv_forward(input: &Volume, params: &ConvParams) -> Result<Volume> {
    check_input_depth(input, params)?;
    let (out_h, out_w) = conv_output_dims(input, params)?;
    let r = params.field();
    let d_in = params.input_depth();
    let k_count = params.kernel_count();
    let (s, z) = (params.stride as isize, params.pad as isize);
    let (in_h, in_w) = (input.height() as isize, input.width() as isize);
    let in_data = input.data();

    let mut out = Volume::zeros(out_h, out_w, k_count)?;
    let out_data = out.data_mut();
    for (k, kernel) in params.kernels.iter().enumerate() {
        let ker = kernel.data();
        let bias = params.biases[k];
        for oy in 0..out_h {
            let y0 = oy as isize * s - z;
            for ox in 0..out_w {
                let x0 = ox as isize * s - z;
                let mut acc = bias;
                for ky in 0..r {
                    let y = y0 + ky as isize;
                    if y < 0 || y >= in_h {
                        continue;
                    }
                    let in_row = y as usize * in_w as usize;
                    let ker_row = ky * r;
                    for kx in 0..r {
                        let x = x0 + kx as isize;
                        if x < 0 || x >= in_w {
                            continue;
                        }
                        let in_off = (in_row + x as usize) * d_in;
                        let ker_off = (ker_row + kx) * d_in;
                        for d in 0..d_in {
                            acc += in_data[in_off + d] * ker[ker_off + d];
                        }
                    }
                }
                out_data[(oy * out_w + ox) * k_count + k] = acc;
            }
        }
    }
    Ok(out)
}

/// Backpropagates through the convolution. Because one kernel is shared by
/// every spatial position of its activation map, kernel gradients sum the
/// contributions of all positions; bias gradients sum the upstream map; the
/// input gradient scatters kernel-weighted upstream values back onto the
/// in-bounds (non-padding) cells.
pub fn conv_backward(input: &Volume, params: &ConvParams, upstream: &Volume) -> Result<ConvGrads> {
    check_input_depth(input, params)?;
    let (out_h, out_w) = conv_output_dims(input, params)?;
    let k_count = params.kernel_count();
    if upstream.shape() != (out_h, out_w, k_count) {
        return Err(Error::Shape(format!(
            "conv backward: upstream {:?} does not match output {:?}",
            upstream.shape(),
            (out_h, out_w, k_count)
        )));
    }

    let r = params.field();
    let d_in = params.input_depth();
    let (s, z) = (params.stride as isize, params.pad as isize);
    let (in_h, in_w) = (input.height() as isize, input.width() as isize);
    let in_data = input.data();
    let up_data = upstream.data();

    let mut grads = ConvGrads::zeros(params, input)?;
    for k in 0..k_count {
        let ker = params.kernels[k].data();
        let dker = grads.kernels[k].data_mut();
        let mut dbias = 0.0;
        for oy in 0..out_h {
            let y0 = oy as isize * s - z;
            for ox in 0..out_w {
                let x0 = ox as isize * s - z;
                let u = up_data[(oy * out_w + ox) * k_count + k];
                dbias += u;
                if u == 0.0 {
                    continue;
                }
                for ky in 0..r {
                    let y = y0 + ky as isize;
                    if y < 0 || y >= in_h {
                        continue;
                    }
                    let in_row = y as usize * in_w as usize;
                    let ker_row = ky * r;
                    for kx in 0..r {
                        let x = x0 + kx as isize;
                        if x < 0 || x >= in_w {
                            continue;
                        }
                        let in_off = (in_row + x as usize) * d_in;
                        let ker_off = (ker_row + kx) * d_in;
                        let din = grads.input.data_mut();
                        for d in 0..d_in {
                            dker[ker_off + d] += u * in_data[in_off + d];
                            din[in_off + d] += u * ker[ker_off + d];
                        }
                    }
                }
            }
        }
        grads.biases[k] = dbias;
    }
    Ok(grads)
}
