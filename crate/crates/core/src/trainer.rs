//! Networks as parameterized layer stacks, minibatch SGD, evaluation, and
//! the whole-network finite-difference gradient checker.
//!
//! The training loop is single-threaded and fully determined by the config
//! seed: weight init, per-epoch shuffling, and update order all flow from
//! one split-mix stream, so two runs with the same seed produce bit-equal
//! parameters and logs.

use crate::error::{Error, Result};
use crate::layers::{
    conv_backward, conv_forward, fc_backward, fc_forward, pool_backward, pool_forward,
    relu_backward, relu_forward, softmax_cross_entropy, ConvGrads, ConvParams, FcGrads, FcParams,
    PoolSpec, SwitchMap,
};
use crate::mnist::{batches, Dataset};
use crate::planner::{plan, ArchSpec, LayerSpec};
use crate::rng::SplitMix64;
use crate::volume::Volume;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
    pub weight_init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 5,
            rng_seed: 0,
            weight_init_scale: 1.0,
        }
    }
}

/// One progress record per epoch, fed to the caller's sink.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

/// Learnable state of one layer; `None` for input/relu/pool layers.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    None,
    Conv(ConvParams),
    Fc(FcParams),
}

impl LayerParams {
    pub fn param_count(&self) -> usize {
        match self {
            LayerParams::None => 0,
            LayerParams::Conv(p) => p.param_count(),
            LayerParams::Fc(p) => p.param_count(),
        }
    }

    /// Reads parameter `slot` in canonical order: conv kernels in
    /// `(kernel, y, x, depth)` nesting then biases; fc weights row-major
    /// then biases. This order is shared with checkpoint serialization.
    pub fn get_slot(&self, slot: usize) -> f64 {
        match self {
            LayerParams::None => panic!("layer has no parameters"),
            LayerParams::Conv(p) => {
                let per_kernel = p.kernel(0).len();
                let weight_slots = per_kernel * p.kernel_count();
                if slot < weight_slots {
                    p.kernel(slot / per_kernel).data()[slot % per_kernel]
                } else {
                    p.biases()[slot - weight_slots]
                }
            }
            LayerParams::Fc(p) => {
                let weight_slots = p.weights().len();
                if slot < weight_slots {
                    p.weights()[slot]
                } else {
                    p.biases()[slot - weight_slots]
                }
            }
        }
    }

    pub fn set_slot(&mut self, slot: usize, value: f64) {
        match self {
            LayerParams::None => panic!("layer has no parameters"),
            LayerParams::Conv(p) => {
                let per_kernel = p.kernel(0).len();
                let weight_slots = per_kernel * p.kernel_count();
                if slot < weight_slots {
                    p.kernels_mut()[slot / per_kernel].data_mut()[slot % per_kernel] = value;
                } else {
                    p.biases_mut()[slot - weight_slots] = value;
                }
            }
            LayerParams::Fc(p) => {
                let weight_slots = p.weights().len();
                if slot < weight_slots {
                    p.weights_mut()[slot] = value;
                } else {
                    p.biases_mut()[slot - weight_slots] = value;
                }
            }
        }
    }
}

/// Gradients of one layer, mirroring [`LayerParams`].
#[derive(Debug, Clone)]
pub enum LayerGrads {
    None,
    Conv(ConvGrads),
    Fc(FcGrads),
}

impl LayerGrads {
    /// Reads gradient `slot` in the same canonical order as
    /// [`LayerParams::get_slot`].
    pub fn get_slot(&self, slot: usize) -> f64 {
        match self {
            LayerGrads::None => panic!("layer has no parameters"),
            LayerGrads::Conv(g) => {
                let per_kernel = g.kernels[0].len();
                let weight_slots = per_kernel * g.kernels.len();
                if slot < weight_slots {
                    g.kernels[slot / per_kernel].data()[slot % per_kernel]
                } else {
                    g.biases[slot - weight_slots]
                }
            }
            LayerGrads::Fc(g) => {
                if slot < g.weights.len() {
                    g.weights[slot]
                } else {
                    g.biases[slot - g.weights.len()]
                }
            }
        }
    }
}

/// Per-layer gradients for a whole network, aligned with its layer list.
#[derive(Debug, Clone)]
pub struct NetworkGradients {
    pub layers: Vec<LayerGrads>,
}

impl NetworkGradients {
    /// Adds `other` into `self`, elementwise over the learnable slots.
    /// Input gradients are not accumulated; they only matter per sample.
    pub fn accumulate(&mut self, other: &NetworkGradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Shape(format!(
                "gradient layer counts differ: {} vs {}",
                self.layers.len(),
                other.layers.len()
            )));
        }
        for (mine, theirs) in self.layers.iter_mut().zip(&other.layers) {
            match (mine, theirs) {
                (LayerGrads::None, LayerGrads::None) => {}
                (LayerGrads::Conv(a), LayerGrads::Conv(b)) => {
                    if a.kernels.len() != b.kernels.len() {
                        return Err(Error::Shape("conv gradient kernel counts differ".to_string()));
                    }
                    for (ka, kb) in a.kernels.iter_mut().zip(&b.kernels) {
                        if !ka.same_shape(kb) {
                            return Err(Error::Shape("conv gradient kernel shapes differ".to_string()));
                        }
                        for (x, y) in ka.data_mut().iter_mut().zip(kb.data()) {
                            *x += y;
                        }
                    }
                    for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                        *x += y;
                    }
                }
                (LayerGrads::Fc(a), LayerGrads::Fc(b)) => {
                    if a.weights.len() != b.weights.len() {
                        return Err(Error::Shape("fc gradient sizes differ".to_string()));
                    }
                    for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                        *x += y;
                    }
                    for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                        *x += y;
                    }
                }
                _ => return Err(Error::Shape("gradient layer kinds differ".to_string())),
            }
        }
        Ok(())
    }

    /// Multiplies every learnable slot by `factor` (used to turn batch
    /// sums into batch means).
    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            match layer {
                LayerGrads::None => {}
                LayerGrads::Conv(g) => {
                    for kernel in &mut g.kernels {
                        for x in kernel.data_mut() {
                            *x *= factor;
                        }
                    }
                    for b in &mut g.biases {
                        *b *= factor;
                    }
                }
                LayerGrads::Fc(g) => {
                    for x in &mut g.weights {
                        *x *= factor;
                    }
                    for b in &mut g.biases {
                        *b *= factor;
                    }
                }
            }
        }
    }
}

/// An architecture bound to parameters, with per-layer activations cached
/// by the most recent forward pass.
#[derive(Debug, Clone)]
pub struct Network {
    arch: ArchSpec,
    params: Vec<LayerParams>,
    acts: Option<Vec<Volume>>,
    switches: Vec<Option<SwitchMap>>,
}

impl Network {
    /// Binds parameters to an architecture, checking shape congruence
    /// layer by layer.
    pub fn from_parts(arch: ArchSpec, params: Vec<LayerParams>) -> Result<Self> {
        let report = plan(&arch, 8)?;
        if params.len() != arch.layers.len() {
            return Err(Error::Shape(format!(
                "{} parameter entries for {} layers",
                params.len(),
                arch.layers.len()
            )));
        }
        for (i, (spec, layer_params)) in arch.layers.iter().zip(&params).enumerate() {
            let input_shape = if i == 0 { arch.input_shape() } else { report.layers[i - 1].output };
            match (spec, layer_params) {
                (LayerSpec::Input { .. }, LayerParams::None)
                | (LayerSpec::Relu, LayerParams::None)
                | (LayerSpec::Pool { .. }, LayerParams::None) => {}
                (&LayerSpec::Conv { field, kernels, stride, pad }, LayerParams::Conv(p)) => {
                    if p.field() != field
                        || p.kernel_count() != kernels
                        || p.stride() != stride
                        || p.pad() != pad
                        || p.input_depth() != input_shape.2
                    {
                        return Err(Error::Shape(format!(
                            "layer {i}: conv parameters do not match `{spec}` over input depth {}",
                            input_shape.2
                        )));
                    }
                }
                (&LayerSpec::Fc { outputs }, LayerParams::Fc(p)) => {
                    let n_in = input_shape.0 * input_shape.1 * input_shape.2;
                    if p.inputs() != n_in || p.outputs() != outputs {
                        return Err(Error::Shape(format!(
                            "layer {i}: fc parameters are {}x{}, expected {outputs}x{n_in}",
                            p.outputs(),
                            p.inputs()
                        )));
                    }
                }
                _ => {
                    return Err(Error::Shape(format!(
                        "layer {i}: parameter kind does not match `{spec}`"
                    )))
                }
            }
        }
        let switches = vec![None; arch.layers.len()];
        Ok(Network { arch, params, acts: None, switches })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    /// Per-layer activations of the most recent forward pass, aligned with
    /// the layer list (`activations()[0]` is the input itself).
    pub fn activations(&self) -> Option<&[Volume]> {
        self.acts.as_deref()
    }

    pub fn clear_cache(&mut self) {
        self.acts = None;
        self.switches = vec![None; self.arch.layers.len()];
    }

    /// Total learnable parameter count.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.param_count()).sum()
    }
}

/// Builds a network with fan-in-scaled uniform weights: each weight is
/// drawn from `[-scale * sqrt(1/fan_in), +scale * sqrt(1/fan_in)]` and
/// biases start at zero. Deterministic in `seed`.
pub fn init_network(arch: &ArchSpec, seed: u64, scale: f64) -> Result<Network> {
    if !scale.is_finite() || scale < 0.0 {
        return Err(Error::Precondition(format!(
            "weight init scale must be finite and nonnegative, got {scale}"
        )));
    }
    let report = plan(arch, 8)?;
    let mut rng = SplitMix64::new(seed);
    let mut params = Vec::with_capacity(arch.layers.len());
    for (i, spec) in arch.layers.iter().enumerate() {
        let input_shape = if i == 0 { arch.input_shape() } else { report.layers[i - 1].output };
        let layer = match *spec {
            LayerSpec::Input { .. } | LayerSpec::Relu | LayerSpec::Pool { .. } => LayerParams::None,
            LayerSpec::Conv { field, kernels, stride, pad } => {
                let d_in = input_shape.2;
                let fan_in = field * field * d_in;
                let bound = scale * (1.0 / fan_in as f64).sqrt();
                let kernel_volumes = (0..kernels)
                    .map(|_| {
                        let data = (0..fan_in).map(|_| rng.uniform(-bound, bound)).collect();
                        Volume::from_vec(field, field, d_in, data)
                    })
                    .collect::<Result<Vec<_>>>()?;
                LayerParams::Conv(ConvParams::new(
                    kernel_volumes,
                    vec![0.0; kernels],
                    stride,
                    pad,
                )?)
            }
            LayerSpec::Fc { outputs } => {
                let n_in = input_shape.0 * input_shape.1 * input_shape.2;
                let bound = scale * (1.0 / n_in as f64).sqrt();
                let weights = (0..n_in * outputs).map(|_| rng.uniform(-bound, bound)).collect();
                LayerParams::Fc(FcParams::new(n_in, outputs, weights, vec![0.0; outputs])?)
            }
        };
        params.push(layer);
    }
    Network::from_parts(arch.clone(), params)
}

/// Runs the layer stack over `input`, caching every intermediate
/// activation (and pooling switch map) for a later backward pass. Returns
/// the final activation, a `1x1xN` class-score volume for classifier
/// architectures.
pub fn network_forward(net: &mut Network, input: &Volume) -> Result<Volume> {
    if input.shape() != net.arch.input_shape() {
        return Err(Error::Shape(format!(
            "network input {:?} does not match architecture input {:?}",
            input.shape(),
            net.arch.input_shape()
        )));
    }
    let layer_count = net.arch.layers.len();
    let mut acts: Vec<Volume> = Vec::with_capacity(layer_count);
    let mut switches: Vec<Option<SwitchMap>> = vec![None; layer_count];
    acts.push(input.clone());
    for i in 1..layer_count {
        let out = match (&net.arch.layers[i], &net.params[i]) {
            (LayerSpec::Conv { .. }, LayerParams::Conv(p)) => {
                conv_forward(&acts[i - 1], p).map_err(|e| e.at_layer(i))?
            }
            (LayerSpec::Relu, _) => relu_forward(&acts[i - 1]),
            (&LayerSpec::Pool { kind, window, stride }, _) => {
                let spec = PoolSpec::new(kind, window, stride)?;
                let (out, sw) = pool_forward(&acts[i - 1], &spec).map_err(|e| e.at_layer(i))?;
                switches[i] = Some(sw);
                out
            }
            (LayerSpec::Fc { .. }, LayerParams::Fc(p)) => {
                fc_forward(&acts[i - 1], p).map_err(|e| e.at_layer(i))?
            }
            _ => return Err(Error::State(format!("layer {i}: parameters out of sync"))),
        };
        acts.push(out);
    }
    let output = acts.last().expect("architectures are non-empty").clone();
    net.acts = Some(acts);
    net.switches = switches;
    Ok(output)
}

/// Chains the layer backward passes in reverse order, starting from the
/// loss gradient. Requires a prior forward pass for its cached activations.
pub fn network_backward(net: &Network, loss_grad: &Volume) -> Result<NetworkGradients> {
    let acts = net
        .acts
        .as_ref()
        .ok_or_else(|| Error::State("backward called before any forward pass".to_string()))?;
    let last = acts.last().expect("non-empty");
    if loss_grad.shape() != last.shape() {
        return Err(Error::Shape(format!(
            "loss gradient {:?} does not match network output {:?}",
            loss_grad.shape(),
            last.shape()
        )));
    }

    let layer_count = net.arch.layers.len();
    let mut grads: Vec<LayerGrads> = (0..layer_count).map(|_| LayerGrads::None).collect();
    let mut upstream = loss_grad.clone();
    for i in (1..layer_count).rev() {
        let input = &acts[i - 1];
        upstream = match (&net.arch.layers[i], &net.params[i]) {
            (LayerSpec::Conv { .. }, LayerParams::Conv(p)) => {
                let g = conv_backward(input, p, &upstream).map_err(|e| e.at_layer(i))?;
                let next = g.input.clone();
                grads[i] = LayerGrads::Conv(g);
                next
            }
            (LayerSpec::Relu, _) => relu_backward(input, &upstream).map_err(|e| e.at_layer(i))?,
            (&LayerSpec::Pool { kind, window, stride }, _) => {
                let spec = PoolSpec::new(kind, window, stride)?;
                let switches = net.switches[i]
                    .as_ref()
                    .ok_or_else(|| Error::State(format!("layer {i}: no cached switch map")))?;
                pool_backward(input, &spec, switches, &upstream).map_err(|e| e.at_layer(i))?
            }
            (LayerSpec::Fc { .. }, LayerParams::Fc(p)) => {
                let g = fc_backward(input, p, &upstream).map_err(|e| e.at_layer(i))?;
                let next = g.input.clone();
                grads[i] = LayerGrads::Fc(g);
                next
            }
            _ => return Err(Error::State(format!("layer {i}: parameters out of sync"))),
        };
    }
    Ok(NetworkGradients { layers: grads })
}

/// `p <- p - learning_rate * g` for every learnable parameter, in place.
pub fn sgd_step(net: &mut Network, grads: &NetworkGradients, learning_rate: f64) -> Result<()> {
    if grads.layers.len() != net.params.len() {
        return Err(Error::Shape(format!(
            "{} gradient layers for {} parameter layers",
            grads.layers.len(),
            net.params.len()
        )));
    }
    for (params, grad) in net.params.iter_mut().zip(&grads.layers) {
        match (params, grad) {
            (LayerParams::None, LayerGrads::None) => {}
            (LayerParams::Conv(p), LayerGrads::Conv(g)) => {
                if p.kernel_count() != g.kernels.len() {
                    return Err(Error::Shape("conv gradient kernel count mismatch".to_string()));
                }
                for (kernel, dkernel) in p.kernels_mut().iter_mut().zip(&g.kernels) {
                    if !kernel.same_shape(dkernel) {
                        return Err(Error::Shape("conv gradient kernel shape mismatch".to_string()));
                    }
                    for (w, dw) in kernel.data_mut().iter_mut().zip(dkernel.data()) {
                        *w -= learning_rate * dw;
                    }
                }
                for (b, db) in p.biases_mut().iter_mut().zip(&g.biases) {
                    *b -= learning_rate * db;
                }
            }
            (LayerParams::Fc(p), LayerGrads::Fc(g)) => {
                if p.weights().len() != g.weights.len() || p.biases().len() != g.biases.len() {
                    return Err(Error::Shape("fc gradient size mismatch".to_string()));
                }
                for (w, dw) in p.weights_mut().iter_mut().zip(&g.weights) {
                    *w -= learning_rate * dw;
                }
                for (b, db) in p.biases_mut().iter_mut().zip(&g.biases) {
                    *b -= learning_rate * db;
                }
            }
            _ => return Err(Error::Shape("gradient layer kind mismatch".to_string())),
        }
    }
    Ok(())
}

/// Index of the highest score; ties go to the lowest class index.
pub fn argmax(scores: &Volume) -> usize {
    let mut best = 0;
    for (i, &v) in scores.data().iter().enumerate() {
        if v > scores.data()[best] {
            best = i;
        }
    }
    best
}

/// Minibatch SGD: each epoch shuffles with a seed drawn from the config's
/// split-mix stream, averages gradients over each batch, and applies one
/// update per batch. Returns (and feeds to `sink`) one record per epoch
/// with the mean sample loss and running training accuracy.
pub fn train<F>(
    net: &mut Network,
    data: &Dataset,
    cfg: &TrainConfig,
    mut sink: F,
) -> Result<Vec<EpochRecord>>
where
    F: FnMut(&EpochRecord),
{
    if data.is_empty() {
        return Err(Error::Precondition("training dataset is empty".to_string()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Precondition("batch size must be at least 1".to_string()));
    }
    if !cfg.learning_rate.is_finite() {
        return Err(Error::Precondition("learning rate must be finite".to_string()));
    }

    let mut rng = SplitMix64::new(cfg.rng_seed);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let epoch_seed = rng.next_u64();
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_index, (images, labels)) in
            batches(data, cfg.batch_size, epoch_seed).iter().enumerate()
        {
            let mut accumulated: Option<NetworkGradients> = None;
            for (image, &label) in images.iter().zip(labels) {
                let scores =
                    network_forward(net, image).map_err(|e| e.at_batch(batch_index))?;
                let (loss, loss_grad) = softmax_cross_entropy(&scores, label as usize)
                    .map_err(|e| e.at_batch(batch_index))?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!("loss diverged to {loss}"))
                        .at_batch(batch_index));
                }
                loss_sum += loss;
                if argmax(&scores) == label as usize {
                    correct += 1;
                }
                let grads =
                    network_backward(net, &loss_grad).map_err(|e| e.at_batch(batch_index))?;
                match accumulated.as_mut() {
                    None => accumulated = Some(grads),
                    Some(acc) => acc.accumulate(&grads).map_err(|e| e.at_batch(batch_index))?,
                }
            }
            let mut grads = accumulated.expect("batches are never empty");
            grads.scale(1.0 / images.len() as f64);
            sgd_step(net, &grads, cfg.learning_rate).map_err(|e| e.at_batch(batch_index))?;
        }
        let n = data.len() as f64;
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / n,
            accuracy: correct as f64 / n,
        };
        sink(&record);
        log.push(record);
    }
    Ok(log)
}

/// Fraction of samples whose argmax score equals the label.
pub fn evaluate(net: &mut Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Precondition("evaluation dataset is empty".to_string()));
    }
    let mut correct = 0usize;
    for (image, &label) in data.images().iter().zip(data.labels()) {
        let scores = network_forward(net, image)?;
        if argmax(&scores) == label as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Central-difference check of the whole network's analytic gradients on
/// one `(input, label)` pair: every parameter is perturbed by `+/-epsilon`
/// and the loss slope compared against backpropagation. Returns the
/// maximum relative error over all parameters.
pub fn grad_check(net: &mut Network, input: &Volume, label: usize, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Precondition(format!(
            "epsilon must be a positive finite real, got {epsilon}"
        )));
    }

    let loss_of = |net: &mut Network| -> Result<f64> {
        let scores = network_forward(net, input)?;
        let (loss, _) = softmax_cross_entropy(&scores, label)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss is {loss}")));
        }
        Ok(loss)
    };

    let scores = network_forward(net, input)?;
    let (loss, loss_grad) = softmax_cross_entropy(&scores, label)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is {loss}")));
    }
    let analytic = network_backward(net, &loss_grad)?;

    let mut worst: f64 = 0.0;
    for layer in 0..net.params.len() {
        let slots = net.params[layer].param_count();
        for slot in 0..slots {
            let original = net.params[layer].get_slot(slot);
            net.params[layer].set_slot(slot, original + epsilon);
            let loss_plus = loss_of(net)?;
            net.params[layer].set_slot(slot, original - epsilon);
            let loss_minus = loss_of(net)?;
            net.params[layer].set_slot(slot, original);

            let fd = (loss_plus - loss_minus) / (2.0 * epsilon);
            let a = analytic.layers[layer].get_slot(slot);
            let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
