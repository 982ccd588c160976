//! Architecture planning: shape propagation, parameter accounting,
//! activation-memory estimates, and recipe lints.
//!
//! Everything here is a pure function of the [`ArchSpec`], so a plan can be
//! inspected before any parameter memory is allocated.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::layers::PoolKind;

/// One layer of an architecture, hyperparameters only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum LayerSpec {
    Input { height: usize, width: usize, depth: usize },
    /// `field` is the receptive field size R, `kernels` the output depth K,
    /// plus stride S and zero padding Z.
    Conv { field: usize, kernels: usize, stride: usize, pad: usize },
    Relu,
    Pool { kind: PoolKind, window: usize, stride: usize },
    Fc { outputs: usize },
}

impl LayerSpec {
    fn validate(&self, index: usize) -> Result<()> {
        let complain = |msg: String| Err(Error::Arch(format!("layer {index}: {msg}")));
        match *self {
            LayerSpec::Input { height, width, depth } => {
                if height == 0 || width == 0 || depth == 0 {
                    return complain(format!(
                        "input dimensions must be positive, got {height}x{width}x{depth}"
                    ));
                }
            }
            LayerSpec::Conv { field, kernels, stride, .. } => {
                if field == 0 || kernels == 0 || stride == 0 {
                    return complain(format!(
                        "conv hyperparameters must be positive (field {field}, kernels {kernels}, stride {stride})"
                    ));
                }
            }
            LayerSpec::Relu => {}
            LayerSpec::Pool { window, stride, .. } => {
                if window == 0 || stride == 0 {
                    return complain(format!(
                        "pool hyperparameters must be positive (window {window}, stride {stride})"
                    ));
                }
            }
            LayerSpec::Fc { outputs } => {
                if outputs == 0 {
                    return complain("fc output count must be positive".to_string());
                }
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for LayerSpec {
    /// The canonical one-line textual form, as used in architecture files.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayerSpec::Input { height, width, depth } => {
                write!(f, "input {height} {width} {depth}")
            }
            LayerSpec::Conv { field, kernels, stride, pad } => {
                write!(f, "conv {field} {kernels} {stride} {pad}")
            }
            LayerSpec::Relu => write!(f, "relu"),
            LayerSpec::Pool { kind, window, stride } => {
                write!(f, "pool {kind} {window} {stride}")
            }
            LayerSpec::Fc { outputs } => write!(f, "fc {outputs}"),
        }
    }
}

/// A named, ordered stack of layers beginning with exactly one input layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArchSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl ArchSpec {
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = ArchSpec { name: name.into(), layers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Arch("architecture has no layers".to_string()));
        }
        if !matches!(self.layers[0], LayerSpec::Input { .. }) {
            return Err(Error::Arch("first layer must be an input layer".to_string()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 && matches!(layer, LayerSpec::Input { .. }) {
                return Err(Error::Arch(format!(
                    "layer {i}: only the first layer may be an input layer"
                )));
            }
            layer.validate(i)?;
        }
        Ok(())
    }

    /// Shape `(height, width, depth)` of the input layer.
    pub fn input_shape(&self) -> (usize, usize, usize) {
        match self.layers[0] {
            LayerSpec::Input { height, width, depth } => (height, width, depth),
            _ => unreachable!("validated architectures start with an input layer"),
        }
    }
}

/// Spatial output size of a windowed layer along one axis:
/// `((v - r + 2z) / s) + 1`, where `v` is the input extent, `r` the window,
/// `z` the zero padding and `s` the stride. The division must be exact,
/// otherwise the windows cannot fit neatly across the input.
pub fn output_shape(v: usize, r: usize, z: usize, s: usize) -> Result<usize> {
    if v == 0 || r == 0 || s == 0 {
        return Err(Error::Precondition(format!(
            "output_shape requires positive v, r, s (got v={v}, r={r}, s={s})"
        )));
    }
    let span = v + 2 * z;
    if span < r {
        return Err(Error::Geometry { v, r, z });
    }
    let numerator = span - r;
    if numerator % s != 0 {
        return Err(Error::StrideFit { v, r, z, s });
    }
    Ok(numerator / s + 1)
}

/// Input extent visible to one neuron through a stack of convolutional
/// layers, given `(field, stride)` per layer. A single 3x3 layer sees 3,
/// two stacked see 5, three see 7.
pub fn effective_receptive_field(convs: &[(usize, usize)]) -> usize {
    assert!(!convs.is_empty(), "receptive field of an empty stack");
    let (mut rf, mut jump) = (convs[0].0, convs[0].1);
    for &(field, stride) in &convs[1..] {
        rf += (field - 1) * jump;
        jump *= stride;
    }
    rf
}

/// Per-layer row of a [`PlanReport`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerReport {
    pub index: usize,
    /// Canonical textual form of the layer.
    pub layer: String,
    /// Output volume shape `(height, width, depth)`.
    pub output: (usize, usize, usize),
    pub weights: usize,
    pub biases: usize,
    /// `weights + biases`.
    pub params: usize,
    /// Output element count `height * width * depth`.
    pub activations: usize,
}

/// Shapes, parameter counts, and activation-memory totals for one
/// architecture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanReport {
    pub arch: String,
    pub layers: Vec<LayerReport>,
    pub total_params: usize,
    pub total_activations: usize,
    pub bytes_per_element: usize,
    /// `total_activations * bytes_per_element`.
    pub activation_bytes: usize,
}

/// Propagates shapes layer by layer and accounts parameters and
/// activations. Fails with the offending layer index if a conv or pool
/// layer cannot fit its input.
pub fn plan(arch: &ArchSpec, bytes_per_element: usize) -> Result<PlanReport> {
    arch.validate()?;
    if bytes_per_element == 0 {
        return Err(Error::Precondition(
            "bytes_per_element must be positive".to_string(),
        ));
    }

    let mut layers = Vec::with_capacity(arch.layers.len());
    let mut shape = arch.input_shape();
    for (index, layer) in arch.layers.iter().enumerate() {
        let (h, w, d) = shape;
        let (output, weights, biases) = match *layer {
            LayerSpec::Input { height, width, depth } => ((height, width, depth), 0, 0),
            LayerSpec::Conv { field, kernels, stride, pad } => {
                let oh = output_shape(h, field, pad, stride).map_err(|e| e.at_layer(index))?;
                let ow = output_shape(w, field, pad, stride).map_err(|e| e.at_layer(index))?;
                ((oh, ow, kernels), field * field * d * kernels, kernels)
            }
            LayerSpec::Relu => ((h, w, d), 0, 0),
            LayerSpec::Pool { window, stride, .. } => {
                let oh = output_shape(h, window, 0, stride).map_err(|e| e.at_layer(index))?;
                let ow = output_shape(w, window, 0, stride).map_err(|e| e.at_layer(index))?;
                ((oh, ow, d), 0, 0)
            }
            LayerSpec::Fc { outputs } => ((1, 1, outputs), outputs * h * w * d, outputs),
        };
        layers.push(LayerReport {
            index,
            layer: layer.to_string(),
            output,
            weights,
            biases,
            params: weights + biases,
            activations: output.0 * output.1 * output.2,
        });
        shape = output;
    }

    let total_params = layers.iter().map(|l| l.params).sum();
    let total_activations = layers.iter().map(|l| l.activations).sum();
    Ok(PlanReport {
        arch: arch.name.clone(),
        layers,
        total_params,
        total_activations,
        bytes_per_element,
        activation_bytes: total_activations * bytes_per_element,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Severity {
    Error,
    Warning,
    Hint,
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Hint => "hint",
        })
    }
}

/// One finding from [`lint`], citing a rule from [`RULEBOOK`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LintDiagnostic {
    pub severity: Severity,
    pub rule: &'static str,
    pub layer: usize,
    pub message: String,
}

pub const RULE_POW2: &str = "RECIPE-POW2";
pub const RULE_PAD: &str = "RECIPE-PAD";
pub const RULE_STRIDE1: &str = "RECIPE-STRIDE1";
pub const RULE_POOLK: &str = "RECIPE-POOLK";
pub const RULE_STACK: &str = "RECIPE-STACK";
pub const RULE_FIT: &str = "FIT-ERROR";
pub const RULE_ARCH: &str = "ARCH-INVALID";

/// Every rule [`lint`] can cite, with a one-line description.
pub const RULEBOOK: &[(&str, &str)] = &[
    (RULE_POW2, "input spatial size should be recursively divisible by two (32, 64, 96, 128, 224, ...)"),
    (RULE_PAD, "conv zero padding should equal (field - 1) / 2 so dimensions are preserved"),
    (RULE_STRIDE1, "small conv filters (field <= 5) should use stride one"),
    (RULE_POOLK, "pooling windows above 3 usually greatly decrease performance"),
    (RULE_STACK, "a large conv filter (field >= 7) is better split into stacked 3x3 layers"),
    (RULE_FIT, "a conv or pool layer does not fit its input at the given stride/padding"),
    (RULE_ARCH, "the architecture violates a structural invariant"),
];

/// Checks an architecture against the recipe rulebook. Fit failures are
/// reported as error-severity diagnostics rather than returned as errors.
pub fn lint(arch: &ArchSpec) -> Vec<LintDiagnostic> {
    let mut diags = Vec::new();

    match plan(arch, 1) {
        Ok(_) => {}
        Err(Error::AtLayer { index, source }) => diags.push(LintDiagnostic {
            severity: Severity::Error,
            rule: RULE_FIT,
            layer: index,
            message: source.to_string(),
        }),
        Err(other) => {
            diags.push(LintDiagnostic {
                severity: Severity::Error,
                rule: RULE_ARCH,
                layer: 0,
                message: other.to_string(),
            });
            return diags;
        }
    }

    for (index, layer) in arch.layers.iter().enumerate() {
        match *layer {
            LayerSpec::Input { height, width, .. } => {
                // "Recursively divisible by two" is read as divisible by 32,
                // which admits every size on the recipe list.
                if height % 32 != 0 || width % 32 != 0 {
                    diags.push(LintDiagnostic {
                        severity: Severity::Warning,
                        rule: RULE_POW2,
                        layer: index,
                        message: format!(
                            "input {height}x{width} is not recursively divisible by two; \
                             common sizes are 32, 64, 96, 128 and 224"
                        ),
                    });
                }
            }
            LayerSpec::Conv { field, stride, pad, .. } => {
                if 2 * pad != field - 1 {
                    diags.push(LintDiagnostic {
                        severity: Severity::Hint,
                        rule: RULE_PAD,
                        layer: index,
                        message: format!(
                            "zero padding {pad} does not equal (field - 1) / 2 for field {field}, \
                             so this layer reconfigures the spatial dimensions"
                        ),
                    });
                }
                if field <= 5 && stride > 1 {
                    diags.push(LintDiagnostic {
                        severity: Severity::Hint,
                        rule: RULE_STRIDE1,
                        layer: index,
                        message: format!(
                            "small filter (field {field}) with stride {stride}; set stride to one"
                        ),
                    });
                }
                if field >= 7 {
                    diags.push(LintDiagnostic {
                        severity: Severity::Hint,
                        rule: RULE_STACK,
                        layer: index,
                        message: format!(
                            "field {field} conv could be split into stacked 3x3 layers"
                        ),
                    });
                }
            }
            LayerSpec::Pool { window, .. } => {
                if window > 3 {
                    diags.push(LintDiagnostic {
                        severity: Severity::Warning,
                        rule: RULE_POOLK,
                        layer: index,
                        message: format!(
                            "pooling window {window} above 3 usually greatly decreases performance"
                        ),
                    });
                }
            }
            LayerSpec::Relu | LayerSpec::Fc { .. } => {}
        }
    }

    diags.sort_by(|a, b| (a.layer, a.rule, a.severity).cmp(&(b.layer, b.rule, b.severity)));
    diags
}
