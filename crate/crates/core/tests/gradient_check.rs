//! Whole-network finite-difference verification for every architecture
//! template shipped in `arch/`, plus the overfit-one-batch smoke invariant.
//!
//! Finite differences are only trustworthy away from the ReLU kink and
//! away from near-ties between positive max-pool contenders, so the test
//! first constructs a (network, input) pair where every ReLU
//! pre-activation and every pool margin clears 1e-3. ReLU margins are
//! established by nudging the producing layer's biases; pool margins are
//! established by retrying input seeds. Windows whose values are all
//! exactly zero (dead ReLU windows) are fine: their maximum is locally
//! constant, so they cannot perturb the finite-difference slope.

use std::path::PathBuf;

use convnet_core::archfile;
use convnet_core::layers::PoolKind;
use convnet_core::mnist::Dataset;
use convnet_core::planner::{ArchSpec, LayerSpec};
use convnet_core::rng::SplitMix64;
use convnet_core::trainer::{
    grad_check, init_network, network_forward, train, LayerParams, Network, TrainConfig,
};
use convnet_core::volume::Volume;

/// Margin around zero that every ReLU pre-activation must clear. This is
/// attainable by construction (bias nudging).
const RELU_MARGIN: f64 = 1e-3;

/// Minimum gap between the two largest positive contenders of a max-pool
/// window. A 1e-3 gap in every one of the templates' ~2300 windows is
/// statistically unreachable by seed retry, so this check uses the largest
/// margin that random inputs actually attain; `EPSILON` is sized so the
/// finite-difference perturbation reach stays an order of magnitude below
/// it.
const POOL_MARGIN: f64 = 4e-4;

/// Finite-difference step for the whole-network check. Large enough that
/// f64 roundoff on the loss stays below the 1e-5 gate for weakly-live
/// parameters, small enough that no perturbation crosses a margin.
const EPSILON: f64 = 2.5e-6;

fn template(name: &str) -> ArchSpec {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../arch").join(name);
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("cannot read template {}: {e}", path.display()));
    let stem = name.trim_end_matches(".arch");
    archfile::parse(&text, stem).unwrap()
}

fn random_volume(h: usize, w: usize, d: usize, seed: u64) -> Volume {
    let mut rng = SplitMix64::new(seed);
    let data = (0..h * w * d).map(|_| rng.next_f64()).collect();
    Volume::from_vec(h, w, d, data).unwrap()
}

/// Pushes the biases feeding each ReLU until no pre-activation sits within
/// `RELU_MARGIN` of zero. Returns false if a ReLU has no learnable producer or
/// the nudging does not settle.
fn clear_relu_margins(net: &mut Network, input: &Volume) -> bool {
    let layer_count = net.arch().layers.len();
    for i in 1..layer_count {
        if !matches!(net.arch().layers[i], LayerSpec::Relu) {
            continue;
        }
        let mut attempts = 0;
        loop {
            network_forward(net, input).unwrap();
            let pre = &net.activations().unwrap()[i - 1];
            let depth = pre.depth();
            let mut offending = None;
            'scan: for y in 0..pre.height() {
                for x in 0..pre.width() {
                    for c in 0..depth {
                        if pre.get(x, y, c).abs() <= RELU_MARGIN {
                            offending = Some(c);
                            break 'scan;
                        }
                    }
                }
            }
            let Some(channel) = offending else { break };
            attempts += 1;
            if attempts > 2000 {
                return false;
            }
            match &mut net.params_mut()[i - 1] {
                LayerParams::Conv(p) => p.biases_mut()[channel] += 2.05 * RELU_MARGIN,
                LayerParams::Fc(p) => p.biases_mut()[channel] += 2.05 * RELU_MARGIN,
                LayerParams::None => return false,
            }
        }
    }
    true
}

/// True when every max-pool window's two largest *positive* contenders are
/// separated by more than `POOL_MARGIN`. All-zero windows are accepted.
fn pool_margins_hold(net: &mut Network, input: &Volume) -> bool {
    network_forward(net, input).unwrap();
    let acts = net.activations().unwrap().to_vec();
    for (i, layer) in net.arch().layers.iter().enumerate() {
        let &LayerSpec::Pool { kind: PoolKind::Max, window, stride } = layer else {
            continue;
        };
        if window == 1 {
            continue;
        }
        let pre = &acts[i - 1];
        let oh = (pre.height() - window) / stride + 1;
        let ow = (pre.width() - window) / stride + 1;
        for oy in 0..oh {
            for ox in 0..ow {
                for c in 0..pre.depth() {
                    let mut best = f64::NEG_INFINITY;
                    let mut second = f64::NEG_INFINITY;
                    for ky in 0..window {
                        for kx in 0..window {
                            let v = pre.get(ox * stride + kx, oy * stride + ky, c);
                            if v > best {
                                second = best;
                                best = v;
                            } else if v > second {
                                second = v;
                            }
                        }
                    }
                    if best > 0.0 && best - second <= POOL_MARGIN {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Deterministically finds a (network, input) pair satisfying the margins.
/// Init scale 2.0 spreads the pre-activation distribution so clear 1e-3
/// gaps around zero exist even in the deeper layers, while keeping the
/// layer-to-layer gain low enough that a 1e-5 parameter perturbation
/// cannot move any downstream pre-activation across its margin.
fn margin_safe_pair(arch: &ArchSpec) -> (Network, Volume) {
    let (h, w, d) = arch.input_shape();
    let (mut relu_rejects, mut pool_rejects) = (0, 0);
    for seed in 0..256u64 {
        let mut net = init_network(arch, 1000 + seed, 2.0).unwrap();
        let input = random_volume(h, w, d, 2000 + seed);
        if !clear_relu_margins(&mut net, &input) {
            relu_rejects += 1;
            continue;
        }
        if pool_margins_hold(&mut net, &input) {
            println!(
                "{}: margins hold at seed {seed} ({relu_rejects} relu / {pool_rejects} pool rejects)",
                arch.name
            );
            return (net, input);
        }
        pool_rejects += 1;
    }
    panic!(
        "no seed produced margin-separated activations for {} \
         ({relu_rejects} relu rejects, {pool_rejects} pool rejects)",
        arch.name
    );
}

fn check_template_gradients(name: &str) {
    let arch = template(name);
    let (mut net, input) = margin_safe_pair(&arch);
    let err = grad_check(&mut net, &input, 3, EPSILON).unwrap();
    assert!(
        err < 1e-5,
        "{name}: finite-difference max relative error {err} over {} parameters",
        net.param_count()
    );
    println!("{name}: grad check max relative error {err:.3e}");
}

#[test]
fn figure2_template_passes_whole_network_gradient_check() {
    check_template_gradients("figure2.arch");
}

#[test]
fn figure4_template_passes_whole_network_gradient_check() {
    check_template_gradients("figure4.arch");
}

/// Any shipped template can drive the loss on a fixed 8-sample batch below
/// 0.01 within 500 steps at lr 0.1 or 0.01.
#[test]
fn templates_overfit_one_batch() {
    for name in ["figure2.arch", "figure4.arch"] {
        let arch = template(name);
        let (h, w, d) = arch.input_shape();
        let images: Vec<Volume> = (0..8).map(|i| random_volume(h, w, d, 500 + i)).collect();
        let labels: Vec<u8> = (0..8).map(|i| (i % 10) as u8).collect();
        let data = Dataset::new(images, labels, "one-batch").unwrap();

        let mut reached = None;
        'rates: for lr in [0.1, 0.01] {
            let mut net = init_network(&arch, 42, 1.0).unwrap();
            let cfg = TrainConfig {
                learning_rate: lr,
                batch_size: 8,
                epochs: 1,
                rng_seed: 0,
                weight_init_scale: 1.0,
            };
            // One epoch over an 8-sample dataset at batch size 8 is one
            // step; iterate the epoch loop manually up to 500 steps.
            for step in 0..500 {
                let log = train(&mut net, &data, &cfg, |_| {}).unwrap();
                if log[0].mean_loss < 0.01 {
                    reached = Some((lr, step + 1));
                    break 'rates;
                }
            }
        }
        let (lr, steps) = reached.unwrap_or_else(|| panic!("{name} never reached loss < 0.01"));
        println!("{name}: overfit 8-sample batch in {steps} steps at lr {lr}");
    }
}
