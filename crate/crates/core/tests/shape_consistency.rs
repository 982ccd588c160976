//! Cross-checks between the planner's static shape chain and the layers'
//! actual runtime behavior.

use convnet_core::layers::{conv_forward, pool_forward, ConvParams, PoolKind, PoolSpec};
use convnet_core::planner::{output_shape, plan, ArchSpec, LayerSpec};
use convnet_core::rng::SplitMix64;
use convnet_core::trainer::{init_network, network_forward};
use convnet_core::volume::Volume;

use proptest::prelude::*;

proptest! {
    /// Conv forward agrees with the sizing formula whenever the formula
    /// accepts the geometry.
    #[test]
    fn conv_forward_obeys_the_sizing_formula(
        h in 1usize..12, w in 1usize..12, d in 1usize..3,
        r in 1usize..5, k in 1usize..3, s in 1usize..4, z in 0usize..3
    ) {
        let oh = output_shape(h, r, z, s);
        let ow = output_shape(w, r, z, s);
        let input = Volume::zeros(h, w, d).unwrap();
        let params = ConvParams::zeros(r, d, k, s, z).unwrap();
        match (oh, ow) {
            (Ok(oh), Ok(ow)) => {
                let out = conv_forward(&input, &params).unwrap();
                prop_assert_eq!(out.shape(), (oh, ow, k));
            }
            _ => prop_assert!(conv_forward(&input, &params).is_err()),
        }
    }

    /// Pool forward agrees with the sizing formula at zero padding and
    /// preserves depth.
    #[test]
    fn pool_forward_obeys_the_sizing_formula(
        h in 1usize..12, w in 1usize..12, d in 1usize..4,
        window in 1usize..4, stride in 1usize..4, kind in 0usize..4
    ) {
        let spec = PoolSpec::new(
            [PoolKind::Max, PoolKind::Average, PoolKind::L2Norm, PoolKind::L1Norm][kind],
            window,
            stride,
        ).unwrap();
        let input = Volume::zeros(h, w, d).unwrap();
        match (output_shape(h, window, 0, stride), output_shape(w, window, 0, stride)) {
            (Ok(oh), Ok(ow)) => {
                let (out, _) = pool_forward(&input, &spec).unwrap();
                prop_assert_eq!(out.shape(), (oh, ow, d));
            }
            _ => prop_assert!(pool_forward(&input, &spec).is_err()),
        }
    }

    /// Conv parameter totals do not depend on the input's spatial size.
    #[test]
    fn conv_parameters_ignore_spatial_size(
        h1 in 8usize..33, w1 in 8usize..33, h2 in 8usize..33, w2 in 8usize..33,
        d in 1usize..4, k in 1usize..8
    ) {
        let build = |h: usize, w: usize| {
            let arch = ArchSpec::new(
                "conv-only",
                vec![
                    LayerSpec::Input { height: h, width: w, depth: d },
                    LayerSpec::Conv { field: 3, kernels: k, stride: 1, pad: 1 },
                    LayerSpec::Conv { field: 3, kernels: k, stride: 1, pad: 1 },
                ],
            )
            .unwrap();
            plan(&arch, 4).unwrap().total_params
        };
        prop_assert_eq!(build(h1, w1), build(h2, w2));
        prop_assert_eq!(build(h1, w1), 3 * 3 * d * k + k + 3 * 3 * k * k + k);
    }
}

/// Builds a random but always-valid architecture by construction: every
/// appended layer is checked to fit the running shape.
fn random_valid_arch(seed: u64) -> ArchSpec {
    let mut rng = SplitMix64::new(seed);
    let mut pick = |lo: usize, hi: usize| lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize;

    let (mut h, mut w, mut d) = (pick(4, 20), pick(4, 20), pick(1, 3));
    let mut layers = vec![LayerSpec::Input { height: h, width: w, depth: d }];
    let body = pick(0, 5);
    for _ in 0..body {
        match pick(0, 3) {
            0 => {
                // Conv with geometry sampled until it fits both axes.
                let mut placed = false;
                for _ in 0..10 {
                    let r = pick(1, 4usize.min(h).min(w));
                    let z = pick(0, 2);
                    let s = pick(1, 3);
                    if let (Ok(oh), Ok(ow)) = (output_shape(h, r, z, s), output_shape(w, r, z, s)) {
                        let kernels = pick(1, 4);
                        layers.push(LayerSpec::Conv { field: r, kernels, stride: s, pad: z });
                        h = oh;
                        w = ow;
                        d = kernels;
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    layers.push(LayerSpec::Relu);
                }
            }
            1 => layers.push(LayerSpec::Relu),
            2 => {
                let mut placed = false;
                for _ in 0..10 {
                    let window = pick(1, 3usize.min(h).min(w));
                    let stride = pick(1, 3);
                    if let (Ok(oh), Ok(ow)) =
                        (output_shape(h, window, 0, stride), output_shape(w, window, 0, stride))
                    {
                        let kind = [PoolKind::Max, PoolKind::Average, PoolKind::L2Norm, PoolKind::L1Norm]
                            [pick(0, 3)];
                        layers.push(LayerSpec::Pool { kind, window, stride });
                        h = oh;
                        w = ow;
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    layers.push(LayerSpec::Relu);
                }
            }
            _ => {
                let outputs = pick(1, 8);
                layers.push(LayerSpec::Fc { outputs });
                h = 1;
                w = 1;
                d = outputs;
            }
        }
    }
    ArchSpec::new(format!("random-{seed}"), layers).unwrap()
}

/// The planner's shape chain equals the shapes a real forward pass caches,
/// volume for volume.
#[test]
fn plan_matches_forward_activations_on_random_architectures() {
    for seed in 0..60 {
        let arch = random_valid_arch(seed);
        let report = plan(&arch, 4).unwrap();
        let mut net = init_network(&arch, seed ^ 0xA5A5, 0.5).unwrap();
        let (h, w, d) = arch.input_shape();
        let input = Volume::zeros(h, w, d).unwrap();
        network_forward(&mut net, &input).unwrap();
        let acts = net.activations().unwrap();
        assert_eq!(acts.len(), report.layers.len(), "arch {}", arch.name);
        for (act, layer) in acts.iter().zip(&report.layers) {
            assert_eq!(
                act.shape(),
                layer.output,
                "arch {} layer {} ({})",
                arch.name,
                layer.index,
                layer.layer
            );
        }
        assert_eq!(net.param_count(), report.total_params, "arch {}", arch.name);
    }
}
