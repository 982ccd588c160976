//! Windowed downsampling over each activation map: max, average, and
//! L1/L2-norm reductions. Depth is always preserved.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::planner::output_shape;
use crate::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PoolKind {
    Max,
    Average,
    L2Norm,
    L1Norm,
}

impl PoolKind {
    /// Token used in architecture files.
    pub fn token(self) -> &'static str {
        match self {
            PoolKind::Max => "max",
            PoolKind::Average => "avg",
            PoolKind::L2Norm => "l2",
            PoolKind::L1Norm => "l1",
        }
    }

    pub fn from_token(token: &str) -> Option<PoolKind> {
        match token {
            "max" => Some(PoolKind::Max),
            "avg" => Some(PoolKind::Average),
            "l2" => Some(PoolKind::L2Norm),
            "l1" => Some(PoolKind::L1Norm),
            _ => None,
        }
    }
}

impl std::fmt::Display for PoolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// Pooling hyperparameters. `window > stride` gives overlapping pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub kind: PoolKind,
    pub window: usize,
    pub stride: usize,
}

impl PoolSpec {
    pub fn new(kind: PoolKind, window: usize, stride: usize) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::Dimension(format!(
                "pool window and stride must be positive, got {window}/{stride}"
            )));
        }
        Ok(PoolSpec { kind, window, stride })
    }
}

/// Argmax coordinates recorded by max pooling, one `(x, y)` input position
/// per output element in flat output order. The first maximum in row-major
/// window order wins ties, so the backward routing is deterministic.
/// Empty for the other pooling kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchMap {
    coords: Vec<(usize, usize)>,
}

impl SwitchMap {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Input `(x, y)` that produced output element `flat`.
    pub fn coord(&self, flat: usize) -> (usize, usize) {
        self.coords[flat]
    }
}

fn pool_output_dims(input: &Volume, spec: &PoolSpec) -> Result<(usize, usize)> {
    let oh = output_shape(input.height(), spec.window, 0, spec.stride)?;
    let ow = output_shape(input.width(), spec.window, 0, spec.stride)?;
    Ok((oh, ow))
}

/// Reduces each window of each activation map to one value. Max pooling
/// additionally records its argmax positions for the backward pass.
pub fn pool_forward(input: &Volume, spec: &PoolSpec) -> Result<(Volume, SwitchMap)> {
    let (out_h, out_w) = pool_output_dims(input, spec)?;
    let depth = input.depth();
    let mut out = Volume::zeros(out_h, out_w, depth)?;
    let mut coords = Vec::new();
    if spec.kind == PoolKind::Max {
        coords.reserve(out_h * out_w * depth);
    }

    let out_data = out.data_mut();
    for oy in 0..out_h {
        for ox in 0..out_w {
            for d in 0..depth {
                let (y0, x0) = (oy * spec.stride, ox * spec.stride);
                let value = match spec.kind {
                    PoolKind::Max => {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_at = (x0, y0);
                        for ky in 0..spec.window {
                            for kx in 0..spec.window {
                                let v = input.get(x0 + kx, y0 + ky, d);
                                if v > best {
                                    best = v;
                                    best_at = (x0 + kx, y0 + ky);
                                }
                            }
                        }
                        coords.push(best_at);
                        best
                    }
                    PoolKind::Average => {
                        let mut sum = 0.0;
                        for ky in 0..spec.window {
                            for kx in 0..spec.window {
                                sum += input.get(x0 + kx, y0 + ky, d);
                            }
                        }
                        sum / (spec.window * spec.window) as f64
                    }
                    PoolKind::L2Norm => {
                        let mut sum = 0.0;
                        for ky in 0..spec.window {
                            for kx in 0..spec.window {
                                let v = input.get(x0 + kx, y0 + ky, d);
                                sum += v * v;
                            }
                        }
                        sum.sqrt()
                    }
                    PoolKind::L1Norm => {
                        let mut sum = 0.0;
                        for ky in 0..spec.window {
                            for kx in 0..spec.window {
                                sum += input.get(x0 + kx, y0 + ky, d).abs();
                            }
                        }
                        sum
                    }
                };
                out_data[(oy * out_w + ox) * depth + d] = value;
            }
        }
    }
    Ok((out, SwitchMap { coords }))
}

/// Routes upstream gradients back through the pooling reduction:
/// max sends each value entirely to its recorded argmax cell (summing where
/// overlapping windows share a cell), average spreads uniformly, the norm
/// kinds weight by `x/out` and `sign(x)` respectively.
pub fn pool_backward(
    input: &Volume,
    spec: &PoolSpec,
    switches: &SwitchMap,
    upstream: &Volume,
) -> Result<Volume> {
    let (out_h, out_w) = pool_output_dims(input, spec)?;
    let depth = input.depth();
    if upstream.shape() != (out_h, out_w, depth) {
        return Err(Error::Shape(format!(
            "pool backward: upstream {:?} does not match output {:?}",
            upstream.shape(),
            (out_h, out_w, depth)
        )));
    }
    if spec.kind == PoolKind::Max && switches.len() != upstream.len() {
        return Err(Error::State(format!(
            "switch map has {} entries for {} outputs",
            switches.len(),
            upstream.len()
        )));
    }

    let mut grad = Volume::zeros(input.height(), input.width(), depth)?;
    for oy in 0..out_h {
        for ox in 0..out_w {
            for d in 0..depth {
                let flat = (oy * out_w + ox) * depth + d;
                let u = upstream.data()[flat];
                let (y0, x0) = (oy * spec.stride, ox * spec.stride);
                match spec.kind {
                    PoolKind::Max => {
                        let (x, y) = switches.coord(flat);
                        let i = grad.index(x, y, d);
                        grad.data_mut()[i] += u;
                    }
                    PoolKind::Average => {
                        let share = u / (spec.window * spec.window) as f64;
                        for ky in 0..spec.window {
                            for kx in 0..spec.window {
                                let i = grad.index(x0 + kx, y0 + ky, d);
                                grad.data_mut()[i] += share;
                            }
                        }
                    }
                    PoolKind::L2Norm => {
                        let mut sum = 0.0;
                        for ky in 0..spec.window {
                            for kx in 0..spec.window {
                                let v = input.get(x0 + kx, y0 + ky, d);
                                sum += v * v;
                            }
                        }
                        let out = sum.sqrt();
                        if out != 0.0 {
                            for ky in 0..spec.window {
                                for kx in 0..spec.window {
                                    let v = input.get(x0 + kx, y0 + ky, d);
                                    let i = grad.index(x0 + kx, y0 + ky, d);
                                    grad.data_mut()[i] += u * v / out;
                                }
                            }
                        }
                    }
                    PoolKind::L1Norm => {
                        for ky in 0..spec.window {
                            for kx in 0..spec.window {
                                let v = input.get(x0 + kx, y0 + ky, d);
                                let sign = if v > 0.0 {
                                    1.0
                                } else if v < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                };
                                let i = grad.index(x0 + kx, y0 + ky, d);
                                grad.data_mut()[i] += u * sign;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{random_volume, rel_err};

    fn spec(kind: PoolKind, window: usize, stride: usize) -> PoolSpec {
        PoolSpec::new(kind, window, stride).unwrap()
    }

    #[test]
    fn max_pool_2x2_quarters_the_activations() {
        let input = random_volume(4, 4, 1, 1, -1.0, 1.0);
        let (out, _) = pool_forward(&input, &spec(PoolKind::Max, 2, 2)).unwrap();
        assert_eq!(out.shape(), (2, 2, 1));
        assert_eq!(out.len() * 4, input.len());
    }

    #[test]
    fn average_of_constant_is_constant() {
        let input = Volume::new(6, 6, 2, 3.25).unwrap();
        let (out, _) = pool_forward(&input, &spec(PoolKind::Average, 2, 2)).unwrap();
        assert!(out.data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn overlapping_max_matches_brute_force_scan() {
        // window 3, stride 2 over a 7x7 slice gives a 3x3 output.
        let input = random_volume(7, 7, 1, 42, -5.0, 5.0);
        let (out, _) = pool_forward(&input, &spec(PoolKind::Max, 3, 2)).unwrap();
        assert_eq!(out.shape(), (3, 3, 1));
        for oy in 0..3 {
            for ox in 0..3 {
                let mut best = f64::NEG_INFINITY;
                for ky in 0..3 {
                    for kx in 0..3 {
                        best = best.max(input.get(ox * 2 + kx, oy * 2 + ky, 0));
                    }
                }
                assert_eq!(out.get(ox, oy, 0), best);
            }
        }
    }

    #[test]
    fn forward_rejects_bad_fit() {
        let input = Volume::zeros(5, 5, 1).unwrap();
        assert!(matches!(
            pool_forward(&input, &spec(PoolKind::Max, 2, 2)),
            Err(Error::StrideFit { .. })
        ));
    }

    #[test]
    fn forward_rejects_window_larger_than_input() {
        let input = Volume::zeros(3, 3, 1).unwrap();
        assert!(matches!(
            pool_forward(&input, &spec(PoolKind::Max, 4, 1)),
            Err(Error::Geometry { .. })
        ));
    }

    #[test]
    fn max_ties_break_to_first_in_row_major_order() {
        let input = Volume::new(2, 2, 1, 1.5).unwrap();
        let (_, switches) = pool_forward(&input, &spec(PoolKind::Max, 2, 2)).unwrap();
        assert_eq!(switches.coord(0), (0, 0));
    }

    #[test]
    fn l1_and_l2_norm_reductions() {
        let input = Volume::from_vec(2, 2, 1, vec![3.0, -4.0, 0.0, 0.0]).unwrap();
        let (l2, _) = pool_forward(&input, &spec(PoolKind::L2Norm, 2, 2)).unwrap();
        assert_eq!(l2.data(), &[5.0]);
        let (l1, _) = pool_forward(&input, &spec(PoolKind::L1Norm, 2, 2)).unwrap();
        assert_eq!(l1.data(), &[7.0]);
    }

    #[test]
    fn max_backward_routes_one_unit_per_window() {
        let input = random_volume(4, 4, 2, 7, -1.0, 1.0);
        let s = spec(PoolKind::Max, 2, 2);
        let (out, switches) = pool_forward(&input, &s).unwrap();
        let upstream = Volume::new(2, 2, 2, 1.0).unwrap();
        let grad = pool_backward(&input, &s, &switches, &upstream).unwrap();
        let ones = grad.data().iter().filter(|&&v| v == 1.0).count();
        let zeros = grad.data().iter().filter(|&&v| v == 0.0).count();
        assert_eq!(ones, out.len());
        assert_eq!(ones + zeros, grad.len());
    }

    #[test]
    fn average_backward_spreads_uniformly() {
        let input = random_volume(4, 4, 1, 8, -1.0, 1.0);
        let s = spec(PoolKind::Average, 2, 2);
        let (_, switches) = pool_forward(&input, &s).unwrap();
        let upstream = Volume::from_vec(2, 2, 1, vec![4.0, 8.0, -4.0, 0.0]).unwrap();
        let grad = pool_backward(&input, &s, &switches, &upstream).unwrap();
        assert_eq!(grad.get(0, 0, 0), 1.0);
        assert_eq!(grad.get(1, 1, 0), 1.0);
        assert_eq!(grad.get(2, 0, 0), 2.0);
        assert_eq!(grad.get(0, 2, 0), -1.0);
        assert_eq!(grad.get(3, 3, 0), 0.0);
    }

    #[test]
    fn backward_rejects_shape_mismatch() {
        let input = Volume::zeros(4, 4, 1).unwrap();
        let s = spec(PoolKind::Max, 2, 2);
        let (_, switches) = pool_forward(&input, &s).unwrap();
        let upstream = Volume::zeros(3, 3, 1).unwrap();
        assert!(matches!(
            pool_backward(&input, &s, &switches, &upstream),
            Err(Error::Shape(_))
        ));
    }

    /// Central-difference check of d(sum(u . pool(x)))/dx for one spec,
    /// skipping inputs whose window maxima are not separated by a margin.
    fn check_backward_with_finite_differences(kind: PoolKind, window: usize, stride: usize, seed: u64) {
        let s = spec(kind, window, stride);
        let input = random_volume(7, 7, 2, seed, 0.05, 1.0);
        let upstream = random_volume(3, 3, 2, seed ^ 1, -1.0, 1.0);
        let (_, switches) = pool_forward(&input, &s).unwrap();
        let analytic = pool_backward(&input, &s, &switches, &upstream).unwrap();
        let eps = 1e-5;
        let loss = |v: &Volume| -> f64 {
            let (out, _) = pool_forward(v, &s).unwrap();
            out.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum()
        };
        let mut worst: f64 = 0.0;
        for i in 0..input.len() {
            let mut plus = input.clone();
            plus.data_mut()[i] += eps;
            let mut minus = input.clone();
            minus.data_mut()[i] -= eps;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            worst = worst.max(rel_err(fd, analytic.data()[i]));
        }
        assert!(worst < 1e-6, "{kind:?}: max relative error {worst}");
    }

    #[test]
    fn overlapping_max_backward_matches_finite_differences() {
        // Seed chosen so every window maximum is unique by a clear margin.
        let s = spec(PoolKind::Max, 3, 2);
        for seed in [2, 3, 4] {
            let input = random_volume(7, 7, 2, seed, 0.05, 1.0);
            let (out, _) = pool_forward(&input, &s).unwrap();
            let mut margins_ok = true;
            for oy in 0..out.height() {
                for ox in 0..out.width() {
                    for d in 0..out.depth() {
                        let best = out.get(ox, oy, d);
                        let mut second = f64::NEG_INFINITY;
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let v = input.get(ox * 2 + kx, oy * 2 + ky, d);
                                if v < best {
                                    second = second.max(v);
                                }
                            }
                        }
                        if best - second <= 1e-3 {
                            margins_ok = false;
                        }
                    }
                }
            }
            if !margins_ok {
                continue;
            }
            check_backward_with_finite_differences(PoolKind::Max, 3, 2, seed);
            return;
        }
        panic!("no seed produced margin-separated window maxima");
    }

    #[test]
    fn average_backward_matches_finite_differences() {
        check_backward_with_finite_differences(PoolKind::Average, 3, 2, 12);
    }

    #[test]
    fn l2_backward_matches_finite_differences() {
        // Inputs are bounded away from zero so the norm is differentiable.
        check_backward_with_finite_differences(PoolKind::L2Norm, 3, 2, 13);
    }

    #[test]
    fn l1_backward_matches_finite_differences() {
        check_backward_with_finite_differences(PoolKind::L1Norm, 3, 2, 14);
    }
}
