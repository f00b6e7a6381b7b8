#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scnn::dataflow::{choose_kc, partition_tiles};
use scnn::simulator::{compress_activations, compress_weights, simulate_scnn_layer, ArchConfig, SimReport};
use scnn::tensors::{apply_relu, gen_synthetic, reference_conv, ValueRange};
use scnn::{DenseTensor, DimRole, LayerShape};

/// A layer with concrete operands and the grid it runs on.
#[derive(Debug, Clone)]
pub struct Case {
    pub layer: LayerShape,
    pub weights: DenseTensor,
    pub input: DenseTensor,
    pub rows: usize,
    pub cols: usize,
}

pub const DENSITIES: [f64; 4] = [0.0, 0.1, 0.5, 1.0];

pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.random_range(1..=16);
    let k = rng.random_range(1..=16);
    let r = [1, 3, 5][rng.random_range(0..3)];
    let s = [1, 3, 5][rng.random_range(0..3)];
    let w = rng.random_range(r.max(1)..=16);
    let h = rng.random_range(s.max(1)..=16);
    let pad = if rng.random_bool(0.5) { r.max(s) / 2 } else { 0 };
    let stride = if rng.random_bool(0.25) { 2 } else { 1 };
    let groups = if c % 2 == 0 && k % 2 == 0 && rng.random_bool(0.2) { 2 } else { 1 };
    let layer = LayerShape::new(format!("case{seed}"), c, k, w, h, r, s)
        .with_pad(pad)
        .with_stride(stride)
        .with_groups(groups);
    let wd = DENSITIES[rng.random_range(0..4)];
    let ad = DENSITIES[rng.random_range(0..4)];
    let rows = rng.random_range(1..=4);
    let cols = rng.random_range(1..=4);
    let weights = gen_synthetic(layer.weight_dims(), wd, rng.random(), ValueRange::WEIGHTS).unwrap();
    let input = gen_synthetic(layer.input_dims(), ad, rng.random(), ValueRange::ACTIVATIONS).unwrap();
    Case { layer, weights, input, rows, cols }
}

pub fn fixed_case(layer: LayerShape, wd: f64, ad: f64, seed: u64, rows: usize, cols: usize) -> Case {
    let weights = gen_synthetic(layer.weight_dims(), wd, seed, ValueRange::WEIGHTS).unwrap();
    let input = gen_synthetic(layer.input_dims(), ad, seed.wrapping_add(1), ValueRange::ACTIVATIONS).unwrap();
    Case { layer, weights, input, rows, cols }
}

/// Runs the sparse simulator and returns the decoded outputs.
pub fn simulate(case: &Case, arch: &ArchConfig) -> (DenseTensor, SimReport) {
    let arch = arch.clone().with_grid(case.rows, case.cols);
    let plan = partition_tiles(&case.layer, case.rows, case.cols).unwrap();
    let groups = choose_kc(&case.layer, &plan, arch.acc_capacity()).unwrap();
    let cw = compress_weights(&case.layer, &case.weights, &groups, arch.index_bits).unwrap();
    let ca = compress_activations(&case.input, case.rows, case.cols, arch.index_bits).unwrap();
    let (out, report) = simulate_scnn_layer(&arch, &case.layer, &cw, &ca).unwrap();
    let roles = [DimRole::OutChannel, DimRole::Width, DimRole::Height];
    (out.decompress().unwrap().relabel(&roles).unwrap(), report)
}

pub fn expected(case: &Case) -> DenseTensor {
    apply_relu(&reference_conv(&case.layer, &case.weights, &case.input).unwrap())
}

/// Sum over input channels and PE tiles of non-zero weights times non-zero
/// activations, counted straight from the dense tensors.
pub fn cartesian_recount(case: &Case) -> u64 {
    let l = &case.layer;
    let (cg, kg) = (l.channels_per_group(), l.outputs_per_group());
    let wstep = l.width.div_ceil(case.cols);
    let hstep = l.height.div_ceil(case.rows);
    let mut total = 0u64;
    for c in 0..l.in_channels {
        let g = c / cg;
        let mut nw = 0u64;
        for k in g * kg..(g + 1) * kg {
            for r in 0..l.filter_w {
                for s in 0..l.filter_h {
                    if case.weights.at4(k, c % cg, r, s) != 0 {
                        nw += 1;
                    }
                }
            }
        }
        for row in 0..case.rows {
            for col in 0..case.cols {
                let mut na = 0u64;
                for x in (col * wstep).min(l.width)..((col + 1) * wstep).min(l.width) {
                    for y in (row * hstep).min(l.height)..((row + 1) * hstep).min(l.height) {
                        if case.input.at3(c, x, y) != 0 {
                            na += 1;
                        }
                    }
                }
                total += nw * na;
            }
        }
    }
    total
}
