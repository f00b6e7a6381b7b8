use proptest::prelude::*;

use scnn::tensors::{
    apply_relu, density_stats, gen_synthetic, prune_magnitude, reference_conv, target_count, ValueRange,
};
use scnn::{DenseTensor, DimRole, LayerShape};

/// Straight loop over every output element, written without the library's
/// indexing helpers.
fn naive_conv(layer: &LayerShape, w: &[i32], a: &[i32]) -> Vec<i64> {
    let (c_n, k_n, wi, hi) = (layer.in_channels, layer.out_channels, layer.width, layer.height);
    let (r_n, s_n, pad) = (layer.filter_w, layer.filter_h, layer.pad as i64);
    let (wo, ho) = (wi + 2 * layer.pad + 1 - r_n, hi + 2 * layer.pad + 1 - s_n);
    let mut out = Vec::new();
    for k in 0..k_n {
        for x in 0..wo {
            for y in 0..ho {
                let mut sum = 0i64;
                for c in 0..c_n {
                    for r in 0..r_n {
                        for s in 0..s_n {
                            let ix = x as i64 + r as i64 - pad;
                            let iy = y as i64 + s as i64 - pad;
                            if ix < 0 || iy < 0 || ix >= wi as i64 || iy >= hi as i64 {
                                continue;
                            }
                            let av = a[(c * wi + ix as usize) * hi + iy as usize] as i64;
                            let wv = w[((k * c_n + c) * r_n + r) * s_n + s] as i64;
                            sum += av * wv;
                        }
                    }
                }
                out.push(sum);
            }
        }
    }
    out
}

fn small_layer() -> LayerShape {
    LayerShape::new("small", 2, 2, 4, 4, 3, 3).with_pad(1)
}

#[test]
fn frozen_small_convolution() {
    let layer = small_layer();
    let w = DenseTensor::from_fn(layer.weight_dims(), |i| {
        let (k, c, r, s) = (i / 18, i / 9 % 2, i / 3 % 3, i % 3);
        (k as i32 + 1) * (r as i32 - s as i32) + c as i32
    });
    let a = DenseTensor::from_fn(layer.input_dims(), |i| {
        let (c, x, y) = (i / 16, i / 4 % 4, i % 4);
        ((x * 4 + y) % 5) as i32 - 2 + c as i32
    });
    let out = reference_conv(&layer, &w, &a).unwrap();
    let frozen = [
        7, 5, -8, 4, 17, 22, 1, -8, 7, 28, 22, 5, -8, 7, 17, 7, 13, 8, -19, 4, 28, 38, -3, -19, 4, 44, 38, 8, -24, 4,
        28, 13,
    ];
    assert_eq!(out.values(), &frozen);
    let naive: Vec<i32> = naive_conv(&layer, w.values(), a.values()).into_iter().map(|v| v as i32).collect();
    assert_eq!(naive, frozen);
}

#[test]
fn random_small_convolutions_match_the_loop() {
    let layer = small_layer();
    for seed in 0..50 {
        let w = gen_synthetic(layer.weight_dims(), 1.0, seed, ValueRange::new(-300, 300)).unwrap();
        let a = gen_synthetic(layer.input_dims(), 0.7, seed + 1000, ValueRange::new(-300, 300)).unwrap();
        let got: Vec<i64> = reference_conv(&layer, &w, &a).unwrap().values().iter().map(|&v| v as i64).collect();
        assert_eq!(got, naive_conv(&layer, w.values(), a.values()), "seed {seed}");
    }
}

#[test]
fn degenerate_convolutions() {
    let one = LayerShape::new("one", 1, 1, 1, 1, 1, 1);
    let w = DenseTensor::new(one.weight_dims(), vec![-6]).unwrap();
    let a = DenseTensor::new(one.input_dims(), vec![7]).unwrap();
    assert_eq!(reference_conv(&one, &w, &a).unwrap().values(), &[-42]);

    let layer = small_layer();
    let zero = DenseTensor::zeros(layer.weight_dims());
    let a = gen_synthetic(layer.input_dims(), 1.0, 5, ValueRange::new(-9, 9)).unwrap();
    assert_eq!(reference_conv(&layer, &zero, &a).unwrap().nnz(), 0);
}

#[test]
fn accumulator_overflow_is_reported() {
    let layer = LayerShape::new("big", 16, 1, 3, 3, 3, 3).with_pad(1);
    let w = DenseTensor::from_fn(layer.weight_dims(), |_| 32767);
    let a = DenseTensor::from_fn(layer.input_dims(), |_| 32767);
    assert!(reference_conv(&layer, &w, &a).is_err());
}

#[test]
fn relu_on_symmetric_values_keeps_about_half() {
    let t = gen_synthetic(
        vec![(DimRole::InChannel, 10), (DimRole::Width, 40), (DimRole::Height, 50)],
        1.0,
        99,
        ValueRange::new(-1000, 1000),
    )
    .unwrap();
    assert_eq!(t.len(), 20_000);
    let d = apply_relu(&t).density();
    // Binomial standard deviation at n = 2e4 is about 0.0035.
    assert!((d - 0.5).abs() < 0.02, "{d}");
    let neg = t.map(|v| -v.abs());
    assert_eq!(apply_relu(&neg).density(), 0.0);
}

#[test]
fn pruning_examples() {
    let t = DenseTensor::new(vec![(DimRole::OutChannel, 4)], vec![5, -1, 3, 2]).unwrap();
    assert_eq!(prune_magnitude(&t, 0.5).unwrap().values(), &[5, 0, 3, 0]);
    assert_eq!(prune_magnitude(&t, 1.0).unwrap(), t);

    let big = gen_synthetic(vec![(DimRole::OutChannel, 1000)], 1.0, 3, ValueRange::WEIGHTS).unwrap();
    let p = prune_magnitude(&big, 0.3).unwrap();
    assert_eq!(p.nnz(), 300);
    assert_eq!(p.density(), 0.3);
    assert!(prune_magnitude(&DenseTensor::zeros(vec![(DimRole::OutChannel, 0)]), 0.5).is_err());
}

#[test]
fn work_fraction_of_half_dense_operands() {
    let dims = vec![(DimRole::InChannel, 4), (DimRole::Width, 10), (DimRole::Height, 10)];
    let w = gen_synthetic(dims.clone(), 0.5, 1, ValueRange::WEIGHTS).unwrap();
    let a = gen_synthetic(dims.clone(), 0.5, 2, ValueRange::ACTIVATIONS).unwrap();
    let stats = density_stats(&[&w], &[&a], true).unwrap();
    assert_eq!(stats.ideal_work_fraction, 0.25);
    assert_eq!(stats.work_reduction(), 4.0);
    assert_eq!(stats.per_layer.len(), 1);

    let d = gen_synthetic(dims, 1.0, 3, ValueRange::WEIGHTS).unwrap();
    assert_eq!(density_stats(&[&d], &[&d], false).unwrap().ideal_work_fraction, 1.0);
}

#[test]
fn synthetic_extremes_and_determinism() {
    let dims = vec![(DimRole::InChannel, 3), (DimRole::Width, 7), (DimRole::Height, 5)];
    assert_eq!(gen_synthetic(dims.clone(), 0.0, 1, ValueRange::WEIGHTS).unwrap().nnz(), 0);
    assert_eq!(gen_synthetic(dims.clone(), 1.0, 1, ValueRange::WEIGHTS).unwrap().nnz(), 105);
    assert_eq!(
        gen_synthetic(dims.clone(), 0.4, 8, ValueRange::WEIGHTS).unwrap(),
        gen_synthetic(dims, 0.4, 8, ValueRange::WEIGHTS).unwrap()
    );
}

fn layer_strategy() -> impl Strategy<Value = LayerShape> {
    (1usize..4, 1usize..4, 1usize..8, 1usize..8, prop::sample::select(vec![1usize, 3]), 1usize..3, any::<bool>())
        .prop_filter_map("filter larger than padded input", |(c, k, w, h, r, stride, padded)| {
            let l = LayerShape::new("p", c, k, w, h, r, r).with_stride(stride);
            let l = if padded { l.same_padded() } else { l };
            (w + 2 * l.pad >= r && h + 2 * l.pad >= r).then_some(l)
        })
}

proptest! {
    #[test]
    fn convolution_is_linear_in_the_input(layer in layer_strategy(), seed in any::<u64>()) {
        let w = gen_synthetic(layer.weight_dims(), 0.7, seed, ValueRange::new(-100, 100)).unwrap();
        let a = gen_synthetic(layer.input_dims(), 0.7, seed ^ 7, ValueRange::new(-100, 100)).unwrap();
        let b = gen_synthetic(layer.input_dims(), 0.5, seed ^ 9, ValueRange::new(-100, 100)).unwrap();
        let sum = DenseTensor::new(
            layer.input_dims(),
            a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect(),
        ).unwrap();
        let ca = reference_conv(&layer, &w, &a).unwrap();
        let cb = reference_conv(&layer, &w, &b).unwrap();
        let cs = reference_conv(&layer, &w, &sum).unwrap();
        let added: Vec<i32> = ca.values().iter().zip(cb.values()).map(|(x, y)| x + y).collect();
        prop_assert_eq!(cs.values(), added.as_slice());
    }

    #[test]
    fn convolution_is_linear_in_the_weights(layer in layer_strategy(), seed in any::<u64>()) {
        let a = gen_synthetic(layer.input_dims(), 0.7, seed, ValueRange::new(-100, 100)).unwrap();
        let w1 = gen_synthetic(layer.weight_dims(), 0.6, seed ^ 3, ValueRange::new(-100, 100)).unwrap();
        let w2 = gen_synthetic(layer.weight_dims(), 0.6, seed ^ 5, ValueRange::new(-100, 100)).unwrap();
        let ws = DenseTensor::new(
            layer.weight_dims(),
            w1.values().iter().zip(w2.values()).map(|(x, y)| x + y).collect(),
        ).unwrap();
        let c1 = reference_conv(&layer, &w1, &a).unwrap();
        let c2 = reference_conv(&layer, &w2, &a).unwrap();
        let cs = reference_conv(&layer, &ws, &a).unwrap();
        let added: Vec<i32> = c1.values().iter().zip(c2.values()).map(|(x, y)| x + y).collect();
        prop_assert_eq!(cs.values(), added.as_slice());
    }

    #[test]
    fn relu_is_idempotent(values in prop::collection::vec(-1000i32..1000, 1..200)) {
        let t = DenseTensor::new(vec![(DimRole::Width, values.len())], values).unwrap();
        let once = apply_relu(&t);
        prop_assert_eq!(apply_relu(&once), once.clone());
        prop_assert!(once.values().iter().zip(t.values()).all(|(&o, &v)| o == v.max(0)));
    }

    #[test]
    fn pruning_is_a_mask(values in prop::collection::vec(-1000i32..1000, 1..300), d in 0.01f64..=1.0) {
        let t = DenseTensor::new(vec![(DimRole::OutChannel, values.len())], values).unwrap();
        let p = prune_magnitude(&t, d).unwrap();
        prop_assert!(p.values().iter().zip(t.values()).all(|(&o, &v)| o == 0 || o == v));
        let kept = p.values().iter().zip(t.values()).filter(|(&o, &v)| o == v && v != 0).count();
        prop_assert!(kept <= target_count(d, t.len()));
    }

    #[test]
    fn synthetic_density_is_exact(n in 1usize..2000, d in 0.0f64..=1.0, seed in any::<u64>()) {
        let t = gen_synthetic(vec![(DimRole::Width, n)], d, seed, ValueRange::WEIGHTS).unwrap();
        prop_assert_eq!(t.nnz(), target_count(d, n));
        prop_assert_eq!(t.density(), target_count(d, n) as f64 / n as f64);
    }
}
