//! Dense fixed-point tensors, the exact convolution reference, and the
//! sparsity tools (ReLU, magnitude pruning, synthetic generation, density
//! statistics) that everything else is checked against.
//!
//! All arithmetic is exact signed integer arithmetic. Weights and activations
//! are 16-bit operands, products are formed in 32 bits and sums are carried in
//! 64 bits, then checked against the 24-bit accumulator range.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OPERAND_BITS: u32 = 16;
pub const ACCUMULATOR_BITS: u32 = 24;

const OPERAND_MIN: i64 = -(1 << (OPERAND_BITS - 1));
const OPERAND_MAX: i64 = (1 << (OPERAND_BITS - 1)) - 1;
pub(crate) const ACC_MIN: i64 = -(1 << (ACCUMULATOR_BITS - 1));
pub(crate) const ACC_MAX: i64 = (1 << (ACCUMULATOR_BITS - 1)) - 1;

pub(crate) fn fits_accumulator(v: i64) -> bool {
    (ACC_MIN..=ACC_MAX).contains(&v)
}

/// Number of survivors for a target density over `n` elements, `ceil(d * n)`.
///
/// A small epsilon absorbs binary floating-point noise so that e.g.
/// `0.3 * 1000` keeps 300 elements and not 301.
pub fn target_count(density: f64, n: usize) -> usize {
    let raw = density * n as f64;
    let count = (raw - 1e-9).ceil().max(0.0) as usize;
    count.min(n)
}

/// One convolution layer. Batch size is always one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
    pub height: usize,
    pub filter_w: usize,
    pub filter_h: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl LayerShape {
    /// A stride-1, unpadded, ungrouped layer.
    pub fn new(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        width: usize,
        height: usize,
        filter_w: usize,
        filter_h: usize,
    ) -> Self {
        Self {
            name: name.into(),
            in_channels,
            out_channels,
            width,
            height,
            filter_w,
            filter_h,
            stride: 1,
            pad: 0,
            groups: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_pad(mut self, pad: usize) -> Self {
        self.pad = pad;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    /// Zero padding that keeps the output plane the same size at stride 1.
    pub fn same_padded(self) -> Self {
        let pad = (self.filter_w.max(self.filter_h) - 1) / 2;
        self.with_pad(pad)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Shape(format!("layer `{}`: {msg}", self.name)));
        for (field, v) in [
            ("in_channels", self.in_channels),
            ("out_channels", self.out_channels),
            ("width", self.width),
            ("height", self.height),
            ("filter_w", self.filter_w),
            ("filter_h", self.filter_h),
            ("stride", self.stride),
            ("groups", self.groups),
        ] {
            if v == 0 {
                return bad(format!("{field} must be positive"));
            }
        }
        if self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return bad(format!(
                "groups={} must divide in_channels={} and out_channels={}",
                self.groups, self.in_channels, self.out_channels
            ));
        }
        if self.width + 2 * self.pad < self.filter_w || self.height + 2 * self.pad < self.filter_h {
            return bad("filter larger than the padded input plane".to_string());
        }
        Ok(())
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.pad - self.filter_w) / self.stride + 1
    }

    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.pad - self.filter_h) / self.stride + 1
    }

    pub fn channels_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    pub fn outputs_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    /// Conv-group that input channel `c` belongs to.
    pub fn group_of_input(&self, c: usize) -> usize {
        c / self.channels_per_group()
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.channels_per_group() * self.filter_w * self.filter_h
    }

    pub fn input_count(&self) -> usize {
        self.in_channels * self.width * self.height
    }

    pub fn output_count(&self) -> usize {
        self.out_channels * self.out_w() * self.out_h()
    }

    /// Multiplies performed by the output-driven loop nest (one per output
    /// element per filter tap). This is the figure network totals quote.
    pub fn dense_multiplies(&self) -> u64 {
        (self.out_channels * self.channels_per_group() * self.filter_w * self.filter_h) as u64
            * (self.out_w() * self.out_h()) as u64
    }

    /// Multiplies performed by an input-stationary Cartesian product over
    /// fully dense operands: every input element meets every filter tap of
    /// its conv-group. Equals [`Self::dense_multiplies`] for stride-1
    /// "same" layers.
    pub fn cartesian_multiplies(&self) -> u64 {
        (self.outputs_per_group() * self.filter_w * self.filter_h) as u64
            * self.input_count() as u64
    }

    pub fn weight_dims(&self) -> Vec<(DimRole, usize)> {
        vec![
            (DimRole::OutChannel, self.out_channels),
            (DimRole::InChannel, self.channels_per_group()),
            (DimRole::FilterWidth, self.filter_w),
            (DimRole::FilterHeight, self.filter_h),
        ]
    }

    pub fn input_dims(&self) -> Vec<(DimRole, usize)> {
        vec![
            (DimRole::InChannel, self.in_channels),
            (DimRole::Width, self.width),
            (DimRole::Height, self.height),
        ]
    }

    pub fn output_dims(&self) -> Vec<(DimRole, usize)> {
        vec![
            (DimRole::OutChannel, self.out_channels),
            (DimRole::Width, self.out_w()),
            (DimRole::Height, self.out_h()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DimRole {
    OutChannel,
    InChannel,
    Width,
    Height,
    FilterWidth,
    FilterHeight,
}

/// Row-major integer tensor with labelled dimensions.
///
/// Weights are `[K][C/groups][R][S]`, activations `[C][W][H]` and layer
/// outputs `[K][Wo][Ho]`, so the last dimension varies fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseTensor {
    dims: Vec<(DimRole, usize)>,
    values: Vec<i32>,
}

impl DenseTensor {
    pub fn new(dims: Vec<(DimRole, usize)>, values: Vec<i32>) -> Result<Self> {
        let expected: usize = dims.iter().map(|d| d.1).product();
        if expected != values.len() {
            return Err(Error::Shape(format!(
                "{} values supplied for dims {:?} ({} expected)",
                values.len(),
                dims,
                expected
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Vec<(DimRole, usize)>) -> Self {
        let n = dims.iter().map(|d| d.1).product();
        Self { dims, values: vec![0; n] }
    }

    pub fn from_fn(dims: Vec<(DimRole, usize)>, f: impl FnMut(usize) -> i32) -> Self {
        let n = dims.iter().map(|d| d.1).product();
        Self { dims, values: (0..n).map(f).collect() }
    }

    pub fn dims(&self) -> &[(DimRole, usize)] {
        &self.dims
    }

    pub fn shape(&self) -> Vec<usize> {
        self.dims.iter().map(|d| d.1).collect()
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [i32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<i32> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    /// Fraction of non-zero elements; an empty tensor has density 0.
    pub fn density(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.nnz() as f64 / self.values.len() as f64
        }
    }

    /// Same data, new role labels. Dimension sizes must match.
    pub fn relabel(mut self, roles: &[DimRole]) -> Result<Self> {
        if roles.len() != self.dims.len() {
            return Err(Error::Shape(format!("cannot relabel {:?} as {:?}", self.dims, roles)));
        }
        for (d, r) in self.dims.iter_mut().zip(roles) {
            d.0 = *r;
        }
        Ok(self)
    }

    /// Element of a rank-3 tensor.
    #[inline]
    pub fn at3(&self, a: usize, b: usize, c: usize) -> i32 {
        let (d1, d2) = (self.dims[1].1, self.dims[2].1);
        self.values[(a * d1 + b) * d2 + c]
    }

    /// Element of a rank-4 tensor.
    #[inline]
    pub fn at4(&self, a: usize, b: usize, c: usize, d: usize) -> i32 {
        let (d1, d2, d3) = (self.dims[1].1, self.dims[2].1, self.dims[3].1);
        self.values[((a * d1 + b) * d2 + c) * d3 + d]
    }

    pub fn map(&self, f: impl Fn(i32) -> i32) -> Self {
        Self {
            dims: self.dims.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_operands(&self, what: &str) -> Result<()> {
        if let Some(&v) = self
            .values
            .iter()
            .find(|&&v| !(OPERAND_MIN..=OPERAND_MAX).contains(&(v as i64)))
        {
            return Err(Error::OperandRange {
                what: what.to_string(),
                value: v as i64,
                bits: OPERAND_BITS,
            });
        }
        Ok(())
    }

    fn expect_dims(&self, what: &str, expected: &[(DimRole, usize)]) -> Result<()> {
        if self.dims != expected {
            return Err(Error::Shape(format!(
                "{what} has dims {:?}, layer expects {:?}",
                self.dims, expected
            )));
        }
        Ok(())
    }
}

/// Exact convolution in the canonical `K -> C -> W -> H -> R -> S` order.
///
/// `out[k][x][y] = sum over c, r, s of in[c][x*stride + r - pad][y*stride + s - pad] * w[k][c][r][s]`
/// with out-of-range input coordinates reading as zero. Sums are exact; any
/// final value outside the 24-bit accumulator range is reported rather than
/// saturated.
pub fn reference_conv(layer: &LayerShape, weights: &DenseTensor, input: &DenseTensor) -> Result<DenseTensor> {
    layer.validate()?;
    weights.expect_dims("weights", &layer.weight_dims())?;
    input.expect_dims("input", &layer.input_dims())?;
    weights.check_operands("weight")?;
    input.check_operands("input activation")?;

    let (wo, ho) = (layer.out_w(), layer.out_h());
    let (cg, kg) = (layer.channels_per_group(), layer.outputs_per_group());
    let (fw, fh) = (layer.filter_w, layer.filter_h);
    let (iw, ih) = (layer.width as isize, layer.height as isize);
    let (stride, pad) = (layer.stride as isize, layer.pad as isize);

    let planes: Vec<Vec<i64>> = (0..layer.out_channels)
        .into_par_iter()
        .map(|k| {
            let group = k / kg;
            let mut acc = vec![0i64; wo * ho];
            for cl in 0..cg {
                let c = group * cg + cl;
                for x in 0..wo {
                    for y in 0..ho {
                        let mut sum = acc[x * ho + y];
                        for r in 0..fw {
                            let ix = x as isize * stride + r as isize - pad;
                            if ix < 0 || ix >= iw {
                                continue;
                            }
                            for s in 0..fh {
                                let iy = y as isize * stride + s as isize - pad;
                                if iy < 0 || iy >= ih {
                                    continue;
                                }
                                let w = weights.at4(k, cl, r, s);
                                if w != 0 {
                                    let a = input.at3(c, ix as usize, iy as usize);
                                    sum += (w * a) as i64;
                                }
                            }
                        }
                        acc[x * ho + y] = sum;
                    }
                }
            }
            acc
        })
        .collect();

    let mut values = Vec::with_capacity(layer.output_count());
    for (k, plane) in planes.into_iter().enumerate() {
        for (i, v) in plane.into_iter().enumerate() {
            if !fits_accumulator(v) {
                return Err(Error::AccumulatorOverflow { k, x: i / ho, y: i % ho, value: v });
            }
            values.push(v as i32);
        }
    }
    DenseTensor::new(layer.output_dims(), values)
}

pub fn apply_relu(t: &DenseTensor) -> DenseTensor {
    t.map(|v| v.max(0))
}

/// Output stage applied by the post-processing unit after ReLU: an
/// arithmetic right shift followed by a clamp, used to bring 24-bit sums
/// back into the operand range before they feed the next layer.
///
/// The default is the identity on non-negative values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requant {
    pub shift: u32,
    pub clamp_max: i32,
}

impl Default for Requant {
    fn default() -> Self {
        Self { shift: 0, clamp_max: i32::MAX }
    }
}

impl Requant {
    #[inline]
    pub fn apply(&self, v: i32) -> i32 {
        (v.max(0) >> self.shift).min(self.clamp_max)
    }

    pub fn is_identity(&self) -> bool {
        self.shift == 0 && self.clamp_max == i32::MAX
    }
}

/// ReLU followed by the requantization stage, element-wise.
pub fn postprocess(t: &DenseTensor, requant: &Requant) -> DenseTensor {
    t.map(|v| requant.apply(v))
}

/// Zeroes all but the `ceil(target_density * n)` largest-magnitude weights.
/// Ties go to the lowest linear index. Surviving values are unchanged.
pub fn prune_magnitude(weights: &DenseTensor, target_density: f64) -> Result<DenseTensor> {
    if weights.is_empty() {
        return Err(Error::EmptyTensor);
    }
    if !(target_density > 0.0 && target_density <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "prune target density {target_density} outside (0, 1]"
        )));
    }
    let n = weights.len();
    let keep = target_count(target_density, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (ma, mb) = (weights.values[a].unsigned_abs(), weights.values[b].unsigned_abs());
        mb.cmp(&ma).then(a.cmp(&b))
    });
    let mut mask = vec![false; n];
    for &i in &order[..keep] {
        mask[i] = true;
    }
    let values = weights
        .values
        .iter()
        .zip(&mask)
        .map(|(&v, &m)| if m { v } else { 0 })
        .collect();
    Ok(DenseTensor { dims: weights.dims.clone(), values })
}

/// Closed integer interval of non-zero values drawn by [`gen_synthetic`].
/// Zero is always excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: i32,
    pub max: i32,
}

impl ValueRange {
    pub const fn new(min: i32, max: i32) -> Self {
        Self { min, max }
    }

    /// Default for synthetic weights.
    pub const WEIGHTS: ValueRange = ValueRange::new(-127, 127);
    /// Default for synthetic (post-ReLU) activations.
    pub const ACTIVATIONS: ValueRange = ValueRange::new(1, 127);

    fn nonzero_count(&self) -> i64 {
        let span = self.max as i64 - self.min as i64 + 1;
        if self.min <= 0 && self.max >= 0 {
            span - 1
        } else {
            span
        }
    }

    fn validate(&self) -> Result<()> {
        if self.min > self.max || self.nonzero_count() <= 0 {
            return Err(Error::InvalidArgument(format!(
                "value range [{}, {}] has no non-zero values",
                self.min, self.max
            )));
        }
        if (self.min as i64) < OPERAND_MIN || (self.max as i64) > OPERAND_MAX {
            return Err(Error::InvalidArgument(format!(
                "value range [{}, {}] exceeds the 16-bit operand range",
                self.min, self.max
            )));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng) -> i32 {
        let j = rng.random_range(0..self.nonzero_count());
        let v = self.min as i64 + j;
        if self.min <= 0 && v >= 0 {
            (v + 1) as i32
        } else {
            v as i32
        }
    }
}

/// Seeded synthetic tensor with exactly `ceil(density * n)` non-zeros.
///
/// Positions come from one seeded permutation and values from an
/// independent stream indexed by position, so for a fixed seed the non-zero
/// set at a lower density is a subset of the set at a higher density and
/// shared positions carry identical values.
pub fn gen_synthetic(
    dims: Vec<(DimRole, usize)>,
    density: f64,
    seed: u64,
    range: ValueRange,
) -> Result<DenseTensor> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidArgument(format!("density {density} outside [0, 1]")));
    }
    range.validate()?;
    let n: usize = dims.iter().map(|d| d.1).product();
    let keep = target_count(density, n);

    let mut pos_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut pos_rng);

    let mut val_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let pool: Vec<i32> = (0..n).map(|_| range.sample(&mut val_rng)).collect();

    let mut values = vec![0i32; n];
    for &i in &order[..keep] {
        values[i] = pool[i];
    }
    DenseTensor::new(dims, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerDensity {
    pub weight_density: f64,
    pub activation_density: f64,
    pub ideal_work_fraction: f64,
}

impl LayerDensity {
    pub fn new(weight_density: f64, activation_density: f64) -> Self {
        Self {
            weight_density,
            activation_density,
            ideal_work_fraction: weight_density * activation_density,
        }
    }

    /// Factor by which skipping every zero operand could cut the work.
    pub fn work_reduction(&self) -> f64 {
        1.0 / self.ideal_work_fraction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityStats {
    pub weight_density: f64,
    pub activation_density: f64,
    pub ideal_work_fraction: f64,
    pub per_layer: Vec<LayerDensity>,
}

impl DensityStats {
    pub fn work_reduction(&self) -> f64 {
        1.0 / self.ideal_work_fraction
    }
}

/// Density of weights and activations over a set of layers. Aggregate
/// densities are element-weighted; the per-layer sequence is filled only when
/// asked for.
pub fn density_stats(
    weights: &[&DenseTensor],
    activations: &[&DenseTensor],
    per_layer: bool,
) -> Result<DensityStats> {
    if weights.len() != activations.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weight tensors but {} activation tensors",
            weights.len(),
            activations.len()
        )));
    }
    let ratio = |ts: &[&DenseTensor]| {
        let total: usize = ts.iter().map(|t| t.len()).sum();
        let nnz: usize = ts.iter().map(|t| t.nnz()).sum();
        if total == 0 {
            0.0
        } else {
            nnz as f64 / total as f64
        }
    };
    let overall = LayerDensity::new(ratio(weights), ratio(activations));
    let layers = if per_layer {
        weights
            .iter()
            .zip(activations)
            .map(|(w, a)| LayerDensity::new(w.density(), a.density()))
            .collect()
    } else {
        Vec::new()
    };
    Ok(DensityStats {
        weight_density: overall.weight_density,
        activation_density: overall.activation_density,
        ideal_work_fraction: overall.ideal_work_fraction,
        per_layer: layers,
    })
}

/// Max pooling over the spatial dimensions of a `[C][W][H]` tensor. Padding
/// cells never win the max.
pub fn max_pool(t: &DenseTensor, size: usize, stride: usize, pad: usize) -> Result<DenseTensor> {
    if t.dims.len() != 3 || size == 0 || stride == 0 {
        return Err(Error::Shape(format!("cannot pool {:?} with size {size} stride {stride}", t.dims)));
    }
    let (c, w, h) = (t.dims[0].1, t.dims[1].1, t.dims[2].1);
    if w + 2 * pad < size || h + 2 * pad < size {
        return Err(Error::Shape(format!("pool window {size} larger than padded {w}x{h} plane")));
    }
    let wo = (w + 2 * pad - size) / stride + 1;
    let ho = (h + 2 * pad - size) / stride + 1;
    let mut out = Vec::with_capacity(c * wo * ho);
    for ch in 0..c {
        for x in 0..wo {
            for y in 0..ho {
                let mut best: Option<i32> = None;
                for dx in 0..size {
                    let ix = (x * stride + dx) as isize - pad as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    for dy in 0..size {
                        let iy = (y * stride + dy) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let v = t.at3(ch, ix as usize, iy as usize);
                        best = Some(best.map_or(v, |b| b.max(v)));
                    }
                }
                out.push(best.unwrap_or(0));
            }
        }
    }
    DenseTensor::new(vec![(t.dims[0].0, c), (DimRole::Width, wo), (DimRole::Height, ho)], out)
}

/// Stacks `[C_i][W][H]` tensors along the channel dimension.
pub fn concat_channels(parts: &[&DenseTensor]) -> Result<DenseTensor> {
    let first = parts.first().ok_or(Error::EmptyTensor)?;
    let (w, h) = (first.dims[1].1, first.dims[2].1);
    let mut values = Vec::new();
    let mut channels = 0;
    for p in parts {
        if p.dims.len() != 3 || p.dims[1].1 != w || p.dims[2].1 != h {
            return Err(Error::Shape(format!(
                "cannot concatenate {:?} with a {w}x{h} plane",
                p.dims
            )));
        }
        channels += p.dims[0].1;
        values.extend_from_slice(&p.values);
    }
    DenseTensor::new(
        vec![(DimRole::InChannel, channels), (DimRole::Width, w), (DimRole::Height, h)],
        values,
    )
}
