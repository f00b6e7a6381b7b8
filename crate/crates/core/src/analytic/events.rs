//! Closed-form event counts and a bottleneck cycle estimate.
//!
//! With uniform densities, stored-vector counts follow binomial
//! distributions, so the multiplier fragmentation of each fetch is taken in
//! expectation rather than sampled. A measured profile uses the exact stored
//! counts of concrete compressed operands instead.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::dataflow::{choose_kc, partition_tiles, spans, GroupPlan, TilePlan};
use crate::error::{Error, Result};
use crate::simulator::{ArchConfig, CompressedActivations, CompressedWeights, EventCounts};
use crate::tensors::LayerShape;

use super::energy::{energy_of, EnergyModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dataflow {
    /// Dot-product dense baseline.
    Dense,
    /// Dense baseline with zero-operand multiply gating.
    DenseOpt,
    /// Compressed-sparse Cartesian product.
    Sparse,
}

#[derive(Debug, Clone, Copy)]
pub enum Profile<'a> {
    Uniform { weight_density: f64, activation_density: f64 },
    Measured { weights: &'a CompressedWeights, acts: &'a CompressedActivations },
}

impl Profile<'_> {
    pub fn uniform(weight_density: f64, activation_density: f64) -> Self {
        Profile::Uniform { weight_density, activation_density }
    }
}

/// Events of one layer plus the per-group demand the bottleneck model needs.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCounts {
    pub layer: String,
    pub dataflow: Dataflow,
    pub events: EventCounts,
    pub useful_multiplies: f64,
    /// Multiplier-array issue slots, `[group][pe]`.
    pub group_issue: Vec<Vec<f64>>,
    /// Standard deviation of the issue slots that comes from the PE's own
    /// activations, `[group][pe]`. Zero for measured profiles.
    pub group_issue_sd: Vec<Vec<f64>>,
    /// Accumulator updates, `[group][pe]`.
    pub group_routed: Vec<Vec<f64>>,
    /// Post-processing drain cycles per group.
    pub group_drain: Vec<f64>,
}

/// Expected non-zeros plus run-length placeholders for a Bernoulli slice.
fn expected_stored(n: usize, p: f64, index_bits: u32) -> f64 {
    if n == 0 || p <= 0.0 {
        return 0.0;
    }
    let q = 1.0 - p;
    let span = 1usize << index_bits;
    let mut placeholders = 0.0;
    let mut j = 1;
    while span * j < n {
        placeholders += p * q.powi((span * j) as i32) * (n - span * j) as f64;
        j += 1;
    }
    n as f64 * p + placeholders
}

/// First and second moments of `ceil(X * scale / width)` for
/// `X ~ Binomial(n, p)`.
fn ceil_moments(n: usize, p: f64, scale: f64, width: usize) -> (f64, f64) {
    if n == 0 || p <= 0.0 {
        return (0.0, 0.0);
    }
    let cost = |x: usize| ((x as f64 * scale - 1e-9) / width as f64).ceil().max(0.0);
    if p >= 1.0 {
        let c = cost(n);
        return (c, c * c);
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut log_pmf = n as f64 * lq;
    let (mut e, mut e2) = (0.0, 0.0);
    for x in 0..=n {
        if x > 0 {
            log_pmf += ((n - x + 1) as f64).ln() - (x as f64).ln() + lp - lq;
        }
        let pmf = log_pmf.exp();
        let c = cost(x);
        e += pmf * c;
        e2 += pmf * c * c;
    }
    (e, e2)
}

/// Expected maximum of `n` independent standard normals.
fn normal_max(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let z = Normal::standard();
    let (lo, hi, steps) = (-8.0, 8.0, 4000);
    let h = (hi - lo) / steps as f64;
    (0..=steps)
        .map(|j| {
            let x = lo + j as f64 * h;
            let w = if j == 0 || j == steps { 0.5 } else { 1.0 };
            w * x * n as f64 * z.pdf(x) * z.cdf(x).powi(n as i32 - 1)
        })
        .sum::<f64>()
        * h
}

#[derive(Default)]
struct Memo {
    ceil: HashMap<(usize, u64, usize), (f64, f64)>,
    stored: HashMap<(usize, u64), f64>,
}

impl Memo {
    fn stored(&mut self, n: usize, p: f64, bits: u32) -> f64 {
        *self.stored.entry((n, p.to_bits())).or_insert_with(|| expected_stored(n, p, bits))
    }

    /// Mean and second moment of the vector fetches of a Bernoulli slice.
    fn vectors(&mut self, n: usize, p: f64, bits: u32, width: usize) -> (f64, f64) {
        let stored = self.stored(n, p, bits);
        *self.ceil.entry((n, p.to_bits(), width)).or_insert_with(|| {
            let scale = if n as f64 * p > 0.0 { stored / (n as f64 * p) } else { 1.0 };
            ceil_moments(n, p, scale, width)
        })
    }
}

/// Fraction of (input, tap) pairs along one axis that land on a strided
/// output.
fn stride_hit_fraction(extent: usize, taps: usize, stride: usize, pad: usize) -> f64 {
    if stride == 1 {
        return 1.0;
    }
    let hits = (0..extent)
        .flat_map(|x| (0..taps).map(move |r| (x + pad + stride * taps - r) % stride == 0))
        .filter(|&h| h)
        .count();
    hits as f64 / (extent * taps) as f64
}

fn check_density(d: f64) -> Result<()> {
    if d > 0.0 && d <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("density {d} outside (0, 1]")))
    }
}

fn group_plan(arch: &ArchConfig, layer: &LayerShape, plan: &TilePlan, profile: &Profile) -> Result<GroupPlan> {
    match profile {
        Profile::Measured { weights, .. } => Ok(weights.plan.clone()),
        Profile::Uniform { .. } => choose_kc(layer, plan, arch.acc_capacity()),
    }
}

/// Event counts of one layer under a dataflow and a sparsity profile.
pub fn count_events(arch: &ArchConfig, layer: &LayerShape, dataflow: Dataflow, profile: Profile) -> Result<LayerCounts> {
    arch.validate()?;
    let plan = partition_tiles(layer, arch.pe_rows, arch.pe_cols)?;
    match dataflow {
        Dataflow::Sparse => sparse_counts(arch, layer, &plan, profile),
        Dataflow::Dense | Dataflow::DenseOpt => dense_counts(arch, layer, &plan, dataflow, profile),
    }
}

fn profile_densities(profile: &Profile) -> Result<(f64, f64)> {
    match *profile {
        Profile::Uniform { weight_density, activation_density } => {
            check_density(weight_density)?;
            check_density(activation_density)?;
            Ok((weight_density, activation_density))
        }
        Profile::Measured { weights, acts } => {
            let wn: usize = weights.blocks.iter().flatten().map(|b| b.logical_extent).sum();
            let an = acts.channels * acts.width * acts.height;
            let frac = |nnz: usize, n: usize| if n == 0 { 0.0 } else { nnz as f64 / n as f64 };
            Ok((frac(weights.nnz(), wn), frac(acts.nnz(), an)))
        }
    }
}

fn dense_counts(
    arch: &ArchConfig,
    layer: &LayerShape,
    plan: &TilePlan,
    dataflow: Dataflow,
    profile: Profile,
) -> Result<LayerCounts> {
    let (wd, ad) = profile_densities(&profile)?;
    let m = layer.dense_multiplies() as f64;
    let taps = (layer.channels_per_group() * layer.filter_w * layer.filter_h * layer.out_channels) as f64;
    let issue: Vec<f64> = plan
        .tiles
        .iter()
        .map(|t| (taps * t.output_count() as f64 / arch.multipliers_per_pe() as f64).ceil())
        .collect();
    let mut ev = EventCounts::default();
    if dataflow == Dataflow::DenseOpt {
        ev.multiplies = m * wd * ad;
        ev.gated_multiplies = m - ev.multiplies;
    } else {
        ev.multiplies = m;
    }
    ev.input_ram_reads = m / arch.weight_vector as f64;
    ev.weight_buffer_reads = m;
    ev.acc_register_updates = m / arch.activation_vector as f64;
    ev.output_ram_writes = layer.output_count() as f64;
    ev.dram_weight_words = layer.weight_count() as f64;
    Ok(LayerCounts {
        layer: layer.name.clone(),
        dataflow,
        events: ev,
        useful_multiplies: m,
        group_routed: vec![vec![0.0; issue.len()]],
        group_issue_sd: vec![vec![0.0; issue.len()]],
        group_issue: vec![issue],
        group_drain: vec![0.0],
    })
}

fn sparse_counts(arch: &ArchConfig, layer: &LayerShape, plan: &TilePlan, profile: Profile) -> Result<LayerCounts> {
    profile_densities(&profile)?;
    let groups = group_plan(arch, layer, plan, &profile)?;
    let (f, i) = (arch.weight_vector, arch.activation_vector);
    let taps = layer.filter_w * layer.filter_h;
    let cg = layer.channels_per_group();
    let routed_fraction = stride_hit_fraction(layer.width, layer.filter_w, layer.stride, layer.pad)
        * stride_hit_fraction(layer.height, layer.filter_h, layer.stride, layer.pad);
    let fm = &arch.footprint;
    let words_per_value = (fm.value_bits + fm.index_overhead_bits) as f64 / 16.0;
    let bits = arch.index_bits;

    let mut memo = Memo::default();
    let mut ev = EventCounts::default();
    let mut useful = 0.0;
    let mut group_issue = Vec::with_capacity(groups.len());
    let mut group_issue_sd = Vec::with_capacity(groups.len());
    let mut group_routed = Vec::with_capacity(groups.len());
    let mut group_drain = Vec::with_capacity(groups.len());

    for (gi, span) in groups.groups.iter().enumerate() {
        let wn = span.k_len * taps;
        let mut issue = vec![0.0; plan.pes()];
        let mut routed = vec![0.0; plan.pes()];
        let mut issue_var = vec![0.0; plan.pes()];
        let mut max_avecs = vec![0.0f64; cg];
        for (pe, t) in plan.tiles.iter().enumerate() {
            let an = t.input_count();
            for cl in 0..cg {
                // Stored and non-zero counts, exact or in expectation.
                let (sw, nw, wvec, sa, na, avec) = match profile {
                    Profile::Uniform { weight_density: wd, activation_density: ad } => {
                        let (wvec, wvec2) = memo.vectors(wn, wd, bits, f);
                        let (avec, avec2) = memo.vectors(an, ad, bits, i);
                        issue_var[pe] += wvec2 * (avec2 - avec * avec).max(0.0);
                        (memo.stored(wn, wd, bits), wn as f64 * wd, wvec, memo.stored(an, ad, bits), an as f64 * ad, avec)
                    }
                    Profile::Measured { weights, acts } => {
                        let wb = &weights.blocks[gi][cl];
                        let ab = &acts.blocks[pe][span.conv_group * cg + cl];
                        let (sw, sa) = (wb.stored(), ab.stored());
                        (
                            sw as f64,
                            wb.nnz() as f64,
                            sw.div_ceil(f) as f64,
                            sa as f64,
                            ab.nnz() as f64,
                            sa.div_ceil(i) as f64,
                        )
                    }
                };
                let products = nw * na;
                useful += products;
                issue[pe] += wvec * avec;
                routed[pe] += products * routed_fraction;
                if sw > 0.0 && sa > 0.0 {
                    ev.weight_buffer_reads += sw * avec;
                    ev.input_ram_reads += sa;
                    if sw > arch.fifo_values() as f64 {
                        max_avecs[cl] = max_avecs[cl].max(avec);
                    }
                }
                if pe == 0 {
                    ev.dram_weight_words += sw * words_per_value;
                }
            }
        }
        for (cl, passes) in max_avecs.iter().enumerate() {
            if *passes > 1.0 {
                let sw = match profile {
                    Profile::Uniform { weight_density, .. } => memo.stored(wn, weight_density, bits),
                    Profile::Measured { weights, .. } => weights.blocks[gi][cl].stored() as f64,
                };
                ev.dram_weight_words += sw * words_per_value * (passes - 1.0);
            }
        }
        let entries = (span.k_len * plan.acc_plane()) as f64;
        ev.acc_drain_reads += entries * plan.pes() as f64;
        let halo: usize = (0..plan.pes()).flat_map(|pe| plan.halos(pe)).map(|r| r.cells()).sum();
        ev.halo_transfers += (halo * span.k_len) as f64;
        group_issue.push(issue);
        group_issue_sd.push(issue_var.into_iter().map(f64::sqrt).collect());
        group_routed.push(routed);
        group_drain.push((entries / arch.banks as f64).ceil() + arch.halo_latency_cycles as f64);
    }

    let out_density = match profile {
        Profile::Uniform { activation_density, .. } => activation_density,
        Profile::Measured { .. } => profile_densities(&profile)?.1,
    };
    ev.multiplies = useful;
    ev.crossbar_transfers = useful * routed_fraction;
    ev.acc_updates = useful * routed_fraction;
    ev.output_ram_writes = layer.output_count() as f64 * out_density;
    Ok(LayerCounts {
        layer: layer.name.clone(),
        dataflow: Dataflow::Sparse,
        events: ev,
        useful_multiplies: useful,
        group_issue,
        group_issue_sd,
        group_routed,
        group_drain,
    })
}

/// Multiplies of a dense run of the layer; the sparse count at densities
/// `(wd, ad)` is the Cartesian count scaled by `wd * ad`.
pub fn multiply_count(layer: &LayerShape, dataflow: Dataflow, wd: f64, ad: f64) -> f64 {
    match dataflow {
        Dataflow::Dense => layer.dense_multiplies() as f64,
        Dataflow::DenseOpt => layer.dense_multiplies() as f64 * wd * ad,
        Dataflow::Sparse => layer.cartesian_multiplies() as f64 * wd * ad,
    }
}

/// Bottleneck estimate: per output-channel group, the slowest PE's demand on
/// its multiplier array and accumulator banks (overlapped with the previous
/// group's drain when double-buffered), compared against the DRAM traffic
/// time for the whole layer. Energy is the coefficient-weighted event sum.
///
/// PEs with the same expected demand still finish at different times, so
/// each PE's issue demand is raised by its spread times the expected
/// maximum of as many standard normals as there are busy PEs.
pub fn analytic_time_energy(counts: &LayerCounts, arch: &ArchConfig, model: &EnergyModel) -> Result<(f64, f64)> {
    if arch.multipliers_per_pe() == 0 || arch.banks == 0 || !(arch.dram_values_per_cycle > 0.0) {
        return Err(Error::Config("a resource in the bottleneck model has zero capacity".into()));
    }
    let mut compute = 0.0;
    let mut prev_drain = 0.0f64;
    let groups = counts.group_issue.iter().zip(&counts.group_issue_sd).zip(&counts.group_routed);
    for (((issue, sd), routed), drain) in groups.zip(&counts.group_drain) {
        let tail = normal_max(issue.iter().filter(|&&a| a > 0.0).count());
        let pe_demand = issue
            .iter()
            .zip(sd)
            .zip(routed)
            .map(|((a, d), r)| (a + d * tail).max(r / arch.banks as f64))
            .fold(0.0, f64::max);
        compute += if arch.double_buffered { pe_demand.max(prev_drain) } else { pe_demand + drain };
        prev_drain = *drain;
    }
    if arch.double_buffered {
        compute += prev_drain;
    }
    let dram = counts.events.dram_words() / arch.dram_values_per_cycle;
    Ok((compute.max(dram), energy_of(&counts.events, model)))
}

/// Sparse-dataflow group plan for a fixed output-channel group size.
pub fn fixed_group_plan(layer: &LayerShape, kc: usize) -> GroupPlan {
    GroupPlan { kc, groups: spans(layer, kc) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_ceil_expectation() {
        let expected_ceil = |n, p| ceil_moments(n, p, 1.0, 4).0;
        assert_eq!(expected_ceil(8, 1.0), 2.0);
        assert_eq!(expected_ceil(8, 0.0), 0.0);
        // n = 1: ceil is 1 with probability p.
        assert!((expected_ceil(1, 0.3) - 0.3).abs() < 1e-12);
        // Large n concentrates near the mean.
        let e = expected_ceil(4000, 0.5);
        assert!((e - 500.0).abs() < 1.0, "{e}");
    }

    #[test]
    fn second_moment_of_a_coin() {
        let (m, m2) = ceil_moments(1, 0.3, 1.0, 4);
        assert!((m - 0.3).abs() < 1e-12 && (m2 - 0.3).abs() < 1e-12);
        assert_eq!(ceil_moments(8, 1.0, 1.0, 4), (2.0, 4.0));
    }

    #[test]
    fn expected_normal_maxima() {
        assert_eq!(normal_max(1), 0.0);
        assert!((normal_max(2) - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-6);
        assert!((normal_max(49) - 2.241190).abs() < 1e-5);
        assert!((normal_max(64) - 2.343733).abs() < 1e-5);
    }

    #[test]
    fn placeholders_only_for_long_runs() {
        assert_eq!(expected_stored(10, 0.5, 4), 5.0);
        assert!(expected_stored(1000, 0.05, 4) > 50.0);
    }

    #[test]
    fn compute_bound_dense_layer() {
        let layer = LayerShape::new("d", 64, 64, 32, 32, 3, 3).same_padded();
        let arch = ArchConfig::default();
        let c = count_events(&arch, &layer, Dataflow::Dense, Profile::uniform(1.0, 1.0)).unwrap();
        let big_dram = ArchConfig { dram_values_per_cycle: 1e9, ..arch.clone() };
        let (cycles, _) = analytic_time_energy(&c, &big_dram, &arch.energy).unwrap();
        assert_eq!(cycles, layer.dense_multiplies() as f64 / 1024.0);
    }

    #[test]
    fn dram_starved_layer() {
        let layer = LayerShape::new("d", 64, 64, 4, 4, 3, 3).same_padded();
        let arch = ArchConfig { dram_values_per_cycle: 0.01, ..Default::default() };
        let c = count_events(&arch, &layer, Dataflow::Dense, Profile::uniform(1.0, 1.0)).unwrap();
        let (cycles, _) = analytic_time_energy(&c, &arch, &arch.energy).unwrap();
        assert_eq!(cycles, layer.weight_count() as f64 / 0.01);
    }

    #[test]
    fn sparse_multiplies_follow_the_product_rule() {
        let layer = LayerShape::new("s", 32, 32, 16, 16, 3, 3).same_padded();
        let arch = ArchConfig::default();
        let c = count_events(&arch, &layer, Dataflow::Sparse, Profile::uniform(0.1, 0.1)).unwrap();
        let dense = layer.dense_multiplies() as f64;
        assert!((c.useful_multiplies / dense - 0.01).abs() < 1e-12);
    }

    #[test]
    fn zero_density_is_rejected() {
        let layer = LayerShape::new("s", 1, 1, 2, 2, 1, 1);
        let arch = ArchConfig::default();
        assert!(count_events(&arch, &layer, Dataflow::Sparse, Profile::uniform(0.0, 1.0)).is_err());
    }
}
