//! End-to-end network runs with activations chained from layer to layer,
//! and the on-chip capacity check.

use serde::Serialize;

use crate::analytic::{analytic_time_energy, charge_activation_spill, count_events, Dataflow, Profile};
use crate::codec::Footprint;
use crate::dataflow::{choose_kc, partition_tiles};
use crate::error::{Error, Result};
use crate::simulator::{
    compress_activations, compress_weights, simulate_dcnn_layer, simulate_scnn_layer_with, ArchConfig, LayerOptions,
    SimReport, Variant,
};
use crate::tensors::{
    concat_channels, gen_synthetic, max_pool, postprocess, prune_magnitude, reference_conv, DenseTensor, DimRole,
    LayerShape, ValueRange,
};

use super::config::RunVariant;
use super::descriptor::{NetworkDescriptor, PoolSpec, Source};

/// Seed of one random stream of one layer.
pub(crate) fn derive_seed(seed: u64, layer: usize, stream: u64) -> u64 {
    let mut z = seed
        ^ (layer as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ stream.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const WEIGHT_STREAM: u64 = 1;
const RESIDENT_STREAM: u64 = 2;
const STORED_STREAM: u64 = 3;

/// Pruned weights of layer `i` for a run seeded with `seed`.
pub fn layer_weights(net: &NetworkDescriptor, i: usize, seed: u64) -> Result<DenseTensor> {
    let layer = net.layers[i].shape()?;
    let dense = gen_synthetic(layer.weight_dims(), 1.0, derive_seed(seed, i, WEIGHT_STREAM), ValueRange::WEIGHTS)?;
    prune_magnitude(&dense, net.layers[i].weight_density)
}

pub fn synthetic_input(net: &NetworkDescriptor, seed: u64) -> Result<DenseTensor> {
    let i = &net.input;
    gen_synthetic(
        vec![(DimRole::InChannel, i.channels), (DimRole::Width, i.width), (DimRole::Height, i.height)],
        i.density,
        seed,
        ValueRange::ACTIVATIONS,
    )
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: u64,
    /// Network input; synthesized from the descriptor when absent.
    pub input: Option<DenseTensor>,
    /// Keep every layer's dense input and output in the result.
    pub keep_activations: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerActivations {
    pub input: DenseTensor,
    pub output: DenseTensor,
}

#[derive(Debug, Clone)]
pub struct NetworkRun {
    pub network: String,
    pub seed: u64,
    /// One network report per simulated machine, with per-layer reports
    /// inside, in the order the variants were requested.
    pub reports: Vec<SimReport>,
    /// Layers whose sparse output was checked against the reference.
    pub oracle_layers: usize,
    pub activations: Vec<LayerActivations>,
}

impl NetworkRun {
    pub fn report(&self, v: Variant) -> Option<&SimReport> {
        self.reports.iter().find(|r| r.variant == v)
    }
}

/// Errors with the first coordinate where `sim` and `reference` differ.
pub fn compare_outputs(layer: &LayerShape, sim: &DenseTensor, reference: &DenseTensor) -> Result<()> {
    if sim.shape() != reference.shape() {
        return Err(Error::Shape(format!(
            "layer `{}`: simulated output {:?} vs reference {:?}",
            layer.name,
            sim.shape(),
            reference.shape()
        )));
    }
    let (w, h) = (layer.out_w(), layer.out_h());
    match sim.values().iter().zip(reference.values()).position(|(a, b)| a != b) {
        None => Ok(()),
        Some(idx) => Err(Error::OracleMismatch {
            layer: layer.name.clone(),
            k: idx / (w * h),
            x: idx / h % w,
            y: idx % h,
            simulated: sim.values()[idx],
            reference: reference.values()[idx],
        }),
    }
}

fn apply_pools(t: &DenseTensor, pools: &[PoolSpec]) -> Result<DenseTensor> {
    let mut out = t.clone();
    for p in pools {
        out = max_pool(&out, p.size, p.stride, p.pad)?;
    }
    Ok(out)
}

/// The tensor resident in the activation RAMs while layer `i` runs, and the
/// layer input derived from it by the remaining pooling steps.
fn assemble_input(
    net: &NetworkDescriptor,
    i: usize,
    input: &DenseTensor,
    stored: &[Option<DenseTensor>],
) -> Result<(DenseTensor, DenseTensor)> {
    let pools = &net.layers[i].input_pool;
    let mut resident = Vec::new();
    let mut pooled = Vec::new();
    for s in net.sources(i)? {
        let (t, skip) = match s {
            Source::Input => (input, 0),
            Source::Layer(j) => {
                let t = stored[j].as_ref().expect("outputs are kept until their last consumer");
                (t, usize::from(net.stored_pool(j).is_some()))
            }
        };
        resident.push(t);
        pooled.push(apply_pools(t, &pools[skip..])?);
    }
    let resident = concat_channels(&resident)?;
    let pooled: Vec<&DenseTensor> = pooled.iter().collect();
    Ok((resident, concat_channels(&pooled)?))
}

fn per_pe_max_bytes(arch: &ArchConfig, t: &DenseTensor) -> Result<(u64, Footprint)> {
    let ca = compress_activations(t, arch.pe_rows, arch.pe_cols, arch.index_bits)?;
    let fp = ca.pe_footprints(&arch.footprint);
    let max = fp.iter().map(Footprint::data_bytes).max().unwrap_or(0);
    Ok((max, fp.into_iter().sum()))
}

pub fn run_network(net: &NetworkDescriptor, arch: &ArchConfig, variants: &[RunVariant], seed: u64) -> Result<NetworkRun> {
    run_network_with(net, arch, variants, &RunOptions { seed, ..Default::default() })
}

/// Runs every layer in order. Each layer reads the post-processed outputs
/// of its sources, so all variants see the same activations. With the
/// oracle variant every sparse output is compared against the reference
/// convolution and the run stops at the first differing value.
pub fn run_network_with(
    net: &NetworkDescriptor,
    arch: &ArchConfig,
    variants: &[RunVariant],
    opts: &RunOptions,
) -> Result<NetworkRun> {
    net.validate()?;
    arch.validate()?;
    if variants.is_empty() {
        return Err(Error::InvalidArgument("no variants selected".into()));
    }
    let oracle = variants.contains(&RunVariant::Oracle);
    let scnn = variants.contains(&RunVariant::Scnn);
    let machines: Vec<Variant> = variants.iter().filter_map(|v| v.machine()).collect();
    let mut per_layer: Vec<Vec<SimReport>> = vec![Vec::new(); machines.len()];

    let input = match &opts.input {
        Some(t) => {
            let i = &net.input;
            if t.shape() != [i.channels, i.width, i.height] {
                return Err(Error::Shape(format!(
                    "network input is {:?}, descriptor expects {}x{}x{}",
                    t.shape(),
                    i.channels,
                    i.width,
                    i.height
                )));
            }
            t.clone()
        }
        None => synthetic_input(net, opts.seed)?,
    };
    let n = net.layers.len();
    let last_use: Vec<usize> = (0..n).map(|j| net.consumers(j).last().copied().unwrap_or(j)).collect();
    let mut stored: Vec<Option<DenseTensor>> = vec![None; n];
    let mut activations = Vec::new();
    let mut oracle_layers = 0;

    for i in 0..n {
        let entry = &net.layers[i];
        let layer = entry.shape()?;
        let (resident, x) = assemble_input(net, i, &input, &stored)?;
        let x = DenseTensor::new(layer.input_dims(), x.into_values())?;
        let w = layer_weights(net, i, opts.seed)?;
        let requant = entry.requant();

        let mut scnn_run = None;
        if scnn || oracle {
            let plan = partition_tiles(&layer, arch.pe_rows, arch.pe_cols)?;
            let groups = choose_kc(&layer, &plan, arch.acc_capacity())?;
            let cw = compress_weights(&layer, &w, &groups, arch.index_bits)?;
            let ca = compress_activations(&x, arch.pe_rows, arch.pe_cols, arch.index_bits)?;
            let lo = LayerOptions { requant, trace: false };
            let run = simulate_scnn_layer_with(arch, &layer, &cw, &ca, &lo)?;
            let y = DenseTensor::new(layer.output_dims(), run.outputs.decompress()?.into_values())?;
            scnn_run = Some((run.report, y));
        }
        let reference = if oracle || scnn_run.is_none() {
            Some(postprocess(&reference_conv(&layer, &w, &x)?, &requant))
        } else {
            None
        };
        if let (true, Some((_, y)), Some(r)) = (oracle, &scnn_run, &reference) {
            compare_outputs(&layer, y, r)?;
            oracle_layers += 1;
        }

        let (scnn_report, y) = match (scnn_run, reference) {
            (Some((rep, y)), _) => (Some(rep), y),
            (None, Some(r)) => (None, r),
            (None, None) => unreachable!(),
        };
        let kept = match net.stored_pool(i) {
            Some(p) => max_pool(&y, p.size, p.stride, p.pad)?,
            None => y.clone(),
        };

        let (iaram, resident_fp) = per_pe_max_bytes(arch, &resident)?;
        let (oaram, stored_fp) = per_pe_max_bytes(arch, &kept)?;
        for (slot, &v) in machines.iter().enumerate() {
            let mut rep = match v {
                Variant::Scnn => {
                    let mut rep = scnn_report.clone().expect("sparse run requested");
                    rep.max_iaram_bytes = iaram;
                    rep.max_oaram_bytes = oaram;
                    rep.dram_tiled = iaram > arch.iaram_bytes as u64 || oaram > arch.oaram_bytes as u64;
                    rep
                }
                _ => simulate_dcnn_layer(arch, &layer, &w, &x, v)?,
            };
            if rep.dram_tiled {
                let words = match v {
                    Variant::Dcnn => (layer.input_count() + layer.output_count()) as f64,
                    _ => (resident_fp.total_bits() + stored_fp.total_bits()) as f64 / 16.0,
                };
                charge_activation_spill(&mut rep, words, &arch.energy);
            }
            per_layer[slot].push(rep);
        }

        if opts.keep_activations {
            activations.push(LayerActivations { input: x, output: y });
        }
        stored[i] = Some(kept);
        for j in 0..=i {
            if last_use[j] == i {
                stored[j] = None;
            }
        }
    }

    let reports = per_layer.into_iter().map(|layers| SimReport::merge(net.name.clone(), layers)).collect();
    Ok(NetworkRun { network: net.name.clone(), seed: opts.seed, reports, oracle_layers, activations })
}

/// On-chip storage need of one layer with activations synthesized at the
/// descriptor's density targets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityRow {
    pub network: String,
    pub layer: String,
    /// Largest per-PE data bytes of the resident input and stored output.
    pub iaram_bytes: u64,
    pub oaram_bytes: u64,
    pub iaram_capacity: u64,
    pub oaram_capacity: u64,
    pub tiled: bool,
    /// Activation words moved through DRAM when tiled.
    pub spill_words: f64,
    pub tiling_energy: f64,
    /// Analytical energy of the layer on chip.
    pub layer_energy: f64,
    /// `tiling_energy / layer_energy`.
    pub penalty: f64,
}

fn stored_dims(net: &NetworkDescriptor, s: Source) -> Result<(usize, usize, usize)> {
    Ok(match s {
        Source::Input => (net.input.channels, net.input.width, net.input.height),
        Source::Layer(j) => {
            let shape = net.layers[j].shape()?;
            let (mut w, mut h) = (shape.out_w(), shape.out_h());
            if let Some(p) = net.stored_pool(j) {
                w = p.out_extent(w).unwrap_or(0);
                h = p.out_extent(h).unwrap_or(0);
            }
            (shape.out_channels, w, h)
        }
    })
}

fn volume(c: usize, w: usize, h: usize) -> Vec<(DimRole, usize)> {
    vec![(DimRole::InChannel, c), (DimRole::Width, w), (DimRole::Height, h)]
}

/// Checks every layer's resident input and stored output against the
/// per-PE IARAM and OARAM. Tiled layers are charged the DRAM energy of
/// spilling both and reported relative to their analytical on-chip energy.
pub fn capacity_report(net: &NetworkDescriptor, arch: &ArchConfig, seed: u64) -> Result<Vec<CapacityRow>> {
    net.validate()?;
    arch.validate()?;
    let mut rows = Vec::with_capacity(net.layers.len());
    for (i, entry) in net.layers.iter().enumerate() {
        let layer = entry.shape()?;
        let mut c = 0;
        let mut plane = (0, 0);
        for s in net.sources(i)? {
            let (sc, w, h) = stored_dims(net, s)?;
            c += sc;
            plane = (w, h);
        }
        let resident = gen_synthetic(
            volume(c, plane.0, plane.1),
            entry.activation_density,
            derive_seed(seed, i, RESIDENT_STREAM),
            ValueRange::ACTIVATIONS,
        )?;
        let (oc, ow, oh) = stored_dims(net, Source::Layer(i))?;
        let stored = gen_synthetic(
            volume(oc, ow, oh),
            net.output_density(i),
            derive_seed(seed, i, STORED_STREAM),
            ValueRange::ACTIVATIONS,
        )?;
        let (iaram, in_fp) = per_pe_max_bytes(arch, &resident)?;
        let (oaram, out_fp) = per_pe_max_bytes(arch, &stored)?;
        let tiled = iaram > arch.iaram_bytes as u64 || oaram > arch.oaram_bytes as u64;

        let counts = count_events(
            arch,
            &layer,
            Dataflow::Sparse,
            Profile::uniform(entry.weight_density, entry.activation_density),
        )?;
        let (_, layer_energy) = analytic_time_energy(&counts, arch, &arch.energy)?;
        let mut spill = SimReport { energy: layer_energy, ..Default::default() };
        let mut spill_words = 0.0;
        if tiled {
            spill_words = (in_fp.total_bits() + out_fp.total_bits()) as f64 / 16.0;
            charge_activation_spill(&mut spill, spill_words, &arch.energy);
        }
        rows.push(CapacityRow {
            network: net.name.clone(),
            layer: entry.name.clone(),
            iaram_bytes: iaram,
            oaram_bytes: oaram,
            iaram_capacity: arch.iaram_bytes as u64,
            oaram_capacity: arch.oaram_bytes as u64,
            tiled,
            spill_words,
            tiling_energy: spill.tiling_energy,
            layer_energy,
            penalty: spill.tiling_penalty(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_distinct_per_stream() {
        let a = derive_seed(1, 0, WEIGHT_STREAM);
        assert_ne!(a, derive_seed(1, 1, WEIGHT_STREAM));
        assert_ne!(a, derive_seed(1, 0, RESIDENT_STREAM));
        assert_ne!(a, derive_seed(2, 0, WEIGHT_STREAM));
        assert_eq!(a, derive_seed(1, 0, WEIGHT_STREAM));
    }

    #[test]
    fn mismatch_reports_coordinates() {
        let layer = LayerShape::new("m", 1, 2, 2, 3, 1, 1);
        let a = DenseTensor::zeros(layer.output_dims());
        let mut b = a.clone();
        b.values_mut()[3 * 2 + 3 + 1] = 5;
        match compare_outputs(&layer, &a, &b) {
            Err(Error::OracleMismatch { k, x, y, reference, .. }) => assert_eq!((k, x, y, reference), (1, 1, 1, 5)),
            other => panic!("{other:?}"),
        }
    }
}
