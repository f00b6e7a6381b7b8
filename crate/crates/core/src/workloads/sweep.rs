//! Density and PE-granularity sweeps over synthetic layers of a network.

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::charge_activation_spill;
use crate::dataflow::{choose_kc, partition_tiles};
use crate::error::{Error, Result};
use crate::simulator::{
    compress_activations, compress_weights, dcnn_report, simulate_scnn_layer, ArchConfig, DenseCounts, SimReport,
    Variant,
};
use crate::tensors::{gen_synthetic, DenseTensor, LayerShape, ValueRange};

use super::descriptor::NetworkDescriptor;
use super::run::derive_seed;

const SWEEP_WEIGHT_STREAM: u64 = 4;
const SWEEP_ACT_STREAM: u64 = 5;

/// Label of the network-total rows.
pub const TOTAL: &str = "total";

fn operands(layer: &LayerShape, i: usize, seed: u64, wd: f64, ad: f64) -> Result<(DenseTensor, DenseTensor)> {
    let w = gen_synthetic(layer.weight_dims(), wd, derive_seed(seed, i, SWEEP_WEIGHT_STREAM), ValueRange::WEIGHTS)?;
    let a = gen_synthetic(layer.input_dims(), ad, derive_seed(seed, i, SWEEP_ACT_STREAM), ValueRange::ACTIVATIONS)?;
    Ok((w, a))
}

/// Sparse, dense and dense-optimized reports of one layer on concrete
/// operands, with activation spills charged where a machine tiles.
fn layer_reports(arch: &ArchConfig, layer: &LayerShape, w: &DenseTensor, a: &DenseTensor) -> Result<[SimReport; 3]> {
    let plan = partition_tiles(layer, arch.pe_rows, arch.pe_cols)?;
    let groups = choose_kc(layer, &plan, arch.acc_capacity())?;
    let cw = compress_weights(layer, w, &groups, arch.index_bits)?;
    let ca = compress_activations(a, arch.pe_rows, arch.pe_cols, arch.index_bits)?;
    let (_, mut scnn) = simulate_scnn_layer(arch, layer, &cw, &ca)?;
    let counts = DenseCounts::compute(layer, w, a)?;
    let mut dcnn = dcnn_report(arch, layer, counts, Variant::Dcnn);
    let mut opt = dcnn_report(arch, layer, counts, Variant::DcnnOpt);

    let compressed = (scnn.input_footprint.total_bits() + scnn.output_footprint.total_bits()) as f64 / 16.0;
    if scnn.dram_tiled {
        charge_activation_spill(&mut scnn, compressed, &arch.energy);
    }
    if dcnn.dram_tiled {
        charge_activation_spill(&mut dcnn, (layer.input_count() + layer.output_count()) as f64, &arch.energy);
    }
    if opt.dram_tiled {
        charge_activation_spill(&mut opt, compressed, &arch.energy);
    }
    Ok([scnn, dcnn, opt])
}

/// One point of the density sweep for one layer (or the network total) and
/// one machine, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub network: String,
    pub layer: String,
    /// Weight and activation density, both.
    pub density: f64,
    pub variant: Variant,
    pub cycles: f64,
    pub energy: f64,
    pub dcnn_cycles: f64,
    pub dcnn_energy: f64,
    /// `dcnn_cycles / cycles`.
    pub speedup: f64,
    /// `dcnn_energy / energy`.
    pub energy_gain: f64,
    /// Speedup if every multiplier did useful work every cycle.
    pub ideal_speedup: f64,
    pub utilization: f64,
    pub barrier_fraction: f64,
}

#[derive(Default, Clone, Copy)]
struct Acc {
    cycles: f64,
    energy: f64,
    useful: f64,
    utilization: f64,
    barrier: f64,
}

impl Acc {
    fn add(&mut self, r: &SimReport) {
        self.cycles += r.cycles as f64;
        self.energy += r.energy;
        self.useful += r.useful_multiplies as f64;
        self.utilization += r.mult_utilization();
        self.barrier += r.barrier_stall_fraction();
    }

    fn scaled(self, f: f64) -> Self {
        Acc {
            cycles: self.cycles * f,
            energy: self.energy * f,
            useful: self.useful * f,
            utilization: self.utilization * f,
            barrier: self.barrier * f,
        }
    }
}

/// Sweeps weight and activation density together. Each layer gets fresh
/// synthetic operands per point and seed; the sparse machine runs through
/// the cycle-level simulator and the dense machines through their
/// throughput model. Rows come per layer and for the network total, per
/// point in the given order, with machines in the order sparse, dense,
/// dense-optimized.
pub fn density_sweep(net: &NetworkDescriptor, arch: &ArchConfig, points: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    net.validate()?;
    arch.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("density sweep needs at least one seed".into()));
    }
    if let Some(p) = points.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::InvalidArgument(format!("density point {p} outside (0, 1]")));
    }
    let shapes = net.shapes()?;
    let cells: Vec<(f64, u64)> = points.iter().flat_map(|&p| seeds.iter().map(move |&s| (p, s))).collect();
    let results: Vec<Vec<[SimReport; 3]>> = cells
        .par_iter()
        .map(|&(d, seed)| {
            shapes
                .iter()
                .enumerate()
                .map(|(i, layer)| {
                    let (w, a) = operands(layer, i, seed, d, d)?;
                    layer_reports(arch, layer, &w, &a)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mults = arch.multipliers() as f64;
    let inv = 1.0 / seeds.len() as f64;
    let mut rows = Vec::new();
    for (pi, &d) in points.iter().enumerate() {
        let runs = &results[pi * seeds.len()..(pi + 1) * seeds.len()];
        let mut names: Vec<&str> = shapes.iter().map(|s| s.name.as_str()).collect();
        names.push(TOTAL);
        for (li, name) in names.into_iter().enumerate() {
            let mut acc = [Acc::default(); 3];
            for run in runs {
                for (m, a) in acc.iter_mut().enumerate() {
                    if li < shapes.len() {
                        a.add(&run[li][m]);
                    } else {
                        let layers: Vec<SimReport> = run.iter().map(|r| r[m].clone()).collect();
                        let mut total = SimReport::merge(net.name.clone(), layers);
                        total.per_layer.clear();
                        a.add(&total);
                    }
                }
            }
            let acc = acc.map(|a| a.scaled(inv));
            let dcnn = acc[1];
            for (m, v) in [Variant::Scnn, Variant::Dcnn, Variant::DcnnOpt].into_iter().enumerate() {
                let a = acc[m];
                rows.push(SweepRow {
                    network: net.name.clone(),
                    layer: name.to_string(),
                    density: d,
                    variant: v,
                    cycles: a.cycles,
                    energy: a.energy,
                    dcnn_cycles: dcnn.cycles,
                    dcnn_energy: dcnn.energy,
                    speedup: ratio(dcnn.cycles, a.cycles),
                    energy_gain: ratio(dcnn.energy, a.energy),
                    ideal_speedup: ratio(dcnn.cycles * mults, a.useful),
                    utilization: a.utilization,
                    barrier_fraction: a.barrier,
                });
            }
        }
    }
    Ok(rows)
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        f64::INFINITY
    } else {
        a / b
    }
}

/// Architecture with `rows x cols` PEs sharing `total_multipliers`: square
/// (or nearly square) multiplier arrays, the same ratio of banks to
/// multipliers as `base`, and the chip-wide accumulator and activation RAM
/// capacity of `base` spread evenly over the PEs.
pub fn grid_arch(base: &ArchConfig, rows: usize, cols: usize, total_multipliers: usize) -> Result<ArchConfig> {
    let pes = rows * cols;
    if pes == 0 || total_multipliers % pes != 0 {
        return Err(Error::Config(format!("{total_multipliers} multipliers do not split over {rows}x{cols} PEs")));
    }
    let per_pe = total_multipliers / pes;
    let mut f = (per_pe as f64).sqrt() as usize;
    while f > 1 && per_pe % f != 0 {
        f -= 1;
    }
    let f = f.max(1);
    let i = per_pe / f;
    let banks = (base.banks * per_pe / base.multipliers_per_pe()).max(1);
    let chip_entries = base.acc_capacity() * base.pes();
    let chip_ram = base.pes();
    Ok(ArchConfig {
        pe_rows: rows,
        pe_cols: cols,
        weight_vector: f,
        activation_vector: i,
        banks,
        bank_entries: (chip_entries / (pes * banks)).max(1),
        iaram_bytes: base.iaram_bytes * chip_ram / pes,
        oaram_bytes: base.oaram_bytes * chip_ram / pes,
        ..base.clone()
    })
}

/// One grid of the PE-granularity sweep for one layer or the network total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeRow {
    pub network: String,
    pub layer: String,
    pub rows: usize,
    pub cols: usize,
    pub pes: usize,
    pub weight_vector: usize,
    pub activation_vector: usize,
    pub banks: usize,
    pub cycles: f64,
    /// For the total row, the mean of the per-layer utilizations.
    pub utilization: f64,
    pub barrier_fraction: f64,
    /// Cycles of the first grid over cycles of this one.
    pub speedup: f64,
}

/// Runs the network's layers at their descriptor density targets on each
/// grid, with the same synthetic operands for every grid.
pub fn pe_granularity_sweep(
    net: &NetworkDescriptor,
    base: &ArchConfig,
    total_multipliers: usize,
    grids: &[(usize, usize)],
    seeds: &[u64],
) -> Result<Vec<PeRow>> {
    net.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("granularity sweep needs at least one seed".into()));
    }
    let shapes = net.shapes()?;
    let archs: Vec<ArchConfig> = grids
        .iter()
        .map(|&(r, c)| grid_arch(base, r, c, total_multipliers))
        .collect::<Result<_>>()?;
    for a in &archs {
        a.validate()?;
    }
    let cells: Vec<(usize, u64)> = (0..archs.len()).flat_map(|g| seeds.iter().map(move |&s| (g, s))).collect();
    let results: Vec<Vec<SimReport>> = cells
        .par_iter()
        .map(|&(g, seed)| {
            let arch = &archs[g];
            shapes
                .iter()
                .enumerate()
                .map(|(i, layer)| {
                    let entry = &net.layers[i];
                    let (w, a) = operands(layer, i, seed, entry.weight_density, entry.activation_density)?;
                    let plan = partition_tiles(layer, arch.pe_rows, arch.pe_cols)?;
                    let groups = choose_kc(layer, &plan, arch.acc_capacity())?;
                    let cw = compress_weights(layer, &w, &groups, arch.index_bits)?;
                    let ca = compress_activations(&a, arch.pe_rows, arch.pe_cols, arch.index_bits)?;
                    Ok(simulate_scnn_layer(arch, layer, &cw, &ca)?.1)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let inv = 1.0 / seeds.len() as f64;
    let mut rows = Vec::new();
    let mut first_cycles = Vec::new();
    for (g, arch) in archs.iter().enumerate() {
        let runs = &results[g * seeds.len()..(g + 1) * seeds.len()];
        for li in 0..=shapes.len() {
            let mut acc = Acc::default();
            for run in runs {
                if li < shapes.len() {
                    acc.add(&run[li]);
                } else {
                    let util = run.iter().map(SimReport::mult_utilization).sum::<f64>() / run.len() as f64;
                    let mut total = SimReport::merge(net.name.clone(), run.clone());
                    total.per_layer.clear();
                    acc.add(&total);
                    acc.utilization += util - total.mult_utilization();
                }
            }
            let acc = acc.scaled(inv);
            if g == 0 {
                first_cycles.push(acc.cycles);
            }
            rows.push(PeRow {
                network: net.name.clone(),
                layer: shapes.get(li).map_or(TOTAL, |s| s.name.as_str()).to_string(),
                rows: arch.pe_rows,
                cols: arch.pe_cols,
                pes: arch.pes(),
                weight_vector: arch.weight_vector,
                activation_vector: arch.activation_vector,
                banks: arch.banks,
                cycles: acc.cycles,
                utilization: acc.utilization,
                barrier_fraction: acc.barrier,
                speedup: ratio(first_cycles[li], acc.cycles),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arch_keeps_chip_totals() {
        let base = ArchConfig::default();
        for (r, c, f) in [(8, 8, 4), (4, 4, 8), (2, 2, 16), (1, 1, 32)] {
            let a = grid_arch(&base, r, c, 1024).unwrap();
            assert_eq!((a.weight_vector, a.activation_vector), (f, f));
            assert_eq!(a.multipliers(), 1024);
            assert_eq!(a.banks, 2 * f * f);
            assert_eq!(a.acc_capacity() * a.pes(), base.acc_capacity() * base.pes());
            assert_eq!(a.activation_ram_bytes(), base.activation_ram_bytes());
        }
        assert!(grid_arch(&base, 3, 3, 1024).is_err());
    }
}
