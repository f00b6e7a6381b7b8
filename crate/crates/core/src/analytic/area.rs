use serde::{Deserialize, Serialize};

use crate::simulator::ArchConfig;

/// Synthesized PE area by structure (mm^2) together with the structure size
/// each entry was measured at. [`area_model`] scales every entry linearly
/// from its reference size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AreaTable {
    /// IARAM + OARAM.
    pub activation_ram: f64,
    pub activation_ram_bytes: usize,
    /// Chip-level activation SRAM the RAM entry stands for when comparing
    /// whole accelerators.
    pub nominal_chip_sram_bytes: usize,
    pub weight_fifo: f64,
    pub weight_fifo_entries: usize,
    pub multipliers: f64,
    pub multiplier_count: usize,
    pub scatter_network: f64,
    /// Crossbar ports, inputs times outputs.
    pub scatter_ports: usize,
    pub accumulators: f64,
    /// Accumulator entries over both buffers.
    pub accumulator_entries: usize,
    /// Control, sequencing and post-processing; scales with multipliers.
    pub other: f64,
}

impl Default for AreaTable {
    fn default() -> Self {
        Self {
            activation_ram: 0.031,
            activation_ram_bytes: 20 * 1024,
            nominal_chip_sram_bytes: 1024 * 1024,
            weight_fifo: 0.004,
            weight_fifo_entries: 50,
            multipliers: 0.008,
            multiplier_count: 16,
            scatter_network: 0.026,
            scatter_ports: 16 * 32,
            accumulators: 0.036,
            accumulator_entries: 2 * 32 * 32,
            other: 0.018,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AreaBreakdown {
    pub activation_ram: f64,
    pub weight_fifo: f64,
    pub multipliers: f64,
    pub scatter_network: f64,
    pub accumulators: f64,
    pub other: f64,
    pub pes: usize,
}

impl AreaBreakdown {
    pub fn pe_total(&self) -> f64 {
        self.activation_ram + self.weight_fifo + self.multipliers + self.scatter_network + self.accumulators + self.other
    }

    pub fn accelerator_total(&self) -> f64 {
        self.pe_total() * self.pes as f64
    }
}

fn ratio(size: usize, reference: usize) -> f64 {
    if reference == 0 {
        0.0
    } else {
        size as f64 / reference as f64
    }
}

/// Area of the sparse accelerator described by `arch`.
pub fn area_model(arch: &ArchConfig, t: &AreaTable) -> AreaBreakdown {
    let mults = arch.multipliers_per_pe();
    let acc_entries = arch.banks * arch.bank_entries * if arch.double_buffered { 2 } else { 1 };
    AreaBreakdown {
        activation_ram: t.activation_ram * ratio(arch.iaram_bytes + arch.oaram_bytes, t.activation_ram_bytes),
        weight_fifo: t.weight_fifo * ratio(arch.weight_fifo_entries, t.weight_fifo_entries),
        multipliers: t.multipliers * ratio(mults, t.multiplier_count),
        scatter_network: t.scatter_network * ratio(mults * arch.banks, t.scatter_ports),
        accumulators: t.accumulators * ratio(acc_entries, t.accumulator_entries),
        other: t.other * ratio(mults, t.multiplier_count),
        pes: arch.pes(),
    }
}

/// Area of the dense baseline on the same PE grid: the activation SRAM
/// scales with its chip capacity relative to the nominal sparse chip, and
/// there is no scatter network or banked accumulator.
pub fn dense_area_model(arch: &ArchConfig, t: &AreaTable) -> AreaBreakdown {
    let mults = arch.multipliers_per_pe();
    AreaBreakdown {
        activation_ram: t.activation_ram * ratio(arch.dense_sram_bytes, t.nominal_chip_sram_bytes),
        weight_fifo: t.weight_fifo * ratio(arch.weight_fifo_entries, t.weight_fifo_entries),
        multipliers: t.multipliers * ratio(mults, t.multiplier_count),
        scatter_network: 0.0,
        accumulators: 0.0,
        other: t.other * ratio(mults, t.multiplier_count),
        pes: arch.pes(),
    }
}
