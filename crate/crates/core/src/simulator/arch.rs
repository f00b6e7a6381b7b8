use serde::{Deserialize, Serialize};

use crate::analytic::{AreaTable, EnergyModel};
use crate::codec::{FootprintModel, DEFAULT_INDEX_BITS};
use crate::error::{Error, Result};

use super::banks::BankMapping;

/// Hardware parameters shared by the sparse accelerator and the dense
/// baselines. The dense machines reuse the PE grid and multiplier count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub pe_rows: usize,
    pub pe_cols: usize,
    /// Non-zero weights fetched per cycle (F).
    pub weight_vector: usize,
    /// Non-zero activations fetched per cycle (I).
    pub activation_vector: usize,
    /// Accumulator banks behind the scatter crossbar (A).
    pub banks: usize,
    /// Entries per bank in one accumulator buffer.
    pub bank_entries: usize,
    /// Products a bank can have queued at its input before the multiplier
    /// array has to stall.
    pub bank_queue_depth: usize,
    pub bank_mapping: BankMapping,
    pub iaram_bytes: usize,
    pub oaram_bytes: usize,
    /// Weight FIFO entries; one entry holds a vector of `weight_vector` values.
    pub weight_fifo_entries: usize,
    pub double_buffered: bool,
    /// DRAM values (16-bit words) delivered per cycle.
    pub dram_values_per_cycle: f64,
    pub index_bits: u32,
    /// Extra cycles per output-channel group for the neighbour exchange.
    pub halo_latency_cycles: u64,
    /// Activation SRAM of the dense baseline, whole chip.
    pub dense_sram_bytes: usize,
    pub footprint: FootprintModel,
    pub energy: EnergyModel,
    pub area: AreaTable,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            pe_rows: 8,
            pe_cols: 8,
            weight_vector: 4,
            activation_vector: 4,
            banks: 32,
            bank_entries: 32,
            bank_queue_depth: 4,
            bank_mapping: BankMapping::Hashed,
            iaram_bytes: 10 * 1024,
            oaram_bytes: 10 * 1024,
            weight_fifo_entries: 50,
            double_buffered: true,
            dram_values_per_cycle: 16.0,
            index_bits: DEFAULT_INDEX_BITS,
            halo_latency_cycles: 0,
            dense_sram_bytes: 2 * 1024 * 1024,
            footprint: FootprintModel::default(),
            energy: EnergyModel::default(),
            area: AreaTable::default(),
        }
    }
}

impl ArchConfig {
    pub fn with_grid(mut self, rows: usize, cols: usize) -> Self {
        self.pe_rows = rows;
        self.pe_cols = cols;
        self
    }

    pub fn with_vectors(mut self, f: usize, i: usize) -> Self {
        self.weight_vector = f;
        self.activation_vector = i;
        self
    }

    pub fn with_banks(mut self, banks: usize) -> Self {
        self.banks = banks;
        self
    }

    pub fn pes(&self) -> usize {
        self.pe_rows * self.pe_cols
    }

    pub fn multipliers_per_pe(&self) -> usize {
        self.weight_vector * self.activation_vector
    }

    pub fn multipliers(&self) -> usize {
        self.pes() * self.multipliers_per_pe()
    }

    /// Accumulator entries available to one output-channel group. A second
    /// buffer of the same size exists when double-buffered.
    pub fn acc_capacity(&self) -> usize {
        self.banks * self.bank_entries
    }

    /// Weight values the FIFO can hold at once.
    pub fn fifo_values(&self) -> usize {
        self.weight_fifo_entries * self.weight_vector
    }

    /// Activation RAM of the whole chip, both IARAM and OARAM.
    pub fn activation_ram_bytes(&self) -> usize {
        self.pes() * (self.iaram_bytes + self.oaram_bytes)
    }

    /// Rejects unusable configurations. Returns advisory warnings for legal
    /// but unbalanced ones.
    pub fn validate(&self) -> Result<Vec<String>> {
        for (name, v) in [
            ("pe_rows", self.pe_rows),
            ("pe_cols", self.pe_cols),
            ("weight_vector", self.weight_vector),
            ("activation_vector", self.activation_vector),
            ("banks", self.banks),
            ("bank_entries", self.bank_entries),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.dram_values_per_cycle > 0.0) {
            return Err(Error::Config("dram_values_per_cycle must be positive".into()));
        }
        if !(1..=8).contains(&self.index_bits) {
            return Err(Error::Config(format!("index_bits {} outside 1..=8", self.index_bits)));
        }
        self.energy.validate()?;
        let mut warnings = Vec::new();
        if self.banks < self.multipliers_per_pe() {
            warnings.push(format!(
                "{} accumulator banks for a {}x{} multiplier array; expect heavy bank contention",
                self.banks, self.weight_vector, self.activation_vector
            ));
        }
        Ok(warnings)
    }
}
