use serde::{Deserialize, Serialize};

use crate::codec::Footprint;

/// Countable events of one layer run, shared by the cycle-level models and
/// the analytical model. DRAM traffic is in 16-bit words.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EventCounts {
    /// Multiplies that drew energy.
    pub multiplies: f64,
    /// Multiplies suppressed by zero-operand gating.
    pub gated_multiplies: f64,
    pub crossbar_transfers: f64,
    /// Read-modify-write updates of banked accumulator entries.
    pub acc_updates: f64,
    /// Accumulator entries read out by the post-processing unit.
    pub acc_drain_reads: f64,
    /// Updates of accumulator registers inside a dot-product unit.
    pub acc_register_updates: f64,
    pub weight_buffer_reads: f64,
    pub input_ram_reads: f64,
    pub output_ram_writes: f64,
    pub halo_transfers: f64,
    pub dram_weight_words: f64,
    pub dram_activation_words: f64,
}

impl EventCounts {
    pub fn dram_words(&self) -> f64 {
        self.dram_weight_words + self.dram_activation_words
    }

    fn fields(&mut self) -> [&mut f64; 12] {
        [
            &mut self.multiplies,
            &mut self.gated_multiplies,
            &mut self.crossbar_transfers,
            &mut self.acc_updates,
            &mut self.acc_drain_reads,
            &mut self.acc_register_updates,
            &mut self.weight_buffer_reads,
            &mut self.input_ram_reads,
            &mut self.output_ram_writes,
            &mut self.halo_transfers,
            &mut self.dram_weight_words,
            &mut self.dram_activation_words,
        ]
    }

    /// Component-wise `self >= other`.
    pub fn dominates(&self, other: &EventCounts) -> bool {
        let (mut a, mut b) = (*self, *other);
        a.fields().iter().zip(b.fields().iter()).all(|(x, y)| **x >= **y)
    }
}

impl std::ops::AddAssign for EventCounts {
    fn add_assign(&mut self, mut o: EventCounts) {
        for (a, b) in self.fields().into_iter().zip(o.fields()) {
            *a += *b;
        }
    }
}

impl std::ops::Add for EventCounts {
    type Output = EventCounts;
    fn add(mut self, o: EventCounts) -> EventCounts {
        self += o;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[default]
    Scnn,
    Dcnn,
    DcnnOpt,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Scnn => "scnn",
            Variant::Dcnn => "dcnn",
            Variant::DcnnOpt => "dcnn-opt",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "scnn" => Ok(Variant::Scnn),
            "dcnn" => Ok(Variant::Dcnn),
            "dcnn-opt" | "dcnn_opt" | "dcnnopt" => Ok(Variant::DcnnOpt),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Results of one layer (or, after [`SimReport::merge`], a whole network).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub layer: String,
    pub variant: Variant,
    pub pes: usize,
    pub multipliers_per_pe: usize,
    pub cycles: u64,
    /// Multiplier array issue slots summed over PEs.
    pub issue_cycles: u64,
    pub useful_multiplies: u64,
    /// Products whose input/filter pair falls between strided outputs.
    pub stride_skipped: u64,
    /// Products landing outside the output plane.
    pub discarded_products: u64,
    /// Stored zero placeholders that took part in a multiplier batch.
    pub placeholder_slots: u64,
    pub bank_conflict_stalls: u64,
    pub weight_wait_cycles: u64,
    pub busy_pe_cycles: u64,
    pub barrier_wait_cycles: u64,
    pub groups: usize,
    pub kc: usize,
    /// Weight blocks too large for the FIFO that had to be re-streamed.
    pub fifo_overflow_blocks: u64,
    pub events: EventCounts,
    pub energy: f64,
    pub input_footprint: Footprint,
    pub output_footprint: Footprint,
    pub weight_footprint: Footprint,
    /// Largest per-PE data bytes in IARAM / OARAM.
    pub max_iaram_bytes: u64,
    pub max_oaram_bytes: u64,
    pub dram_tiled: bool,
    /// Energy charged for moving activations through DRAM when tiled.
    pub tiling_energy: f64,
    pub per_layer: Vec<SimReport>,
}

impl SimReport {
    /// Useful multiplies over multiplier slots spent issuing or stalled on
    /// bank contention.
    pub fn mult_utilization(&self) -> f64 {
        let active = (self.issue_cycles + self.bank_conflict_stalls) * self.multipliers_per_pe as u64;
        if active == 0 {
            0.0
        } else {
            self.useful_multiplies as f64 / active as f64
        }
    }

    /// Share of PE-cycles spent at inter-PE barriers.
    pub fn barrier_stall_fraction(&self) -> f64 {
        let total = self.busy_pe_cycles + self.barrier_wait_cycles;
        if total == 0 {
            0.0
        } else {
            self.barrier_wait_cycles as f64 / total as f64
        }
    }

    /// Bank stalls relative to issue cycles.
    pub fn conflict_overhead(&self) -> f64 {
        if self.issue_cycles == 0 {
            0.0
        } else {
            self.bank_conflict_stalls as f64 / self.issue_cycles as f64
        }
    }

    /// Activation spill energy relative to the rest of the layer's energy.
    pub fn tiling_penalty(&self) -> f64 {
        let base = self.energy - self.tiling_energy;
        if base <= 0.0 {
            0.0
        } else {
            self.tiling_energy / base
        }
    }

    /// Network total over per-layer reports; the inputs are kept in
    /// `per_layer`.
    pub fn merge(name: impl Into<String>, layers: Vec<SimReport>) -> SimReport {
        let mut total = SimReport { layer: name.into(), ..Default::default() };
        if let Some(first) = layers.first() {
            total.variant = first.variant;
            total.pes = first.pes;
            total.multipliers_per_pe = first.multipliers_per_pe;
        }
        for l in &layers {
            total.cycles += l.cycles;
            total.issue_cycles += l.issue_cycles;
            total.useful_multiplies += l.useful_multiplies;
            total.stride_skipped += l.stride_skipped;
            total.discarded_products += l.discarded_products;
            total.placeholder_slots += l.placeholder_slots;
            total.bank_conflict_stalls += l.bank_conflict_stalls;
            total.weight_wait_cycles += l.weight_wait_cycles;
            total.busy_pe_cycles += l.busy_pe_cycles;
            total.barrier_wait_cycles += l.barrier_wait_cycles;
            total.groups += l.groups;
            total.kc = total.kc.max(l.kc);
            total.fifo_overflow_blocks += l.fifo_overflow_blocks;
            total.events += l.events;
            total.energy += l.energy;
            total.input_footprint += l.input_footprint;
            total.output_footprint += l.output_footprint;
            total.weight_footprint += l.weight_footprint;
            total.max_iaram_bytes = total.max_iaram_bytes.max(l.max_iaram_bytes);
            total.max_oaram_bytes = total.max_oaram_bytes.max(l.max_oaram_bytes);
            total.dram_tiled |= l.dram_tiled;
            total.tiling_energy += l.tiling_energy;
        }
        total.per_layer = layers;
        total
    }

    pub fn tiled_layers(&self) -> usize {
        self.per_layer.iter().filter(|l| l.dram_tiled).count()
    }
}
