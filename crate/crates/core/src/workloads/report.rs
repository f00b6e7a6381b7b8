//! CSV and plain-text tables.
//!
//! Every table has a fixed header; floats are printed with six decimals
//! and booleans as `true`/`false`, independent of locale. Columns:
//!
//! | table | columns |
//! |---|---|
//! | `layers` | network, seed, layer, variant, cycles, speedup, energy, tiling_energy, useful_multiplies, utilization, barrier_fraction, bank_conflict_stalls, dram_tiled, input_bytes, output_bytes, weight_bytes |
//! | `density` | network, layer, density, variant, cycles, energy, dcnn_cycles, dcnn_energy, speedup, energy_gain, ideal_speedup, utilization, barrier_fraction |
//! | `pe` | network, layer, rows, cols, pes, weight_vector, activation_vector, banks, cycles, utilization, barrier_fraction, speedup |
//! | `capacity` | network, layer, iaram_bytes, oaram_bytes, iaram_capacity, oaram_capacity, tiled, spill_words, tiling_energy, layer_energy, penalty |

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::simulator::Variant;

use super::run::{CapacityRow, NetworkRun};
use super::sweep::{PeRow, SweepRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Text => "txt",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "text" | "txt" => Ok(ReportFormat::Text),
            other => Err(Error::InvalidArgument(format!("unknown report format `{other}`"))),
        }
    }
}

/// A row type with a fixed column schema.
pub trait Tabular {
    const HEADER: &'static [&'static str];
    fn cells(&self) -> Vec<String>;
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

/// One row per layer and machine of a network run.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRow {
    pub network: String,
    pub seed: u64,
    pub layer: String,
    pub variant: Variant,
    pub cycles: u64,
    /// Dense-baseline cycles over these cycles, when the dense machine ran.
    pub speedup: Option<f64>,
    pub energy: f64,
    pub tiling_energy: f64,
    pub useful_multiplies: u64,
    pub utilization: f64,
    pub barrier_fraction: f64,
    pub bank_conflict_stalls: u64,
    pub dram_tiled: bool,
    pub input_bytes: u64,
    pub output_bytes: u64,
    pub weight_bytes: u64,
}

impl NetworkRun {
    /// Per-layer rows followed by a network total, per machine.
    pub fn rows(&self) -> Vec<LayerRow> {
        let dense = self.report(Variant::Dcnn);
        let mut rows = Vec::new();
        for rep in &self.reports {
            let layers = rep.per_layer.iter().chain(std::iter::once(rep));
            for (i, l) in layers.enumerate() {
                let base = dense.map(|d| if i < d.per_layer.len() { d.per_layer[i].cycles } else { d.cycles });
                rows.push(LayerRow {
                    network: self.network.clone(),
                    seed: self.seed,
                    layer: if i < rep.per_layer.len() { l.layer.clone() } else { super::sweep::TOTAL.to_string() },
                    variant: rep.variant,
                    cycles: l.cycles,
                    speedup: base.map(|b| b as f64 / l.cycles.max(1) as f64),
                    energy: l.energy,
                    tiling_energy: l.tiling_energy,
                    useful_multiplies: l.useful_multiplies,
                    utilization: l.mult_utilization(),
                    barrier_fraction: l.barrier_stall_fraction(),
                    bank_conflict_stalls: l.bank_conflict_stalls,
                    dram_tiled: l.dram_tiled,
                    input_bytes: l.input_footprint.total_bytes(),
                    output_bytes: l.output_footprint.total_bytes(),
                    weight_bytes: l.weight_footprint.total_bytes(),
                });
            }
        }
        rows
    }
}

impl Tabular for LayerRow {
    const HEADER: &'static [&'static str] = &[
        "network",
        "seed",
        "layer",
        "variant",
        "cycles",
        "speedup",
        "energy",
        "tiling_energy",
        "useful_multiplies",
        "utilization",
        "barrier_fraction",
        "bank_conflict_stalls",
        "dram_tiled",
        "input_bytes",
        "output_bytes",
        "weight_bytes",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.network.clone(),
            self.seed.to_string(),
            self.layer.clone(),
            self.variant.to_string(),
            self.cycles.to_string(),
            self.speedup.map(num).unwrap_or_default(),
            num(self.energy),
            num(self.tiling_energy),
            self.useful_multiplies.to_string(),
            num(self.utilization),
            num(self.barrier_fraction),
            self.bank_conflict_stalls.to_string(),
            self.dram_tiled.to_string(),
            self.input_bytes.to_string(),
            self.output_bytes.to_string(),
            self.weight_bytes.to_string(),
        ]
    }
}

impl Tabular for SweepRow {
    const HEADER: &'static [&'static str] = &[
        "network",
        "layer",
        "density",
        "variant",
        "cycles",
        "energy",
        "dcnn_cycles",
        "dcnn_energy",
        "speedup",
        "energy_gain",
        "ideal_speedup",
        "utilization",
        "barrier_fraction",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.network.clone(),
            self.layer.clone(),
            num(self.density),
            self.variant.to_string(),
            num(self.cycles),
            num(self.energy),
            num(self.dcnn_cycles),
            num(self.dcnn_energy),
            num(self.speedup),
            num(self.energy_gain),
            num(self.ideal_speedup),
            num(self.utilization),
            num(self.barrier_fraction),
        ]
    }
}

impl Tabular for PeRow {
    const HEADER: &'static [&'static str] = &[
        "network",
        "layer",
        "rows",
        "cols",
        "pes",
        "weight_vector",
        "activation_vector",
        "banks",
        "cycles",
        "utilization",
        "barrier_fraction",
        "speedup",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.network.clone(),
            self.layer.clone(),
            self.rows.to_string(),
            self.cols.to_string(),
            self.pes.to_string(),
            self.weight_vector.to_string(),
            self.activation_vector.to_string(),
            self.banks.to_string(),
            num(self.cycles),
            num(self.utilization),
            num(self.barrier_fraction),
            num(self.speedup),
        ]
    }
}

impl Tabular for CapacityRow {
    const HEADER: &'static [&'static str] = &[
        "network",
        "layer",
        "iaram_bytes",
        "oaram_bytes",
        "iaram_capacity",
        "oaram_capacity",
        "tiled",
        "spill_words",
        "tiling_energy",
        "layer_energy",
        "penalty",
    ];

    fn cells(&self) -> Vec<String> {
        vec![
            self.network.clone(),
            self.layer.clone(),
            self.iaram_bytes.to_string(),
            self.oaram_bytes.to_string(),
            self.iaram_capacity.to_string(),
            self.oaram_capacity.to_string(),
            self.tiled.to_string(),
            num(self.spill_words),
            num(self.tiling_energy),
            num(self.layer_energy),
            num(self.penalty),
        ]
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv<T: Tabular>(rows: &[T]) -> String {
    let mut out = T::HEADER.join(",");
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.cells().iter().map(|c| csv_field(c)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Columns padded to their widest cell; text left-aligned, numbers
/// right-aligned.
pub fn render_text<T: Tabular>(rows: &[T]) -> String {
    let cells: Vec<Vec<String>> = rows.iter().map(Tabular::cells).collect();
    let widths: Vec<usize> = T::HEADER
        .iter()
        .enumerate()
        .map(|(c, h)| cells.iter().map(|r| r[c].len()).chain([h.len()]).max().unwrap_or(0))
        .collect();
    let line = |row: &[String]| -> String {
        let parts: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(v, &w)| {
                if v.parse::<f64>().is_ok() {
                    format!("{v:>w$}")
                } else {
                    format!("{v:<w$}")
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let header: Vec<String> = T::HEADER.iter().map(|h| h.to_string()).collect();
    let mut out = line(&header);
    for r in &cells {
        out.push_str(&line(r));
    }
    out
}

pub fn render<T: Tabular>(rows: &[T], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(rows),
        ReportFormat::Text => render_text(rows),
    }
}

/// Writes `<dir>/<stem>.<ext>` for each format and returns the paths.
pub fn emit_report<T: Tabular>(rows: &[T], dir: &Path, stem: &str, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    formats
        .iter()
        .map(|&f| {
            let path = dir.join(format!("{stem}.{}", f.extension()));
            std::fs::write(&path, render(rows, f)).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
