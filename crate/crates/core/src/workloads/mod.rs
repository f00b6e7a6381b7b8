//! Network descriptors, end-to-end network runs, the sweep experiments and
//! report output.

mod config;
mod descriptor;
mod report;
mod run;
mod sweep;

pub use config::{load_config, ExperimentConfig, RunVariant};
pub use descriptor::{
    load_network, InputSpec, LayerSpec, NetworkDescriptor, PoolSpec, Source, NETWORK_INPUT, SCHEMA_VERSION,
};
pub use report::{emit_report, render, render_csv, render_text, LayerRow, ReportFormat, Tabular};
pub use run::{
    capacity_report, compare_outputs, layer_weights, run_network, run_network_with, synthetic_input, CapacityRow,
    LayerActivations, NetworkRun, RunOptions,
};
pub use sweep::{density_sweep, grid_arch, pe_granularity_sweep, PeRow, SweepRow, TOTAL};
