//! Analytical event, cycle, energy and area models.

mod area;
mod energy;
mod events;

pub use area::{area_model, dense_area_model, AreaBreakdown, AreaTable};
pub use energy::{charge_activation_spill, energy_of, EnergyModel};
pub use events::{
    analytic_time_energy, count_events, fixed_group_plan, multiply_count, Dataflow, LayerCounts, Profile,
};
