use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{EventCounts, SimReport};

/// Energy per event in model-relative units. The defaults are estimates
/// chosen only to respect the usual ordering DRAM >> RAM > FIFO > multiply;
/// absolute values carry no physical meaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    pub multiply: f64,
    pub crossbar: f64,
    pub acc_update: f64,
    pub acc_drain_read: f64,
    pub acc_register: f64,
    pub weight_buffer_read: f64,
    pub input_ram_read: f64,
    pub output_ram_write: f64,
    pub halo_transfer: f64,
    pub dram_word: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            multiply: 1.0,
            crossbar: 3.0,
            acc_update: 6.0,
            acc_drain_read: 2.0,
            acc_register: 1.0,
            weight_buffer_read: 2.0,
            input_ram_read: 4.0,
            output_ram_write: 4.0,
            halo_transfer: 4.0,
            dram_word: 100.0,
        }
    }
}

impl EnergyModel {
    fn on_chip(&self) -> [(&'static str, f64); 9] {
        [
            ("multiply", self.multiply),
            ("crossbar", self.crossbar),
            ("acc_update", self.acc_update),
            ("acc_drain_read", self.acc_drain_read),
            ("acc_register", self.acc_register),
            ("weight_buffer_read", self.weight_buffer_read),
            ("input_ram_read", self.input_ram_read),
            ("output_ram_write", self.output_ram_write),
            ("halo_transfer", self.halo_transfer),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.on_chip().into_iter().chain([("dram_word", self.dram_word)]) {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("energy coefficient {name} = {v} must be finite and >= 0")));
            }
        }
        if let Some((name, v)) = self.on_chip().into_iter().find(|(_, v)| *v >= self.dram_word) {
            return Err(Error::Config(format!(
                "DRAM energy {} must exceed every on-chip coefficient ({name} = {v})",
                self.dram_word
            )));
        }
        Ok(())
    }

    /// Every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            multiply: self.multiply * factor,
            crossbar: self.crossbar * factor,
            acc_update: self.acc_update * factor,
            acc_drain_read: self.acc_drain_read * factor,
            acc_register: self.acc_register * factor,
            weight_buffer_read: self.weight_buffer_read * factor,
            input_ram_read: self.input_ram_read * factor,
            output_ram_write: self.output_ram_write * factor,
            halo_transfer: self.halo_transfer * factor,
            dram_word: self.dram_word * factor,
        }
    }
}

/// Energy of a set of events: the sum of count times coefficient.
pub fn energy_of(ev: &EventCounts, m: &EnergyModel) -> f64 {
    ev.multiplies * m.multiply
        + ev.crossbar_transfers * m.crossbar
        + ev.acc_updates * m.acc_update
        + ev.acc_drain_reads * m.acc_drain_read
        + ev.acc_register_updates * m.acc_register
        + ev.weight_buffer_reads * m.weight_buffer_read
        + ev.input_ram_reads * m.input_ram_read
        + ev.output_ram_writes * m.output_ram_write
        + ev.halo_transfers * m.halo_transfer
        + ev.dram_words() * m.dram_word
}

/// Charges a layer for spilling `words` activation words to DRAM and
/// reading them back.
pub fn charge_activation_spill(report: &mut SimReport, words: f64, model: &EnergyModel) {
    let e = words * model.dram_word;
    report.events.dram_activation_words += words;
    report.tiling_energy += e;
    report.energy += e;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_ordered() {
        let m = EnergyModel::default();
        m.validate().unwrap();
        assert!(m.dram_word > 10.0 * m.input_ram_read);
        assert!(m.input_ram_read > m.weight_buffer_read);
        assert!(m.weight_buffer_read > m.multiply);
    }

    #[test]
    fn cheap_dram_is_rejected() {
        let m = EnergyModel { dram_word: 1.0, ..Default::default() };
        assert!(m.validate().is_err());
        let m = EnergyModel { multiply: -1.0, ..Default::default() };
        assert!(m.validate().is_err());
    }

    #[test]
    fn energy_is_linear_in_coefficients() {
        let ev = EventCounts { multiplies: 10.0, acc_updates: 3.0, dram_weight_words: 2.0, ..Default::default() };
        let m = EnergyModel::default();
        let e = energy_of(&ev, &m);
        assert_eq!(energy_of(&ev, &m.scaled(3.0)), 3.0 * e);
        assert_eq!(e, 10.0 + 18.0 + 200.0);
    }

    #[test]
    fn spill_is_part_of_the_total() {
        let m = EnergyModel::default();
        let mut r = SimReport { energy: 50.0, ..Default::default() };
        charge_activation_spill(&mut r, 2.0, &m);
        assert_eq!(r.tiling_energy, 200.0);
        assert_eq!(r.energy, 250.0);
        assert_eq!(r.energy, energy_of(&r.events, &m) + 50.0);
        assert_eq!(r.tiling_penalty(), 4.0);
    }
}
