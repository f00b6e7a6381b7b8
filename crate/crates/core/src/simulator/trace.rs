//! Line-oriented per-group trace.
//!
//! One line per (layer, output-channel group, PE), whitespace-separated
//! `key=value` pairs in this fixed order:
//!
//! ```text
//! layer=<name> group=<g> k=<first>..<end> pe=<id> compute=<cycles> batches=<n>
//!   useful=<products> bank_stalls=<cycles> weight_wait=<cycles> busy=<cycles> barrier_wait=<cycles>
//! ```
//!
//! (shown wrapped; each record is a single line). `compute` counts from the
//! start of the group to the last accumulator update, `busy` adds any wait
//! for the previous group's drain, and `barrier_wait` is the idle time until
//! the slowest PE finishes.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTrace {
    pub layer: String,
    pub group: usize,
    pub k_start: usize,
    pub k_len: usize,
    pub pe: usize,
    pub compute: u64,
    pub batches: u64,
    pub useful: u64,
    pub bank_stalls: u64,
    pub weight_wait: u64,
    pub busy: u64,
    pub barrier_wait: u64,
}

impl fmt::Display for GroupTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "layer={} group={} k={}..{} pe={} compute={} batches={} useful={} bank_stalls={} weight_wait={} busy={} barrier_wait={}",
            self.layer,
            self.group,
            self.k_start,
            self.k_start + self.k_len,
            self.pe,
            self.compute,
            self.batches,
            self.useful,
            self.bank_stalls,
            self.weight_wait,
            self.busy,
            self.barrier_wait
        )
    }
}

/// Renders a trace as newline-terminated lines.
pub fn render(trace: &[GroupTrace]) -> String {
    let mut s = String::new();
    for t in trace {
        s.push_str(&t.to_string());
        s.push('\n');
    }
    s
}
