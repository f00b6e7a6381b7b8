//! Cycle-level simulation of the sparse PE array and cycle models of the
//! dense baselines.
//!
//! Within a PE the schedule is input-stationary: for each output-channel
//! group and each input channel, every vector of up to `I` stored
//! activations is held while all vectors of up to `F` stored weights stream
//! past, and each cycle the multiplier array forms the full `F x I`
//! Cartesian product. Products are scattered to the accumulator banks by
//! output coordinate. At the end of a group all PEs meet at a barrier and
//! the post-processing unit exchanges halos and recompresses the outputs.

mod arch;
mod banks;
mod buffers;
mod dcnn;
mod ppu;
mod report;
pub mod trace;

use rayon::prelude::*;

pub use arch::ArchConfig;
pub use banks::{route_batch, BankMapping, BankQueues};
pub use buffers::{compress_activations, compress_weights, CompressedActivations, CompressedWeights};
pub use dcnn::{dcnn_report, simulate_dcnn_layer, DenseCounts};
pub use ppu::{ppu_finalize, GroupOutput};
pub use report::{EventCounts, SimReport, Variant};

use crate::codec::FootprintModel;
use crate::dataflow::{partition_tiles, GroupSpan, TilePlan};
use crate::error::{Error, Result};
use crate::tensors::{LayerShape, Requant};
use trace::GroupTrace;

/// Per-run knobs that are not part of the hardware.
#[derive(Debug, Clone, Default)]
pub struct LayerOptions {
    pub requant: Requant,
    /// Collect one trace line per (group, PE).
    pub trace: bool,
}

/// Everything a sparse layer run produces.
#[derive(Debug, Clone)]
pub struct ScnnLayerRun {
    pub outputs: CompressedActivations,
    pub report: SimReport,
    pub trace: Vec<GroupTrace>,
}

#[derive(Clone, Copy)]
struct WeightEntry {
    k: u32,
    r: u32,
    s: u32,
    value: i32,
}

#[derive(Clone, Copy)]
struct ActEntry {
    /// Input coordinate plus padding, so that `ax - r` is the strided
    /// output numerator.
    ax: i32,
    ay: i32,
    value: i32,
}

#[derive(Default, Clone)]
struct PeGroupStats {
    compute: u64,
    batches: u64,
    bank_stalls: u64,
    weight_wait: u64,
    useful: u64,
    skipped: u64,
    discarded: u64,
    placeholder_slots: u64,
    weight_reads: u64,
    input_reads: u64,
    overflow_blocks: u64,
    /// Passes over each overflowing weight block, by local input channel.
    restreams: Vec<(usize, u64)>,
}

struct Geometry {
    aw: usize,
    ah: usize,
    stride: i32,
    out_w: i32,
    out_h: i32,
    f: usize,
    i: usize,
    fifo_values: usize,
    dram_bw: f64,
    words_per_value: f64,
    banks: usize,
    queue_depth: usize,
    mapping: BankMapping,
}

fn decode_weights(cw: &CompressedWeights) -> Vec<Vec<Vec<WeightEntry>>> {
    let fh = cw.filter_h;
    cw.plan
        .groups
        .iter()
        .zip(&cw.blocks)
        .map(|(span, blocks)| {
            blocks
                .iter()
                .map(|b| {
                    b.iter_entries()
                        .map(|e| {
                            let rs = e.position / span.k_len;
                            WeightEntry {
                                k: (e.position % span.k_len) as u32,
                                r: (rs / fh) as u32,
                                s: (rs % fh) as u32,
                                value: e.value,
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn decode_activations(acts: &CompressedActivations, pad: usize) -> Vec<Vec<Vec<ActEntry>>> {
    acts.tiles()
        .into_iter()
        .zip(&acts.blocks)
        .map(|((x0, y0, _, th), blocks)| {
            blocks
                .iter()
                .map(|b| {
                    b.iter_entries()
                        .map(|e| ActEntry {
                            ax: (x0 + e.position / th.max(1) + pad) as i32,
                            ay: (y0 + e.position % th.max(1) + pad) as i32,
                            value: e.value,
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Runs one output-channel group on one PE. Returns its accumulator and
/// statistics; times are relative to the start of the group.
fn run_pe_group(
    g: &Geometry,
    plan: &TilePlan,
    pe: usize,
    span: &GroupSpan,
    weights: &[Vec<WeightEntry>],
    acts: &[Vec<ActEntry>],
    c_base: usize,
) -> (Vec<i64>, PeGroupStats) {
    let mut acc = vec![0i64; span.k_len * g.aw * g.ah];
    let mut st = PeGroupStats::default();
    let t = &plan.tiles[pe];
    if t.is_empty() {
        return (acc, st);
    }
    let (base_x, base_y) = (t.acc_base_x as i32, t.acc_base_y as i32);
    let (aw, ah) = (g.aw as i32, g.ah as i32);
    let stride = g.stride;
    let mut q = BankQueues::new(g.banks, g.queue_depth);
    let mut dram_free = 0u64;
    let mut prev_start = 0u64;

    for (cl, wb) in weights.iter().enumerate() {
        let ab = &acts[c_base + cl];
        if wb.is_empty() || ab.is_empty() {
            continue;
        }
        let (sw, sa) = (wb.len(), ab.len());
        let avecs = sa.div_ceil(g.i) as u64;
        let load = ((sw as f64 * g.words_per_value) / g.dram_bw).ceil() as u64;
        let fits = sw <= g.fifo_values;
        let arrival = dram_free.max(prev_start) + load;
        dram_free = if fits { arrival } else { arrival + (avecs - 1) * load };
        if !fits {
            st.overflow_blocks += 1;
            st.restreams.push((cl, avecs));
        }
        st.weight_reads += (sw as u64) * avecs;
        st.input_reads += sa as u64;

        let mut first = true;
        for (j, avec) in ab.chunks(g.i).enumerate() {
            let ready = if fits { arrival } else { arrival + j as u64 * load };
            for wvec in wb.chunks(g.f) {
                for a in avec {
                    for w in wvec {
                        if a.value == 0 || w.value == 0 {
                            st.placeholder_slots += 1;
                            continue;
                        }
                        st.useful += 1;
                        let (nx, ny) = (a.ax - w.r as i32, a.ay - w.s as i32);
                        let (ox, oy) = if stride == 1 {
                            (nx, ny)
                        } else {
                            if nx.rem_euclid(stride) != 0 || ny.rem_euclid(stride) != 0 {
                                st.skipped += 1;
                                continue;
                            }
                            (nx.div_euclid(stride), ny.div_euclid(stride))
                        };
                        let (xa, ya) = (ox - base_x, oy - base_y);
                        debug_assert!(xa >= 0 && xa < aw && ya >= 0 && ya < ah);
                        if ox < 0 || oy < 0 || ox >= g.out_w || oy >= g.out_h {
                            st.discarded += 1;
                        }
                        let idx = ((w.k as i32 * aw + xa) * ah + ya) as usize;
                        acc[idx] += w.value as i64 * a.value as i64;
                        q.push(g.mapping.bank(idx, g.banks));
                    }
                }
                let issued = q.issue(ready);
                if first {
                    prev_start = issued;
                    first = false;
                }
            }
        }
    }
    st.compute = q.finish();
    st.batches = q.batches();
    st.weight_wait = q.ready_wait();
    st.bank_stalls = q.conflict_stalls();
    (acc, st)
}

fn check_inputs(
    arch: &ArchConfig,
    layer: &LayerShape,
    weights: &CompressedWeights,
    acts: &CompressedActivations,
) -> Result<TilePlan> {
    arch.validate()?;
    let plan = partition_tiles(layer, arch.pe_rows, arch.pe_cols)?;
    if acts.channels != layer.in_channels || acts.width != layer.width || acts.height != layer.height {
        return Err(Error::Shape(format!(
            "activations are {}x{}x{}, layer `{}` expects {}x{}x{}",
            acts.channels, acts.width, acts.height, layer.name, layer.in_channels, layer.width, layer.height
        )));
    }
    if acts.rows != arch.pe_rows || acts.cols != arch.pe_cols {
        return Err(Error::Shape(format!(
            "activations distributed over {}x{}, array is {}x{}",
            acts.rows, acts.cols, arch.pe_rows, arch.pe_cols
        )));
    }
    if weights.filter_w != layer.filter_w
        || weights.filter_h != layer.filter_h
        || weights.channels_per_group != layer.channels_per_group()
        || weights.plan.groups.iter().map(|s| s.k_len).sum::<usize>() != layer.out_channels
    {
        return Err(Error::Shape(format!("compressed weights do not match layer `{}`", layer.name)));
    }
    let need = weights.plan.kc * plan.acc_plane();
    if need > arch.acc_capacity() {
        return Err(Error::Config(format!(
            "layer `{}`: group of {} channels needs {need} accumulator entries, {} available",
            layer.name,
            weights.plan.kc,
            arch.acc_capacity()
        )));
    }
    Ok(plan)
}

fn data_bytes(model: &FootprintModel, stored: usize) -> u64 {
    model.for_stored(stored).data_bytes()
}

/// Simulates one layer on the sparse PE array with default options.
pub fn simulate_scnn_layer(
    arch: &ArchConfig,
    layer: &LayerShape,
    weights: &CompressedWeights,
    acts: &CompressedActivations,
) -> Result<(CompressedActivations, SimReport)> {
    let run = simulate_scnn_layer_with(arch, layer, weights, acts, &LayerOptions::default())?;
    Ok((run.outputs, run.report))
}

pub fn simulate_scnn_layer_with(
    arch: &ArchConfig,
    layer: &LayerShape,
    weights: &CompressedWeights,
    acts: &CompressedActivations,
    opts: &LayerOptions,
) -> Result<ScnnLayerRun> {
    let plan = check_inputs(arch, layer, weights, acts)?;
    let pes = plan.pes();
    let fm = &arch.footprint;
    let geom = Geometry {
        aw: plan.acc_w,
        ah: plan.acc_h,
        stride: layer.stride as i32,
        out_w: plan.out_w as i32,
        out_h: plan.out_h as i32,
        f: arch.weight_vector,
        i: arch.activation_vector,
        fifo_values: arch.fifo_values(),
        dram_bw: arch.dram_values_per_cycle,
        words_per_value: (fm.value_bits + fm.index_overhead_bits) as f64 / 16.0,
        banks: arch.banks,
        queue_depth: arch.bank_queue_depth,
        mapping: arch.bank_mapping,
    };
    let wentries = decode_weights(weights);
    let aentries = decode_activations(acts, layer.pad);
    let cg = layer.channels_per_group();

    let mut report = SimReport {
        layer: layer.name.clone(),
        variant: Variant::Scnn,
        pes,
        multipliers_per_pe: arch.multipliers_per_pe(),
        groups: weights.plan.len(),
        kc: weights.plan.kc,
        ..Default::default()
    };
    let mut out_blocks: Vec<Vec<_>> = (0..pes).map(|_| Vec::with_capacity(layer.out_channels)).collect();
    let mut traces = Vec::new();
    let mut total = 0u64;
    let mut prev_drain = 0u64;

    for (gi, span) in weights.plan.groups.iter().enumerate() {
        let c_base = span.conv_group * cg;
        let results: Vec<(Vec<i64>, PeGroupStats)> = (0..pes)
            .into_par_iter()
            .map(|pe| run_pe_group(&geom, &plan, pe, span, &wentries[gi], &aentries[pe], c_base))
            .collect();

        let drain = (span.k_len * plan.acc_plane()).div_ceil(arch.banks) as u64 + arch.halo_latency_cycles;
        let busy: Vec<u64> = results
            .iter()
            .map(|(_, s)| if arch.double_buffered { s.compute.max(prev_drain) } else { s.compute + drain })
            .collect();
        let barrier = busy.iter().copied().max().unwrap_or(0);
        total += barrier;
        prev_drain = drain;

        let mut restream = vec![0u64; cg];
        for (pe, (_, s)) in results.iter().enumerate() {
            report.issue_cycles += s.batches;
            report.useful_multiplies += s.useful;
            report.stride_skipped += s.skipped;
            report.discarded_products += s.discarded;
            report.placeholder_slots += s.placeholder_slots;
            report.bank_conflict_stalls += s.bank_stalls;
            report.weight_wait_cycles += s.weight_wait;
            report.busy_pe_cycles += busy[pe];
            report.barrier_wait_cycles += barrier - busy[pe];
            report.fifo_overflow_blocks += s.overflow_blocks;
            report.events.weight_buffer_reads += s.weight_reads as f64;
            report.events.input_ram_reads += s.input_reads as f64;
            for &(cl, passes) in &s.restreams {
                restream[cl] = restream[cl].max(passes - 1);
            }
            if opts.trace {
                traces.push(GroupTrace {
                    layer: layer.name.clone(),
                    group: gi,
                    k_start: span.k_start,
                    k_len: span.k_len,
                    pe,
                    compute: s.compute,
                    batches: s.batches,
                    useful: s.useful,
                    bank_stalls: s.bank_stalls,
                    weight_wait: s.weight_wait,
                    busy: busy[pe],
                    barrier_wait: barrier - busy[pe],
                });
            }
        }
        for (cl, block) in weights.blocks[gi].iter().enumerate() {
            let words = fm.for_stored(block.stored()).total_bits() as f64 / 16.0;
            report.events.dram_weight_words += words * (1 + restream[cl]) as f64;
        }
        report.events.acc_drain_reads += (pes * span.k_len * plan.acc_plane()) as f64;

        let accs: Vec<Vec<i64>> = results.into_iter().map(|(a, _)| a).collect();
        let out = ppu_finalize(&plan, span, &accs, &opts.requant, arch.index_bits)?;
        report.events.halo_transfers += out.halo_transfers as f64;
        for (pe, blocks) in out.blocks.into_iter().enumerate() {
            out_blocks[pe].extend(blocks);
        }
    }
    if arch.double_buffered {
        total += prev_drain;
        report.busy_pe_cycles += prev_drain * pes as u64;
    }
    report.cycles = total;

    let routed = (report.useful_multiplies - report.stride_skipped) as f64;
    report.events.multiplies = report.useful_multiplies as f64;
    report.events.crossbar_transfers = routed;
    report.events.acc_updates = routed;

    let outputs = CompressedActivations {
        channels: layer.out_channels,
        width: plan.out_w,
        height: plan.out_h,
        rows: arch.pe_rows,
        cols: arch.pe_cols,
        blocks: out_blocks,
    };
    report.events.output_ram_writes = outputs.blocks.iter().flatten().map(|b| b.stored()).sum::<usize>() as f64;
    report.input_footprint = acts.footprint(fm);
    report.output_footprint = outputs.footprint(fm);
    report.weight_footprint = weights.footprint(fm);
    report.max_iaram_bytes = acts
        .blocks
        .iter()
        .map(|pe| data_bytes(fm, pe.iter().map(|b| b.stored()).sum()))
        .max()
        .unwrap_or(0);
    report.max_oaram_bytes = outputs
        .blocks
        .iter()
        .map(|pe| data_bytes(fm, pe.iter().map(|b| b.stored()).sum()))
        .max()
        .unwrap_or(0);
    report.dram_tiled =
        report.max_iaram_bytes > arch.iaram_bytes as u64 || report.max_oaram_bytes > arch.oaram_bytes as u64;
    report.energy = crate::analytic::energy_of(&report.events, &arch.energy);

    Ok(ScnnLayerRun { outputs, report, trace: traces })
}
