//! Dense dot-product baselines.
//!
//! Each PE owns a tile of the output plane and computes it with `F*I`
//! multipliers; the layer takes as long as the most loaded PE. The optimized
//! variant has identical timing but gates multiplies with a zero operand
//! and compresses activations that travel through DRAM.

use crate::dataflow::partition_tiles;
use crate::error::{Error, Result};
use crate::tensors::{DenseTensor, LayerShape};

use super::arch::ArchConfig;
use super::report::{SimReport, Variant};

/// Multiply counts of a dense loop nest over concrete operands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseCounts {
    /// Every filter tap of every output, padding included.
    pub dense_multiplies: u64,
    /// Multiplies whose operands are both non-zero and inside the image.
    pub energized_multiplies: u64,
}

impl DenseCounts {
    pub fn compute(layer: &LayerShape, weights: &DenseTensor, input: &DenseTensor) -> Result<Self> {
        if weights.dims() != layer.weight_dims().as_slice() || input.dims() != layer.input_dims().as_slice() {
            return Err(Error::Shape(format!("operands do not match layer `{}`", layer.name)));
        }
        let (wo, ho) = (layer.out_w(), layer.out_h());
        let (fw, fh, cg, kg) = (layer.filter_w, layer.filter_h, layer.channels_per_group(), layer.outputs_per_group());
        let (st, pad) = (layer.stride as isize, layer.pad as isize);
        let (iw, ih) = (layer.width as isize, layer.height as isize);

        // hits[c][r][s]: outputs whose tap (r, s) reads a non-zero input.
        let mut hits = vec![0u64; layer.in_channels * fw * fh];
        for c in 0..layer.in_channels {
            for r in 0..fw {
                for s in 0..fh {
                    let mut n = 0u64;
                    for x in 0..wo as isize {
                        let ix = x * st + r as isize - pad;
                        if ix < 0 || ix >= iw {
                            continue;
                        }
                        for y in 0..ho as isize {
                            let iy = y * st + s as isize - pad;
                            if iy >= 0 && iy < ih && input.at3(c, ix as usize, iy as usize) != 0 {
                                n += 1;
                            }
                        }
                    }
                    hits[(c * fw + r) * fh + s] = n;
                }
            }
        }
        let mut energized = 0u64;
        for k in 0..layer.out_channels {
            let c0 = (k / kg) * cg;
            for cl in 0..cg {
                for r in 0..fw {
                    for s in 0..fh {
                        if weights.at4(k, cl, r, s) != 0 {
                            energized += hits[((c0 + cl) * fw + r) * fh + s];
                        }
                    }
                }
            }
        }
        Ok(Self { dense_multiplies: layer.dense_multiplies(), energized_multiplies: energized })
    }
}

/// Cycle and event model of the dense baselines on one layer.
pub fn simulate_dcnn_layer(
    arch: &ArchConfig,
    layer: &LayerShape,
    weights: &DenseTensor,
    input: &DenseTensor,
    variant: Variant,
) -> Result<SimReport> {
    if variant == Variant::Scnn {
        return Err(Error::InvalidArgument("the dense model has no sparse variant".into()));
    }
    arch.validate()?;
    let counts = DenseCounts::compute(layer, weights, input)?;
    Ok(dcnn_report(arch, layer, counts, variant))
}

/// Dense-baseline report from multiply counts alone.
pub fn dcnn_report(arch: &ArchConfig, layer: &LayerShape, counts: DenseCounts, variant: Variant) -> SimReport {
    let plan = partition_tiles(layer, arch.pe_rows, arch.pe_cols).expect("layer validated by caller");
    let mults_per_pe = arch.multipliers_per_pe() as u64;
    let taps = (layer.channels_per_group() * layer.filter_w * layer.filter_h * layer.out_channels) as u64;
    let busy: Vec<u64> = plan
        .tiles
        .iter()
        .map(|t| (taps * t.output_count() as u64).div_ceil(mults_per_pe))
        .collect();
    let cycles = busy.iter().copied().max().unwrap_or(0);

    let m = counts.dense_multiplies as f64;
    let mut report = SimReport {
        layer: layer.name.clone(),
        variant,
        pes: plan.pes(),
        multipliers_per_pe: arch.multipliers_per_pe(),
        cycles,
        issue_cycles: busy.iter().sum(),
        useful_multiplies: counts.dense_multiplies,
        busy_pe_cycles: busy.iter().sum(),
        barrier_wait_cycles: busy.iter().map(|b| cycles - b).sum(),
        groups: 1,
        kc: layer.out_channels,
        ..Default::default()
    };
    let ev = &mut report.events;
    if variant == Variant::DcnnOpt {
        ev.multiplies = counts.energized_multiplies as f64;
        ev.gated_multiplies = m - counts.energized_multiplies as f64;
    } else {
        ev.multiplies = m;
    }
    ev.input_ram_reads = m / arch.weight_vector as f64;
    ev.weight_buffer_reads = m;
    ev.acc_register_updates = m / arch.activation_vector as f64;
    ev.output_ram_writes = layer.output_count() as f64;
    ev.dram_weight_words = layer.weight_count() as f64;

    let raw = |n: usize| arch.footprint.for_stored(n).data_bits;
    report.input_footprint.data_bits = raw(layer.input_count());
    report.output_footprint.data_bits = raw(layer.output_count());
    report.weight_footprint.data_bits = raw(layer.weight_count());
    let resident = (report.input_footprint.data_bits + report.output_footprint.data_bits).div_ceil(8);
    report.dram_tiled = resident > arch.dense_sram_bytes as u64;
    report.energy = crate::analytic::energy_of(&report.events, &arch.energy);
    report
}
