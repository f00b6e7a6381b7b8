//! Post-processing at the end of an output-channel group: neighbour halo
//! exchange, ReLU with requantization, and recompression into the OARAMs.

use crate::codec::{encode_block, BlockKind, CompressedBlock};
use crate::dataflow::{GroupSpan, TilePlan};
use crate::error::{Error, Result};
use crate::tensors::{fits_accumulator, Requant};

#[derive(Debug, Clone, PartialEq)]
pub struct GroupOutput {
    /// `blocks[pe][k - span.k_start]`, one block per output channel over the
    /// PE's output tile.
    pub blocks: Vec<Vec<CompressedBlock>>,
    /// Accumulator values shipped to a neighbour.
    pub halo_transfers: u64,
}

/// Sums every PE's accumulator cells into their owners' output tiles, then
/// applies ReLU and the requantization stage and compresses the result.
///
/// `accs[pe]` is laid out `[k][xa][ya]` over `span.k_len` channels. A final
/// sum outside the 24-bit range is an error.
pub fn ppu_finalize(
    plan: &TilePlan,
    span: &GroupSpan,
    accs: &[Vec<i64>],
    requant: &Requant,
    index_bits: u32,
) -> Result<GroupOutput> {
    let (ow, oh) = (plan.out_w, plan.out_h);
    let (aw, ah) = (plan.acc_w, plan.acc_h);
    let kn = span.k_len;
    let mut sums = vec![0i64; kn * ow * oh];
    let mut halo_transfers = 0u64;

    for (pe, acc) in accs.iter().enumerate() {
        let t = &plan.tiles[pe];
        for region in &plan.regions[pe] {
            if region.owner != pe {
                halo_transfers += (region.cells() * kn) as u64;
            }
            for k in 0..kn {
                for xa in region.acc_x.clone() {
                    let ox = (t.acc_base_x + xa as isize) as usize;
                    let src = (k * aw + xa) * ah;
                    let dst = (k * ow + ox) * oh;
                    for ya in region.acc_y.clone() {
                        let oy = (t.acc_base_y + ya as isize) as usize;
                        sums[dst + oy] += acc[src + ya];
                    }
                }
            }
        }
    }

    let mut blocks = Vec::with_capacity(plan.pes());
    for t in &plan.tiles {
        let mut pe_blocks = Vec::with_capacity(kn);
        for k in 0..kn {
            let mut dense = Vec::with_capacity(t.output_count());
            for x in t.out_x.clone() {
                for y in t.out_y.clone() {
                    let v = sums[(k * ow + x) * oh + y];
                    if !fits_accumulator(v) {
                        return Err(Error::AccumulatorOverflow { k: span.k_start + k, x, y, value: v });
                    }
                    dense.push(requant.apply(v as i32));
                }
            }
            pe_blocks.push(encode_block(&dense, index_bits, BlockKind::ActivationTile));
        }
        blocks.push(pe_blocks);
    }
    Ok(GroupOutput { blocks, halo_transfers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::decode_block;
    use crate::dataflow::{partition_tiles, spans};
    use crate::tensors::LayerShape;

    #[test]
    fn single_pe_needs_no_exchange() {
        let layer = LayerShape::new("p", 1, 1, 3, 3, 1, 1);
        let plan = partition_tiles(&layer, 1, 1).unwrap();
        let span = &spans(&layer, 1)[0];
        let acc = vec![1, -2, 3, 0, 5, -6, 7, 8, 0];
        let out = ppu_finalize(&plan, span, &[acc], &Requant::default(), 4).unwrap();
        assert_eq!(out.halo_transfers, 0);
        assert_eq!(decode_block(&out.blocks[0][0]).unwrap(), vec![1, 0, 3, 0, 5, 0, 7, 8, 0]);
    }

    #[test]
    fn halo_product_lands_in_neighbour() {
        // Two PEs side by side on a 4x1 plane, 3-wide filter, no padding:
        // outputs 0 and 1 belong to PE 0 and PE 1. PE 0's accumulator covers
        // outputs -2..2, so its cell xa = 3 (output 1) is a halo.
        let layer = LayerShape::new("h", 1, 1, 4, 1, 3, 1);
        let plan = partition_tiles(&layer, 1, 2).unwrap();
        assert_eq!((plan.acc_w, plan.acc_h), (4, 1));
        let span = &spans(&layer, 1)[0];
        let mut acc0 = vec![0i64; 4];
        acc0[3] = 9;
        let acc1 = vec![0i64; 4];
        let out = ppu_finalize(&plan, span, &[acc0, acc1], &Requant::default(), 4).unwrap();
        assert_eq!(decode_block(&out.blocks[0][0]).unwrap(), vec![0]);
        assert_eq!(decode_block(&out.blocks[1][0]).unwrap(), vec![9]);
        assert!(out.halo_transfers > 0);
    }

    #[test]
    fn negative_group_compresses_to_nothing() {
        let layer = LayerShape::new("n", 1, 2, 2, 2, 1, 1);
        let plan = partition_tiles(&layer, 1, 1).unwrap();
        let span = &spans(&layer, 2)[0];
        let out = ppu_finalize(&plan, span, &[vec![-5; 8]], &Requant::default(), 4).unwrap();
        assert!(out.blocks[0].iter().all(|b| b.is_empty()));
    }

    #[test]
    fn overflow_is_reported_not_saturated() {
        let layer = LayerShape::new("o", 1, 1, 1, 1, 1, 1);
        let plan = partition_tiles(&layer, 1, 1).unwrap();
        let span = &spans(&layer, 1)[0];
        let err = ppu_finalize(&plan, span, &[vec![1 << 23]], &Requant::default(), 4).unwrap_err();
        assert!(matches!(err, Error::AccumulatorOverflow { .. }));
    }
}
