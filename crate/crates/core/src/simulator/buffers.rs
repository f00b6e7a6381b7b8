//! Compressed weights and per-PE compressed activations in the exact order
//! the PEs consume them.
//!
//! Weights of one input channel and one output-channel group form a block
//! linearized as `(r, s, k)` with the output channel varying fastest.
//! Activations of one input channel on one PE tile form a block linearized
//! x-major, then y.

use crate::codec::{decode_block, encode_block, footprint, BlockKind, CompressedBlock, Footprint, FootprintModel};
use crate::dataflow::{split_axis, GroupPlan};
use crate::error::{Error, Result};
use crate::tensors::{DenseTensor, DimRole, LayerShape};

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedWeights {
    pub plan: GroupPlan,
    pub filter_w: usize,
    pub filter_h: usize,
    pub channels_per_group: usize,
    /// `blocks[group][local input channel]`.
    pub blocks: Vec<Vec<CompressedBlock>>,
}

impl CompressedWeights {
    pub fn footprint(&self, model: &FootprintModel) -> Footprint {
        footprint(self.blocks.iter().flatten(), model)
    }

    pub fn nnz(&self) -> usize {
        self.blocks.iter().flatten().map(|b| b.nnz()).sum()
    }

    /// Expands back to a `[K][C/groups][R][S]` tensor.
    pub fn decompress(&self, layer: &LayerShape) -> Result<DenseTensor> {
        let mut out = DenseTensor::zeros(layer.weight_dims());
        let (cg, fw, fh) = (self.channels_per_group, self.filter_w, self.filter_h);
        let vals = out.values_mut();
        for (span, blocks) in self.plan.groups.iter().zip(&self.blocks) {
            for (cl, block) in blocks.iter().enumerate() {
                let dense = decode_block(block)?;
                for (pos, v) in dense.into_iter().enumerate() {
                    let k = span.k_start + pos % span.k_len;
                    let rs = pos / span.k_len;
                    let (r, s) = (rs / fh, rs % fh);
                    vals[((k * cg + cl) * fw + r) * fh + s] = v;
                }
            }
        }
        Ok(out)
    }
}

/// Compresses a `[K][C/groups][R][S]` weight tensor into per-group,
/// per-input-channel blocks.
pub fn compress_weights(
    layer: &LayerShape,
    weights: &DenseTensor,
    plan: &GroupPlan,
    index_bits: u32,
) -> Result<CompressedWeights> {
    if weights.dims() != layer.weight_dims().as_slice() {
        return Err(Error::Shape(format!(
            "weights {:?} do not match layer `{}`",
            weights.dims(),
            layer.name
        )));
    }
    let (cg, fw, fh) = (layer.channels_per_group(), layer.filter_w, layer.filter_h);
    let blocks = plan
        .groups
        .iter()
        .map(|span| {
            (0..cg)
                .map(|cl| {
                    let mut dense = Vec::with_capacity(span.k_len * fw * fh);
                    for r in 0..fw {
                        for s in 0..fh {
                            for k in span.k_range() {
                                dense.push(weights.at4(k, cl, r, s));
                            }
                        }
                    }
                    encode_block(&dense, index_bits, BlockKind::WeightGroup)
                })
                .collect()
        })
        .collect();
    Ok(CompressedWeights { plan: plan.clone(), filter_w: fw, filter_h: fh, channels_per_group: cg, blocks })
}

/// A `[C][W][H]` activation volume distributed over a PE grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedActivations {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub rows: usize,
    pub cols: usize,
    /// `blocks[pe][channel]`.
    pub blocks: Vec<Vec<CompressedBlock>>,
}

/// Origin and extent of each PE's tile, row-major PE order.
pub(crate) fn tile_rects(width: usize, height: usize, rows: usize, cols: usize) -> Vec<(usize, usize, usize, usize)> {
    let (_, xs) = split_axis(width, cols);
    let (_, ys) = split_axis(height, rows);
    let mut rects = Vec::with_capacity(rows * cols);
    for y in &ys {
        for x in &xs {
            rects.push((x.start, y.start, x.len(), y.len()));
        }
    }
    rects
}

impl CompressedActivations {
    pub fn pes(&self) -> usize {
        self.rows * self.cols
    }

    pub fn tiles(&self) -> Vec<(usize, usize, usize, usize)> {
        tile_rects(self.width, self.height, self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.blocks.iter().flatten().map(|b| b.nnz()).sum()
    }

    pub fn footprint(&self, model: &FootprintModel) -> Footprint {
        footprint(self.blocks.iter().flatten(), model)
    }

    /// Footprint held by each PE.
    pub fn pe_footprints(&self, model: &FootprintModel) -> Vec<Footprint> {
        self.blocks.iter().map(|pe| footprint(pe, model)).collect()
    }

    pub fn decompress(&self) -> Result<DenseTensor> {
        let mut out = DenseTensor::zeros(vec![
            (DimRole::InChannel, self.channels),
            (DimRole::Width, self.width),
            (DimRole::Height, self.height),
        ]);
        let (w, h) = (self.width, self.height);
        let vals = out.values_mut();
        for ((x0, y0, tw, th), pe) in self.tiles().into_iter().zip(&self.blocks) {
            if tw == 0 || th == 0 {
                continue;
            }
            for (c, block) in pe.iter().enumerate() {
                for (pos, v) in block.nonzeros() {
                    if pos >= block.logical_extent {
                        return Err(Error::MalformedBlock("entry beyond tile".into()));
                    }
                    let (x, y) = (x0 + pos / th, y0 + pos % th);
                    vals[(c * w + x) * h + y] = v;
                }
                block.validate()?;
            }
        }
        Ok(out)
    }
}

/// Distributes and compresses a `[C][W][H]` volume over a `rows x cols` grid.
pub fn compress_activations(t: &DenseTensor, rows: usize, cols: usize, index_bits: u32) -> Result<CompressedActivations> {
    if t.dims().len() != 3 {
        return Err(Error::Shape(format!("activations must be rank 3, got {:?}", t.dims())));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Config(format!("PE grid {rows}x{cols} must be at least 1x1")));
    }
    let s = t.shape();
    let (c, w, h) = (s[0], s[1], s[2]);
    let blocks = tile_rects(w, h, rows, cols)
        .into_iter()
        .map(|(x0, y0, tw, th)| {
            (0..c)
                .map(|ch| {
                    let mut dense = Vec::with_capacity(tw * th);
                    for x in x0..x0 + tw {
                        for y in y0..y0 + th {
                            dense.push(t.at3(ch, x, y));
                        }
                    }
                    encode_block(&dense, index_bits, BlockKind::ActivationTile)
                })
                .collect()
        })
        .collect();
    Ok(CompressedActivations { channels: c, width: w, height: h, rows, cols, blocks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataflow::spans;
    use crate::tensors::{gen_synthetic, ValueRange};

    #[test]
    fn weights_round_trip() {
        let layer = LayerShape::new("w", 6, 10, 5, 5, 3, 3).with_groups(2);
        let w = gen_synthetic(layer.weight_dims(), 0.4, 8, ValueRange::WEIGHTS).unwrap();
        let plan = GroupPlan { kc: 3, groups: spans(&layer, 3) };
        let cw = compress_weights(&layer, &w, &plan, 4).unwrap();
        assert_eq!(cw.blocks.len(), 4);
        assert_eq!(cw.decompress(&layer).unwrap(), w);
        assert_eq!(cw.nnz(), w.nnz());
    }

    #[test]
    fn weight_blocks_put_channels_innermost() {
        let layer = LayerShape::new("w", 1, 2, 3, 3, 1, 2);
        let w = DenseTensor::new(layer.weight_dims(), vec![1, 2, 3, 4]).unwrap();
        let plan = GroupPlan { kc: 2, groups: spans(&layer, 2) };
        let cw = compress_weights(&layer, &w, &plan, 4).unwrap();
        // w[k][0][0][s]: k=0 -> [1, 2], k=1 -> [3, 4]; order (s, k).
        assert_eq!(decode_block(&cw.blocks[0][0]).unwrap(), vec![1, 3, 2, 4]);
    }

    #[test]
    fn activations_round_trip_on_ragged_grids() {
        let t = gen_synthetic(
            vec![(DimRole::InChannel, 3), (DimRole::Width, 7), (DimRole::Height, 5)],
            0.5,
            2,
            ValueRange::ACTIVATIONS,
        )
        .unwrap();
        for (rows, cols) in [(1, 1), (2, 3), (4, 4), (8, 8)] {
            let ca = compress_activations(&t, rows, cols, 4).unwrap();
            assert_eq!(ca.decompress().unwrap(), t, "grid {rows}x{cols}");
            assert_eq!(ca.nnz(), t.nnz());
        }
    }
}
