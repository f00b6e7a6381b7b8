//! Planar tiling, output halos, output-channel grouping and the coordinate
//! arithmetic of the input-stationary Cartesian product.
//!
//! Each PE owns a rectangular tile of the input plane and, separately, a
//! rectangular tile of the output plane. Its accumulator covers every output
//! coordinate its inputs can reach; the cells owned by other PEs are the halo
//! and are shipped to their owners at the end of each output-channel group.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::tensors::LayerShape;

fn ceil_div_i(a: isize, b: isize) -> isize {
    let q = a / b;
    if a % b != 0 && ((a < 0) == (b < 0)) {
        q + 1
    } else {
        q
    }
}

fn floor_div_i(a: isize, b: isize) -> isize {
    let q = a / b;
    if a % b != 0 && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

/// One PE's share of a layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub pe: usize,
    pub row: usize,
    pub col: usize,
    /// Input tile origin and extent; the extent may be zero.
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    /// Output region this PE writes back to its OARAM.
    pub out_x: Range<usize>,
    pub out_y: Range<usize>,
    /// Output coordinate of accumulator cell (0, 0).
    pub acc_base_x: isize,
    pub acc_base_y: isize,
}

impl Tile {
    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    pub fn input_count(&self) -> usize {
        self.w * self.h
    }

    pub fn output_count(&self) -> usize {
        self.out_x.len() * self.out_y.len()
    }
}

/// A rectangle of accumulator cells that belongs to one output owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HaloRegion {
    pub owner: usize,
    pub acc_x: Range<usize>,
    pub acc_y: Range<usize>,
}

impl HaloRegion {
    pub fn cells(&self) -> usize {
        self.acc_x.len() * self.acc_y.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub rows: usize,
    pub cols: usize,
    /// Nominal input tile extent.
    pub tile_w: usize,
    pub tile_h: usize,
    /// Nominal output tile extent.
    pub out_tile_w: usize,
    pub out_tile_h: usize,
    /// Accumulator extent per output channel, identical on every PE.
    pub acc_w: usize,
    pub acc_h: usize,
    pub out_w: usize,
    pub out_h: usize,
    pub filter_w: usize,
    pub filter_h: usize,
    pub stride: usize,
    pub pad: usize,
    pub tiles: Vec<Tile>,
    /// Per PE, the accumulator rectangles inside the output plane, split by
    /// owner. The entry whose owner is the PE itself is its interior.
    pub regions: Vec<Vec<HaloRegion>>,
}

impl TilePlan {
    pub fn pes(&self) -> usize {
        self.rows * self.cols
    }

    pub fn acc_plane(&self) -> usize {
        self.acc_w * self.acc_h
    }

    /// Regions a PE ships to neighbours.
    pub fn halos(&self, pe: usize) -> impl Iterator<Item = &HaloRegion> {
        self.regions[pe].iter().filter(move |r| r.owner != pe)
    }

    pub fn interior(&self, pe: usize) -> Option<&HaloRegion> {
        self.regions[pe].iter().find(|r| r.owner == pe)
    }

    /// PE that owns input coordinate `(x, y)` and the local coordinate there.
    pub fn input_owner(&self, x: usize, y: usize) -> (usize, usize, usize) {
        let (col, row) = (x / self.tile_w, y / self.tile_h);
        let t = &self.tiles[row * self.cols + col];
        (t.pe, x - t.x0, y - t.y0)
    }

    /// PE that owns output coordinate `(x, y)`.
    pub fn output_owner(&self, x: usize, y: usize) -> usize {
        (y / self.out_tile_h) * self.cols + x / self.out_tile_w
    }

    /// Accumulator map of one PE.
    pub fn acc_map(&self, pe: usize) -> AccumulatorMap {
        let t = &self.tiles[pe];
        AccumulatorMap {
            base_x: t.acc_base_x,
            base_y: t.acc_base_y,
            x0: t.x0 as isize,
            y0: t.y0 as isize,
            acc_w: self.acc_w,
            acc_h: self.acc_h,
            stride: self.stride as isize,
            pad: self.pad as isize,
        }
    }
}

pub(crate) fn split_axis(len: usize, parts: usize) -> (usize, Vec<Range<usize>>) {
    let step = len.div_ceil(parts).max(1);
    let ranges = (0..parts)
        .map(|i| (i * step).min(len)..((i + 1) * step).min(len))
        .collect();
    (step, ranges)
}

/// Splits an output range into pieces by owning grid index.
fn split_by_owner(range: Range<isize>, owners: &[Range<usize>]) -> Vec<(usize, Range<usize>)> {
    let lo = range.start.max(0) as usize;
    let hi = range.end.max(0) as usize;
    owners
        .iter()
        .enumerate()
        .filter_map(|(i, o)| {
            let (a, b) = (o.start.max(lo), o.end.min(hi));
            (a < b).then_some((i, a..b))
        })
        .collect()
}

/// Planar partition of a layer over a `rows x cols` PE grid. Columns split
/// the width and rows split the height; PE ids are row-major.
pub fn partition_tiles(layer: &LayerShape, rows: usize, cols: usize) -> Result<TilePlan> {
    layer.validate()?;
    if rows == 0 || cols == 0 {
        return Err(Error::Config(format!("PE grid {rows}x{cols} must be at least 1x1")));
    }
    let (ow, oh) = (layer.out_w(), layer.out_h());
    let (tile_w, xs) = split_axis(layer.width, cols);
    let (tile_h, ys) = split_axis(layer.height, rows);
    let (out_tile_w, oxs) = split_axis(ow, cols);
    let (out_tile_h, oys) = split_axis(oh, rows);
    let stride = layer.stride;
    let acc_w = (tile_w + layer.filter_w - 2) / stride + 1;
    let acc_h = (tile_h + layer.filter_h - 2) / stride + 1;
    let (st, pad) = (stride as isize, layer.pad as isize);

    let mut tiles = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let (x0, y0) = (xs[col].start, ys[row].start);
            tiles.push(Tile {
                pe: row * cols + col,
                row,
                col,
                x0,
                y0,
                w: xs[col].len(),
                h: ys[row].len(),
                out_x: oxs[col].clone(),
                out_y: oys[row].clone(),
                acc_base_x: ceil_div_i(x0 as isize + pad - (layer.filter_w as isize - 1), st),
                acc_base_y: ceil_div_i(y0 as isize + pad - (layer.filter_h as isize - 1), st),
            });
        }
    }

    let regions = tiles
        .iter()
        .map(|t| {
            if t.is_empty() {
                return Vec::new();
            }
            let xr = split_by_owner(t.acc_base_x..t.acc_base_x + acc_w as isize, &oxs);
            let yr = split_by_owner(t.acc_base_y..t.acc_base_y + acc_h as isize, &oys);
            let mut regs = Vec::new();
            for (orow, yrange) in &yr {
                for (ocol, xrange) in &xr {
                    let local = |r: &Range<usize>, base: isize| {
                        (r.start as isize - base) as usize..(r.end as isize - base) as usize
                    };
                    regs.push(HaloRegion {
                        owner: orow * cols + ocol,
                        acc_x: local(xrange, t.acc_base_x),
                        acc_y: local(yrange, t.acc_base_y),
                    });
                }
            }
            regs
        })
        .collect();

    Ok(TilePlan {
        rows,
        cols,
        tile_w,
        tile_h,
        out_tile_w,
        out_tile_h,
        acc_w,
        acc_h,
        out_w: ow,
        out_h: oh,
        filter_w: layer.filter_w,
        filter_h: layer.filter_h,
        stride,
        pad: layer.pad,
        tiles,
        regions,
    })
}

/// Output coordinate arithmetic for one PE's accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccumulatorMap {
    pub base_x: isize,
    pub base_y: isize,
    pub x0: isize,
    pub y0: isize,
    pub acc_w: usize,
    pub acc_h: usize,
    pub stride: isize,
    pub pad: isize,
}

impl AccumulatorMap {
    /// Accumulator cell along one axis for tile-local input `x` and filter
    /// tap `r`, or `None` when the pair falls between strided outputs.
    #[inline]
    pub fn axis_x(&self, x: usize, r: usize) -> Option<usize> {
        let num = self.x0 + x as isize + self.pad - r as isize;
        (num.rem_euclid(self.stride) == 0).then(|| (floor_div_i(num, self.stride) - self.base_x) as usize)
    }

    #[inline]
    pub fn axis_y(&self, y: usize, s: usize) -> Option<usize> {
        let num = self.y0 + y as isize + self.pad - s as isize;
        (num.rem_euclid(self.stride) == 0).then(|| (floor_div_i(num, self.stride) - self.base_y) as usize)
    }

    /// Accumulator coordinate `(k, xa, ya)` for a weight `(k, r, s)` and a
    /// tile-local activation `(x, y)`.
    pub fn map(&self, k: usize, r: usize, s: usize, x: usize, y: usize) -> Option<(usize, usize, usize)> {
        Some((k, self.axis_x(x, r)?, self.axis_y(y, s)?))
    }

    #[inline]
    pub fn index(&self, k: usize, xa: usize, ya: usize) -> usize {
        (k * self.acc_w + xa) * self.acc_h + ya
    }

    /// Output-plane coordinate of an accumulator cell.
    pub fn to_output(&self, xa: usize, ya: usize) -> (isize, isize) {
        (self.base_x + xa as isize, self.base_y + ya as isize)
    }
}

/// Unit-stride accumulator coordinate: `xa = x + (R - 1) - r`,
/// `ya = y + (S - 1) - s`.
pub fn output_coord(
    weight: (usize, usize, usize),
    act: (usize, usize),
    filter_w: usize,
    filter_h: usize,
) -> (usize, usize, usize) {
    let (k, r, s) = weight;
    (k, act.0 + filter_w - 1 - r, act.1 + filter_h - 1 - s)
}

/// A contiguous run of output channels processed together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpan {
    pub conv_group: usize,
    pub k_start: usize,
    pub k_len: usize,
}

impl GroupSpan {
    pub fn k_range(&self) -> Range<usize> {
        self.k_start..self.k_start + self.k_len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPlan {
    pub kc: usize,
    pub groups: Vec<GroupSpan>,
}

impl GroupPlan {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Largest output-channel group whose partial sums fit the accumulator,
/// capped at the output channels of one conv-group. Conv-groups are split
/// independently, so the last span of each may be ragged.
pub fn choose_kc(layer: &LayerShape, plan: &TilePlan, acc_capacity: usize) -> Result<GroupPlan> {
    let per_channel = plan.acc_plane();
    if per_channel == 0 || per_channel > acc_capacity {
        return Err(Error::Config(format!(
            "layer `{}`: one output channel needs {per_channel} accumulator entries, only {acc_capacity} available",
            layer.name
        )));
    }
    let kg = layer.outputs_per_group();
    let kc = (acc_capacity / per_channel).min(kg);
    Ok(GroupPlan { kc, groups: spans(layer, kc) })
}

/// Output-channel spans for a fixed `kc`.
pub fn spans(layer: &LayerShape, kc: usize) -> Vec<GroupSpan> {
    let kg = layer.outputs_per_group();
    let mut groups = Vec::new();
    for g in 0..layer.groups {
        let mut k = 0;
        while k < kg {
            let len = kc.min(kg - k);
            groups.push(GroupSpan { conv_group: g, k_start: g * kg + k, k_len: len });
            k += len;
        }
    }
    groups
}
