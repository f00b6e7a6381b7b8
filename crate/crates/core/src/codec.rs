//! Run-length compressed-sparse blocks.
//!
//! Each stored value carries the number of zeros that precede it. A zero run
//! too long for the index field is broken up by storing an explicit zero
//! (a placeholder) with the maximum run length. Trailing zeros are not
//! stored; the block's logical extent restores them on decode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_INDEX_BITS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// `Kc x R x S` weights of one input channel for one output-channel group.
    WeightGroup,
    /// `Wt x Ht` activations of one input channel for one PE tile.
    ActivationTile,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedBlock {
    pub values: Vec<i32>,
    pub run_lengths: Vec<u8>,
    pub logical_extent: usize,
    pub index_bits: u32,
    pub kind: BlockKind,
}

/// One stored entry with its position in the dense slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry {
    pub value: i32,
    pub position: usize,
    pub placeholder: bool,
}

fn max_run(index_bits: u32) -> usize {
    (1usize << index_bits.clamp(1, 8)) - 1
}

impl CompressedBlock {
    pub fn empty(logical_extent: usize, index_bits: u32, kind: BlockKind) -> Self {
        Self { values: Vec::new(), run_lengths: Vec::new(), logical_extent, index_bits, kind }
    }

    /// Stored entries, placeholders included.
    pub fn stored(&self) -> usize {
        self.values.len()
    }

    /// Stored entries that are not placeholders.
    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    pub fn placeholders(&self) -> usize {
        self.stored() - self.nnz()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Checks the structural invariants without expanding the block.
    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.index_bits) {
            return Err(Error::MalformedBlock(format!(
                "index width {} outside 1..=8 bits",
                self.index_bits
            )));
        }
        if self.values.len() != self.run_lengths.len() {
            return Err(Error::MalformedBlock(format!(
                "{} values but {} run lengths",
                self.values.len(),
                self.run_lengths.len()
            )));
        }
        let limit = max_run(self.index_bits);
        let mut span = 0usize;
        for &run in &self.run_lengths {
            if run as usize > limit {
                return Err(Error::MalformedBlock(format!(
                    "run length {run} exceeds the {}-bit index",
                    self.index_bits
                )));
            }
            span += run as usize + 1;
        }
        if span > self.logical_extent {
            return Err(Error::MalformedBlock(format!(
                "expansion covers {span} elements, extent is {}",
                self.logical_extent
            )));
        }
        Ok(())
    }

    /// Stored entries in order, each with its dense position.
    pub fn entries(&self) -> Result<Vec<Entry>> {
        self.validate()?;
        Ok(self.iter_entries().collect())
    }

    /// Entry iterator that assumes the block is well formed.
    pub(crate) fn iter_entries(&self) -> impl Iterator<Item = Entry> + '_ {
        let mut pos = 0usize;
        self.values.iter().zip(&self.run_lengths).map(move |(&value, &run)| {
            pos += run as usize;
            let e = Entry { value, position: pos, placeholder: value == 0 };
            pos += 1;
            e
        })
    }

    /// Entries that carry a non-zero value.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, i32)> + '_ {
        self.iter_entries()
            .filter(|e| !e.placeholder)
            .map(|e| (e.position, e.value))
    }
}

/// Encodes a dense slice. The slice must already be in the block's
/// linearization order. Index widths are clamped to `1..=8` bits.
pub fn encode_block(dense: &[i32], index_bits: u32, kind: BlockKind) -> CompressedBlock {
    let limit = max_run(index_bits);
    let mut values = Vec::new();
    let mut run_lengths = Vec::new();
    let mut zeros = 0usize;
    for &v in dense {
        if v == 0 {
            zeros += 1;
            continue;
        }
        while zeros > limit {
            values.push(0);
            run_lengths.push(limit as u8);
            zeros -= limit + 1;
        }
        values.push(v);
        run_lengths.push(zeros as u8);
        zeros = 0;
    }
    CompressedBlock {
        values,
        run_lengths,
        logical_extent: dense.len(),
        index_bits: index_bits.clamp(1, 8),
        kind,
    }
}

pub fn decode_block(block: &CompressedBlock) -> Result<Vec<i32>> {
    block.validate()?;
    let mut out = vec![0i32; block.logical_extent];
    for e in block.iter_entries() {
        out[e.position] = e.value;
    }
    Ok(out)
}

/// Storage cost per stored value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FootprintModel {
    pub value_bits: u64,
    pub index_overhead_bits: u64,
}

impl Default for FootprintModel {
    fn default() -> Self {
        Self { value_bits: 16, index_overhead_bits: 10 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footprint {
    pub data_bits: u64,
    pub index_bits: u64,
}

impl Footprint {
    pub fn total_bits(&self) -> u64 {
        self.data_bits + self.index_bits
    }

    pub fn data_bytes(&self) -> u64 {
        self.data_bits.div_ceil(8)
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bits().div_ceil(8)
    }

    /// Index bits per data bit; 0 for an empty footprint.
    pub fn index_ratio(&self) -> f64 {
        if self.data_bits == 0 {
            0.0
        } else {
            self.index_bits as f64 / self.data_bits as f64
        }
    }
}

impl std::ops::Add for Footprint {
    type Output = Footprint;
    fn add(self, o: Footprint) -> Footprint {
        Footprint { data_bits: self.data_bits + o.data_bits, index_bits: self.index_bits + o.index_bits }
    }
}

impl std::ops::AddAssign for Footprint {
    fn add_assign(&mut self, o: Footprint) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Footprint {
    fn sum<I: Iterator<Item = Footprint>>(iter: I) -> Footprint {
        iter.fold(Footprint::default(), |a, b| a + b)
    }
}

impl FootprintModel {
    pub fn for_stored(&self, stored: usize) -> Footprint {
        Footprint {
            data_bits: stored as u64 * self.value_bits,
            index_bits: stored as u64 * self.index_overhead_bits,
        }
    }
}

pub fn footprint<'a>(blocks: impl IntoIterator<Item = &'a CompressedBlock>, model: &FootprintModel) -> Footprint {
    blocks.into_iter().map(|b| model.for_stored(b.stored())).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const K: BlockKind = BlockKind::ActivationTile;

    #[test]
    fn simple_encoding() {
        let b = encode_block(&[1, 0, 0, 2], 4, K);
        assert_eq!(b.values, vec![1, 2]);
        assert_eq!(b.run_lengths, vec![0, 2]);
        assert_eq!(decode_block(&b).unwrap(), vec![1, 0, 0, 2]);
    }

    #[test]
    fn all_zero_slice_is_empty() {
        let b = encode_block(&[0; 8], 4, K);
        assert!(b.values.is_empty() && b.run_lengths.is_empty());
        assert_eq!(decode_block(&b).unwrap(), vec![0; 8]);
        assert_eq!(decode_block(&CompressedBlock::empty(3, 4, K)).unwrap(), vec![0; 3]);
    }

    #[test]
    fn long_run_gets_placeholder() {
        let mut dense = vec![0; 20];
        dense.push(7);
        let b = encode_block(&dense, 4, K);
        assert_eq!(b.values, vec![0, 7]);
        assert_eq!(b.run_lengths, vec![15, 4]);
        assert_eq!(b.placeholders(), 1);
        assert_eq!(decode_block(&b).unwrap(), dense);
    }

    #[test]
    fn exactly_max_run_needs_no_placeholder() {
        let mut dense = vec![0; 15];
        dense.push(3);
        let b = encode_block(&dense, 4, K);
        assert_eq!(b.run_lengths, vec![15]);
        assert_eq!(b.placeholders(), 0);

        let mut dense = vec![0; 16];
        dense.push(3);
        let b = encode_block(&dense, 4, K);
        assert_eq!((b.values.clone(), b.run_lengths.clone()), (vec![0, 3], vec![15, 0]));
    }

    #[test]
    fn entries_report_positions() {
        let b = encode_block(&[0, 5, 0, 0, -2, 0], 4, K);
        let e = b.entries().unwrap();
        assert_eq!(e.iter().map(|e| e.position).collect::<Vec<_>>(), vec![1, 4]);
        assert_eq!(b.nonzeros().collect::<Vec<_>>(), vec![(1, 5), (4, -2)]);
    }

    #[test]
    fn malformed_blocks_are_rejected() {
        let mut b = encode_block(&[1, 0, 0, 2], 4, K);
        b.logical_extent = 3;
        assert!(matches!(decode_block(&b), Err(Error::MalformedBlock(_))));
        let b = CompressedBlock { values: vec![1], run_lengths: vec![16], logical_extent: 40, index_bits: 4, kind: K };
        assert!(decode_block(&b).is_err());
        let b = CompressedBlock { values: vec![1, 2], run_lengths: vec![0], logical_extent: 4, index_bits: 4, kind: K };
        assert!(decode_block(&b).is_err());
    }

    #[test]
    fn footprint_accounting() {
        let m = FootprintModel::default();
        let one = encode_block(&[0, 9], 4, K);
        assert_eq!(footprint([&one], &m).total_bits(), 26);
        let none = encode_block(&[0, 0], 4, K);
        assert_eq!(footprint([&none], &m).total_bits(), 0);
        let f = footprint([&one, &one], &m);
        assert_eq!((f.data_bits, f.index_bits), (32, 20));
        assert_eq!(f.index_ratio(), 10.0 / 16.0);
    }

    #[test]
    fn ten_kib_of_data_carries_6_25_kib_of_index() {
        let m = FootprintModel::default();
        let f = m.for_stored(10 * 1024 * 8 / 16);
        assert_eq!(f.data_bytes(), 10 * 1024);
        assert_eq!(f.index_bits / 8, 6400);
    }
}
