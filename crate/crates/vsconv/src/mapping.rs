//! Layer-to-array mapping and cycle schedule generation.
//!
//! One schedule entry is one PE-array cycle: one input column segment
//! broadcast across rows, one 3-element weight column broadcast across
//! columns. The kernel column decides which output column the diagonal
//! sums feed: with stride 1 and pad 1, kernel column 0 writes one column
//! to the right of the input column, column 1 writes straight down, and
//! column 2 one to the left. Products that land outside the output
//! (leftmost and rightmost boundary) are still scheduled in dense mode and
//! marked `discard`.
//!
//! The loop nest is fixed: out_c (within a block) -> in_c -> segment ->
//! input column -> kernel column. Sparse schedules keep an entry only when
//! both operand vectors are present in their coordinate indexes, and
//! compact the surviving cycles per block.

use crate::error::{Error, Result};
use crate::sparse::{VectorSparseTensor, KERNEL_COLS};
use crate::tensor::ConvLayerSpec;

/// PE-array geometry: `blocks` arrays of `rows` x `cols` PEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeArrayConfig {
    pub blocks: usize,
    pub rows: usize,
    pub cols: usize,
}

impl PeArrayConfig {
    /// `cols` must be 3: the array is specialized for 3x3 filters.
    pub fn new(blocks: usize, rows: usize, cols: usize) -> Result<Self> {
        if cols != KERNEL_COLS {
            return Err(Error::BadPeColumns { got: cols });
        }
        if blocks == 0 {
            return Err(Error::UnsupportedMapping {
                field: "blocks",
                value: 0,
                required: ">= 1",
            });
        }
        if rows == 0 {
            return Err(Error::UnsupportedMapping {
                field: "rows",
                value: 0,
                required: ">= 1",
            });
        }
        Ok(PeArrayConfig { blocks, rows, cols })
    }

    pub fn total_pes(&self) -> usize {
        self.blocks * self.rows * self.cols
    }
}

/// A layer mapped onto an array geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping {
    pub layer: ConvLayerSpec,
    pub config: PeArrayConfig,
    /// Vertical column segments per (channel, column): ceil(in_h / rows).
    pub segments: usize,
    /// Output channel -> block id, round-robin by channel index.
    pub block_assignment: Vec<u32>,
}

impl Mapping {
    pub fn block_of(&self, out_c: usize) -> usize {
        self.block_assignment[out_c] as usize
    }

}

/// Map a 3x3/stride-1/pad-1 layer onto the array.
pub fn map_layer(spec: &ConvLayerSpec, cfg: &PeArrayConfig) -> Result<Mapping> {
    if spec.k_h != 3 {
        return Err(Error::UnsupportedMapping {
            field: "k_h",
            value: spec.k_h,
            required: "3",
        });
    }
    if spec.k_w != 3 {
        return Err(Error::UnsupportedMapping {
            field: "k_w",
            value: spec.k_w,
            required: "3",
        });
    }
    if spec.stride != 1 {
        return Err(Error::UnsupportedMapping {
            field: "stride",
            value: spec.stride,
            required: "1",
        });
    }
    if spec.pad != 1 {
        return Err(Error::UnsupportedMapping {
            field: "pad",
            value: spec.pad,
            required: "1",
        });
    }
    spec.validate()?;
    let block_assignment = (0..spec.out_c).map(|o| (o % cfg.blocks) as u32).collect();
    Ok(Mapping {
        layer: *spec,
        config: *cfg,
        segments: spec.in_h.div_ceil(cfg.rows),
        block_assignment,
    })
}

/// Activation vector coordinate: channel, image column, vertical segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActRef {
    pub in_c: u32,
    pub col: u32,
    pub seg: u32,
}

/// Weight vector coordinate: output channel, input channel, kernel column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeightRef {
    pub out_c: u32,
    pub in_c: u32,
    pub kcol: u8,
}

/// Output destination of one cycle's diagonal sums.
/// `col` is -1 or out_w (one past either edge) for discarded boundary cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutRef {
    pub out_c: u32,
    pub col: i32,
    pub seg: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub block: u32,
    /// 1-based, strictly increasing within a block with no gaps.
    pub cycle: u32,
    pub input: ActRef,
    pub weight: WeightRef,
    pub output: OutRef,
    /// Output column falls outside the image; nothing is accumulated.
    pub discard: bool,
    /// Diagonal 0 belongs to the previous segment's last row.
    pub spill_low: bool,
    /// Diagonal rows+1 belongs to the next segment's first row.
    pub spill_high: bool,
}

/// Cycle schedule for every block of the array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    blocks: Vec<Vec<ScheduleEntry>>,
}

impl Schedule {
    /// Assemble a schedule from externally produced entries, e.g. when
    /// replaying a recorded schedule or permuting execution order. The
    /// caller owns the cycle-numbering invariants.
    pub fn from_block_entries(blocks: Vec<Vec<ScheduleEntry>>) -> Self {
        Schedule { blocks }
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_entries(&self, block: usize) -> &[ScheduleEntry] {
        &self.blocks[block]
    }

    pub fn cycles_per_block(&self) -> Vec<u64> {
        self.blocks.iter().map(|b| b.len() as u64).collect()
    }

    pub fn total_cycles(&self) -> u64 {
        self.blocks.iter().map(|b| b.len() as u64).max().unwrap_or(0)
    }

    pub fn entry_count(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScheduleEntry> {
        self.blocks.iter().flatten()
    }

    /// One line per entry, block-major:
    /// `block,cycle,in_c,col,seg,out_c,wcol,out_col,discard`
    /// with 1-based image columns (so discards appear at 0 and out_w+1)
    /// and the kernel column as a letter.
    pub fn dump_lines(&self) -> Vec<String> {
        self.iter()
            .map(|e| {
                format!(
                    "{},{},{},{},{},{},{},{},{}",
                    e.block,
                    e.cycle,
                    e.input.in_c,
                    e.input.col + 1,
                    e.input.seg,
                    e.weight.out_c,
                    ["A", "B", "C"][e.weight.kcol as usize],
                    e.output.col + 1,
                    e.discard as u8,
                )
            })
            .collect()
    }
}

/// Output column fed by pairing input column `col` with kernel column
/// `kcol`, both 0-based: +1, 0, -1 for kernel columns 0, 1, 2.
pub fn output_col(col: usize, kcol: usize) -> i32 {
    col as i32 + 1 - kcol as i32
}

fn build_schedule(m: &Mapping, mut keep: impl FnMut(usize, usize, usize, usize, usize) -> bool) -> Schedule {
    let spec = &m.layer;
    let out_w = spec.out_w() as i32;
    let out_h = spec.out_h();
    let rows = m.config.rows;
    let mut blocks: Vec<Vec<ScheduleEntry>> = vec![Vec::new(); m.config.blocks];
    for o in 0..spec.out_c {
        let b = m.block_of(o);
        let entries = &mut blocks[b];
        for ci in 0..spec.in_c {
            for seg in 0..m.segments {
                for col in 0..spec.in_w {
                    for kcol in 0..KERNEL_COLS {
                        if !keep(o, ci, seg, col, kcol) {
                            continue;
                        }
                        let oc = output_col(col, kcol);
                        let discard = oc < 0 || oc >= out_w;
                        entries.push(ScheduleEntry {
                            block: b as u32,
                            cycle: entries.len() as u32 + 1,
                            input: ActRef {
                                in_c: ci as u32,
                                col: col as u32,
                                seg: seg as u32,
                            },
                            weight: WeightRef {
                                out_c: o as u32,
                                in_c: ci as u32,
                                kcol: kcol as u8,
                            },
                            output: OutRef {
                                out_c: o as u32,
                                col: oc,
                                seg: seg as u32,
                            },
                            discard,
                            spill_low: seg > 0,
                            spill_high: (seg + 1) * rows < out_h,
                        });
                    }
                }
            }
        }
    }
    Schedule { blocks }
}

/// Dense schedule: every (channel, segment, column) paired with every
/// kernel column, boundary cycles included as discards.
pub fn schedule_dense(m: &Mapping) -> Schedule {
    build_schedule(m, |_, _, _, _, _| true)
}

/// Sparse schedule: an entry survives only if both its activation vector
/// and its weight column are present in the sparse indexes. Cycles are
/// compacted per block.
pub fn schedule_sparse(
    m: &Mapping,
    acts: &VectorSparseTensor,
    wts: &VectorSparseTensor,
) -> Result<Schedule> {
    if acts.vec_len() != m.config.rows {
        return Err(Error::VecLenMismatch {
            expected: m.config.rows,
            got: acts.vec_len(),
        });
    }
    if acts.dense_dims() != m.layer.input_dims().as_slice() {
        return Err(Error::ShapeMismatch {
            context: "schedule_sparse activations",
            expected: format!("{:?}", m.layer.input_dims()),
            got: format!("{:?}", acts.dense_dims()),
        });
    }
    if wts.dense_dims() != m.layer.weight_dims().as_slice() {
        return Err(Error::ShapeMismatch {
            context: "schedule_sparse weights",
            expected: format!("{:?}", m.layer.weight_dims()),
            got: format!("{:?}", wts.dense_dims()),
        });
    }
    Ok(build_schedule(m, |o, ci, seg, col, kcol| {
        acts.contains([ci as u32, col as u32, seg as u32])
            && wts.contains([o as u32, ci as u32, kcol as u32])
    }))
}

/// Closed-form dense cycles of the fullest block:
/// `ceil(out_c/blocks) * in_c * ceil(in_h/rows) * in_w * 3`.
pub fn dense_cycle_count(spec: &ConvLayerSpec, cfg: &PeArrayConfig) -> Result<u64> {
    let m = map_layer(spec, cfg)?;
    Ok(spec.out_c.div_ceil(cfg.blocks) as u64
        * spec.in_c as u64
        * m.segments as u64
        * spec.in_w as u64
        * KERNEL_COLS as u64)
}
