//! PE-array executor.
//!
//! Each cycle multiplies one broadcast input vector (`rows` elements, one
//! per PE row) against one broadcast weight column (3 elements, one per PE
//! column) and reduces the `rows * 3` products along the diagonals
//! `m = i - j + 2`, yielding `rows + 2` partial sums for consecutive
//! output rows. Sums land in an index-addressed partial-sum buffer keyed
//! by (out_c, column, segment, row); the two boundary diagonals belong to
//! the neighboring vertical segment and are routed there, or dropped at
//! the true image edge. Discard-marked cycles (output column in the
//! padding) compute but store nothing, exactly like the hardware would.
//!
//! Blocks own disjoint output channels, so they execute independently;
//! with the `parallel` feature they run on a rayon pool. The executor is
//! deliberately dumb: everything data-dependent was already resolved by
//! the schedule generator.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mapping::{Mapping, Schedule, ScheduleEntry};
use crate::sparse::{encode_activations, VectorSparseTensor, KERNEL_COLS};
use crate::tensor::{DenseTensor, ElemWidth};

/// One operand of a simulation: the accelerator reads either a dense
/// tensor (dense mode) or a vector-sparse one (sparse mode).
#[derive(Clone, Copy)]
pub enum Operand<'a> {
    Dense(&'a DenseTensor),
    Sparse(&'a VectorSparseTensor),
}

impl<'a> From<&'a DenseTensor> for Operand<'a> {
    fn from(t: &'a DenseTensor) -> Self {
        Operand::Dense(t)
    }
}

impl<'a> From<&'a VectorSparseTensor> for Operand<'a> {
    fn from(t: &'a VectorSparseTensor) -> Self {
        Operand::Sparse(t)
    }
}

/// Simulation knobs. `acc_bits` is the modeled accumulator width (default
/// 32, up to 62); `capacity_limit` bounds live partial-sum entries per
/// block, modeling the local SRAM budget.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub capacity_limit: Option<usize>,
    pub acc_bits: u8,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            capacity_limit: None,
            acc_bits: 32,
        }
    }
}

/// Index-addressed partial-sum storage for one block.
#[derive(Debug, Default)]
pub struct PsumBuffer {
    entries: HashMap<(u32, u32, u32, u32), i64>,
    capacity_limit: Option<usize>,
}

impl PsumBuffer {
    pub fn new(capacity_limit: Option<usize>) -> Self {
        PsumBuffer {
            entries: HashMap::new(),
            capacity_limit,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Add into (out_c, col, seg, row). Fails when a new entry would
    /// exceed the capacity limit.
    fn accumulate(
        &mut self,
        key: (u32, u32, u32, u32),
        v: i64,
        cycle: u64,
        block: usize,
    ) -> Result<()> {
        if let Some(limit) = self.capacity_limit {
            if !self.entries.contains_key(&key) && self.entries.len() >= limit {
                return Err(Error::CapacityExceeded { limit, cycle, block });
            }
        }
        *self.entries.entry(key).or_insert(0) += v;
        Ok(())
    }
}

/// Execution result: the output tensor plus the cycle and access accounting
/// the metrics layer consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimResult {
    pub output: DenseTensor,
    pub cycles_per_block: Vec<u64>,
    pub total_cycles: u64,
    /// Multiplies performed: rows * 3 per executed cycle.
    pub mac_count: u64,
    /// Operand vector reads (2 per cycle) plus partial-sum reads.
    pub sram_reads: u64,
    /// Partial-sum writes (one read-modify-write per row touched).
    pub sram_writes: u64,
}

impl SimResult {
    pub fn report(&self) -> SimReport {
        SimReport {
            total_cycles: self.total_cycles,
            cycles_per_block: self.cycles_per_block.clone(),
            mac_count: self.mac_count,
            sram_reads: self.sram_reads,
            sram_writes: self.sram_writes,
        }
    }
}

/// The counters of a [`SimResult`], serializable as a small versioned
/// text report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimReport {
    pub total_cycles: u64,
    pub cycles_per_block: Vec<u64>,
    pub mac_count: u64,
    pub sram_reads: u64,
    pub sram_writes: u64,
}

impl SimReport {
    pub fn to_text(&self) -> String {
        let blocks: Vec<String> = self.cycles_per_block.iter().map(u64::to_string).collect();
        format!(
            "simreport v1\ntotal_cycles {}\ncycles_per_block {}\nmac_count {}\nsram_reads {}\nsram_writes {}\n",
            self.total_cycles,
            blocks.join(","),
            self.mac_count,
            self.sram_reads,
            self.sram_writes,
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::BadFile {
            what: "simreport",
            reason,
        };
        let mut lines = text.lines();
        if lines.next() != Some("simreport v1") {
            return Err(bad("missing 'simreport v1' header".into()));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing field {name}")))?;
            line.strip_prefix(name)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("expected field {name}, got {line:?}")))
        };
        let total_cycles = field("total_cycles")?
            .parse()
            .map_err(|e| bad(format!("total_cycles: {e}")))?;
        let cycles_per_block = field("cycles_per_block")?
            .split(',')
            .map(|s| s.parse().map_err(|e| bad(format!("cycles_per_block: {e}"))))
            .collect::<Result<Vec<u64>>>()?;
        let mac_count = field("mac_count")?
            .parse()
            .map_err(|e| bad(format!("mac_count: {e}")))?;
        let sram_reads = field("sram_reads")?
            .parse()
            .map_err(|e| bad(format!("sram_reads: {e}")))?;
        let sram_writes = field("sram_writes")?
            .parse()
            .map_err(|e| bad(format!("sram_writes: {e}")))?;
        Ok(SimReport {
            total_cycles,
            cycles_per_block,
            mac_count,
            sram_reads,
            sram_writes,
        })
    }
}

/// Diagonal reduction of one cycle: `p[m] = sum over j of in[m-2+j] * w[j]`
/// for the in-range row indices, `m` in `0..rows+2`.
fn diagonal_sums_into(input: &[i32], weight: &[i32], p: &mut [i64]) {
    p.fill(0);
    for (i, &a) in input.iter().enumerate() {
        for (j, &b) in weight.iter().enumerate() {
            p[i + 2 - j] += a as i64 * b as i64;
        }
    }
}

/// One PE-array cycle on explicit vectors: `rows + 2` diagonal partial
/// sums, index 0 and `rows + 1` being the boundary sums.
pub fn pe_array_cycle(input_vec: &[i32], weight_vec: &[i32]) -> Result<Vec<i64>> {
    if weight_vec.len() != KERNEL_COLS || input_vec.is_empty() {
        return Err(Error::VecLenMismatch {
            expected: KERNEL_COLS,
            got: weight_vec.len(),
        });
    }
    let mut p = vec![0i64; input_vec.len() + 2];
    diagonal_sums_into(input_vec, weight_vec, &mut p);
    Ok(p)
}

struct BlockOutcome {
    psums: HashMap<(u32, u32, u32, u32), i64>,
    cycles: u64,
    macs: u64,
    reads: u64,
    writes: u64,
}

fn fetch_input<'a, 'b>(
    op: &Operand<'a>,
    coord: [u32; 3],
    rows: usize,
    buf: &'b mut Vec<i32>,
) -> Result<&'b [i32]>
where
    'a: 'b,
{
    match op {
        Operand::Sparse(s) => s.get(coord).ok_or(Error::MissingOperand {
            kind: "activation",
            coord,
        }),
        Operand::Dense(t) => {
            let h = t.dims()[1];
            buf.clear();
            for r in 0..rows {
                let row = coord[2] as usize * rows + r;
                buf.push(if row < h {
                    t.at(&[coord[0] as usize, row, coord[1] as usize])
                } else {
                    0
                });
            }
            Ok(buf.as_slice())
        }
    }
}

fn fetch_weight(op: &Operand<'_>, coord: [u32; 3], buf: &mut [i32; 3]) -> Result<()> {
    match op {
        Operand::Sparse(s) => {
            let v = s.get(coord).ok_or(Error::MissingOperand {
                kind: "weight",
                coord,
            })?;
            buf.copy_from_slice(v);
        }
        Operand::Dense(t) => {
            let (o, ci, f) = (coord[0] as usize, coord[1] as usize, coord[2] as usize);
            for (ky, slot) in buf.iter_mut().enumerate() {
                *slot = t.at(&[o, ci, ky, f]);
            }
        }
    }
    Ok(())
}

fn run_block(
    block: usize,
    entries: &[ScheduleEntry],
    acts: &Operand<'_>,
    wts: &Operand<'_>,
    m: &Mapping,
    opts: &SimOptions,
) -> Result<BlockOutcome> {
    let rows = m.config.rows;
    let out_h = m.layer.out_h();
    let acc_min = -(1i64 << (opts.acc_bits - 1));
    let acc_max = (1i64 << (opts.acc_bits - 1)) - 1;

    let mut psums = PsumBuffer::new(opts.capacity_limit);
    let mut input_buf = Vec::with_capacity(rows);
    let mut weight_buf = [0i32; 3];
    let mut p = vec![0i64; rows + 2];
    let mut macs = 0u64;
    let mut reads = 0u64;
    let mut writes = 0u64;

    for e in entries {
        let input = fetch_input(acts, [e.input.in_c, e.input.col, e.input.seg], rows, &mut input_buf)?;
        fetch_weight(wts, [e.weight.out_c, e.weight.in_c, e.weight.kcol as u32], &mut weight_buf)?;
        reads += 2;
        diagonal_sums_into(input, &weight_buf, &mut p);
        macs += (rows * KERNEL_COLS) as u64;

        if e.discard {
            continue;
        }
        let (out_c, col, seg) = (e.output.out_c, e.output.col as u32, e.output.seg as usize);
        let cycle = e.cycle as u64;
        let touch = |psums: &mut PsumBuffer, seg: usize, row: usize, v: i64| -> Result<()> {
            let key = (out_c, col, seg as u32, row as u32);
            psums.accumulate(key, v, cycle, block)?;
            let stored = psums.entries[&key];
            if stored < acc_min || stored > acc_max {
                return Err(Error::AccumulatorOverflow {
                    out_c: out_c as usize,
                    row: seg * rows + row,
                    col: col as usize,
                });
            }
            Ok(())
        };

        // Interior diagonals: rows of this segment, clipped at the image
        // bottom when the last segment runs past it.
        let live_rows = rows.min(out_h.saturating_sub(seg * rows));
        for r in 0..live_rows {
            touch(&mut psums, seg, r, p[r + 1])?;
            reads += 1;
            writes += 1;
        }
        if e.spill_low {
            touch(&mut psums, seg - 1, rows - 1, p[0])?;
            reads += 1;
            writes += 1;
        }
        if e.spill_high {
            touch(&mut psums, seg + 1, 0, p[rows + 1])?;
            reads += 1;
            writes += 1;
        }
    }

    Ok(BlockOutcome {
        psums: psums.entries,
        cycles: entries.len() as u64,
        macs,
        reads,
        writes,
    })
}

fn simulate_inner(
    sched: &Schedule,
    acts: Operand<'_>,
    wts: Operand<'_>,
    m: &Mapping,
    opts: SimOptions,
    sequential: bool,
) -> Result<SimResult> {
    let blocks = m.config.blocks;
    let run = |b: usize| run_block(b, sched.block_entries(b), &acts, &wts, m, &opts);
    let outcomes = if sequential {
        crate::try_map_indexed_seq(blocks, run)?
    } else {
        crate::try_map_indexed(blocks, run)?
    };

    let (out_h, out_w) = (m.layer.out_h(), m.layer.out_w());
    let rows = m.config.rows;
    let mut output = DenseTensor::zeros(vec![m.layer.out_c, out_h, out_w], ElemWidth::W32);
    let mut cycles_per_block = Vec::with_capacity(blocks);
    let (mut macs, mut reads, mut writes) = (0u64, 0u64, 0u64);
    for oc in &outcomes {
        cycles_per_block.push(oc.cycles);
        macs += oc.macs;
        reads += oc.reads;
        writes += oc.writes;
        for (&(out_c, col, seg, row), &v) in &oc.psums {
            let y = seg as usize * rows + row as usize;
            let idx = [out_c as usize, y, col as usize];
            // Blocks own disjoint keys for well-formed schedules; summing
            // here keeps replayed or re-partitioned schedules exact too.
            let sum = output.at(&idx) as i64 + v;
            let v32 = i32::try_from(sum).map_err(|_| Error::AccumulatorOverflow {
                out_c: out_c as usize,
                row: y,
                col: col as usize,
            })?;
            output.set(&idx, v32);
        }
    }
    let total_cycles = cycles_per_block.iter().copied().max().unwrap_or(0);
    Ok(SimResult {
        output,
        cycles_per_block,
        total_cycles,
        mac_count: macs,
        sram_reads: reads,
        sram_writes: writes,
    })
}

/// Execute a schedule. Blocks run in parallel when the `parallel` feature
/// is enabled (the default).
pub fn simulate(
    sched: &Schedule,
    acts: Operand<'_>,
    wts: Operand<'_>,
    m: &Mapping,
) -> Result<SimResult> {
    simulate_inner(sched, acts, wts, m, SimOptions::default(), false)
}

pub fn simulate_with(
    sched: &Schedule,
    acts: Operand<'_>,
    wts: Operand<'_>,
    m: &Mapping,
    opts: SimOptions,
) -> Result<SimResult> {
    simulate_inner(sched, acts, wts, m, opts, false)
}

/// Same as [`simulate`] but blocks run one after another on the calling
/// thread, regardless of features. Kept for benchmarking the parallel
/// speedup and for minimal environments.
pub fn simulate_sequential(
    sched: &Schedule,
    acts: Operand<'_>,
    wts: Operand<'_>,
    m: &Mapping,
) -> Result<SimResult> {
    simulate_inner(sched, acts, wts, m, SimOptions::default(), true)
}

/// Post-processing unit: activation function then zero detection, yielding
/// the vector-sparse form the next layer consumes.
pub fn post_process(out: &DenseTensor, v: usize) -> Result<VectorSparseTensor> {
    encode_activations(&out.relu(), v)
}
