//! Performance accounting: ideal baselines, speedup, exploitation ratios,
//! and the CSV report.
//!
//! Two ideals bracket the measured run. The vector ideal spreads every
//! schedulable nonzero (input vector, weight column) pair perfectly across
//! blocks; the fine-grained ideal keeps every PE busy on a useful nonzero
//! product every cycle. The exploitation ratio says how much of the
//! skippable work between dense and an ideal was actually skipped.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mapping::Mapping;
use crate::sparse::{DensityReport, VectorSparseTensor};
use crate::tensor::DenseTensor;

/// Ideal vector-sparse cycles: all schedulable nonzero pairs, perfectly
/// load-balanced over the blocks with zero overhead.
pub fn ideal_vector_cycles(
    acts: &VectorSparseTensor,
    wts: &VectorSparseTensor,
    m: &Mapping,
) -> Result<u64> {
    if acts.vec_len() != m.config.rows {
        return Err(Error::VecLenMismatch {
            expected: m.config.rows,
            got: acts.vec_len(),
        });
    }
    // Nonzero input vectors per channel.
    let mut act_vecs = vec![0u64; m.layer.in_c];
    for &[ci, _, _] in acts.coords() {
        act_vecs[ci as usize] += 1;
    }
    // Nonzero weight columns per (out_c, in_c), folded over out_c.
    let mut pairs = 0u64;
    for &[_, ci, _] in wts.coords() {
        pairs += act_vecs[ci as usize];
    }
    Ok(pairs.div_ceil(m.config.blocks as u64))
}

/// Ideal fine-grained cycles: multiply pairs with both operands nonzero in
/// the full convolution, at full PE occupancy.
pub fn ideal_finegrained_cycles(
    input: &DenseTensor,
    weights: &DenseTensor,
    m: &Mapping,
) -> Result<u64> {
    let spec = &m.layer;
    if input.dims() != spec.input_dims().as_slice() || weights.dims() != spec.weight_dims().as_slice() {
        return Err(Error::ShapeMismatch {
            context: "ideal_finegrained_cycles",
            expected: format!("{:?} / {:?}", spec.input_dims(), spec.weight_dims()),
            got: format!("{:?} / {:?}", input.dims(), weights.dims()),
        });
    }
    let (out_h, out_w) = (spec.out_h(), spec.out_w());
    let per_channel = |o: usize| -> Result<u64> {
        let mut n = 0u64;
        for ci in 0..spec.in_c {
            for dy in 0..spec.k_h {
                for dx in 0..spec.k_w {
                    if weights.at(&[o, ci, dy, dx]) == 0 {
                        continue;
                    }
                    for y in 0..out_h {
                        for x in 0..out_w {
                            let iy = (y * spec.stride + dy) as isize - spec.pad as isize;
                            let ix = (x * spec.stride + dx) as isize - spec.pad as isize;
                            if input.at3_padded(ci, iy, ix) != 0 {
                                n += 1;
                            }
                        }
                    }
                }
            }
        }
        Ok(n)
    };
    let counts = crate::try_map_indexed(spec.out_c, per_channel)?;
    let useful: u64 = counts.iter().sum();
    Ok(useful.div_ceil(m.config.total_pes() as u64))
}

/// Fraction of skippable work actually skipped:
/// `(dense - actual) / (dense - ideal)`, and 1.0 when nothing is skippable.
pub fn exploitation_ratio(dense: u64, actual: u64, ideal: u64) -> Result<f64> {
    if actual > dense || actual < ideal || ideal > dense {
        return Err(Error::InconsistentCycles { dense, actual, ideal });
    }
    if dense == ideal {
        return Ok(1.0);
    }
    Ok((dense - actual) as f64 / (dense - ideal) as f64)
}

/// One report row: a layer, or the network totals.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub layer: String,
    pub name: String,
    pub dense_cycles: u64,
    pub actual_cycles: u64,
    pub ideal_vec_cycles: u64,
    pub ideal_fg_cycles: u64,
    pub speedup: f64,
    pub exploit_vec: f64,
    pub exploit_fg: f64,
    pub in_elem_density: f64,
    pub in_vec_density: f64,
    pub w_elem_density: f64,
    pub w_vec_density: f64,
}

impl MetricsRow {
    /// Derive the ratio fields from cycle counts and densities.
    #[allow(clippy::too_many_arguments)]
    pub fn from_cycles(
        layer: String,
        name: String,
        dense: u64,
        actual: u64,
        ideal_vec: u64,
        ideal_fg: u64,
        input: &DensityReport,
        weight: &DensityReport,
    ) -> Result<Self> {
        Ok(MetricsRow {
            layer,
            name,
            dense_cycles: dense,
            actual_cycles: actual,
            ideal_vec_cycles: ideal_vec,
            ideal_fg_cycles: ideal_fg,
            speedup: dense as f64 / actual.max(1) as f64,
            exploit_vec: exploitation_ratio(dense, actual, ideal_vec)?,
            exploit_fg: exploitation_ratio(dense, actual, ideal_fg)?,
            in_elem_density: input.element_density,
            in_vec_density: input.vector_density,
            w_elem_density: weight.element_density,
            w_vec_density: weight.vector_density,
        })
    }
}

/// Per-layer rows plus a cycle-aggregated totals row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

pub const CSV_HEADER: &str = "layer,name,dense_cycles,actual_cycles,ideal_vec_cycles,ideal_fg_cycles,speedup,exploit_vec,exploit_fg,in_elem_density,in_vec_density,w_elem_density,w_vec_density";

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            // Float fields use the shortest round-trip form, so parsing the
            // CSV recovers every numeric field exactly.
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.layer,
                r.name,
                r.dense_cycles,
                r.actual_cycles,
                r.ideal_vec_cycles,
                r.ideal_fg_cycles,
                r.speedup,
                r.exploit_vec,
                r.exploit_fg,
                r.in_elem_density,
                r.in_vec_density,
                r.w_elem_density,
                r.w_vec_density,
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::BadFile {
            what: "metrics CSV",
            reason,
        };
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == CSV_HEADER => {}
            other => return Err(bad(format!("bad header {other:?}"))),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 13 {
                return Err(bad(format!("row {} has {} fields", i + 1, f.len())));
            }
            let perr = |e: std::num::ParseIntError| bad(format!("row {}: {e}", i + 1));
            let ferr = |e: std::num::ParseFloatError| bad(format!("row {}: {e}", i + 1));
            rows.push(MetricsRow {
                layer: f[0].to_string(),
                name: f[1].to_string(),
                dense_cycles: f[2].parse().map_err(perr)?,
                actual_cycles: f[3].parse().map_err(perr)?,
                ideal_vec_cycles: f[4].parse().map_err(perr)?,
                ideal_fg_cycles: f[5].parse().map_err(perr)?,
                speedup: f[6].parse().map_err(ferr)?,
                exploit_vec: f[7].parse().map_err(ferr)?,
                exploit_fg: f[8].parse().map_err(ferr)?,
                in_elem_density: f[9].parse().map_err(ferr)?,
                in_vec_density: f[10].parse().map_err(ferr)?,
                w_elem_density: f[11].parse().map_err(ferr)?,
                w_vec_density: f[12].parse().map_err(ferr)?,
            });
        }
        Ok(MetricsReport { rows })
    }

    /// Write the CSV and return a short human summary.
    pub fn emit(&self, path: &Path) -> Result<String> {
        fs::write(path, self.to_csv())?;
        Ok(self.summary())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            s.push_str(&format!(
                "{:>6} {:<10} dense {:>10} actual {:>10} speedup {:>7.3} exploit_vec {:>5.3} exploit_fg {:>5.3}\n",
                r.layer, r.name, r.dense_cycles, r.actual_cycles, r.speedup, r.exploit_vec, r.exploit_fg
            ));
        }
        s
    }
}

/// Cycle totals aggregated before ratios, so the totals row reflects
/// end-to-end latency rather than a mean of per-layer speedups. Densities
/// aggregate by nonzero counts, carried here as weighted sums.
pub struct NetworkAccumulator {
    dense: u64,
    actual: u64,
    ideal_vec: u64,
    ideal_fg: u64,
    in_elem: (f64, f64),
    in_vec: (f64, f64),
    w_elem: (f64, f64),
    w_vec: (f64, f64),
}

impl NetworkAccumulator {
    pub fn new() -> Self {
        NetworkAccumulator {
            dense: 0,
            actual: 0,
            ideal_vec: 0,
            ideal_fg: 0,
            in_elem: (0.0, 0.0),
            in_vec: (0.0, 0.0),
            w_elem: (0.0, 0.0),
            w_vec: (0.0, 0.0),
        }
    }

    /// Fold in one layer. The density pairs carry (density, slot count) so
    /// totals weight by population.
    #[allow(clippy::too_many_arguments)]
    pub fn add_layer(
        &mut self,
        row: &MetricsRow,
        in_elems: usize,
        in_slots: usize,
        w_elems: usize,
        w_slots: usize,
    ) {
        self.dense += row.dense_cycles;
        self.actual += row.actual_cycles;
        self.ideal_vec += row.ideal_vec_cycles;
        self.ideal_fg += row.ideal_fg_cycles;
        self.in_elem.0 += row.in_elem_density * in_elems as f64;
        self.in_elem.1 += in_elems as f64;
        self.in_vec.0 += row.in_vec_density * in_slots as f64;
        self.in_vec.1 += in_slots as f64;
        self.w_elem.0 += row.w_elem_density * w_elems as f64;
        self.w_elem.1 += w_elems as f64;
        self.w_vec.0 += row.w_vec_density * w_slots as f64;
        self.w_vec.1 += w_slots as f64;
    }

    pub fn totals_row(&self) -> Result<MetricsRow> {
        let ratio = |(num, den): (f64, f64)| if den == 0.0 { 0.0 } else { num / den };
        Ok(MetricsRow {
            layer: "total".into(),
            name: "network".into(),
            dense_cycles: self.dense,
            actual_cycles: self.actual,
            ideal_vec_cycles: self.ideal_vec,
            ideal_fg_cycles: self.ideal_fg,
            speedup: self.dense as f64 / self.actual.max(1) as f64,
            exploit_vec: exploitation_ratio(self.dense, self.actual, self.ideal_vec)?,
            exploit_fg: exploitation_ratio(self.dense, self.actual, self.ideal_fg)?,
            in_elem_density: ratio(self.in_elem),
            in_vec_density: ratio(self.in_vec),
            w_elem_density: ratio(self.w_elem),
            w_vec_density: ratio(self.w_vec),
        })
    }
}

impl Default for NetworkAccumulator {
    fn default() -> Self {
        Self::new()
    }
}
