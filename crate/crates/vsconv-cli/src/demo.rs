//! The built-in 5x5 walkthrough: a single-channel 5x5 input whose second
//! image column is entirely zero, convolved with one 3x3 kernel whose
//! third filter column is pruned away. Dense execution takes 15 cycles;
//! skipping the zero vectors leaves 8.

use anyhow::{bail, Result};
use vsconv::mapping::{
    map_layer, schedule_dense, schedule_sparse, Mapping, PeArrayConfig, Schedule, ScheduleEntry,
};
use vsconv::sim::simulate;
use vsconv::sparse::{encode_activations, encode_weights, VectorSparseTensor};
use vsconv::tensor::{conv2d_reference, ConvLayerSpec, DenseTensor, ElemWidth};

pub struct Demo {
    pub spec: ConvLayerSpec,
    pub mapping: Mapping,
    pub input: DenseTensor,
    pub weights: DenseTensor,
    pub acts: VectorSparseTensor,
    pub wts: VectorSparseTensor,
    pub dense: Schedule,
    pub sparse: Schedule,
}

pub fn build() -> Result<Demo> {
    let spec = ConvLayerSpec::unit3x3(1, 5, 5, 1);
    let input = DenseTensor::from_fn(vec![1, 5, 5], ElemWidth::W8, |i| {
        if i[2] == 1 {
            0
        } else {
            (i[1] * 5 + i[2] + 1) as i32
        }
    })?;
    let weights = DenseTensor::from_fn(vec![1, 1, 3, 3], ElemWidth::W8, |i| {
        if i[3] == 2 {
            0
        } else {
            (i[2] * 3 + i[3] + 1) as i32
        }
    })?;
    let mapping = map_layer(&spec, &PeArrayConfig::new(1, 5, 3)?)?;
    let acts = encode_activations(&input, 5)?;
    let wts = encode_weights(&weights)?;
    let dense = schedule_dense(&mapping);
    let sparse = schedule_sparse(&mapping, &acts, &wts)?;
    Ok(Demo {
        spec,
        mapping,
        input,
        weights,
        acts,
        wts,
        dense,
        sparse,
    })
}

fn letter(i: u32) -> char {
    (b'A' + i as u8) as char
}

impl Demo {
    fn line(&self, e: &ScheduleEntry) -> String {
        let rows = self.mapping.config.rows;
        let input = letter(e.input.col);
        let wcol = letter(e.weight.kcol as u32);
        let output = if e.discard {
            "x".to_string()
        } else {
            let o = letter(e.output.col as u32);
            format!("O{o}1-O{o}{rows}")
        };
        format!(
            "cycle {:>2}: input {input}1-{input}{rows}  weight W{wcol}1-W{wcol}3  -> output {output}",
            e.cycle
        )
    }

    pub fn dense_lines(&self) -> Vec<String> {
        self.dense.iter().map(|e| self.line(e)).collect()
    }

    pub fn sparse_lines(&self) -> Vec<String> {
        self.sparse.iter().map(|e| self.line(e)).collect()
    }

    /// Dense cycle indices with no sparse counterpart (their input vector
    /// or weight column is all zero).
    pub fn skipped_dense_cycles(&self) -> Vec<u32> {
        self.dense
            .iter()
            .filter(|e| {
                !(self
                    .acts
                    .contains([e.input.in_c, e.input.col, e.input.seg])
                    && self
                        .wts
                        .contains([e.weight.out_c, e.weight.in_c, e.weight.kcol as u32]))
            })
            .map(|e| e.cycle)
            .collect()
    }

    /// Run both schedules, check them against the reference convolution,
    /// and render the whole walkthrough.
    pub fn render(&self) -> Result<String> {
        let reference = conv2d_reference(&self.input, &self.weights, &self.spec)?;
        let dense_res = simulate(
            &self.dense,
            (&self.input).into(),
            (&self.weights).into(),
            &self.mapping,
        )?;
        let sparse_res = simulate(
            &self.sparse,
            (&self.acts).into(),
            (&self.wts).into(),
            &self.mapping,
        )?;
        if dense_res.output != reference || sparse_res.output != reference {
            bail!("oracle mismatch in the walkthrough example");
        }

        let mut s = String::new();
        s.push_str(&format!(
            "5x5 single-channel input (image column B zero), one 3x3 kernel (filter column WC zero)\n\
             PE array: 1 block of {} rows x 3 columns\n\ndense schedule ({} cycles):\n",
            self.mapping.config.rows,
            self.dense.total_cycles()
        ));
        for l in self.dense_lines() {
            s.push_str(&l);
            s.push('\n');
        }
        s.push_str(&format!("\nsparse schedule ({} cycles):\n", self.sparse.total_cycles()));
        for l in self.sparse_lines() {
            s.push_str(&l);
            s.push('\n');
        }
        let skipped: Vec<String> = self
            .skipped_dense_cycles()
            .iter()
            .map(u32::to_string)
            .collect();
        let saved = 100.0 * (self.dense.total_cycles() - self.sparse.total_cycles()) as f64
            / self.dense.total_cycles() as f64;
        s.push_str(&format!("\nskipped dense cycles: {}\n", skipped.join(", ")));
        s.push_str(&format!(
            "cycles: dense {} sparse {} ({saved:.1}% saved)\n",
            self.dense.total_cycles(),
            self.sparse.total_cycles()
        ));
        s.push_str("oracle check: dense and sparse outputs match the reference convolution\n");
        Ok(s)
    }
}
