//! End-to-end experiment execution: operand generation, pruning, encoding,
//! mapping, dense and sparse simulation, the oracle cross-check, and the
//! metrics rows.

use std::fs;

use anyhow::{bail, Context, Result};
use vsconv::mapping::{
    dense_cycle_count, map_layer, schedule_dense, schedule_sparse, PeArrayConfig,
};
use vsconv::metrics::{
    ideal_finegrained_cycles, ideal_vector_cycles, MetricsReport, MetricsRow, NetworkAccumulator,
};
use vsconv::sim::{post_process, simulate, SimReport};
use vsconv::sparse::{
    encode_activations, encode_weights, prune_weights_vector, total_vector_slots, DensityReport,
    TensorRole, VectorSparseTensor,
};
use vsconv::tensor::{conv2d_reference, ConvLayerSpec, DenseTensor, ElemWidth};

use crate::config::{ExperimentConfig, InputModel};
use crate::gen::{
    derive_seed, gen_bernoulli_input, gen_image, gen_weights, sign_bias, STREAM_BERNOULLI,
    STREAM_IMAGE, STREAM_WEIGHTS,
};

/// Rescale accumulator-width values into the operand width by a uniform
/// arithmetic right shift, the post-processing step that lets one layer's
/// output feed the next layer's multiplier inputs.
pub fn requantize(t: &DenseTensor, width: ElemWidth) -> DenseTensor {
    let target_max: i32 = match width {
        ElemWidth::W8 => 127,
        ElemWidth::W16 => i16::MAX as i32,
        ElemWidth::W32 => i32::MAX,
    };
    let max_abs = t.elems().iter().map(|&v| (v as i64).unsigned_abs()).max().unwrap_or(0);
    let mut shift = 0u32;
    while (max_abs >> shift) > target_max as u64 {
        shift += 1;
    }
    let elems = t.elems().iter().map(|&v| v >> shift).collect();
    DenseTensor::new(t.dims().to_vec(), elems, width).expect("requantize range")
}

/// 2x2 max pooling with floor semantics (a 1-pixel map stays 1 pixel).
pub fn max_pool(t: &DenseTensor) -> DenseTensor {
    let (c, h, w) = (t.dims()[0], t.dims()[1], t.dims()[2]);
    let (oh, ow) = (crate::catalog::pooled(h), crate::catalog::pooled(w));
    let mut out = DenseTensor::zeros(vec![c, oh, ow], t.width());
    for ci in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut m = i32::MIN;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (sy, sx) = (y * 2 + dy, x * 2 + dx);
                        if sy < h && sx < w {
                            m = m.max(t.at(&[ci, sy, sx]));
                        }
                    }
                }
                out.set(&[ci, y, x], m);
            }
        }
    }
    out
}

/// Everything one layer run produces.
pub struct LayerOutcome {
    pub name: String,
    pub row: MetricsRow,
    pub dense_report: SimReport,
    pub sparse_report: SimReport,
    /// Simulator output, already cross-checked against the reference.
    pub output: DenseTensor,
    pub in_elems: usize,
    pub in_slots: usize,
    pub w_elems: usize,
    pub w_slots: usize,
}

/// Run one layer end to end: prune, encode, map, schedule dense and
/// sparse, simulate both, cross-check against the reference convolution,
/// and compute the metrics row. A mismatch against the reference is a hard
/// failure.
pub fn run_layer_on(
    pe: &PeArrayConfig,
    name: &str,
    spec: &ConvLayerSpec,
    input: &DenseTensor,
    acts: Option<&VectorSparseTensor>,
    weights_raw: &DenseTensor,
    weight_density: f64,
) -> Result<LayerOutcome> {
    let m = map_layer(spec, pe)?;
    let weights = prune_weights_vector(weights_raw, weight_density)?;

    let encoded;
    let acts = match acts {
        Some(a) => a,
        None => {
            encoded = encode_activations(input, pe.rows)?;
            &encoded
        }
    };
    let wts = encode_weights(&weights)?;

    let dense_sched = schedule_dense(&m);
    let sparse_sched = schedule_sparse(&m, acts, &wts)?;

    let dense_res = simulate(&dense_sched, input.into(), (&weights).into(), &m)?;
    let sparse_res = simulate(&sparse_sched, acts.into(), (&wts).into(), &m)?;

    let reference = conv2d_reference(input, &weights, spec)?;
    if dense_res.output != reference {
        bail!("oracle mismatch in layer {name}: dense simulation differs from the reference convolution");
    }
    if sparse_res.output != reference {
        bail!("oracle mismatch in layer {name}: sparse simulation differs from the reference convolution");
    }

    let dense_cycles = dense_cycle_count(spec, pe)?;
    if dense_cycles != dense_res.total_cycles {
        bail!(
            "dense cycle accounting diverged in layer {name}: formula {dense_cycles}, simulated {}",
            dense_res.total_cycles
        );
    }
    let actual = sparse_res.total_cycles;
    let ideal_vec = ideal_vector_cycles(acts, &wts, &m)?;
    let ideal_fg = ideal_finegrained_cycles(input, &weights, &m)?;

    let in_rep = DensityReport::measure(input, acts, TensorRole::Input)?;
    let w_rep = DensityReport::measure(&weights, &wts, TensorRole::Weight)?;
    let row = MetricsRow::from_cycles(
        String::new(),
        name.to_string(),
        dense_cycles,
        actual,
        ideal_vec,
        ideal_fg,
        &in_rep,
        &w_rep,
    )?;

    Ok(LayerOutcome {
        name: name.to_string(),
        row,
        dense_report: dense_res.report(),
        sparse_report: sparse_res.report(),
        output: sparse_res.output,
        in_elems: input.len(),
        in_slots: total_vector_slots(input.dims(), pe.rows),
        w_elems: weights.len(),
        w_slots: total_vector_slots(weights.dims(), 3),
    })
}

pub struct NetworkOutcome {
    pub report: MetricsReport,
    pub layer_reports: Vec<(String, SimReport, SimReport)>,
}

/// Run the configured layer list in sequence. In relu-propagated mode each
/// layer's sparse input is the previous layer's post-processed output
/// (activation, pooling when the catalog shrinks the map, requantization
/// to the operand width, zero detection).
pub fn run_network(cfg: &ExperimentConfig) -> Result<NetworkOutcome> {
    let layers = cfg.resolve_layers()?;
    let total = layers.len();
    let mut acc = NetworkAccumulator::new();
    let mut rows = Vec::with_capacity(total + 1);
    let mut layer_reports = Vec::with_capacity(total);
    let mut propagated: Option<(DenseTensor, VectorSparseTensor)> = None;

    for (i, (name, spec)) in layers.iter().enumerate() {
        let weights_raw = gen_weights(
            spec,
            sign_bias(spec, cfg.weight_density, i, total),
            cfg.weight_density,
            derive_seed(cfg.seed, STREAM_WEIGHTS, i as u64),
        );

        let (input, acts) = match (&cfg.input_model, i) {
            (InputModel::Bernoulli(p), _) => (
                gen_bernoulli_input(
                    &spec.input_dims(),
                    *p,
                    cfg.pe.rows,
                    derive_seed(cfg.seed, STREAM_BERNOULLI, i as u64),
                ),
                None,
            ),
            (InputModel::ReluPropagated, 0) => (
                gen_image(spec, derive_seed(cfg.seed, STREAM_IMAGE, 0)),
                None,
            ),
            (InputModel::File(path), 0) => {
                let mut f = fs::File::open(path)
                    .with_context(|| format!("opening input file {}", path.display()))?;
                let sparse = VectorSparseTensor::read_vssp(&mut f)?;
                if sparse.dense_dims() != spec.input_dims().as_slice() {
                    bail!(
                        "input file dims {:?} do not match the first layer {:?}",
                        sparse.dense_dims(),
                        spec.input_dims()
                    );
                }
                if sparse.vec_len() != cfg.pe.rows {
                    bail!(
                        "input file vector length {} does not match the {} PE rows",
                        sparse.vec_len(),
                        cfg.pe.rows
                    );
                }
                (sparse.decode()?, Some(sparse))
            }
            // Propagated modes past the first layer.
            (_, _) => {
                let (dense, sparse) = propagated.take().expect("propagated input");
                if dense.dims() != spec.input_dims().as_slice() {
                    bail!(
                        "propagated input dims {:?} do not match layer {name} {:?}",
                        dense.dims(),
                        spec.input_dims()
                    );
                }
                (dense, Some(sparse))
            }
        };

        let mut outcome = run_layer_on(
            &cfg.pe,
            name,
            spec,
            &input,
            acts.as_ref(),
            &weights_raw,
            cfg.weight_density,
        )?;
        outcome.row.layer = (i + 1).to_string();

        // Prepare the next layer's input.
        let propagate = matches!(cfg.input_model, InputModel::ReluPropagated | InputModel::File(_));
        if propagate && i + 1 < total {
            let mut fed = outcome.output.relu();
            let next_h = layers[i + 1].1.in_h;
            while fed.dims()[1] > next_h {
                fed = max_pool(&fed);
            }
            if fed.dims()[1] != next_h {
                bail!(
                    "catalog spatial chain broken: pooled to {} but layer {} expects {}",
                    fed.dims()[1],
                    layers[i + 1].0,
                    next_h
                );
            }
            let quantized = requantize(&fed, cfg.width);
            let sparse = post_process(&quantized, cfg.pe.rows)?;
            let dense = sparse.decode()?;
            propagated = Some((dense, sparse));
        }

        acc.add_layer(
            &outcome.row,
            outcome.in_elems,
            outcome.in_slots,
            outcome.w_elems,
            outcome.w_slots,
        );
        layer_reports.push((
            outcome.name.clone(),
            outcome.dense_report.clone(),
            outcome.sparse_report.clone(),
        ));
        rows.push(outcome.row);
    }

    rows.push(acc.totals_row()?);
    Ok(NetworkOutcome {
        report: MetricsReport { rows },
        layer_reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::LayerSet;

    #[test]
    fn requantize_fits_and_preserves_signs() {
        let t = DenseTensor::new(vec![1, 1, 4], vec![-100_000, 255, 0, 64_000], ElemWidth::W32)
            .unwrap();
        let q = requantize(&t, ElemWidth::W8);
        assert!(q.elems().iter().all(|&v| (-128..=127).contains(&v)));
        assert!(q.elems()[0] < 0);
        assert!(q.elems()[3] > 0);
        assert_eq!(q.elems()[2], 0);

        // Values already in range are untouched.
        let small = DenseTensor::new(vec![1, 1, 2], vec![-5, 100], ElemWidth::W32).unwrap();
        assert_eq!(requantize(&small, ElemWidth::W8).elems(), &[-5, 100]);
    }

    #[test]
    fn max_pool_halves_with_floor() {
        let t = DenseTensor::from_fn(vec![1, 5, 5], ElemWidth::W8, |i| (i[1] * 5 + i[2]) as i32)
            .unwrap();
        let p = max_pool(&t);
        assert_eq!(p.dims(), &[1, 2, 2]);
        assert_eq!(p.at(&[0, 0, 0]), 6);
        assert_eq!(p.at(&[0, 1, 1]), 18);

        let one = DenseTensor::new(vec![1, 1, 1], vec![3], ElemWidth::W8).unwrap();
        assert_eq!(max_pool(&one).dims(), &[1, 1, 1]);
    }

    #[test]
    fn single_layer_network_totals_equal_layer_row() {
        let cfg = ExperimentConfig {
            pe: PeArrayConfig::new(2, 4, 3).unwrap(),
            layers: LayerSet::Explicit(vec![ConvLayerSpec::unit3x3(2, 8, 8, 4)]),
            weight_density: 0.5,
            input_model: InputModel::Bernoulli(0.6),
            seed: 5,
            width: ElemWidth::W8,
            out: None,
        };
        let out = run_network(&cfg).unwrap();
        assert_eq!(out.report.rows.len(), 2);
        let (layer, total) = (&out.report.rows[0], &out.report.rows[1]);
        assert_eq!(total.dense_cycles, layer.dense_cycles);
        assert_eq!(total.actual_cycles, layer.actual_cycles);
        assert_eq!(total.speedup, layer.speedup);
        assert_eq!(total.layer, "total");
    }

    #[test]
    fn fully_dense_operands_give_unit_speedup() {
        let cfg = ExperimentConfig {
            pe: PeArrayConfig::new(2, 4, 3).unwrap(),
            layers: LayerSet::Explicit(vec![ConvLayerSpec::unit3x3(2, 8, 8, 4)]),
            weight_density: 1.0,
            input_model: InputModel::Bernoulli(1.0),
            seed: 5,
            width: ElemWidth::W8,
            out: None,
        };
        let out = run_network(&cfg).unwrap();
        assert_eq!(out.report.rows[0].speedup, 1.0);
        assert_eq!(out.report.rows[0].exploit_vec, 1.0);
    }

    #[test]
    fn vgg_shaped_layer_with_pruned_weights_speeds_up() {
        let cfg = ExperimentConfig {
            pe: PeArrayConfig::new(8, 7, 3).unwrap(),
            layers: LayerSet::Explicit(vec![ConvLayerSpec::unit3x3(64, 28, 28, 64)]),
            weight_density: 0.235,
            input_model: InputModel::Bernoulli(0.5),
            seed: 21,
            width: ElemWidth::W8,
            out: None,
        };
        let out = run_network(&cfg).unwrap();
        let row = &out.report.rows[0];
        assert!(row.speedup > 1.0, "speedup {}", row.speedup);
        assert!((0.0..=1.0).contains(&row.exploit_vec));
        assert!((0.0..=1.0).contains(&row.exploit_fg));
    }

    #[test]
    fn all_zero_input_collapses_to_zero_cycles() {
        let cfg = ExperimentConfig {
            pe: PeArrayConfig::new(2, 4, 3).unwrap(),
            layers: LayerSet::Explicit(vec![ConvLayerSpec::unit3x3(2, 8, 8, 4)]),
            weight_density: 0.5,
            input_model: InputModel::Bernoulli(0.0),
            seed: 5,
            width: ElemWidth::W8,
            out: None,
        };
        let out = run_network(&cfg).unwrap();
        let row = &out.report.rows[0];
        assert_eq!(row.actual_cycles, 0);
        assert_eq!(row.ideal_vec_cycles, 0);
        assert_eq!(row.exploit_vec, 1.0);
    }

    #[test]
    fn propagated_chain_runs_on_a_tiny_catalog() {
        let cfg = ExperimentConfig {
            pe: PeArrayConfig::new(2, 4, 3).unwrap(),
            layers: LayerSet::Explicit(vec![
                ConvLayerSpec::unit3x3(2, 8, 8, 4),
                ConvLayerSpec::unit3x3(4, 8, 8, 4),
                ConvLayerSpec::unit3x3(4, 8, 8, 2),
            ]),
            weight_density: 0.4,
            input_model: InputModel::ReluPropagated,
            seed: 11,
            width: ElemWidth::W8,
            out: None,
        };
        let out = run_network(&cfg).unwrap();
        assert_eq!(out.report.rows.len(), 4);
        for row in &out.report.rows {
            assert!(row.speedup >= 1.0);
            assert!(row.ideal_fg_cycles <= row.ideal_vec_cycles);
            assert!(row.ideal_vec_cycles <= row.actual_cycles);
            assert!(row.actual_cycles <= row.dense_cycles);
        }
    }
}
