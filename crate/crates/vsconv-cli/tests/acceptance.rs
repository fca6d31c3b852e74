//! Acceptance suite. One test per criterion; each prints an explicit
//! `ACCEPTANCE Cn PASS/FAIL` line with the measured quantities.
//!
//! C1  dense walkthrough schedule, exact 15-cycle table
//! C2  sparse walkthrough schedule, 8 cycles, skipped-set check
//! C3  bit-exact oracle equivalence over 200 randomized cases
//! C4  sparse cycle counts against an independent pair enumerator
//! C5  cycle ordering chain and exploitation-ratio bounds
//! C6  density invariants and pruning accuracy
//! C7  desk-scale network run lands in the plausibility band
//! C8  byte-identical reports for identical config and seed

use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vsconv::mapping::{
    dense_cycle_count, map_layer, schedule_dense, schedule_sparse, Mapping, PeArrayConfig,
};
use vsconv::metrics::{exploitation_ratio, ideal_finegrained_cycles, ideal_vector_cycles};
use vsconv::sim::simulate;
use vsconv::sparse::{
    encode_activations, encode_weights, prune_weights_vector, total_vector_slots,
};
use vsconv::tensor::{conv2d_reference, ConvLayerSpec, DenseTensor, ElemWidth};
use vsconv_cli::config::{ExperimentConfig, InputModel, LayerSet};
use vsconv_cli::gen::gen_bernoulli_input;
use vsconv_cli::runner::run_network;

fn report(criterion: &str, ok: bool, detail: &str) -> bool {
    println!(
        "ACCEPTANCE {criterion} {}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

fn vsconv_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vsconv"))
}

/// Parse `cycle  n: input X1-Xr  weight WY1-WY3  -> output Z` lines into
/// (input letter, weight letters, output) triples.
fn parse_schedule_lines(text: &str, header: &str) -> Vec<(String, String, String)> {
    let mut out = Vec::new();
    let mut in_section = false;
    for line in text.lines() {
        if line.starts_with(header) {
            in_section = true;
            continue;
        }
        if in_section {
            if !line.starts_with("cycle") {
                break;
            }
            let rest = line.split(": input ").nth(1).expect("input field");
            let (input, rest) = rest.split_once("  weight ").expect("weight field");
            let (weight, output) = rest.split_once("  -> output ").expect("output field");
            let input_letter = input.chars().next().unwrap().to_string();
            let weight_letters: String = weight.chars().take(2).collect();
            let output_name = if output == "x" {
                "x".to_string()
            } else {
                output.chars().take(2).collect()
            };
            out.push((input_letter, weight_letters, output_name));
        }
    }
    out
}

#[test]
fn c1_dense_walkthrough_matches_timing_table() {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = vsconv_bin()
        .arg("demo")
        .arg("--out")
        .arg(tmp.path())
        .output()
        .expect("demo runs");
    let elapsed = start.elapsed();
    let text = String::from_utf8(out.stdout).unwrap();
    let got = parse_schedule_lines(&text, "dense schedule (15 cycles):");

    // The normative dump next to the human-readable table:
    // block,cycle,in_c,col,seg,out_c,wcol,out_col,discard with 1-based
    // columns, discards at output columns 0 and out_w + 1.
    let dump = std::fs::read_to_string(tmp.path().join("demo_dense_schedule.csv")).unwrap();
    let want_dump = "\
0,1,0,1,0,0,A,2,0\n0,2,0,1,0,0,B,1,0\n0,3,0,1,0,0,C,0,1\n\
0,4,0,2,0,0,A,3,0\n0,5,0,2,0,0,B,2,0\n0,6,0,2,0,0,C,1,0\n\
0,7,0,3,0,0,A,4,0\n0,8,0,3,0,0,B,3,0\n0,9,0,3,0,0,C,2,0\n\
0,10,0,4,0,0,A,5,0\n0,11,0,4,0,0,B,4,0\n0,12,0,4,0,0,C,3,0\n\
0,13,0,5,0,0,A,6,1\n0,14,0,5,0,0,B,5,0\n0,15,0,5,0,0,C,4,0\n";
    let dump_ok = dump == want_dump;

    let want: Vec<(String, String, String)> = [
        ("A", "WA", "OB"),
        ("A", "WB", "OA"),
        ("A", "WC", "x"),
        ("B", "WA", "OC"),
        ("B", "WB", "OB"),
        ("B", "WC", "OA"),
        ("C", "WA", "OD"),
        ("C", "WB", "OC"),
        ("C", "WC", "OB"),
        ("D", "WA", "OE"),
        ("D", "WB", "OD"),
        ("D", "WC", "OC"),
        ("E", "WA", "x"),
        ("E", "WB", "OE"),
        ("E", "WC", "OD"),
    ]
    .iter()
    .map(|(a, b, c)| (a.to_string(), b.to_string(), c.to_string()))
    .collect();

    let ok = out.status.success() && got == want && dump_ok && elapsed.as_secs_f64() < 1.0;
    assert!(report(
        "C1",
        ok,
        &format!(
            "dense walkthrough: {} cycles emitted, triples exact={}, dump exact={}, runtime {:.3}s (< 1s)",
            got.len(),
            got == want,
            dump_ok,
            elapsed.as_secs_f64()
        )
    ));
}

#[test]
fn c2_sparse_walkthrough_skips_to_8_cycles() {
    let start = Instant::now();
    let out = vsconv_bin().arg("demo").output().expect("demo runs");
    let elapsed = start.elapsed();
    let text = String::from_utf8(out.stdout).unwrap();
    let got = parse_schedule_lines(&text, "sparse schedule (8 cycles):");

    let skipped_line = text
        .lines()
        .find(|l| l.starts_with("skipped dense cycles: "))
        .unwrap_or("");
    let skipped: Vec<u32> = skipped_line
        .trim_start_matches("skipped dense cycles: ")
        .split(", ")
        .filter_map(|s| s.parse().ok())
        .collect();
    let includes_expected = [3u32, 4, 5, 6, 9].iter().all(|c| skipped.contains(c));
    let saved = (15.0 - got.len() as f64) / 15.0;

    let ok = out.status.success()
        && got.len() == 8
        && includes_expected
        && (saved - 7.0 / 15.0).abs() < 1e-12
        && elapsed.as_secs_f64() < 1.0;
    assert!(report(
        "C2",
        ok,
        &format!(
            "sparse walkthrough: {} cycles, saved {:.1}%, skipped {:?} includes 3,4,5,6,9={}, runtime {:.3}s (< 1s)",
            got.len(),
            100.0 * saved,
            skipped,
            includes_expected,
            elapsed.as_secs_f64()
        )
    ));
}

struct Case {
    spec: ConvLayerSpec,
    input: DenseTensor,
    weights: DenseTensor,
}

/// 200 randomized cases: dims <= 32x32, channels <= 8, weight vector
/// densities in {0.2..1.0}, input densities in {0.1..1.0}, with both
/// element- and vector-granular input masks.
fn random_cases() -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_ACCE);
    let in_densities = [0.1, 0.25, 0.4, 0.6, 0.8, 1.0];
    let w_densities = [0.2, 0.35, 0.5, 0.65, 0.8, 1.0];
    (0..200)
        .map(|i| {
            let c = rng.gen_range(1..=8);
            let oc = rng.gen_range(1..=8);
            let h = rng.gen_range(1..=32);
            let w = rng.gen_range(1..=32);
            let p_in = in_densities[rng.gen_range(0..in_densities.len())];
            let p_w = w_densities[rng.gen_range(0..w_densities.len())];
            let spec = ConvLayerSpec::unit3x3(c, h, w, oc);

            let input = if i % 2 == 0 {
                // Element-granular Bernoulli mask, mixed signs.
                let seed = rng.gen::<u64>();
                let mut erng = ChaCha8Rng::seed_from_u64(seed);
                DenseTensor::from_fn(vec![c, h, w], ElemWidth::W8, |_| {
                    if erng.gen_bool(p_in) {
                        let v: i32 = erng.gen_range(1..=99);
                        if erng.gen_bool(0.5) {
                            v
                        } else {
                            -v
                        }
                    } else {
                        0
                    }
                })
                .unwrap()
            } else {
                // Vector-granular mask at one of the reference row counts.
                let v = if i % 4 == 1 { 7 } else { 14 };
                gen_bernoulli_input(&[c, h, w], p_in, v, rng.gen::<u64>())
            };

            let seed = rng.gen::<u64>();
            let mut wrng = ChaCha8Rng::seed_from_u64(seed);
            let weights_raw = DenseTensor::from_fn(vec![oc, c, 3, 3], ElemWidth::W8, |_| {
                let v: i32 = wrng.gen_range(1..=99);
                if wrng.gen_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .unwrap();
            let weights = prune_weights_vector(&weights_raw, p_w).unwrap();
            Case { spec, input, weights }
        })
        .collect()
}

fn reference_configs() -> [PeArrayConfig; 2] {
    [
        PeArrayConfig::new(4, 14, 3).unwrap(),
        PeArrayConfig::new(8, 7, 3).unwrap(),
    ]
}

/// Independent enumeration of schedulable nonzero pairs per block,
/// straight from the dense tensors.
fn brute_force_pair_counts(input: &DenseTensor, weights: &DenseTensor, m: &Mapping) -> Vec<u64> {
    let spec = &m.layer;
    let rows = m.config.rows;
    let mut counts = vec![0u64; m.config.blocks];
    for o in 0..spec.out_c {
        let b = o % m.config.blocks;
        for ci in 0..spec.in_c {
            for seg in 0..m.segments {
                for col in 0..spec.in_w {
                    let act_nz = (0..rows).any(|r| {
                        let row = seg * rows + r;
                        row < spec.in_h && input.at(&[ci, row, col]) != 0
                    });
                    if !act_nz {
                        continue;
                    }
                    for f in 0..3 {
                        if (0..3).any(|ky| weights.at(&[o, ci, ky, f]) != 0) {
                            counts[b] += 1;
                        }
                    }
                }
            }
        }
    }
    counts
}

#[test]
fn c3_simulator_is_bit_exact_against_reference() {
    let start = Instant::now();
    let cases = random_cases();
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    for case in &cases {
        let reference = conv2d_reference(&case.input, &case.weights, &case.spec).unwrap();
        for cfg in reference_configs() {
            let m = map_layer(&case.spec, &cfg).unwrap();
            let acts = encode_activations(&case.input, cfg.rows).unwrap();
            let wts = encode_weights(&case.weights).unwrap();

            let dense = simulate(
                &schedule_dense(&m),
                (&case.input).into(),
                (&case.weights).into(),
                &m,
            )
            .unwrap();
            let sparse_sched = schedule_sparse(&m, &acts, &wts).unwrap();
            let sparse = simulate(&sparse_sched, (&acts).into(), (&wts).into(), &m).unwrap();

            if dense.output != reference || sparse.output != reference {
                mismatches += 1;
            }
            checked += 2;
        }
    }
    let elapsed = start.elapsed();
    let ok = mismatches == 0 && cases.len() >= 200 && elapsed.as_secs_f64() < 120.0;
    assert!(report(
        "C3",
        ok,
        &format!(
            "oracle equivalence: {} simulations over {} cases bit-exact ({} mismatches), runtime {:.1}s (< 120s)",
            checked,
            cases.len(),
            mismatches,
            elapsed.as_secs_f64()
        )
    ));
}

#[test]
fn c4_sparse_cycles_match_independent_enumeration() {
    let cases = random_cases();
    let mut checked = 0usize;
    let mut mismatches = 0usize;
    for case in &cases {
        for cfg in reference_configs() {
            let m = map_layer(&case.spec, &cfg).unwrap();
            let acts = encode_activations(&case.input, cfg.rows).unwrap();
            let wts = encode_weights(&case.weights).unwrap();
            let sched = schedule_sparse(&m, &acts, &wts).unwrap();
            let expected = brute_force_pair_counts(&case.input, &case.weights, &m);
            let expected_total = expected.iter().copied().max().unwrap_or(0);
            if sched.cycles_per_block() != expected || sched.total_cycles() != expected_total {
                mismatches += 1;
            }
            checked += 1;
        }
    }
    let ok = mismatches == 0 && cases.len() >= 200;
    assert!(report(
        "C4",
        ok,
        &format!(
            "cycle-count oracle: {checked} schedules equal the brute-force pair counts ({mismatches} mismatches)"
        )
    ));
}

#[test]
fn c5_cycle_ordering_chain_holds() {
    let cases = random_cases();
    let mut violations = 0usize;
    let mut checked = 0usize;
    for case in &cases {
        for cfg in reference_configs() {
            let m = map_layer(&case.spec, &cfg).unwrap();
            let acts = encode_activations(&case.input, cfg.rows).unwrap();
            let wts = encode_weights(&case.weights).unwrap();
            let dense = dense_cycle_count(&case.spec, &cfg).unwrap();
            let actual = schedule_sparse(&m, &acts, &wts).unwrap().total_cycles();
            let ideal_vec = ideal_vector_cycles(&acts, &wts, &m).unwrap();
            let ideal_fg = ideal_finegrained_cycles(&case.input, &case.weights, &m).unwrap();
            let ev = exploitation_ratio(dense, actual, ideal_vec).unwrap();
            let ef = exploitation_ratio(dense, actual, ideal_fg).unwrap();

            let chain = ideal_fg <= ideal_vec && ideal_vec <= actual && actual <= dense;
            let ratios = (0.0..=1.0).contains(&ev) && (0.0..=1.0).contains(&ef);

            // Single block: no imbalance mechanism, so actual == ideal.
            let single = PeArrayConfig::new(1, cfg.rows, 3).unwrap();
            let m1 = map_layer(&case.spec, &single).unwrap();
            let actual1 = schedule_sparse(&m1, &acts, &wts).unwrap().total_cycles();
            let ideal1 = ideal_vector_cycles(&acts, &wts, &m1).unwrap();
            let dense1 = dense_cycle_count(&case.spec, &single).unwrap();
            let exact1 = actual1 == ideal1
                && exploitation_ratio(dense1, actual1, ideal1).unwrap() == 1.0;

            if !(chain && ratios && exact1) {
                violations += 1;
            }
            checked += 1;
        }
    }
    let ok = violations == 0;
    assert!(report(
        "C5",
        ok,
        &format!(
            "ordering chain ideal_fg <= ideal_vec <= actual <= dense, ratios in [0,1], B=1 exploit == 1.0: {checked} checks, {violations} violations"
        )
    ));
}

#[test]
fn c6_density_invariants_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xDE5175);
    let mut violations = Vec::new();

    // Heights where the V=7 and V=14 segment grids nest: single-slot
    // shapes and exact multiples, the shapes the catalog produces.
    let heights = [1usize, 2, 3, 4, 5, 6, 7, 14, 28];
    for trial in 0..60 {
        let c = rng.gen_range(1..=6);
        let h = heights[rng.gen_range(0..heights.len())];
        let w = rng.gen_range(1..=20);
        let p = [0.1, 0.3, 0.5, 0.8, 0.95][rng.gen_range(0..5)];
        let seed = rng.gen::<u64>();
        let mut erng = ChaCha8Rng::seed_from_u64(seed);
        let t = DenseTensor::from_fn(vec![c, h, w], ElemWidth::W8, |_| {
            if erng.gen_bool(p) {
                erng.gen_range(1..=99)
            } else {
                0
            }
        })
        .unwrap();
        let elem = t.element_density().unwrap();
        let v7 = encode_activations(&t, 7).unwrap().vector_density();
        let v14 = encode_activations(&t, 14).unwrap().vector_density();
        if v7 + 1e-12 < elem || v14 + 1e-12 < elem {
            violations.push(format!("trial {trial}: elem {elem} v7 {v7} v14 {v14}"));
        }
        if v14 + 1e-12 < v7 {
            violations.push(format!("trial {trial}: nesting v7 {v7} > v14 {v14}"));
        }
    }

    // Pruning accuracy: fully nonzero weights, survivor fraction within
    // 1/total of the target.
    for trial in 0..40 {
        let oc = rng.gen_range(1..=8);
        let ic = rng.gen_range(1..=8);
        let target = [0.2, 0.235, 0.4, 0.6, 0.8, 1.0][rng.gen_range(0..6)];
        let seed = rng.gen::<u64>();
        let mut wrng = ChaCha8Rng::seed_from_u64(seed);
        let w = DenseTensor::from_fn(vec![oc, ic, 3, 3], ElemWidth::W8, |_| {
            let v: i32 = wrng.gen_range(1..=99);
            if wrng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .unwrap();
        let pruned = prune_weights_vector(&w, target).unwrap();
        let total = total_vector_slots(w.dims(), 3) as f64;
        let density = encode_weights(&pruned).unwrap().vector_density();
        if (density - target).abs() > 1.0 / total + 1e-12 {
            violations.push(format!(
                "prune trial {trial}: density {density} vs target {target} over {total} slots"
            ));
        }
    }

    let ok = violations.is_empty();
    let mut detail = String::from(
        "density invariants: vec >= elem, v14 >= v7 on nested grids, prune within 1/total",
    );
    if !ok {
        write!(detail, "; violations: {violations:?}").unwrap();
    }
    assert!(report("C6", ok, &detail));
}

#[test]
fn c7_desk_scale_network_lands_in_plausibility_band() {
    let start = Instant::now();
    let mut speedups = Vec::new();
    for (blocks, rows) in [(4usize, 14usize), (8, 7)] {
        let cfg = ExperimentConfig {
            pe: PeArrayConfig::new(blocks, rows, 3).unwrap(),
            layers: LayerSet::Vgg16 { scale: 8 },
            weight_density: 0.235,
            input_model: InputModel::ReluPropagated,
            seed: 42,
            width: ElemWidth::W8,
            out: None,
        };
        let outcome = run_network(&cfg).unwrap();
        let total = outcome.report.rows.last().unwrap();
        speedups.push(total.speedup);
    }
    let elapsed = start.elapsed();
    let (s4, s8) = (speedups[0], speedups[1]);
    let in_band = s4 > 1.3 && s4 < 4.3 && s8 > 1.3 && s8 < 4.3;
    let ordered = s8 >= s4;
    let ok = in_band && ordered && elapsed.as_secs_f64() < 300.0;
    assert!(report(
        "C7",
        ok,
        &format!(
            "scaled network run: speedup [4,14,3]={s4:.4}, [8,7,3]={s8:.4}, band (1.3, 4.3)={in_band}, [8,7,3] >= [4,14,3]={ordered}, runtime {:.1}s (< 300s)",
            elapsed.as_secs_f64()
        )
    ));
}

#[test]
fn c8_identical_config_and_seed_reports_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &Path| {
        let out = vsconv_bin()
            .args([
                "run-network",
                "--pe",
                "8,7,3",
                "--scale",
                "8",
                "--seed",
                "42",
                "--out",
            ])
            .arg(dir)
            .output()
            .expect("run-network runs");
        assert!(out.status.success(), "run-network failed: {out:?}");
        std::fs::read(dir.join("metrics.csv")).unwrap()
    };
    let a = run(&tmp.path().join("a"));
    let b = run(&tmp.path().join("b"));
    let ok = a == b && !a.is_empty();
    assert!(report(
        "C8",
        ok,
        &format!(
            "determinism: two runs wrote byte-identical metrics.csv ({} bytes)",
            a.len()
        )
    ));
}
