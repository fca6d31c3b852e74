//! Shared generators and independent oracles for the property suites.
//! Each test target uses a different subset of these helpers.
#![allow(dead_code)]

use proptest::prelude::*;
use vsconv::mapping::Mapping;
use vsconv::tensor::{DenseTensor, ElemWidth};

/// Zero-inflated small elements, so sparse paths get exercised.
pub fn sparse_elem() -> impl Strategy<Value = i32> {
    prop_oneof![2 => Just(0i32), 3 => -9..=9i32]
}

pub fn arb_act_tensor(
    max_c: usize,
    max_h: usize,
    max_w: usize,
) -> impl Strategy<Value = DenseTensor> {
    (1..=max_c, 1..=max_h, 1..=max_w).prop_flat_map(|(c, h, w)| {
        prop::collection::vec(sparse_elem(), c * h * w)
            .prop_map(move |v| DenseTensor::new(vec![c, h, w], v, ElemWidth::W8).unwrap())
    })
}

pub fn arb_weight_tensor(max_oc: usize, max_ic: usize) -> impl Strategy<Value = DenseTensor> {
    (1..=max_oc, 1..=max_ic).prop_flat_map(|(oc, ic)| {
        prop::collection::vec(sparse_elem(), oc * ic * 9)
            .prop_map(move |v| DenseTensor::new(vec![oc, ic, 3, 3], v, ElemWidth::W8).unwrap())
    })
}

/// Independent enumeration of the schedulable nonzero
/// (input vector, weight column) pairs per block. Reads the dense tensors
/// directly and reimplements only the pairing rule, so it can stand as an
/// oracle against the schedule generator.
pub fn brute_force_pair_counts(
    input: &DenseTensor,
    weights: &DenseTensor,
    m: &Mapping,
) -> Vec<u64> {
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
