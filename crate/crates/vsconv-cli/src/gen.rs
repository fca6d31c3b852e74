//! Deterministic synthetic operand generation.
//!
//! Weights: magnitudes follow a per-(in_c, kernel column) ladder, signs
//! are random with a per-layer positive bias. The ladder gives every
//! column of one level the same L2 norm across output channels, so
//! norm-ranked vector pruning keeps an even spread of surviving columns
//! per output channel (the leftover below a full level goes to the lowest
//! channels, at most one column apart). Signs are stratified over each
//! channel's survivor set, keeping channel weight sums tight around the
//! biased mean: propagated activations then show per-element zeros rather
//! than whole dead channels.
//!
//! Inputs: dense positive images for the propagated mode, or per-vector
//! Bernoulli occupancy for synthetic sparsity.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vsconv::sparse::{encode_activations, VectorSparseTensor};
use vsconv::tensor::{ConvLayerSpec, DenseTensor, ElemWidth};

/// splitmix64, for deriving independent stream seeds from one base seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E3779B97F4A7C15) ^ index.wrapping_mul(0xBF58476D1CE4E5B9);
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

pub const STREAM_WEIGHTS: u64 = 1;
pub const STREAM_IMAGE: u64 = 2;
pub const STREAM_BERNOULLI: u64 = 3;

/// Magnitude triples (a >= b >= c >= 1) with strictly distinct squared L2
/// norms, ascending. Indexing this table by ladder level guarantees
/// distinct norms per level.
fn norm_ladder() -> &'static [(u8, u8, u8)] {
    static TABLE: OnceLock<Vec<(u8, u8, u8)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut seen = std::collections::BTreeMap::new();
        for a in 1u32..=127 {
            for b in 1..=a {
                for c in 1..=b {
                    let n2 = a * a + b * b + c * c;
                    seen.entry(n2).or_insert((a as u8, b as u8, c as u8));
                }
            }
        }
        seen.into_values().collect()
    })
}

/// Expected positive fraction of weight elements for one layer.
///
/// Chosen so the pre-activation mean sits `z` standard deviations above
/// zero, with `z` ramping over depth: early layers hover near the sign
/// change (visible zero vectors at the large feature maps), deep layers
/// stay almost fully active, the regime a pruned trained network shows.
/// The bias is normalized by the layer's usable multiply terms, so small
/// feature maps (whose 3x3 windows hang mostly over the padding) get the
/// stronger bias they need.
pub fn sign_bias(spec: &ConvLayerSpec, weight_density: f64, layer: usize, total: usize) -> f64 {
    let t = if total <= 1 {
        1.0
    } else {
        layer as f64 / (total - 1) as f64
    };
    let z_target = 0.12 + 3.5 * t;
    // Fraction of the 3x3 window with real input data, averaged over the map.
    let window = ((3 * spec.in_h - 2) * (3 * spec.in_w - 2)) as f64
        / (9 * spec.in_h * spec.in_w) as f64;
    // Usable products per output value: surviving weight elements times the
    // window coverage, times a typical input occupancy.
    let k = (weight_density * (spec.in_c * 9) as f64 * window * 0.7).max(1.0);
    (0.5 + z_target / (1.6 * k.sqrt())).clamp(0.5, 0.92)
}

/// Synthetic weights for one layer. `sign_bias` is the positive fraction
/// of the elements that will survive pruning to `weight_density`,
/// stratified per output channel so no surviving channel's weight sum
/// drifts far from the mean. The ladder makes the survivor set knowable
/// here: the top levels win, lowest channels first at the partial level.
pub fn gen_weights(
    spec: &ConvLayerSpec,
    sign_bias: f64,
    weight_density: f64,
    seed: u64,
) -> DenseTensor {
    let ladder = norm_ladder();
    let levels = spec.in_c * 3;
    let total_cols = spec.out_c * levels;
    let kept_cols = ((weight_density * total_cols as f64).round().max(1.0) as usize).min(total_cols);
    let full_levels = kept_cols / spec.out_c;
    let residual = kept_cols % spec.out_c;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = DenseTensor::zeros(spec.weight_dims(), ElemWidth::W8);
    for o in 0..spec.out_c {
        // Elements of this channel that survive pruning, highest levels first.
        let survivor_levels = full_levels + usize::from(o < residual);
        let n = survivor_levels * 3;
        let n_pos = (((n as f64) * sign_bias + rng.gen::<f64>()) as usize).min(n);
        let mut signs: Vec<i32> = (0..n).map(|i| if i < n_pos { 1 } else { -1 }).collect();
        for i in (1..n).rev() {
            signs.swap(i, rng.gen_range(0..=i));
        }
        for ci in 0..spec.in_c {
            for f in 0..3 {
                let level = ci * 3 + f;
                let idx = if levels <= 1 {
                    ladder.len() - 1
                } else {
                    level * (ladder.len() - 1) / (levels - 1)
                };
                let (a, b, c) = ladder[idx];
                // Rank from the top: 0 for the highest level.
                let above = levels - 1 - level;
                for (ky, mag) in [(0usize, a), (1, b), (2, c)] {
                    let sign = if above < survivor_levels {
                        signs[above * 3 + ky]
                    } else if rng.gen_bool(sign_bias) {
                        1
                    } else {
                        -1
                    };
                    t.set(&[o, ci, ky, f], sign * mag as i32);
                }
            }
        }
    }
    t
}

/// Dense positive image-like input for the first layer.
pub fn gen_image(spec: &ConvLayerSpec, seed: u64) -> DenseTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseTensor::from_fn(spec.input_dims(), ElemWidth::W8, |_| rng.gen_range(1..=127))
        .expect("image dims")
}

/// Vector-granular Bernoulli occupancy: each length-`v` column segment is
/// kept independently with probability `density` and filled with nonzero
/// positive values; dropped segments are all zero.
pub fn gen_bernoulli_input(
    dims: &[usize],
    density: f64,
    v: usize,
    seed: u64,
) -> DenseTensor {
    let (c, h, w) = (dims[0], dims[1], dims[2]);
    let segments = h.div_ceil(v);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = DenseTensor::zeros(vec![c, h, w], ElemWidth::W8);
    for ci in 0..c {
        for col in 0..w {
            for seg in 0..segments {
                if !rng.gen_bool(density) {
                    continue;
                }
                for r in 0..v {
                    let row = seg * v + r;
                    if row < h {
                        t.set(&[ci, row, col], rng.gen_range(1..=127));
                    }
                }
            }
        }
    }
    t
}

/// The `gen-sparsity` operation: Bernoulli-kept vectors in encoded form.
pub fn gen_sparsity(
    dims: &[usize],
    density: f64,
    v: usize,
    seed: u64,
) -> vsconv::Result<VectorSparseTensor> {
    encode_activations(&gen_bernoulli_input(dims, density, v, seed), v)
}
