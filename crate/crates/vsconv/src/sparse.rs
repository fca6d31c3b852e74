//! Vector-sparse tensor encoding and vector pruning.
//!
//! Activations are cut into fixed-length vertical column segments, weights
//! into 3-element filter columns; only vectors containing a nonzero element
//! are stored, each with a coordinate, so the schedule generator can skip
//! whole vectors and the accumulator can still place every partial sum.

use std::cmp::Reverse;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, ElemWidth};

/// Which side of the multiply a tensor feeds; decides density denominators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    Input,
    Weight,
}

/// Element- and vector-granularity nonzero fractions of one tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityReport {
    pub element_density: f64,
    pub vector_density: f64,
    pub vec_len: usize,
    pub tensor_role: TensorRole,
}

impl DensityReport {
    pub fn measure(dense: &DenseTensor, sparse: &VectorSparseTensor, role: TensorRole) -> Result<Self> {
        Ok(DensityReport {
            element_density: dense.element_density()?,
            vector_density: sparse.vector_density(),
            vec_len: sparse.vec_len(),
            tensor_role: role,
        })
    }
}

/// Nonzero vectors of a fixed length plus their coordinate index.
///
/// Coordinates are `(channel, column, segment)` for rank-3 activation
/// tensors and `(out_c, in_c, kernel column)` for rank-4 weight tensors,
/// stored in strictly increasing lexicographic order. The payload holds
/// `vec_len` elements per coordinate; a final activation segment that runs
/// past the image bottom is zero-padded in the payload, and the pad never
/// counts toward nonzero detection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorSparseTensor {
    vec_len: usize,
    dense_dims: Vec<usize>,
    coords: Vec<[u32; 3]>,
    payload: Vec<i32>,
    width: ElemWidth,
}

/// Kernel width the weight encoding is specialized for.
pub const KERNEL_COLS: usize = 3;

impl VectorSparseTensor {
    pub fn vec_len(&self) -> usize {
        self.vec_len
    }

    pub fn dense_dims(&self) -> &[usize] {
        &self.dense_dims
    }

    pub fn coords(&self) -> &[[u32; 3]] {
        &self.coords
    }

    pub fn width(&self) -> ElemWidth {
        self.width
    }

    pub fn num_vectors(&self) -> usize {
        self.coords.len()
    }

    /// Payload slice for a coordinate, if present.
    pub fn get(&self, coord: [u32; 3]) -> Option<&[i32]> {
        self.coords
            .binary_search(&coord)
            .ok()
            .map(|i| &self.payload[i * self.vec_len..(i + 1) * self.vec_len])
    }

    pub fn contains(&self, coord: [u32; 3]) -> bool {
        self.coords.binary_search(&coord).is_ok()
    }

    /// Vector slots a dense tensor of these dims holds at this vector length.
    pub fn total_vector_slots(&self) -> usize {
        total_vector_slots(&self.dense_dims, self.vec_len)
    }

    /// Present vectors over total vector slots.
    pub fn vector_density(&self) -> f64 {
        let total = self.total_vector_slots();
        if total == 0 {
            return 0.0;
        }
        self.coords.len() as f64 / total as f64
    }

    /// Restore the dense tensor, omitted vectors as zeros.
    pub fn decode(&self) -> Result<DenseTensor> {
        let mut out = DenseTensor::zeros(self.dense_dims.clone(), self.width);
        match self.dense_dims.len() {
            3 => {
                let (c, h, w) = (self.dense_dims[0], self.dense_dims[1], self.dense_dims[2]);
                let segments = h.div_ceil(self.vec_len);
                for (i, &[ci, col, seg]) in self.coords.iter().enumerate() {
                    let (ci, col, seg) = (ci as usize, col as usize, seg as usize);
                    if ci >= c || col >= w || seg >= segments {
                        return Err(Error::InconsistentCoord {
                            coord: self.coords[i],
                            dims: self.dense_dims.clone(),
                        });
                    }
                    let vec = &self.payload[i * self.vec_len..(i + 1) * self.vec_len];
                    for (r, &v) in vec.iter().enumerate() {
                        let row = seg * self.vec_len + r;
                        if row < h {
                            out.set(&[ci, row, col], v);
                        }
                    }
                }
            }
            4 => {
                let (oc, ic) = (self.dense_dims[0], self.dense_dims[1]);
                for (i, &[o, ci, f]) in self.coords.iter().enumerate() {
                    let (o, ci, f) = (o as usize, ci as usize, f as usize);
                    if o >= oc || ci >= ic || f >= KERNEL_COLS {
                        return Err(Error::InconsistentCoord {
                            coord: self.coords[i],
                            dims: self.dense_dims.clone(),
                        });
                    }
                    let vec = &self.payload[i * self.vec_len..(i + 1) * self.vec_len];
                    for (ky, &v) in vec.iter().enumerate() {
                        out.set(&[o, ci, ky, f], v);
                    }
                }
            }
            r => {
                return Err(Error::BadFile {
                    what: "VectorSparseTensor",
                    reason: format!("unsupported rank {r}"),
                })
            }
        }
        Ok(out)
    }

    /// Write the binary form: magic `VSSP`, u8 version, u8 dtype, u8 rank,
    /// u32 vec_len, u32 dims, u32 coord count, payload block, then the
    /// coordinate block as packed little-endian u32 triples.
    pub fn write_vssp<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"VSSP")?;
        w.write_all(&[1u8, self.width.code(), self.dense_dims.len() as u8])?;
        w.write_all(&(self.vec_len as u32).to_le_bytes())?;
        for &d in &self.dense_dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&(self.coords.len() as u32).to_le_bytes())?;
        for &v in &self.payload {
            match self.width {
                ElemWidth::W8 => w.write_all(&(v as i8).to_le_bytes())?,
                ElemWidth::W16 => w.write_all(&(v as i16).to_le_bytes())?,
                ElemWidth::W32 => w.write_all(&v.to_le_bytes())?,
            }
        }
        for c in &self.coords {
            for &x in c {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_vssp<R: Read>(r: &mut R) -> Result<Self> {
        let bad = |reason: String| Error::BadFile {
            what: "VSSP",
            reason,
        };
        let mut head = [0u8; 7];
        r.read_exact(&mut head)?;
        if &head[0..4] != b"VSSP" {
            return Err(bad(format!("bad magic {:?}", &head[0..4])));
        }
        if head[4] != 1 {
            return Err(bad(format!("unsupported version {}", head[4])));
        }
        let width =
            ElemWidth::from_code(head[5]).ok_or_else(|| bad(format!("bad dtype code {}", head[5])))?;
        let rank = head[6] as usize;
        if rank != 3 && rank != 4 {
            return Err(bad(format!("unsupported rank {rank}")));
        }
        let u32le = |r: &mut R| -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let vec_len = u32le(r)? as usize;
        if vec_len == 0 {
            return Err(bad("vec_len 0".into()));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u32le(r)? as usize);
        }
        let count = u32le(r)? as usize;
        let mut payload = Vec::with_capacity(count * vec_len);
        for _ in 0..count * vec_len {
            let v = match width {
                ElemWidth::W8 => {
                    let mut b = [0u8; 1];
                    r.read_exact(&mut b)?;
                    i8::from_le_bytes(b) as i32
                }
                ElemWidth::W16 => {
                    let mut b = [0u8; 2];
                    r.read_exact(&mut b)?;
                    i16::from_le_bytes(b) as i32
                }
                ElemWidth::W32 => {
                    let mut b = [0u8; 4];
                    r.read_exact(&mut b)?;
                    i32::from_le_bytes(b)
                }
            };
            payload.push(v);
        }
        let mut coords = Vec::with_capacity(count);
        for _ in 0..count {
            coords.push([u32le(r)?, u32le(r)?, u32le(r)?]);
        }
        for pair in coords.windows(2) {
            if pair[0] >= pair[1] {
                return Err(bad(format!("coords not strictly ordered at {:?}", pair[1])));
            }
        }
        for (i, vec) in payload.chunks(vec_len).enumerate() {
            if vec.iter().all(|&v| v == 0) {
                return Err(bad(format!("all-zero payload vector at coord {:?}", coords[i])));
            }
        }
        let t = VectorSparseTensor {
            vec_len,
            dense_dims: dims,
            coords,
            payload,
            width,
        };
        // Coordinate ranges get validated by decoding once.
        t.decode()?;
        Ok(t)
    }
}

/// Vector slots a dense tensor holds at vector length `v`:
/// per-column ceil(h/v) segments for activations, one slot per filter
/// column for weights.
pub fn total_vector_slots(dims: &[usize], v: usize) -> usize {
    match dims.len() {
        3 => dims[0] * dims[2] * dims[1].div_ceil(v),
        4 => dims[0] * dims[1] * KERNEL_COLS,
        _ => 0,
    }
}

/// Cut a `[c, h, w]` activation tensor into length-`v` column segments and
/// keep the nonzero ones.
pub fn encode_activations(t: &DenseTensor, v: usize) -> Result<VectorSparseTensor> {
    if t.dims().len() != 3 {
        return Err(Error::ShapeMismatch {
            context: "encode_activations",
            expected: "[c, h, w]".into(),
            got: format!("{:?}", t.dims()),
        });
    }
    if v == 0 {
        return Err(Error::VecLenMismatch { expected: 1, got: 0 });
    }
    let (c, h, w) = (t.dims()[0], t.dims()[1], t.dims()[2]);
    let segments = h.div_ceil(v);
    let mut coords = Vec::new();
    let mut payload = Vec::new();
    let mut buf = vec![0i32; v];
    for ci in 0..c {
        for col in 0..w {
            for seg in 0..segments {
                let mut any = false;
                for (r, slot) in buf.iter_mut().enumerate() {
                    let row = seg * v + r;
                    let val = if row < h { t.at(&[ci, row, col]) } else { 0 };
                    *slot = val;
                    any |= val != 0;
                }
                if any {
                    coords.push([ci as u32, col as u32, seg as u32]);
                    payload.extend_from_slice(&buf);
                }
            }
        }
    }
    Ok(VectorSparseTensor {
        vec_len: v,
        dense_dims: t.dims().to_vec(),
        coords,
        payload,
        width: t.width(),
    })
}

/// Keep the nonzero 3-element filter columns of a `[out_c, in_c, 3, 3]`
/// weight tensor, one vector per (out_c, in_c, kernel column).
pub fn encode_weights(w: &DenseTensor) -> Result<VectorSparseTensor> {
    let d = w.dims();
    if d.len() != 4 || d[2] != KERNEL_COLS || d[3] != KERNEL_COLS {
        return Err(Error::UnsupportedKernel {
            got: format!("{d:?}"),
        });
    }
    let (oc, ic) = (d[0], d[1]);
    let mut coords = Vec::new();
    let mut payload = Vec::new();
    for o in 0..oc {
        for ci in 0..ic {
            for f in 0..KERNEL_COLS {
                let col = [w.at(&[o, ci, 0, f]), w.at(&[o, ci, 1, f]), w.at(&[o, ci, 2, f])];
                if col.iter().any(|&v| v != 0) {
                    coords.push([o as u32, ci as u32, f as u32]);
                    payload.extend_from_slice(&col);
                }
            }
        }
    }
    Ok(VectorSparseTensor {
        vec_len: KERNEL_COLS,
        dense_dims: d.to_vec(),
        coords,
        payload,
        width: w.width(),
    })
}

/// Zero the lowest-L2-norm filter columns so that `ceil(target * total)`
/// columns survive. Ties break toward the earlier coordinate, which also
/// makes the operation deterministic and idempotent.
pub fn prune_weights_vector(w: &DenseTensor, target_density: f64) -> Result<DenseTensor> {
    if !(target_density > 0.0 && target_density <= 1.0) {
        return Err(Error::InvalidDensity {
            value: target_density,
        });
    }
    let d = w.dims();
    if d.len() != 4 || d[2] != KERNEL_COLS || d[3] != KERNEL_COLS {
        return Err(Error::UnsupportedKernel {
            got: format!("{d:?}"),
        });
    }
    let (oc, ic) = (d[0], d[1]);
    let total = oc * ic * KERNEL_COLS;

    // Squared L2 norm per filter column, in coordinate order.
    let mut ranked: Vec<(u64, usize)> = Vec::with_capacity(total);
    for o in 0..oc {
        for ci in 0..ic {
            for f in 0..KERNEL_COLS {
                let norm2: u64 = (0..KERNEL_COLS)
                    .map(|ky| {
                        let v = w.at(&[o, ci, ky, f]) as i64;
                        (v * v) as u64
                    })
                    .sum();
                ranked.push((norm2, ranked.len()));
            }
        }
    }
    ranked.sort_by_key(|&(norm2, idx)| (Reverse(norm2), idx));

    let keep = ceil_fraction(target_density, total);
    let mut keep_mask = vec![false; total];
    for &(_, idx) in ranked.iter().take(keep) {
        keep_mask[idx] = true;
    }

    let mut out = w.clone();
    for o in 0..oc {
        for ci in 0..ic {
            for f in 0..KERNEL_COLS {
                if !keep_mask[(o * ic + ci) * KERNEL_COLS + f] {
                    for ky in 0..KERNEL_COLS {
                        out.set(&[o, ci, ky, f], 0);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// ceil(target * total), robust to the float noise of targets like 0.235
/// that are not representable exactly.
fn ceil_fraction(target: f64, total: usize) -> usize {
    let x = target * total as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() < 1e-6 { nearest } else { x.ceil() };
    (k as usize).min(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{DenseTensor, ElemWidth};

    #[test]
    fn all_zero_column_is_omitted() {
        let t = DenseTensor::zeros(vec![1, 5, 1], ElemWidth::W8);
        let s = encode_activations(&t, 5).unwrap();
        assert!(s.coords().is_empty());
        assert_eq!(s.vector_density(), 0.0);
    }

    #[test]
    fn zero_middle_column_example() {
        // 5x5 input, column index 1 all zero, V=5: coords for columns 0,2,3,4.
        let t = DenseTensor::from_fn(vec![1, 5, 5], ElemWidth::W8, |i| {
            if i[2] == 1 {
                0
            } else {
                (i[1] + i[2] + 1) as i32
            }
        })
        .unwrap();
        let s = encode_activations(&t, 5).unwrap();
        let cols: Vec<u32> = s.coords().iter().map(|c| c[1]).collect();
        assert_eq!(cols, vec![0, 2, 3, 4]);
        assert_eq!(s.vector_density(), 4.0 / 5.0);
    }

    #[test]
    fn dense_tensor_segment_count() {
        // No zeros, h=14, V=7: exactly 2*c*w coords (direct enumeration).
        let t = DenseTensor::from_fn(vec![3, 14, 4], ElemWidth::W8, |_| 1).unwrap();
        let s = encode_activations(&t, 7).unwrap();
        assert_eq!(s.num_vectors(), 2 * 3 * 4);
        assert_eq!(s.vector_density(), 1.0);
        // Payload equals the column segments.
        let vec = s.get([1, 2, 1]).unwrap();
        assert_eq!(vec, &[1; 7]);
    }

    #[test]
    fn ragged_tail_is_zero_padded_but_not_counted() {
        // h=5, V=4: second segment holds one real row.
        let mut t = DenseTensor::zeros(vec![1, 5, 1], ElemWidth::W8);
        t.set(&[0, 4, 0], 9);
        let s = encode_activations(&t, 4).unwrap();
        assert_eq!(s.coords(), &[[0, 0, 1]]);
        assert_eq!(s.get([0, 0, 1]).unwrap(), &[9, 0, 0, 0]);
        let back = s.decode().unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn weight_encoding_drops_zero_columns() {
        // Kernel with the third filter column zeroed keeps columns 0 and 1 only.
        let w = DenseTensor::from_fn(vec![1, 1, 3, 3], ElemWidth::W8, |i| {
            if i[3] == 2 {
                0
            } else {
                (i[2] * 3 + i[3] + 1) as i32
            }
        })
        .unwrap();
        let s = encode_weights(&w).unwrap();
        assert_eq!(s.coords(), &[[0, 0, 0], [0, 0, 1]]);
        assert_eq!(s.get([0, 0, 0]).unwrap(), &[1, 4, 7]);
    }

    #[test]
    fn weight_encoding_edge_cases() {
        let zero = DenseTensor::zeros(vec![2, 2, 3, 3], ElemWidth::W8);
        assert_eq!(encode_weights(&zero).unwrap().num_vectors(), 0);

        let dense = DenseTensor::from_fn(vec![2, 3, 3, 3], ElemWidth::W8, |_| 1).unwrap();
        assert_eq!(encode_weights(&dense).unwrap().num_vectors(), 18);

        let bad = DenseTensor::zeros(vec![1, 1, 5, 5], ElemWidth::W8);
        assert!(matches!(encode_weights(&bad), Err(Error::UnsupportedKernel { .. })));
    }

    #[test]
    fn prune_identity_at_full_density() {
        let w = DenseTensor::from_fn(vec![2, 2, 3, 3], ElemWidth::W8, |i| {
            (i[0] * 27 + i[1] * 9 + i[2] * 3 + i[3]) as i32 - 13
        })
        .unwrap();
        assert_eq!(prune_weights_vector(&w, 1.0).unwrap(), w);
    }

    #[test]
    fn prune_count_is_exact_ceil() {
        // 0.235 of 1000-ish vectors: build oc=10, ic=34 -> 1020 columns? Use
        // a shape giving exactly 1000: not reachable with 3 cols per (o,ci),
        // so check the count rule at 999 + the float-safe ceil directly.
        assert_eq!(super::ceil_fraction(0.235, 1000), 235);
        assert_eq!(super::ceil_fraction(0.235, 999), 235); // ceil(234.765)
        assert_eq!(super::ceil_fraction(1.0, 42), 42);
        assert_eq!(super::ceil_fraction(0.5, 3), 2);

        let w = DenseTensor::from_fn(vec![10, 20, 3, 3], ElemWidth::W16, |i| {
            1 + ((i[0] * 181 + i[1] * 37 + i[2] * 11 + i[3] * 3) % 251) as i32
        })
        .unwrap();
        let pruned = prune_weights_vector(&w, 0.235).unwrap();
        let survivors = encode_weights(&pruned).unwrap().num_vectors();
        assert_eq!(survivors, super::ceil_fraction(0.235, 600));
        assert_eq!(survivors, 141);
    }

    #[test]
    fn prune_ranks_by_l2_norm() {
        // Two columns with norms 5 and 1; target 0.5 of 3 columns keeps 2:
        // the norm-1 column must be the zeroed one.
        let mut w = DenseTensor::zeros(vec![1, 1, 3, 3], ElemWidth::W8);
        w.set(&[0, 0, 0, 0], 5); // column 0, norm 5
        w.set(&[0, 0, 1, 1], 1); // column 1, norm 1
        w.set(&[0, 0, 2, 2], 3); // column 2, norm 3
        let pruned = prune_weights_vector(&w, 0.5).unwrap();
        assert_eq!(pruned.at(&[0, 0, 0, 0]), 5);
        assert_eq!(pruned.at(&[0, 0, 1, 1]), 0);
        assert_eq!(pruned.at(&[0, 0, 2, 2]), 3);
    }

    #[test]
    fn prune_is_idempotent() {
        let w = DenseTensor::from_fn(vec![3, 4, 3, 3], ElemWidth::W8, |i| {
            ((i[0] * 53 + i[1] * 17 + i[2] * 5 + i[3]) % 19) as i32 - 9
        })
        .unwrap();
        let once = prune_weights_vector(&w, 0.4).unwrap();
        let twice = prune_weights_vector(&once, 0.4).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn decode_empty_and_inconsistent() {
        let t = DenseTensor::zeros(vec![2, 6, 3], ElemWidth::W8);
        let s = encode_activations(&t, 3).unwrap();
        assert_eq!(s.decode().unwrap(), t);

        let mut broken = s.clone();
        broken.coords.push([5, 0, 0]);
        broken.payload.extend_from_slice(&[1, 1, 1]);
        assert!(matches!(broken.decode(), Err(Error::InconsistentCoord { .. })));
    }

    #[test]
    fn vssp_round_trip_bytes() {
        let mut t = DenseTensor::zeros(vec![1, 3, 2], ElemWidth::W8);
        t.set(&[0, 0, 1], 7);
        t.set(&[0, 2, 1], -2);
        let s = encode_activations(&t, 2).unwrap();
        let mut buf = Vec::new();
        s.write_vssp(&mut buf).unwrap();
        // magic, version, dtype, rank, vec_len, dims 1,3,2, count 2,
        // payload [7,0,-2,0], coords (0,1,0) (0,1,1)
        assert_eq!(&buf[0..4], b"VSSP");
        assert_eq!(&buf[4..7], &[1, 0, 3]);
        assert_eq!(&buf[7..11], &2u32.to_le_bytes());
        assert_eq!(&buf[11..23], [1, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&buf[23..27], &2u32.to_le_bytes());
        assert_eq!(&buf[27..31], [0x07, 0x00, 0xfe, 0x00]);
        assert_eq!(buf.len(), 31 + 2 * 12);
        let back = VectorSparseTensor::read_vssp(&mut buf.as_slice()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.decode().unwrap(), t);
    }

    #[test]
    fn vssp_rejects_all_zero_vector() {
        let mut t = DenseTensor::zeros(vec![1, 2, 1], ElemWidth::W8);
        t.set(&[0, 0, 0], 1);
        let s = encode_activations(&t, 2).unwrap();
        let mut buf = Vec::new();
        s.write_vssp(&mut buf).unwrap();
        buf[27] = 0; // zero out the single payload vector's one nonzero
        assert!(matches!(
            VectorSparseTensor::read_vssp(&mut buf.as_slice()),
            Err(Error::BadFile { .. })
        ));
    }
}
