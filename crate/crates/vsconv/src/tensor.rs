//! Dense tensors, the reference convolution, and activation utilities.
//!
//! Everything downstream (sparse encoding, schedules, the PE-array
//! simulator) is verified against [`conv2d_reference`], so this module
//! favors obviousness over speed: a plain loop nest with exact integer
//! arithmetic.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Element storage width. Values always live in an `i32` container; the
/// width only constrains their range (and the on-disk encoding).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemWidth {
    W8,
    W16,
    W32,
}

impl ElemWidth {
    pub fn code(self) -> u8 {
        match self {
            ElemWidth::W8 => 0,
            ElemWidth::W16 => 1,
            ElemWidth::W32 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ElemWidth::W8),
            1 => Some(ElemWidth::W16),
            2 => Some(ElemWidth::W32),
            _ => None,
        }
    }

    pub fn bits(self) -> u8 {
        match self {
            ElemWidth::W8 => 8,
            ElemWidth::W16 => 16,
            ElemWidth::W32 => 32,
        }
    }

    pub fn contains(self, v: i32) -> bool {
        match self {
            ElemWidth::W8 => (-128..=127).contains(&v),
            ElemWidth::W16 => (i16::MIN as i32..=i16::MAX as i32).contains(&v),
            ElemWidth::W32 => true,
        }
    }
}

/// Shape of one convolution layer.
///
/// The reference convolution accepts any geometry; the accelerator mapping
/// additionally requires `k_h = k_w = 3`, `stride = 1`, `pad = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_c: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvLayerSpec {
    /// Standard 3x3/stride-1/pad-1 layer, the shape the PE array is built for.
    pub fn unit3x3(in_c: usize, in_h: usize, in_w: usize, out_c: usize) -> Self {
        ConvLayerSpec {
            in_h,
            in_w,
            in_c,
            out_c,
            k_h: 3,
            k_w: 3,
            stride: 1,
            pad: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("in_h", self.in_h),
            ("in_w", self.in_w),
            ("in_c", self.in_c),
            ("out_c", self.out_c),
            ("k_h", self.k_h),
            ("k_w", self.k_w),
            ("stride", self.stride),
        ] {
            if v == 0 {
                return Err(Error::UnsupportedMapping {
                    field,
                    value: v,
                    required: ">= 1",
                });
            }
        }
        // Output extent must land on an integer grid.
        if self.in_h + 2 * self.pad < self.k_h
            || !(self.in_h + 2 * self.pad - self.k_h).is_multiple_of(self.stride)
        {
            return Err(Error::UnsupportedMapping {
                field: "in_h",
                value: self.in_h,
                required: "(in_h + 2*pad - k_h) nonnegative and divisible by stride",
            });
        }
        if self.in_w + 2 * self.pad < self.k_w
            || !(self.in_w + 2 * self.pad - self.k_w).is_multiple_of(self.stride)
        {
            return Err(Error::UnsupportedMapping {
                field: "in_w",
                value: self.in_w,
                required: "(in_w + 2*pad - k_w) nonnegative and divisible by stride",
            });
        }
        Ok(())
    }

    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.k_h) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.k_w) / self.stride + 1
    }

    pub fn input_dims(&self) -> Vec<usize> {
        vec![self.in_c, self.in_h, self.in_w]
    }

    pub fn weight_dims(&self) -> Vec<usize> {
        vec![self.out_c, self.in_c, self.k_h, self.k_w]
    }
}

/// Dense signed-integer tensor, channel-major then row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    elems: Vec<i32>,
    width: ElemWidth,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, elems: Vec<i32>, width: ElemWidth) -> Result<Self> {
        let count: usize = dims.iter().product();
        if dims.is_empty() || count != elems.len() {
            return Err(Error::ShapeMismatch {
                context: "DenseTensor::new",
                expected: format!("{count} elements for dims {dims:?}"),
                got: format!("{}", elems.len()),
            });
        }
        if let Some(&bad) = elems.iter().find(|&&v| !width.contains(v)) {
            return Err(Error::ValueOutOfRange {
                value: bad as i64,
                width: width.bits(),
            });
        }
        Ok(DenseTensor { dims, elems, width })
    }

    pub fn zeros(dims: Vec<usize>, width: ElemWidth) -> Self {
        let count = dims.iter().product();
        DenseTensor {
            dims,
            elems: vec![0; count],
            width,
        }
    }

    pub fn from_fn(
        dims: Vec<usize>,
        width: ElemWidth,
        mut f: impl FnMut(&[usize]) -> i32,
    ) -> Result<Self> {
        let count: usize = dims.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut elems = Vec::with_capacity(count);
        for _ in 0..count {
            elems.push(f(&idx));
            for d in (0..dims.len()).rev() {
                idx[d] += 1;
                if idx[d] < dims[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        DenseTensor::new(dims, elems, width)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn width(&self) -> ElemWidth {
        self.width
    }

    pub fn elems(&self) -> &[i32] {
        &self.elems
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        for (i, &d) in idx.iter().zip(&self.dims) {
            debug_assert!(*i < d);
            off = off * d + i;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> i32 {
        self.elems[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: i32) {
        let off = self.offset(idx);
        self.elems[off] = v;
    }

    /// Read a `[c, h, w]` tensor with zero fill outside the spatial bounds.
    /// `y`/`x` may be out of range; `c` must be valid.
    pub fn at3_padded(&self, c: usize, y: isize, x: isize) -> i32 {
        let (h, w) = (self.dims[1] as isize, self.dims[2] as isize);
        if y < 0 || y >= h || x < 0 || x >= w {
            0
        } else {
            self.elems[(c * h as usize + y as usize) * w as usize + x as usize]
        }
    }

    pub fn count_nonzero(&self) -> usize {
        self.elems.iter().filter(|&&v| v != 0).count()
    }

    /// Nonzero fraction of the elements.
    pub fn element_density(&self) -> Result<f64> {
        if self.elems.is_empty() {
            return Err(Error::EmptyTensor);
        }
        Ok(self.count_nonzero() as f64 / self.elems.len() as f64)
    }

    /// Elementwise max(0, v). Shape and width preserved.
    pub fn relu(&self) -> DenseTensor {
        DenseTensor {
            dims: self.dims.clone(),
            elems: self.elems.iter().map(|&v| v.max(0)).collect(),
            width: self.width,
        }
    }

    /// Write the self-describing binary form:
    /// magic `VSTN`, u8 version, u8 dtype code, u8 rank, little-endian u32
    /// dims, then elements in layout order at the dtype width.
    pub fn write_vstn<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"VSTN")?;
        w.write_all(&[1u8, self.width.code(), self.dims.len() as u8])?;
        for &d in &self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &self.elems {
            match self.width {
                ElemWidth::W8 => w.write_all(&(v as i8).to_le_bytes())?,
                ElemWidth::W16 => w.write_all(&(v as i16).to_le_bytes())?,
                ElemWidth::W32 => w.write_all(&v.to_le_bytes())?,
            }
        }
        Ok(())
    }

    pub fn read_vstn<R: Read>(r: &mut R) -> Result<Self> {
        let bad = |reason: String| Error::BadFile {
            what: "VSTN",
            reason,
        };
        let mut head = [0u8; 7];
        r.read_exact(&mut head)?;
        if &head[0..4] != b"VSTN" {
            return Err(bad(format!("bad magic {:?}", &head[0..4])));
        }
        if head[4] != 1 {
            return Err(bad(format!("unsupported version {}", head[4])));
        }
        let width =
            ElemWidth::from_code(head[5]).ok_or_else(|| bad(format!("bad dtype code {}", head[5])))?;
        let rank = head[6] as usize;
        if rank == 0 {
            return Err(bad("rank 0".into()));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            dims.push(u32::from_le_bytes(b) as usize);
        }
        let count: usize = dims.iter().product();
        let mut elems = Vec::with_capacity(count);
        for _ in 0..count {
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
            elems.push(v);
        }
        DenseTensor::new(dims, elems, width)
    }
}

fn check_conv_shapes(input: &DenseTensor, weights: &DenseTensor, spec: &ConvLayerSpec) -> Result<()> {
    spec.validate()?;
    if input.dims() != spec.input_dims().as_slice() {
        return Err(Error::ShapeMismatch {
            context: "conv2d input",
            expected: format!("{:?}", spec.input_dims()),
            got: format!("{:?}", input.dims()),
        });
    }
    if weights.dims() != spec.weight_dims().as_slice() {
        return Err(Error::ShapeMismatch {
            context: "conv2d weights",
            expected: format!("{:?}", spec.weight_dims()),
            got: format!("{:?}", weights.dims()),
        });
    }
    Ok(())
}

/// Reference 2-D convolution (cross-correlation form, zero padding).
///
/// `out[o][y][x] = sum over ci,dy,dx of in[ci][y*s+dy-pad][x*s+dx-pad] * w[o][ci][dy][dx]`
///
/// Sums are exact; an output that does not fit the 32-bit accumulator is
/// reported as an error naming the coordinate.
pub fn conv2d_reference(
    input: &DenseTensor,
    weights: &DenseTensor,
    spec: &ConvLayerSpec,
) -> Result<DenseTensor> {
    check_conv_shapes(input, weights, spec)?;
    let (out_h, out_w) = (spec.out_h(), spec.out_w());

    let channel = |o: usize| -> Result<Vec<i32>> {
        let mut plane = vec![0i32; out_h * out_w];
        for y in 0..out_h {
            for x in 0..out_w {
                let mut acc: i64 = 0;
                for ci in 0..spec.in_c {
                    for dy in 0..spec.k_h {
                        for dx in 0..spec.k_w {
                            let iy = (y * spec.stride + dy) as isize - spec.pad as isize;
                            let ix = (x * spec.stride + dx) as isize - spec.pad as isize;
                            let a = input.at3_padded(ci, iy, ix) as i64;
                            let b = weights.at(&[o, ci, dy, dx]) as i64;
                            acc += a * b;
                        }
                    }
                }
                plane[y * out_w + x] =
                    i32::try_from(acc).map_err(|_| Error::AccumulatorOverflow {
                        out_c: o,
                        row: y,
                        col: x,
                    })?;
            }
        }
        Ok(plane)
    };

    let planes = crate::try_map_indexed(spec.out_c, channel)?;
    let mut elems = Vec::with_capacity(spec.out_c * out_h * out_w);
    for p in planes {
        elems.extend_from_slice(&p);
    }
    DenseTensor::new(vec![spec.out_c, out_h, out_w], elems, ElemWidth::W32)
}
