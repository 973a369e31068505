//! Grayscale image grids and binary trust masks.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Nominal intensity range `[min, max]` of an image. Defaults to 8-bit `[0, 255]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicRange<T> {
    pub min: T,
    pub max: T,
}

impl<T: Scalar> Default for DynamicRange<T> {
    fn default() -> Self {
        Self {
            min: T::zero(),
            max: T::of(255.0),
        }
    }
}

impl<T: Scalar> DynamicRange<T> {
    pub fn new(min: T, max: T) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::invalid(format!("dynamic range [{min}, {max}] is empty")));
        }
        Ok(Self { min, max })
    }

    pub fn width(&self) -> T {
        self.max - self.min
    }

    pub fn clamp(&self, x: T) -> T {
        x.max(self.min).min(self.max)
    }
}

/// Row-major `rows x cols` intensity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!("image must be non-empty, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{rows}x{cols} image needs {} samples, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        assert!(rows > 0 && cols > 0, "image must be non-empty");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, T::zero())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(rows > 0 && cols > 0, "image must be non-empty");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Crate-internal constructor for buffers produced by our own arithmetic.
    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.cols + col] = value;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_vec_unchecked(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn ensure_same_dims<U>(&self, other: &Image<U>) -> Result<()> {
        check_dims(self.dims(), (other.rows, other.cols))
    }

    pub fn ensure_mask_dims(&self, mask: &Mask) -> Result<()> {
        check_dims(self.dims(), mask.dims())
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Centered `rows x cols` sub-image; the crop is clipped to the image size.
    pub fn center_crop(&self, rows: usize, cols: usize) -> Self {
        let rows = rows.clamp(1, self.rows);
        let cols = cols.clamp(1, self.cols);
        let r0 = (self.rows - rows) / 2;
        let c0 = (self.cols - cols) / 2;
        Self::from_fn(rows, cols, |i, j| self.get(r0 + i, c0 + j))
    }

    /// Round half away from zero, then clamp to `[0, 255]`.
    pub fn quantized(&self) -> Self {
        self.map(|v| v.round().max(T::zero()).min(T::of(255.0)))
    }

    /// FNV-1a hash of the pixel values widened to `f64` bit patterns.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.data {
            for b in v.to_f64_lossy().to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image::from_vec_unchecked(
            self.rows,
            self.cols,
            self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        )
    }
}

pub(crate) fn check_dims(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            expected_rows: expected.0,
            expected_cols: expected.1,
            rows: got.0,
            cols: got.1,
        });
    }
    Ok(())
}

/// Binary trust mask: `true` (1) marks a pixel trusted as uncorrupted, `false`
/// (0) a pixel treated as damaged.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!("mask must be non-empty, got {rows}x{cols}")));
        }
        if bits.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{rows}x{cols} mask needs {} bits, got {}",
                rows * cols,
                bits.len()
            )));
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "mask must be non-empty");
        Self {
            rows,
            cols,
            bits: vec![true; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "mask must be non-empty");
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(rows > 0 && cols > 0, "mask must be non-empty");
        let mut bits = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                bits.push(f(i, j));
            }
        }
        Self { rows, cols, bits }
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, bits: Vec<bool>) -> Self {
        debug_assert_eq!(bits.len(), rows * cols);
        Self { rows, cols, bits }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.cols + col] = value;
    }

    pub fn ones_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn zeros_count(&self) -> usize {
        self.bits.len() - self.ones_count()
    }

    /// Number of positions where the two masks differ.
    pub fn hamming(&self, other: &Mask) -> Result<usize> {
        check_dims(self.dims(), other.dims())?;
        Ok(self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Image::<f64>::new(0, 3, vec![]).is_err());
        assert!(Image::<f64>::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Mask::new(2, 2, vec![true; 5]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let err = Image::new(2, 2, vec![0.0, 1.0, f64::NAN, 2.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 1, col: 0 }));
    }

    #[test]
    fn mask_counts_partition() {
        let m = Mask::from_fn(3, 5, |i, j| (i + j) % 3 != 0);
        assert_eq!(m.ones_count() + m.zeros_count(), 15);
        assert_eq!(m.hamming(&m).unwrap(), 0);
        assert_eq!(m.hamming(&Mask::ones(3, 5)).unwrap(), m.zeros_count());
    }

    #[test]
    fn center_crop_takes_middle() {
        let im = Image::<f64>::from_fn(6, 6, |i, j| (i * 6 + j) as f64);
        let c = im.center_crop(2, 2);
        assert_eq!(c.data(), &[14.0, 15.0, 20.0, 21.0]);
    }

    #[test]
    fn quantize_rounds_half_away_and_clamps() {
        let im = Image::new(1, 4, vec![127.5, -3.0, 300.0, 12.49]).unwrap();
        assert_eq!(im.quantized().data(), &[128.0, 0.0, 255.0, 12.0]);
    }
}
