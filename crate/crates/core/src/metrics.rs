//! Restoration quality and detection accuracy.

use crate::error::Result;
use crate::image::{check_dims, Image, Mask};
use crate::scalar::Scalar;

/// Peak signal-to-noise ratio in dB with the peak fixed at 255.
/// Identical images give `+inf`.
pub fn psnr<T: Scalar>(estimate: &Image<T>, reference: &Image<T>) -> Result<T> {
    estimate.ensure_same_dims(reference)?;
    let mut acc = T::zero();
    for (&a, &b) in estimate.data().iter().zip(reference.data()) {
        acc += (a - b) * (a - b);
    }
    if acc == T::zero() {
        return Ok(T::infinity());
    }
    let mse = acc / T::of_usize(estimate.len());
    Ok(T::of(10.0) * (T::of(255.0 * 255.0) / mse).log10())
}

/// Agreement between an estimated damage mask and the ground truth
/// (0 bits mark damaged pixels in both).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionStats {
    /// Truly damaged pixels the estimate trusts.
    pub misses: usize,
    /// Clean pixels the estimate flags as damaged.
    pub false_hits: usize,
    /// Pixels where both masks agree.
    pub agreements: usize,
    pub recall: f64,
    pub precision: f64,
}

pub fn detection_stats(estimate: &Mask, truth: &Mask) -> Result<DetectionStats> {
    check_dims(truth.dims(), estimate.dims())?;
    let mut misses = 0;
    let mut false_hits = 0;
    for (&e, &t) in estimate.bits().iter().zip(truth.bits()) {
        match (t, e) {
            (false, true) => misses += 1,
            (true, false) => false_hits += 1,
            _ => {}
        }
    }
    let true_zeros = truth.zeros_count();
    let est_zeros = estimate.zeros_count();
    let recall = if true_zeros == 0 {
        1.0
    } else {
        1.0 - misses as f64 / true_zeros as f64
    };
    let precision = if est_zeros == 0 {
        1.0
    } else {
        1.0 - false_hits as f64 / est_zeros as f64
    };
    Ok(DetectionStats {
        misses,
        false_hits,
        agreements: truth.len() - misses - false_hits,
        recall,
        precision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_identical_is_infinite() {
        let a = Image::filled(3, 3, 9.0f64);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_full_scale_error_is_zero_db() {
        let a = Image::filled(4, 4, 0.0f64);
        let b = Image::filled(4, 4, 255.0f64);
        assert!(psnr(&a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn psnr_unit_error() {
        // 20 log10(255) = 48.130803608679...
        let a = Image::from_fn(5, 6, |i, j| (i * 6 + j) as f64);
        let b = Image::from_fn(5, 6, |i, j| (i * 6 + j) as f64 + if (i + j) % 2 == 0 { 1.0 } else { -1.0 });
        assert!((psnr(&a, &b).unwrap() - 48.1308).abs() < 1e-3);
        let a32: Image<f32> = a.cast();
        let b32: Image<f32> = b.cast();
        assert!((psnr(&a32, &b32).unwrap() - 48.1308).abs() < 1e-3);
    }

    #[test]
    fn psnr_symmetric_and_shift_sensitive() {
        let a = Image::from_fn(7, 7, |i, j| ((i * 13 + j * 7) % 255) as f64);
        let b = a.map(|v| v * 0.9 + 3.0);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        for c in [-2.0, 0.5, 10.0] {
            assert!(psnr(&a.map(|v| v + c), &a).unwrap() < psnr(&a, &a).unwrap());
        }
    }

    #[test]
    fn psnr_dimension_mismatch() {
        assert!(psnr(&Image::filled(2, 2, 0.0f64), &Image::filled(2, 3, 0.0)).is_err());
    }

    #[test]
    fn detection_exact_match() {
        let m = Mask::from_fn(4, 4, |i, j| i != j);
        let s = detection_stats(&m, &m).unwrap();
        assert_eq!((s.misses, s.false_hits, s.recall, s.precision), (0, 0, 1.0, 1.0));
    }

    #[test]
    fn detection_all_trusted_misses_everything() {
        let truth = Mask::from_fn(4, 4, |i, _| i != 0);
        let s = detection_stats(&Mask::ones(4, 4), &truth).unwrap();
        assert_eq!(s.misses, 4);
        assert_eq!(s.recall, 0.0);
    }

    #[test]
    fn detection_hand_counted() {
        let truth = Mask::new(1, 4, vec![false, true, true, false]).unwrap();
        let est = Mask::new(1, 4, vec![false, true, false, true]).unwrap();
        let s = detection_stats(&est, &truth).unwrap();
        assert_eq!((s.misses, s.false_hits), (1, 1));
        assert_eq!((s.recall, s.precision), (0.5, 0.5));
        assert_eq!(s.misses + s.false_hits + s.agreements, 4);
    }
}
