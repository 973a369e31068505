//! Median-type impulse detectors used for the initial mask and as baselines.
//!
//! Windows are clamped to the image domain at the borders. Medians of
//! even-sized samples take the lower middle element.

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::scalar::Scalar;

/// Adaptive median filter settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AmfConfig {
    /// Largest window side; odd and at least 3.
    pub max_window: usize,
}

impl Default for AmfConfig {
    fn default() -> Self {
        Self { max_window: 19 }
    }
}

impl AmfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_window < 3 || self.max_window % 2 == 0 {
            return Err(Error::invalid(format!(
                "AMF window must be odd and >= 3, got {}",
                self.max_window
            )));
        }
        Ok(())
    }
}

/// Adaptive center-weighted median filter settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcwmfConfig<T> {
    /// Thresholds paired with center weights 1, 3, 5, 7.
    pub deltas: [T; 4],
    /// Multiplier on the window MAD added to each threshold.
    pub scale: T,
}

impl<T: Scalar> Default for AcwmfConfig<T> {
    fn default() -> Self {
        Self {
            deltas: [T::of(40.0), T::of(25.0), T::of(10.0), T::of(5.0)],
            scale: T::of(0.6),
        }
    }
}

impl<T: Scalar> AcwmfConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.deltas.iter().any(|&d| !(d > T::zero())) {
            return Err(Error::invalid("ACWMF thresholds must be positive"));
        }
        if self.deltas.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::invalid("ACWMF thresholds must be strictly decreasing"));
        }
        if !(self.scale > T::zero()) {
            return Err(Error::invalid("ACWMF MAD scale must be positive"));
        }
        Ok(())
    }
}

/// Lower median: order statistic at zero-based index `(n - 1) / 2`.
pub(crate) fn lower_median<T: Scalar>(values: &mut [T]) -> T {
    debug_assert!(!values.is_empty());
    let k = (values.len() - 1) / 2;
    let (_, m, _) = values.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).expect("finite samples"));
    *m
}

fn window<T: Scalar>(f: &Image<T>, i: usize, j: usize, half: usize, buf: &mut Vec<T>) {
    buf.clear();
    let r0 = i.saturating_sub(half);
    let r1 = (i + half).min(f.rows() - 1);
    let c0 = j.saturating_sub(half);
    let c1 = (j + half).min(f.cols() - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            buf.push(f.get(r, c));
        }
    }
}

/// Two-stage adaptive median filter. Returns the filtered image and the
/// detection mask (0 where a pixel was replaced by a window median).
pub fn amf<T: Scalar>(f: &Image<T>, cfg: &AmfConfig) -> Result<(Image<T>, Mask)> {
    cfg.validate()?;
    let mut out = f.clone();
    let mut mask = Mask::ones(f.rows(), f.cols());
    let mut buf = Vec::with_capacity(cfg.max_window * cfg.max_window);
    for i in 0..f.rows() {
        for j in 0..f.cols() {
            let center = f.get(i, j);
            let mut replacement = None;
            let mut size = 3;
            loop {
                window(f, i, j, size / 2, &mut buf);
                let (lo, hi) = buf
                    .iter()
                    .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                let med = lower_median(&mut buf);
                if lo < med && med < hi {
                    if !(lo < center && center < hi) {
                        replacement = Some(med);
                    }
                    break;
                }
                size += 2;
                if size > cfg.max_window {
                    // only pixels the median actually changes count as detected
                    if center != med {
                        replacement = Some(med);
                    }
                    break;
                }
            }
            if let Some(m) = replacement {
                out.set(i, j, m);
                mask.set(i, j, false);
            }
        }
    }
    Ok((out, mask))
}

/// Adaptive center-weighted median filter on a 3x3 window. A pixel is
/// flagged when any center-weighted median departs from it by more than
/// `scale * MAD + delta_k`; flagged pixels take the plain window median.
pub fn acwmf<T: Scalar>(f: &Image<T>, cfg: &AcwmfConfig<T>) -> Result<(Image<T>, Mask)> {
    cfg.validate()?;
    let mut out = f.clone();
    let mut mask = Mask::ones(f.rows(), f.cols());
    let mut win = Vec::with_capacity(9);
    let mut weighted = Vec::with_capacity(15);
    let mut dev = Vec::with_capacity(9);
    for i in 0..f.rows() {
        for j in 0..f.cols() {
            let center = f.get(i, j);
            window(f, i, j, 1, &mut win);
            let mut sorted = win.clone();
            let med = lower_median(&mut sorted);
            dev.clear();
            dev.extend(win.iter().map(|&v| (v - med).abs()));
            let mad = lower_median(&mut dev);
            let mut flagged = false;
            for (k, &delta) in cfg.deltas.iter().enumerate() {
                // weight 2k+1: the window already holds the center once
                weighted.clear();
                weighted.extend_from_slice(&win);
                weighted.extend(std::iter::repeat(center).take(2 * k));
                let m_k = lower_median(&mut weighted);
                if (m_k - center).abs() > cfg.scale * mad + delta {
                    flagged = true;
                    break;
                }
            }
            if flagged {
                out.set(i, j, med);
                mask.set(i, j, false);
            }
        }
    }
    Ok((out, mask))
}
