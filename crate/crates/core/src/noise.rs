//! Seeded corruption models: additive Gaussian noise on trusted pixels and
//! impulse noise overwriting an exact number of pixels, plus a Monte-Carlo
//! estimate of the per-pixel negative log-likelihood under the mixed model.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{DynamicRange, Image, Mask};
use crate::rng::{derive_seed, PinnedRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImpulseKind {
    /// Corrupted pixels take `d_min` or `d_max` with equal probability.
    SaltPepper,
    /// Corrupted pixels take an independent uniform value in `[d_min, d_max]`.
    RandomValued,
    None,
}

impl FromStr for ImpulseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sp" | "salt_pepper" | "salt-pepper" => Ok(Self::SaltPepper),
            "rv" | "random_valued" | "random-valued" => Ok(Self::RandomValued),
            "none" => Ok(Self::None),
            other => Err(Error::invalid(format!("unknown impulse kind `{other}`"))),
        }
    }
}

impl ImpulseKind {
    pub fn short_name(self) -> &'static str {
        match self {
            Self::SaltPepper => "sp",
            Self::RandomValued => "rv",
            Self::None => "none",
        }
    }
}

/// Full corruption recipe: Gaussian noise first, then impulse overwrite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec<T> {
    pub sigma: T,
    pub impulse: ImpulseKind,
    pub level: T,
    pub seed: u64,
    pub clip: bool,
}

impl<T: Scalar> NoiseSpec<T> {
    /// Corrupt `u`; returns the observation and the ground-truth mask (0 = impulse).
    ///
    /// The Gaussian and impulse streams are seeded with `derive_seed(seed, [1])`
    /// and `derive_seed(seed, [2])` respectively.
    pub fn apply(&self, u: &Image<T>, range: DynamicRange<T>) -> Result<(Image<T>, Mask)> {
        let noisy = add_gaussian(u, self.sigma, derive_seed(self.seed, &[1]), self.clip, range)?;
        match self.impulse {
            ImpulseKind::None => Ok((noisy, Mask::ones(u.rows(), u.cols()))),
            kind => add_impulse(&noisy, kind, self.level, derive_seed(self.seed, &[2]), range),
        }
    }
}

/// `u` plus i.i.d. `N(0, sigma^2)` per pixel, row-major draw order.
pub fn add_gaussian<T: Scalar>(
    u: &Image<T>,
    sigma: T,
    seed: u64,
    clip: bool,
    range: DynamicRange<T>,
) -> Result<Image<T>> {
    if !(sigma >= T::zero()) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be a finite non-negative number, got {sigma}")));
    }
    if sigma == T::zero() {
        return Ok(u.clone());
    }
    let mut rng = PinnedRng::new(seed);
    let mut out = u.clone();
    for v in out.data_mut() {
        let noisy = *v + sigma * T::of(rng.gaussian());
        *v = if clip { range.clamp(noisy) } else { noisy };
    }
    Ok(out)
}

/// Number of pixels hit at impulse level `level` on an `n`-pixel image.
pub fn impulse_count<T: Scalar>(level: T, n: usize) -> usize {
    (level.to_f64_lossy() * n as f64).round() as usize
}

/// Overwrite exactly `round(level * M * N)` distinct pixels with impulse values.
///
/// Pixels are chosen by a partial Fisher-Yates shuffle of the row-major
/// indices; the impulse values are drawn afterwards, in selection order.
pub fn add_impulse<T: Scalar>(
    u: &Image<T>,
    kind: ImpulseKind,
    level: T,
    seed: u64,
    range: DynamicRange<T>,
) -> Result<(Image<T>, Mask)> {
    if !(level >= T::zero() && level <= T::one()) {
        return Err(Error::invalid(format!("impulse level must lie in [0, 1], got {level}")));
    }
    let n = u.len();
    let mut out = u.clone();
    let mut mask = Mask::ones(u.rows(), u.cols());
    if kind == ImpulseKind::None {
        return Ok((out, mask));
    }
    let count = impulse_count(level, n).min(n);
    let mut rng = PinnedRng::new(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for t in 0..count {
        let j = t + rng.below((n - t) as u64) as usize;
        order.swap(t, j);
    }
    let cols = u.cols();
    for &k in &order[..count] {
        let value = match kind {
            ImpulseKind::SaltPepper => {
                if rng.uniform() < 0.5 {
                    range.min
                } else {
                    range.max
                }
            }
            ImpulseKind::RandomValued => range.min + range.width() * T::of(rng.uniform()),
            ImpulseKind::None => unreachable!(),
        };
        out.data_mut()[k] = value;
        mask.set(k / cols, k % cols, false);
    }
    Ok((out, mask))
}

/// Histogram of simulated observations of a single pixel and its empirical
/// negative log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct NllHistogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub trials: u64,
}

impl NllHistogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * self.bin_width()
    }

    pub fn bin_of(&self, x: f64) -> usize {
        let t = ((x - self.lo) / (self.hi - self.lo) * self.counts.len() as f64).floor();
        (t.max(0.0) as usize).min(self.counts.len() - 1)
    }

    /// `-ln(count / trials)` per bin; `None` marks an empty bin.
    pub fn nll(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .map(|&c| (c > 0).then(|| -((c as f64) / self.trials as f64).ln()))
            .collect()
    }

    /// Bin with the smallest NLL (the empirical mode).
    pub fn argmin_nll(&self) -> usize {
        let mut best = 0;
        for (k, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = k;
            }
        }
        best
    }

    /// `(max - min) / min` of the NLL over non-empty bins whose centers lie
    /// farther than `radius` from `value`. `None` when no such bin exists.
    pub fn tail_spread(&self, value: f64, radius: f64) -> Option<f64> {
        let tail: Vec<f64> = self
            .nll()
            .into_iter()
            .enumerate()
            .filter(|(k, _)| (self.center(*k) - value).abs() > radius)
            .filter_map(|(_, v)| v)
            .collect();
        if tail.is_empty() {
            return None;
        }
        let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((hi - lo) / lo)
    }

    /// Coefficient of determination of a least-squares parabola fitted to the
    /// NLL of the non-empty bins within `halfwidth` of `value`.
    pub fn parabola_r2(&self, value: f64, halfwidth: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .nll()
            .into_iter()
            .enumerate()
            .filter(|(k, _)| (self.center(*k) - value).abs() <= halfwidth)
            .filter_map(|(k, v)| v.map(|y| (self.center(k) - value, y)))
            .collect();
        let coef = fit_parabola(&pts)?;
        let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean).powi(2)).sum();
        let ss_res: f64 = pts
            .iter()
            .map(|&(x, y)| (y - (coef[0] + coef[1] * x + coef[2] * x * x)).powi(2))
            .sum();
        if ss_tot == 0.0 {
            return None;
        }
        Some(1.0 - ss_res / ss_tot)
    }
}

/// Least-squares `y = c0 + c1 x + c2 x^2` via the 3x3 normal equations.
fn fit_parabola(pts: &[(f64, f64)]) -> Option<[f64; 3]> {
    if pts.len() < 3 {
        return None;
    }
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for &(x, y) in pts {
        let mut p = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += p;
            if k < 3 {
                t[k] += p * y;
            }
            p *= x;
        }
    }
    let a = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(&a);
    if d.abs() < f64::EPSILON {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][c] = t[r];
        }
        *o = det3(&m) / d;
    }
    Some(out)
}

/// Monte-Carlo histogram of one pixel of true value `value` observed through
/// the mixed model: Gaussian perturbation, then with probability `level`
/// replacement by a uniform value in the dynamic range.
///
/// Observations outside the range fall into the boundary bins.
pub fn simulate_mixed_nll(
    value: f64,
    sigma: f64,
    level: f64,
    trials: u64,
    bins: usize,
    seed: u64,
    range: DynamicRange<f64>,
) -> Result<NllHistogram> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if bins < 3 {
        return Err(Error::invalid(format!("need at least 3 bins, got {bins}")));
    }
    if !(0.0..=1.0).contains(&level) || !(sigma >= 0.0) {
        return Err(Error::invalid("level must lie in [0, 1] and sigma must be non-negative"));
    }
    let mut hist = NllHistogram {
        lo: range.min,
        hi: range.max,
        counts: vec![0; bins],
        trials,
    };
    let mut rng = PinnedRng::new(seed);
    for _ in 0..trials {
        let mut x = value + sigma * rng.gaussian();
        if rng.uniform() < level {
            x = range.min + range.width() * rng.uniform();
        }
        let b = hist.bin_of(x);
        hist.counts[b] += 1;
    }
    Ok(hist)
}
