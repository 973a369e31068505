//! Split Bregman solvers for masked TV inpainting and the TV-L1 baseline.
//!
//! The gradient is split off as `d ~ grad u` with Bregman variable `b`,
//! seeded by one shrinkage of the starting image's gradient. Each
//! Bregman step runs `gs_sweeps` forward lexicographic Gauss-Seidel sweeps on
//! the u-subproblem, an isotropic shrinkage for `d`, and `b += grad u - d`.
//! The loop stops when `||u_new - u_old|| / max(||u_old||, 1) < rel_tol` or
//! after `max_bregman` steps. The returned image never has a larger objective
//! than the starting image.

use crate::energy::{masked_fidelity, total_variation};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerConfig<T> {
    /// Weight of the gradient splitting penalty; `None` means `0.2 * weight`.
    pub mu: Option<T>,
    pub max_bregman: usize,
    pub gs_sweeps: usize,
    pub rel_tol: T,
}

impl<T: Scalar> Default for InnerConfig<T> {
    fn default() -> Self {
        Self {
            mu: None,
            max_bregman: 1000,
            gs_sweeps: 2,
            rel_tol: T::of(1e-5),
        }
    }
}

impl<T: Scalar> InnerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if let Some(mu) = self.mu {
            if !(mu > T::zero()) || !mu.is_finite() {
                return Err(Error::invalid(format!("mu must be positive, got {mu}")));
            }
        }
        if self.max_bregman == 0 || self.gs_sweeps == 0 {
            return Err(Error::invalid("max_bregman and gs_sweeps must be positive"));
        }
        if !(self.rel_tol >= T::zero()) {
            return Err(Error::invalid("rel_tol must be non-negative"));
        }
        Ok(())
    }

    fn mu_for(&self, weight: T) -> T {
        self.mu.unwrap_or(T::of(0.2) * weight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintSolution<T> {
    pub image: Image<T>,
    /// Bregman steps performed.
    pub iterations: usize,
    /// Relative-change criterion met before the step cap.
    pub converged: bool,
    /// The mask trusted no pixel, so the start image was returned unchanged.
    pub degenerate: bool,
}

/// `1/2 sum_{mask=1} (u - f)^2 + lambda1 * TV(u)`.
pub fn inpaint_objective<T: Scalar>(u: &Image<T>, mask: &Mask, f: &Image<T>, lambda1: T) -> Result<T> {
    Ok(masked_fidelity(u, mask, f)? + lambda1 * total_variation(u))
}

/// `sum |u - f| + lambda * TV(u)`.
pub fn tvl1_objective<T: Scalar>(u: &Image<T>, f: &Image<T>, lambda: T) -> Result<T> {
    u.ensure_same_dims(f)?;
    let mut acc = T::zero();
    for (&a, &b) in u.data().iter().zip(f.data()) {
        acc += (a - b).abs();
    }
    Ok(acc + lambda * total_variation(u))
}

fn ensure_finite<T: Scalar>(im: &Image<T>) -> Result<()> {
    match im.data().iter().position(|v| !v.is_finite()) {
        Some(k) => Err(Error::NonFinite {
            row: k / im.cols(),
            col: k % im.cols(),
        }),
        None => Ok(()),
    }
}

fn ensure_positive<T: Scalar>(name: &str, x: T) -> Result<()> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(Error::invalid(format!("{name} must be positive, got {x}")));
    }
    Ok(())
}

/// Gradient splitting state shared by both solvers.
struct GradientSplit<T> {
    rows: usize,
    cols: usize,
    dx: Vec<T>,
    dy: Vec<T>,
    bx: Vec<T>,
    by: Vec<T>,
    /// `grad^T (d - b)`, refreshed before each u-update.
    div: Vec<T>,
}

impl<T: Scalar> GradientSplit<T> {
    fn new(rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        Self {
            rows,
            cols,
            dx: vec![T::zero(); n],
            dy: vec![T::zero(); n],
            bx: vec![T::zero(); n],
            by: vec![T::zero(); n],
            div: vec![T::zero(); n],
        }
    }

    fn refresh_divergence(&mut self) {
        let (m, n) = (self.rows, self.cols);
        for i in 0..m {
            for j in 0..n {
                let k = i * n + j;
                let mut g = T::zero();
                if j > 0 {
                    g += self.dx[k - 1] - self.bx[k - 1];
                }
                if j + 1 < n {
                    g -= self.dx[k] - self.bx[k];
                }
                if i > 0 {
                    g += self.dy[k - n] - self.by[k - n];
                }
                if i + 1 < m {
                    g -= self.dy[k] - self.by[k];
                }
                self.div[k] = g;
            }
        }
    }

    /// Shrink `grad u + b` isotropically by `threshold`, then update `b`.
    fn shrink_and_update(&mut self, u: &[T], threshold: T) {
        let (m, n) = (self.rows, self.cols);
        for i in 0..m {
            for j in 0..n {
                let k = i * n + j;
                let gx = if j + 1 < n { u[k + 1] - u[k] } else { T::zero() };
                let gy = if i + 1 < m { u[k + n] - u[k] } else { T::zero() };
                let vx = gx + self.bx[k];
                let vy = gy + self.by[k];
                let mag = (vx * vx + vy * vy).sqrt();
                let scale = if mag > threshold { (mag - threshold) / mag } else { T::zero() };
                self.dx[k] = vx * scale;
                self.dy[k] = vy * scale;
                self.bx[k] = vx - self.dx[k];
                self.by[k] = vy - self.dy[k];
            }
        }
    }

    /// Sum and count of the 4-neighbours of pixel `(i, j)`.
    #[inline]
    fn neighbours(&self, u: &[T], i: usize, j: usize) -> (T, usize) {
        let (m, n) = (self.rows, self.cols);
        let k = i * n + j;
        let mut sum = T::zero();
        let mut count = 0;
        if j > 0 {
            sum += u[k - 1];
            count += 1;
        }
        if j + 1 < n {
            sum += u[k + 1];
            count += 1;
        }
        if i > 0 {
            sum += u[k - n];
            count += 1;
        }
        if i + 1 < m {
            sum += u[k + n];
            count += 1;
        }
        (sum, count)
    }
}

fn relative_change<T: Scalar>(new: &[T], old: &[T]) -> T {
    let mut diff = T::zero();
    let mut norm = T::zero();
    for (&a, &b) in new.iter().zip(old) {
        diff += (a - b) * (a - b);
        norm += b * b;
    }
    diff.sqrt() / norm.sqrt().max(T::one())
}

/// Approximately minimize `1/2 sum_{mask=1}(u - f)^2 + lambda1 * TV(u)`.
///
/// Starts from `warm_start` (or `f`). A mask with no trusted pixel leaves
/// the problem without data; the start image (or zeros) is returned with
/// `degenerate` set.
pub fn tv_inpaint<T: Scalar>(
    f: &Image<T>,
    mask: &Mask,
    lambda1: T,
    inner: &InnerConfig<T>,
    warm_start: Option<&Image<T>>,
) -> Result<InpaintSolution<T>> {
    f.ensure_mask_dims(mask)?;
    ensure_finite(f)?;
    ensure_positive("lambda1", lambda1)?;
    inner.validate()?;
    if let Some(w) = warm_start {
        f.ensure_same_dims(w)?;
        ensure_finite(w)?;
    }
    if mask.ones_count() == 0 {
        let image = warm_start.cloned().unwrap_or_else(|| Image::zeros(f.rows(), f.cols()));
        return Ok(InpaintSolution {
            image,
            iterations: 0,
            converged: false,
            degenerate: true,
        });
    }

    let start = warm_start.unwrap_or(f);
    let (rows, cols) = f.dims();
    let mu = inner.mu_for(lambda1);
    let threshold = lambda1 / mu;
    let weight: Vec<T> = mask.bits().iter().map(|&b| if b { T::one() } else { T::zero() }).collect();
    let data = f.data();
    let mut u = start.data().to_vec();
    let mut prev = u.clone();
    let mut split = GradientSplit::new(rows, cols);
    split.shrink_and_update(&u, threshold);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < inner.max_bregman {
        iterations += 1;
        prev.copy_from_slice(&u);
        split.refresh_divergence();
        for _ in 0..inner.gs_sweeps {
            for i in 0..rows {
                for j in 0..cols {
                    let k = i * cols + j;
                    let (nb, count) = split.neighbours(&u, i, j);
                    let den = weight[k] + mu * T::of_usize(count);
                    if den > T::zero() {
                        u[k] = (weight[k] * data[k] + mu * (split.div[k] + nb)) / den;
                    }
                }
            }
        }
        split.shrink_and_update(&u, threshold);
        if relative_change(&u, &prev) < inner.rel_tol {
            converged = true;
            break;
        }
    }

    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("TV inpainting diverged".into()));
    }
    let candidate = Image::from_vec_unchecked(rows, cols, u);
    let image = if inpaint_objective(&candidate, mask, f, lambda1)? <= inpaint_objective(start, mask, f, lambda1)? {
        candidate
    } else {
        start.clone()
    };
    Ok(InpaintSolution {
        image,
        iterations,
        converged,
        degenerate: false,
    })
}

/// Approximately minimize `sum |u - f| + lambda * TV(u)` with a second
/// splitting `z ~ u - f` for the l1 data term.
///
/// The data splitting weight is `mu / lambda`, so both shrinkage
/// thresholds equal `lambda / mu`.
pub fn tvl1_denoise<T: Scalar>(f: &Image<T>, lambda: T, inner: &InnerConfig<T>) -> Result<InpaintSolution<T>> {
    ensure_finite(f)?;
    ensure_positive("lambda", lambda)?;
    inner.validate()?;

    let (rows, cols) = f.dims();
    let mu = inner.mu_for(lambda);
    let mu_data = mu / lambda;
    let grad_threshold = lambda / mu;
    let data_threshold = T::one() / mu_data;
    let data = f.data();
    let n = rows * cols;
    let mut u = data.to_vec();
    let mut prev = u.clone();
    let mut z = vec![T::zero(); n];
    let mut bz = vec![T::zero(); n];
    let mut split = GradientSplit::new(rows, cols);
    split.shrink_and_update(&u, grad_threshold);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < inner.max_bregman {
        iterations += 1;
        prev.copy_from_slice(&u);
        split.refresh_divergence();
        for _ in 0..inner.gs_sweeps {
            for i in 0..rows {
                for j in 0..cols {
                    let k = i * cols + j;
                    let (nb, count) = split.neighbours(&u, i, j);
                    let den = mu_data + mu * T::of_usize(count);
                    u[k] = (mu_data * (data[k] + z[k] - bz[k]) + mu * (split.div[k] + nb)) / den;
                }
            }
        }
        for k in 0..n {
            let v = u[k] - data[k] + bz[k];
            let mag = v.abs() - data_threshold;
            z[k] = if mag > T::zero() { v.signum() * mag } else { T::zero() };
            bz[k] = v - z[k];
        }
        split.shrink_and_update(&u, grad_threshold);
        if relative_change(&u, &prev) < inner.rel_tol {
            converged = true;
            break;
        }
    }

    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("TV-L1 iteration diverged".into()));
    }
    let candidate = Image::from_vec_unchecked(rows, cols, u);
    let image = if tvl1_objective(&candidate, f, lambda)? <= tvl1_objective(f, f, lambda)? {
        candidate
    } else {
        f.clone()
    };
    Ok(InpaintSolution {
        image,
        iterations,
        converged,
        degenerate: false,
    })
}
