//! Discrete total variation and the energies minimized by the blind solvers.
//!
//! Gradients use forward differences with a Neumann boundary: the difference
//! across the last column (row) is zero. All sums accumulate in row-major
//! order so results are bit-reproducible.

use crate::error::Result;
use crate::image::{Image, Mask};
use crate::scalar::Scalar;

/// Forward-difference gradient `(dx, dy)` at `(i, j)`, `dx` along columns.
#[inline]
pub(crate) fn gradient_at<T: Scalar>(u: &Image<T>, i: usize, j: usize) -> (T, T) {
    let v = u.get(i, j);
    let dx = if j + 1 < u.cols() { u.get(i, j + 1) - v } else { T::zero() };
    let dy = if i + 1 < u.rows() { u.get(i + 1, j) - v } else { T::zero() };
    (dx, dy)
}

/// Isotropic total variation `sum |grad u|`.
pub fn total_variation<T: Scalar>(u: &Image<T>) -> T {
    let mut acc = T::zero();
    for i in 0..u.rows() {
        for j in 0..u.cols() {
            let (dx, dy) = gradient_at(u, i, j);
            acc += (dx * dx + dy * dy).sqrt();
        }
    }
    acc
}

/// Pointwise data-fidelity envelope left after eliminating the sparse outlier image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobustPenalty {
    /// `min(x^2, 2*lambda2)`: the l0 envelope.
    R0,
    /// Huber-type `x^2` for `|x| <= lambda2`, else `2*lambda2*|x| - lambda2^2`: the l1 envelope.
    R1,
}

pub fn robust_penalty<T: Scalar>(x: T, lambda2: T, kind: RobustPenalty) -> T {
    let two = T::of(2.0);
    match kind {
        RobustPenalty::R0 => (x * x).min(two * lambda2),
        RobustPenalty::R1 => {
            if x.abs() <= lambda2 {
                x * x
            } else {
                two * lambda2 * x.abs() - lambda2 * lambda2
            }
        }
    }
}

/// `(u - f)^2 / 2` per pixel in row-major order.
pub fn halved_squared_residuals<T: Scalar>(u: &Image<T>, f: &Image<T>) -> Result<Vec<T>> {
    u.ensure_same_dims(f)?;
    let half = T::of(0.5);
    Ok(u
        .data()
        .iter()
        .zip(f.data())
        .map(|(&a, &b)| half * (a - b) * (a - b))
        .collect())
}

/// `1/2 sum_{mask=1} (u - f)^2`.
pub fn masked_fidelity<T: Scalar>(u: &Image<T>, mask: &Mask, f: &Image<T>) -> Result<T> {
    u.ensure_same_dims(f)?;
    u.ensure_mask_dims(mask)?;
    let half = T::of(0.5);
    let mut acc = T::zero();
    for ((&a, &b), &keep) in u.data().iter().zip(f.data()).zip(mask.bits()) {
        if keep {
            acc += half * (a - b) * (a - b);
        }
    }
    Ok(acc)
}

/// Penalty-form energy `1/2 sum mask*(u-f)^2 + lambda1*TV(u) + lambda2*#zeros(mask)`.
pub fn penalty_energy<T: Scalar>(
    u: &Image<T>,
    mask: &Mask,
    f: &Image<T>,
    lambda1: T,
    lambda2: T,
) -> Result<T> {
    let fid = masked_fidelity(u, mask, f)?;
    Ok(fid + lambda1 * total_variation(u) + lambda2 * T::of_usize(mask.zeros_count()))
}

/// Constraint-form energy: the masked fidelity plus `lambda1*TV(u)` when the mask
/// has at most `budget` zeros, `+inf` otherwise.
pub fn constraint_energy<T: Scalar>(
    u: &Image<T>,
    mask: &Mask,
    f: &Image<T>,
    lambda1: T,
    budget: usize,
) -> Result<T> {
    let fid = masked_fidelity(u, mask, f)?;
    if mask.zeros_count() > budget {
        return Ok(T::infinity());
    }
    Ok(fid + lambda1 * total_variation(u))
}

/// Energy of `u` alone with the outlier image eliminated: `1/2 sum R0(u - f) + lambda1*TV(u)`.
///
/// Equals the minimum of [`penalty_energy`] over binary masks.
pub fn eliminated_penalty_energy<T: Scalar>(
    u: &Image<T>,
    f: &Image<T>,
    lambda1: T,
    lambda2: T,
) -> Result<T> {
    u.ensure_same_dims(f)?;
    let half = T::of(0.5);
    let mut acc = T::zero();
    for (&a, &b) in u.data().iter().zip(f.data()) {
        acc += half * robust_penalty(a - b, lambda2, RobustPenalty::R0);
    }
    Ok(acc + lambda1 * total_variation(u))
}
