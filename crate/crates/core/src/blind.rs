//! Blind inpainting by alternating minimization over the image and the mask.
//!
//! Both forms share the image step, a TV inpainting solve on the currently
//! trusted pixels. They differ in the mask step:
//!
//! * penalty form: trust a pixel iff `(u - f)^2 / 2 < lambda2`;
//! * constraint form (adaptive outlier pursuit): distrust exactly the
//!   `budget` pixels with the largest `(u - f)^2 / 2`.
//!
//! Each step minimizes the energy exactly (the image step up to the inner
//! solver tolerance, never increasing it), so the energy sequence is
//! nonincreasing and the binary mask sequence settles after finitely many
//! outer iterations at a coordinatewise minimum.

use std::time::{Duration, Instant};

use crate::energy::{constraint_energy, halved_squared_residuals, masked_fidelity, penalty_energy};
use crate::error::{Error, Result};
use crate::filters::{acwmf, amf, AcwmfConfig, AmfConfig};
use crate::image::{Image, Mask};
use crate::rng::PinnedRng;
use crate::scalar::Scalar;
use crate::tv_solver::{inpaint_objective, tv_inpaint, InnerConfig};

/// Resolution of pixels sitting exactly on the mask decision boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TieRule<T> {
    /// Trust the pixel (constraint form: lexicographically earliest pixels stay trusted).
    Keep,
    /// Distrust the pixel (constraint form: lexicographically earliest pixels are dropped).
    Drop,
    /// Add `tau * r` to each halved squared residual, with `r` uniform in
    /// `[0, 1)` drawn per pixel in row-major order from `seed`. The draws are
    /// fixed for a given seed, so repeated mask updates see the same
    /// perturbed objective.
    Randomized { tau: T, seed: u64 },
}

/// Which energy the alternation minimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Form<T> {
    /// Penalty `lambda2` per distrusted pixel.
    Penalty { lambda2: T },
    /// At most `budget` distrusted pixels.
    Constraint { budget: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    /// TV weight.
    pub lambda1: T,
    pub form: Form<T>,
    /// Outer stop tolerance on the energy decrease; `None` means `1e-4 * M * N`.
    pub epsilon: Option<T>,
    pub max_outer: usize,
    pub inner: InnerConfig<T>,
    pub tie_rule: TieRule<T>,
    /// Run [`verify_coordinatewise_min`] on the final iterate.
    pub certify: bool,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn penalty(lambda1: T, lambda2: T) -> Self {
        Self::with_form(lambda1, Form::Penalty { lambda2 })
    }

    pub fn constraint(lambda1: T, budget: usize) -> Self {
        Self::with_form(lambda1, Form::Constraint { budget })
    }

    fn with_form(lambda1: T, form: Form<T>) -> Self {
        Self {
            lambda1,
            form,
            epsilon: None,
            max_outer: 50,
            inner: InnerConfig::default(),
            tie_rule: TieRule::Keep,
            certify: true,
        }
    }

    pub fn epsilon_for(&self, pixels: usize) -> T {
        self.epsilon.unwrap_or_else(|| T::of(1e-4) * T::of_usize(pixels))
    }

    pub fn validate(&self, pixels: usize) -> Result<()> {
        if !(self.lambda1 > T::zero()) || !self.lambda1.is_finite() {
            return Err(Error::invalid(format!("lambda1 must be positive, got {}", self.lambda1)));
        }
        match self.form {
            Form::Penalty { lambda2 } if !(lambda2 > T::zero()) => {
                return Err(Error::invalid(format!("lambda2 must be positive, got {lambda2}")));
            }
            Form::Constraint { budget } if budget > pixels => {
                return Err(Error::invalid(format!("outlier budget {budget} exceeds {pixels} pixels")));
            }
            _ => {}
        }
        if let Some(eps) = self.epsilon {
            if !(eps >= T::zero()) {
                return Err(Error::invalid("epsilon must be non-negative"));
            }
        }
        if self.max_outer == 0 {
            return Err(Error::invalid("max_outer must be positive"));
        }
        if let TieRule::Randomized { tau, .. } = self.tie_rule {
            if !(tau >= T::zero()) || !tau.is_finite() {
                return Err(Error::invalid("tie perturbation tau must be finite and non-negative"));
            }
        }
        self.inner.validate()
    }

    /// Energy of the configured form.
    pub fn energy(&self, u: &Image<T>, mask: &Mask, f: &Image<T>) -> Result<T> {
        match self.form {
            Form::Penalty { lambda2 } => penalty_energy(u, mask, f, self.lambda1, lambda2),
            Form::Constraint { budget } => constraint_energy(u, mask, f, self.lambda1, budget),
        }
    }
}

/// One outer iteration of the alternation.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T> {
    /// 1-based outer iteration index `k`.
    pub iteration: usize,
    /// `F(u^k, mask^{k-1})`: after the image step.
    pub energy_after_image_step: T,
    /// `F(u^k, mask^k)`: after the mask step.
    pub energy: T,
    /// Bits flipped between `mask^{k-1}` and `mask^k`.
    pub mask_changes: usize,
    pub inner_iterations: usize,
    /// [`Image::digest`] of `u^k`.
    pub image_digest: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestoreResult<T> {
    pub image: Image<T>,
    pub mask: Mask,
    /// `F(f, mask^0)`: the energy at the starting point `u^0 = f`.
    pub initial_energy: T,
    pub trace: Vec<IterationRecord<T>>,
    /// Stopped by the energy or mask fixed-point test rather than the iteration cap.
    pub converged: bool,
    pub coordinatewise_certified: bool,
    pub report: Option<CoordinatewiseReport<T>>,
}

impl<T: Scalar> RestoreResult<T> {
    pub fn final_energy(&self) -> T {
        self.trace.last().map_or(self.initial_energy, |r| r.energy)
    }

    pub fn outer_iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Mask source for the initial guess and for two-stage restoration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Detector<T> {
    Amf(AmfConfig),
    Acwmf(AcwmfConfig<T>),
    /// Trust every pixel.
    Ones,
}

impl<T: Scalar> Detector<T> {
    pub fn detect(&self, f: &Image<T>) -> Result<(Image<T>, Mask)> {
        match self {
            Detector::Amf(cfg) => amf(f, cfg),
            Detector::Acwmf(cfg) => acwmf(f, cfg),
            Detector::Ones => Ok((f.clone(), Mask::ones(f.rows(), f.cols()))),
        }
    }
}

fn perturbation<T: Scalar>(tie: &TieRule<T>, n: usize) -> Option<Vec<T>> {
    match *tie {
        TieRule::Randomized { tau, seed } => {
            let mut rng = PinnedRng::new(seed);
            Some((0..n).map(|_| tau * T::of(rng.uniform())).collect())
        }
        _ => None,
    }
}

/// Halved squared residuals, perturbed when the tie rule is randomized.
fn mask_scores<T: Scalar>(u: &Image<T>, f: &Image<T>, tie: &TieRule<T>) -> Result<Vec<T>> {
    let mut scores = halved_squared_residuals(u, f)?;
    if let Some(p) = perturbation(tie, scores.len()) {
        for (s, d) in scores.iter_mut().zip(p) {
            *s += d;
        }
    }
    Ok(scores)
}

/// Exact mask step of the penalty form.
pub fn update_mask_penalty<T: Scalar>(u: &Image<T>, f: &Image<T>, lambda2: T, tie: TieRule<T>) -> Result<Mask> {
    if !(lambda2 > T::zero()) {
        return Err(Error::invalid(format!("lambda2 must be positive, got {lambda2}")));
    }
    let scores = mask_scores(u, f, &tie)?;
    let bits = scores
        .iter()
        .map(|&s| {
            if s < lambda2 {
                true
            } else if s > lambda2 {
                false
            } else {
                !matches!(tie, TieRule::Drop)
            }
        })
        .collect();
    Ok(Mask::from_vec_unchecked(u.rows(), u.cols(), bits))
}

/// Row-major indices ordered by decreasing score; equal scores are ordered so
/// the first `budget` entries honour the tie rule.
fn drop_order<T: Scalar>(scores: &[T], tie: &TieRule<T>) -> Vec<usize> {
    let prefer_late = !matches!(tie, TieRule::Drop);
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_unstable_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite residuals")
            .then(if prefer_late { b.cmp(&a) } else { a.cmp(&b) })
    });
    idx
}

/// Exact mask step of the constraint form: distrust the `budget` pixels with
/// the largest halved squared residual.
pub fn update_mask_constraint<T: Scalar>(u: &Image<T>, f: &Image<T>, budget: usize, tie: TieRule<T>) -> Result<Mask> {
    if budget > u.len() {
        return Err(Error::invalid(format!("outlier budget {budget} exceeds {} pixels", u.len())));
    }
    let scores = mask_scores(u, f, &tie)?;
    let mut bits = vec![true; scores.len()];
    for &k in drop_order(&scores, &tie).iter().take(budget) {
        bits[k] = false;
    }
    Ok(Mask::from_vec_unchecked(u.rows(), u.cols(), bits))
}

/// A penalty threshold under which the penalty mask step reproduces the
/// constraint mask step with `budget`: the midpoint between the `budget`-th
/// and `(budget+1)`-th largest halved squared residuals. `None` when the two
/// coincide or `budget` is `0` or the pixel count.
pub fn equivalent_lambda2<T: Scalar>(u: &Image<T>, f: &Image<T>, budget: usize) -> Result<Option<T>> {
    let scores = halved_squared_residuals(u, f)?;
    if budget == 0 || budget >= scores.len() {
        return Ok(None);
    }
    let order = drop_order(&scores, &TieRule::Keep);
    let (above, below) = (scores[order[budget - 1]], scores[order[budget]]);
    if above > below {
        Ok(Some(below + (above - below) / T::of(2.0)))
    } else {
        Ok(None)
    }
}

fn update_mask<T: Scalar>(u: &Image<T>, f: &Image<T>, cfg: &SolverConfig<T>) -> Result<Mask> {
    match cfg.form {
        Form::Penalty { lambda2 } => update_mask_penalty(u, f, lambda2, cfg.tie_rule),
        Form::Constraint { budget } => update_mask_constraint(u, f, budget, cfg.tie_rule),
    }
}

/// Alternating minimization of the penalty-form energy.
pub fn solve_penalty<T: Scalar>(f: &Image<T>, cfg: &SolverConfig<T>, mask0: &Mask) -> Result<RestoreResult<T>> {
    if !matches!(cfg.form, Form::Penalty { .. }) {
        return Err(Error::invalid("solve_penalty needs a penalty-form configuration"));
    }
    alternate(f, cfg, mask0, None)
}

/// Adaptive outlier pursuit: alternating minimization of the constraint-form energy.
pub fn solve_aop<T: Scalar>(f: &Image<T>, cfg: &SolverConfig<T>, mask0: &Mask) -> Result<RestoreResult<T>> {
    if !matches!(cfg.form, Form::Constraint { .. }) {
        return Err(Error::invalid("solve_aop needs a constraint-form configuration"));
    }
    alternate(f, cfg, mask0, None)
}

/// Run either form from an explicit starting image `u0` instead of `f`.
pub fn solve_from<T: Scalar>(f: &Image<T>, cfg: &SolverConfig<T>, mask0: &Mask, u0: &Image<T>) -> Result<RestoreResult<T>> {
    alternate(f, cfg, mask0, Some(u0))
}

fn alternate<T: Scalar>(
    f: &Image<T>,
    cfg: &SolverConfig<T>,
    mask0: &Mask,
    u0: Option<&Image<T>>,
) -> Result<RestoreResult<T>> {
    f.ensure_mask_dims(mask0)?;
    cfg.validate(f.len())?;
    if let Some(u0) = u0 {
        f.ensure_same_dims(u0)?;
    }
    let epsilon = cfg.epsilon_for(f.len());
    let mut u = u0.unwrap_or(f).clone();
    let mut mask = mask0.clone();
    let initial_energy = cfg.energy(&u, &mask, f)?;
    let mut prev_energy = initial_energy;
    let mut trace = Vec::new();
    let mut converged = false;

    for k in 1..=cfg.max_outer {
        let started = Instant::now();
        let sol = tv_inpaint(f, &mask, cfg.lambda1, &cfg.inner, Some(&u))?;
        let energy_after_image_step = cfg.energy(&sol.image, &mask, f)?;
        let next_mask = update_mask(&sol.image, f, cfg)?;
        let energy = cfg.energy(&sol.image, &next_mask, f)?;
        let mask_changes = next_mask.hamming(&mask)?;
        trace.push(IterationRecord {
            iteration: k,
            energy_after_image_step,
            energy,
            mask_changes,
            inner_iterations: sol.iterations,
            image_digest: sol.image.digest(),
            wall_time: started.elapsed(),
        });
        u = sol.image;
        mask = next_mask;
        if mask_changes == 0 || !(prev_energy - energy > epsilon) {
            converged = true;
            break;
        }
        prev_energy = energy;
    }

    let report = if cfg.certify {
        Some(verify_coordinatewise_min(&u, &mask, f, cfg)?)
    } else {
        None
    };
    Ok(RestoreResult {
        image: u,
        mask,
        initial_energy,
        trace,
        converged,
        coordinatewise_certified: report.as_ref().is_some_and(|r| r.certified),
        report,
    })
}

/// Detect with `detector`, then a single TV inpainting solve on the trusted
/// pixels. The energy reported is the constraint form with the budget set to
/// the number of detected pixels.
pub fn two_stage<T: Scalar>(
    f: &Image<T>,
    detector: &Detector<T>,
    lambda1: T,
    inner: &InnerConfig<T>,
) -> Result<RestoreResult<T>> {
    let (_, mask) = detector.detect(f)?;
    let budget = mask.zeros_count();
    let started = Instant::now();
    let sol = tv_inpaint(f, &mask, lambda1, inner, Some(f))?;
    let energy = constraint_energy(&sol.image, &mask, f, lambda1, budget)?;
    Ok(RestoreResult {
        initial_energy: constraint_energy(f, &mask, f, lambda1, budget)?,
        trace: vec![IterationRecord {
            iteration: 1,
            energy_after_image_step: energy,
            energy,
            mask_changes: 0,
            inner_iterations: sol.iterations,
            image_digest: sol.image.digest(),
            wall_time: started.elapsed(),
        }],
        image: sol.image,
        mask,
        converged: true,
        coordinatewise_certified: false,
        report: None,
    })
}

/// Outcome of [`verify_coordinatewise_min`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinatewiseReport<T> {
    /// Energy of the given mask minus the energy of the exact mask step at `u`.
    pub mask_gap: T,
    pub mask_optimal: bool,
    /// Objective decrease achieved by re-running the image step from `u`.
    pub image_gap: T,
    /// Allowed decrease: `10 * rel_tol * |F(u, mask)|`.
    pub image_slack: T,
    pub image_optimal: bool,
    /// Pixels within `1e-9` of the mask decision boundary.
    pub boundary_pixels: usize,
    /// No boundary pixels: the optimal mask at `u` is unique.
    pub unique_mask: bool,
    /// Mask and image are each optimal with the other held fixed.
    pub certified: bool,
}

const BOUNDARY_TOL: f64 = 1e-9;
const MASK_GAP_TOL: f64 = 1e-10;

/// Mask-dependent part of the energy, including the tie perturbation.
fn mask_term<T: Scalar>(u: &Image<T>, mask: &Mask, f: &Image<T>, cfg: &SolverConfig<T>) -> Result<T> {
    let mut term = masked_fidelity(u, mask, f)?;
    if let Some(p) = perturbation(&cfg.tie_rule, u.len()) {
        for (&keep, d) in mask.bits().iter().zip(p) {
            if keep {
                term += d;
            }
        }
    }
    Ok(match cfg.form {
        Form::Penalty { lambda2 } => term + lambda2 * T::of_usize(mask.zeros_count()),
        Form::Constraint { budget } if mask.zeros_count() > budget => T::infinity(),
        Form::Constraint { .. } => term,
    })
}

/// Check that `(u, mask)` is a coordinatewise minimum of the configured energy:
/// the mask is an exact minimizer for fixed `u`, and a fresh image step from
/// `u` cannot lower the energy by more than the inner-solver slack. Also
/// reports pixels on the mask decision boundary, whose absence means the
/// optimal mask is unique and the point is a local minimum.
pub fn verify_coordinatewise_min<T: Scalar>(
    u: &Image<T>,
    mask: &Mask,
    f: &Image<T>,
    cfg: &SolverConfig<T>,
) -> Result<CoordinatewiseReport<T>> {
    u.ensure_same_dims(f)?;
    u.ensure_mask_dims(mask)?;
    cfg.validate(u.len())?;

    let best = update_mask(u, f, cfg)?;
    let current_term = mask_term(u, mask, f, cfg)?;
    let best_term = mask_term(u, &best, f, cfg)?;
    let mask_gap = current_term - best_term;
    let mask_optimal = mask_gap <= T::of(MASK_GAP_TOL) * best_term.abs().max(T::one());

    let objective = inpaint_objective(u, mask, f, cfg.lambda1)?;
    let resolved = tv_inpaint(f, mask, cfg.lambda1, &cfg.inner, Some(u))?;
    let image_gap = objective - inpaint_objective(&resolved.image, mask, f, cfg.lambda1)?;
    let image_slack = T::of(10.0) * cfg.inner.rel_tol * cfg.energy(u, mask, f)?.abs();
    let image_optimal = image_gap <= image_slack;

    let scores = mask_scores(u, f, &cfg.tie_rule)?;
    let tol = T::of(BOUNDARY_TOL);
    let boundary_pixels = match cfg.form {
        Form::Penalty { lambda2 } => scores.iter().filter(|&&s| (s - lambda2).abs() <= tol).count(),
        Form::Constraint { budget } if budget == 0 || budget >= scores.len() => 0,
        Form::Constraint { budget } => {
            let order = drop_order(&scores, &cfg.tie_rule);
            let (above, below) = (scores[order[budget - 1]], scores[order[budget]]);
            if above - below <= tol {
                scores
                    .iter()
                    .filter(|&&s| (s - above).abs() <= tol || (s - below).abs() <= tol)
                    .count()
            } else {
                0
            }
        }
    };

    Ok(CoordinatewiseReport {
        mask_gap,
        mask_optimal,
        image_gap,
        image_slack,
        image_optimal,
        boundary_pixels,
        unique_mask: boundary_pixels == 0,
        certified: mask_optimal && image_optimal,
    })
}
