//! Restoration of images corrupted by impulse noise and mixed Gaussian-impulse
//! noise by blind inpainting.
//!
//! The damaged-pixel mask and the image are estimated jointly by alternating
//! between a total-variation inpainting solve and an exact mask update. Two
//! forms are provided: a penalty form with a fixed residual threshold
//! ([`blind::solve_penalty`]) and a constraint form that bounds the number of
//! outliers (adaptive outlier pursuit, [`blind::solve_aop`]).
//!
//! All numerical code is generic over the floating-point scalar; the crate
//! root exports `f64` and `f32` aliases for the common types.

pub mod blind;
pub mod config;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod filters;
pub mod image;
pub mod metrics;
pub mod noise;
pub mod pgm;
pub mod rng;
pub mod scalar;
pub mod synthetic;
pub mod tv_solver;

pub use blind::{
    solve_aop, solve_penalty, two_stage, update_mask_constraint, update_mask_penalty,
    verify_coordinatewise_min, Detector, Form, IterationRecord, RestoreResult, SolverConfig,
    TieRule,
};
pub use energy::{
    constraint_energy, eliminated_penalty_energy, penalty_energy, robust_penalty,
    total_variation, RobustPenalty,
};
pub use error::{Error, Result};
pub use filters::{acwmf, amf, AcwmfConfig, AmfConfig};
pub use image::{DynamicRange, Image, Mask};
pub use metrics::{detection_stats, psnr, DetectionStats};
pub use noise::{add_gaussian, add_impulse, simulate_mixed_nll, ImpulseKind, NoiseSpec};
pub use scalar::Scalar;
pub use tv_solver::{tv_inpaint, tvl1_denoise, InnerConfig, InpaintSolution};

pub type Image64 = Image<f64>;
pub type Image32 = Image<f32>;
pub type DynamicRange64 = DynamicRange<f64>;
pub type SolverConfig64 = SolverConfig<f64>;
pub type SolverConfig32 = SolverConfig<f32>;
pub type InnerConfig64 = InnerConfig<f64>;
pub type RestoreResult64 = RestoreResult<f64>;
pub type TieRule64 = TieRule<f64>;
pub type NoiseSpec64 = NoiseSpec<f64>;
