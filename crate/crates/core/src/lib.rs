//! Restoration of blurred, noisy hyperspectral cubes.
//!
//! A P×Q×N cube is modeled as a rank-R canonical polyadic decomposition —
//! spatial factors A (P×R) and B (Q×R) plus a spectral factor C (N×R), so
//! band i is A·diag(C(i,·))·Bᵀ — and fitted directly to the degraded
//! observation. The solver alternates proximal gradient updates over the
//! three factor blocks (PALM), with backtracking line searches, anisotropic
//! total-variation regularization on the spatial factors, Tikhonov damping
//! on everything, and non-negativity throughout. Blur is circular
//! convolution, applied and differentiated in the DFT domain.
//!
//! Modules:
//! - [`tensor`]: cube/factor containers and CPD reconstruction
//! - [`fourier`]: FFT plans, kernel banks, convolution, adjoint residuals
//! - [`objective`]: the composite objective and its block gradients
//! - [`prox`]: exact 1-D TV prox and non-negative projection
//! - [`solver`]: the PALM loop, line search, traces and reports
//! - [`metrics`]: RMSE / PSNR
//! - [`sim`]: synthetic cubes, Gaussian kernels, degradation, rank sweeps
//! - [`io`]: binary formats, config files, atomic writes
//!
//! Numerics are generic over [`Scalar`] (f64 or f32); the `*64` aliases
//! below name the double-precision types the CLI and file formats use.

// Validation deliberately writes `!(x > 0)` instead of `x <= 0`: the negated
// form also rejects NaN, which must never pass a range check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fourier;
pub mod io;
pub mod metrics;
pub mod objective;
pub mod prox;
pub mod scalar;
pub mod sim;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use fourier::{center_and_pad, convolve, residual_term, Fft2, KernelBank};
pub use metrics::{psnr, rmse};
pub use objective::{grad_a, grad_b, grad_c, objective, smooth_f, tv_norm, RegWeights};
pub use prox::{project_nonneg, prox_tv_1d, prox_tv_columns};
pub use scalar::Scalar;
pub use sim::{degrade, gaussian_kernel, rank_sweep, synth_lowrank, DegradationSpec, SweepRow};
pub use solver::{
    backtrack_ls, initialize_factors, solve, solve_traced, Block, SolveReport, SolverConfig,
    StepEvent, StopReason,
};
pub use tensor::{parameter_count, reconstruct_cube, reconstruct_slice, CpdFactors, HsiCube};

/// Double-precision aliases — the concrete types used by the CLI and the
/// on-disk formats.
pub type Cube64 = tensor::HsiCube<f64>;
pub type Factors64 = tensor::CpdFactors<f64>;
pub type KernelBank64 = fourier::KernelBank<f64>;
pub type SolverConfig64 = solver::SolverConfig<f64>;
pub type SolveReport64 = solver::SolveReport<f64>;
pub type DegradationSpec64 = sim::DegradationSpec<f64>;

/// Single-precision aliases, for callers trading accuracy for memory.
pub type Cube32 = tensor::HsiCube<f32>;
pub type Factors32 = tensor::CpdFactors<f32>;
pub type KernelBank32 = fourier::KernelBank<f32>;
pub type SolverConfig32 = solver::SolverConfig<f32>;
