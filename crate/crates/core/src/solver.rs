//! The PALM loop: three proximal block updates per iteration (A, then B,
//! then C, Gauss-Seidel style), each with a backtracking line search, plus
//! stopping rules and per-iteration reporting.

use std::fmt;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fourier::KernelBank;
use crate::metrics;
use crate::objective::{self, RegWeights};
use crate::prox;
use crate::scalar::Scalar;
use crate::tensor::{reconstruct_cube, CpdFactors, HsiCube};

/// The three coordinate blocks, in update order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    A = 0,
    B = 1,
    C = 2,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Block::A => write!(f, "A"),
            Block::B => write!(f, "B"),
            Block::C => write!(f, "C"),
        }
    }
}

/// Everything the solver needs besides the data itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub rank: usize,
    pub reg: RegWeights<T>,
    /// Line-search shrink factor, 0 < beta < 1.
    pub beta: T,
    /// Trial-step inflation: each block's first trial is the previously
    /// accepted step divided by eta, 0 < eta < 1.
    pub eta: T,
    /// Convergence threshold for both stopping rules.
    pub epsilon: T,
    pub max_iter: usize,
    /// Line-search shrink budget per block update.
    pub max_backtrack: usize,
    /// Seed for the factor initialization.
    pub seed: u64,
    /// Uniform initialization is scaled by this; `None` lets [`solve`] pick
    /// (mean(observed) / rank)^(1/3) so the initial reconstruction has
    /// roughly the observed mean.
    pub init_scale: Option<T>,
}

impl<T: Scalar> SolverConfig<T> {
    /// Defaults that behave well on normalized (peak ≈ 1) cubes.
    pub fn new(rank: usize) -> Self {
        SolverConfig {
            rank,
            reg: RegWeights {
                lambda1: T::of(1e-6),
                lambda2: T::of(1e-6),
                lambda3: T::of(1e-6),
                lambda_a: T::of(3e-3),
                lambda_b: T::of(3e-3),
            },
            beta: T::of(0.5),
            eta: T::of(0.5),
            epsilon: T::of(1e-6),
            max_iter: 500,
            max_backtrack: 60,
            seed: 0,
            init_scale: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidArgument("rank must be >= 1".into()));
        }
        if !(self.beta > T::zero() && self.beta < T::one()) {
            return Err(Error::InvalidArgument(format!(
                "beta must lie in (0, 1), got {:e}",
                self.beta
            )));
        }
        if !(self.eta > T::zero() && self.eta < T::one()) {
            return Err(Error::InvalidArgument(format!(
                "eta must lie in (0, 1), got {:e}",
                self.eta
            )));
        }
        if !(self.epsilon > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {:e}",
                self.epsilon
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
        }
        if self.max_backtrack == 0 {
            return Err(Error::InvalidArgument("max_backtrack must be >= 1".into()));
        }
        if let Some(s) = self.init_scale {
            if !(s >= T::zero()) {
                return Err(Error::InvalidArgument(format!(
                    "init_scale must be non-negative, got {:e}",
                    s
                )));
            }
        }
        self.reg.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// A stopping rule fired before the iteration budget ran out.
    Converged,
    /// The iteration budget ran out first.
    MaxIter,
}

/// Everything a run produces. Traces are indexed by outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    /// Objective at the initial factors, before any update.
    pub initial_objective: T,
    /// Objective after each completed iteration.
    pub objective_trace: Vec<T>,
    /// Accepted steps [c, d, e] per iteration.
    pub step_trace: Vec<[T; 3]>,
    /// Line-search shrink counts per iteration, same order.
    pub backtrack_counts: Vec<[usize; 3]>,
    /// PSNR of the reconstruction after each iteration, when a reference
    /// cube was supplied.
    pub psnr_trace: Option<Vec<T>>,
    pub iterations_run: usize,
    pub stop_reason: StopReason,
    pub final_factors: CpdFactors<T>,
}

/// One accepted block update, handed to the observer of
/// [`solve_traced`] for instrumentation and invariant checks.
pub struct StepEvent<'a, T> {
    /// Outer iteration index, starting at 0.
    pub iteration: usize,
    pub block: Block,
    /// The factors (A, B, C) at which the gradient and `f_at_point` were
    /// evaluated — blocks updated earlier in this iteration already hold
    /// their new values.
    pub eval_point: (&'a Array2<T>, &'a Array2<T>, &'a Array2<T>),
    pub gradient: &'a Array2<T>,
    /// The accepted update for this block (not yet written back when the
    /// observer runs).
    pub updated: &'a Array2<T>,
    /// Smooth objective at the evaluation point.
    pub f_at_point: T,
    /// First trial step (previous accepted step / eta).
    pub first_trial: T,
    pub accepted_step: T,
    pub shrinks: usize,
    /// Accepted sufficient-decrease test sides: f(updated) on the left,
    /// the quadratic model on the right.
    pub lhs: T,
    pub rhs: T,
}

/// Uniform non-negative initialization, scaled by `init_scale`. Draws run
/// through one seeded stream in a fixed order (A, then B, then C, each
/// row-major), so results are reproducible across platforms.
pub fn initialize_factors<T: Scalar>(
    p: usize,
    q: usize,
    n: usize,
    config: &SolverConfig<T>,
) -> Result<CpdFactors<T>> {
    config.validate()?;
    let scale = config.init_scale.ok_or_else(|| {
        Error::InvalidArgument(
            "init_scale is unset; solve derives it from the observed cube".into(),
        )
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut draw = |rows: usize| {
        Array2::from_shape_fn((rows, config.rank), |_| T::of(rng.random::<f64>()) * scale)
    };
    let a = draw(p);
    let b = draw(q);
    let c = draw(n);
    CpdFactors::new(a, b, c)
}

/// Result of one backtracking line search.
#[derive(Debug, Clone)]
pub struct LineSearchResult<T> {
    pub updated: Array2<T>,
    /// The step that produced `updated`.
    pub accepted_step: T,
    pub shrinks: usize,
    pub lhs: T,
    pub rhs: T,
}

/// Backtracking line search for one block.
///
/// Repeatedly evaluates the candidate `U = step(t)` (the caller's proximal
/// step at step size t) and accepts as soon as
///
/// ```text
/// f(U) <= f(Z) + <G, U − Z> + ‖U − Z‖²_F / (2t)
/// ```
///
/// with the same `t` that produced `U`; otherwise `t` shrinks by `beta`.
/// Fails with [`Error::BacktrackExhausted`] after `max_backtrack` shrinks.
#[allow(clippy::too_many_arguments)] // the search is fully parameterized on purpose
pub fn backtrack_ls<T: Scalar>(
    block: Block,
    current: &Array2<T>,
    gradient: &Array2<T>,
    f_at_current: T,
    trial_step: T,
    beta: T,
    max_backtrack: usize,
    mut smooth: impl FnMut(&Array2<T>) -> T,
    mut step: impl FnMut(T) -> Array2<T>,
) -> Result<LineSearchResult<T>> {
    if !(trial_step > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "trial step must be positive, got {:e}",
            trial_step
        )));
    }
    if !(beta > T::zero() && beta < T::one()) {
        return Err(Error::InvalidArgument(format!(
            "beta must lie in (0, 1), got {:e}",
            beta
        )));
    }
    debug_assert_eq!(current.dim(), gradient.dim());

    let half = T::of(0.5);
    let mut t = trial_step;
    let mut shrinks = 0usize;
    loop {
        let updated = step(t);
        debug_assert_eq!(updated.dim(), current.dim());
        let lhs = smooth(&updated);
        let mut inner = T::zero();
        let mut dist_sq = T::zero();
        for ((&u, &z), &g) in updated.iter().zip(current.iter()).zip(gradient.iter()) {
            let d = u - z;
            inner += g * d;
            dist_sq += d * d;
        }
        let rhs = f_at_current + inner + half * dist_sq / t;
        if lhs <= rhs {
            return Ok(LineSearchResult {
                updated,
                accepted_step: t,
                shrinks,
                lhs,
                rhs,
            });
        }
        if shrinks >= max_backtrack {
            return Err(Error::BacktrackExhausted {
                block,
                shrinks,
                last_step: t.to_f64().unwrap_or(f64::NAN),
                lhs: lhs.to_f64().unwrap_or(f64::NAN),
                rhs: rhs.to_f64().unwrap_or(f64::NAN),
            });
        }
        t *= beta;
        shrinks += 1;
    }
}

fn block_matrix<T>(factors: &CpdFactors<T>, block: Block) -> &Array2<T> {
    match block {
        Block::A => &factors.a,
        Block::B => &factors.b,
        Block::C => &factors.c,
    }
}

fn block_matrix_mut<T>(factors: &mut CpdFactors<T>, block: Block) -> &mut Array2<T> {
    match block {
        Block::A => &mut factors.a,
        Block::B => &mut factors.b,
        Block::C => &mut factors.c,
    }
}

fn rel_change<T: Scalar>(old: &Array2<T>, new: &Array2<T>) -> T {
    let mut num = T::zero();
    let mut den = T::zero();
    for (&o, &n) in old.iter().zip(new.iter()) {
        let d = n - o;
        num += d * d;
        den += o * o;
    }
    num.sqrt() / (den.sqrt() + T::one())
}

/// Runs the solver from a seeded random initialization.
pub fn solve<T: Scalar>(
    observed: &HsiCube<T>,
    kernels: &KernelBank<T>,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>> {
    solve_traced(observed, kernels, config, None, None, |_| {})
}

/// Full-control variant of [`solve`]: optional warm-start factors, an
/// optional reference cube (enables the PSNR trace), and an observer called
/// once per accepted block update.
pub fn solve_traced<T: Scalar>(
    observed: &HsiCube<T>,
    kernels: &KernelBank<T>,
    config: &SolverConfig<T>,
    init: Option<CpdFactors<T>>,
    reference: Option<&HsiCube<T>>,
    mut observer: impl FnMut(&StepEvent<'_, T>),
) -> Result<SolveReport<T>> {
    config.validate()?;
    objective::check_cube_kernels(observed, kernels)?;
    if let Some(cube) = reference {
        if (cube.p(), cube.q(), cube.n()) != (observed.p(), observed.q(), observed.n()) {
            return Err(Error::DimensionMismatch(format!(
                "reference cube is {}x{}x{}, observation is {}x{}x{}",
                cube.p(),
                cube.q(),
                cube.n(),
                observed.p(),
                observed.q(),
                observed.n()
            )));
        }
    }

    let mut resolved = config.clone();
    if resolved.init_scale.is_none() {
        // aim the initial reconstruction at the observed mean: R terms of
        // products of three uniform draws, each scaled by s, average to
        // roughly R·s³/8 — the cube root keeps the right order of magnitude
        let mean = observed.mean().max(T::zero());
        resolved.init_scale = Some((mean / T::of(config.rank as f64)).cbrt());
    }

    let mut factors = match init {
        Some(f) => {
            if (f.p(), f.q(), f.n()) != (observed.p(), observed.q(), observed.n())
                || f.rank() != config.rank
            {
                return Err(Error::DimensionMismatch(format!(
                    "warm start has shape {}x{}x{} rank {}, expected {}x{}x{} rank {}",
                    f.p(),
                    f.q(),
                    f.n(),
                    f.rank(),
                    observed.p(),
                    observed.q(),
                    observed.n(),
                    config.rank
                )));
            }
            f
        }
        None => initialize_factors(observed.p(), observed.q(), observed.n(), &resolved)?,
    };

    let yhat = objective::dft_bands(observed, kernels);
    let w = resolved.reg;

    let initial_objective = objective::smooth_f_cached(&factors, &yhat, kernels, &w)
        + objective::tv_penalty(&factors.a, w.lambda_a)
        + objective::tv_penalty(&factors.b, w.lambda_b);

    // previously accepted steps per block (c_k, d_k, e_k), all starting at 1
    let mut steps = [T::one(); 3];
    let mut objective_trace = Vec::new();
    let mut step_trace = Vec::new();
    let mut backtrack_counts = Vec::new();
    let mut psnr_trace = reference.map(|_| Vec::new());

    let mut prev_objective = initial_objective;
    let mut stop_reason = StopReason::MaxIter;
    let mut iterations_run = 0usize;

    for k in 0..resolved.max_iter {
        let mut iter_steps = [T::zero(); 3];
        let mut iter_backtracks = [0usize; 3];
        let mut max_change = T::zero();
        let mut last_smooth = T::zero();

        for block in [Block::A, Block::B, Block::C] {
            let idx = block as usize;
            let (f_here, grad) = objective::eval_cached(&factors, &yhat, kernels, &w, Some(block));
            let grad = grad.expect("gradient requested");
            let trial = steps[idx] / resolved.eta;
            let tv_weight = match block {
                Block::A => w.lambda_a,
                Block::B => w.lambda_b,
                Block::C => T::zero(), // no TV on the spectral factor
            };

            let current = block_matrix(&factors, block).clone();
            let mut scratch = factors.clone();
            let result = backtrack_ls(
                block,
                &current,
                &grad,
                f_here,
                trial,
                resolved.beta,
                resolved.max_backtrack,
                |candidate| {
                    block_matrix_mut(&mut scratch, block).assign(candidate);
                    objective::smooth_f_cached(&scratch, &yhat, kernels, &w)
                },
                |t| {
                    let stepped = &current - &(&grad * t);
                    if tv_weight > T::zero() {
                        prox::project_nonneg(&prox::prox_tv_columns(&stepped, t * tv_weight))
                    } else {
                        prox::project_nonneg(&stepped)
                    }
                },
            )?;

            observer(&StepEvent {
                iteration: k,
                block,
                eval_point: (&factors.a, &factors.b, &factors.c),
                gradient: &grad,
                updated: &result.updated,
                f_at_point: f_here,
                first_trial: trial,
                accepted_step: result.accepted_step,
                shrinks: result.shrinks,
                lhs: result.lhs,
                rhs: result.rhs,
            });

            max_change = max_change.max(rel_change(&current, &result.updated));
            steps[idx] = result.accepted_step;
            iter_steps[idx] = result.accepted_step;
            iter_backtracks[idx] = result.shrinks;
            if block == Block::C {
                // block C goes last, so its accepted lhs is the smooth
                // objective at the fully updated factors
                last_smooth = result.lhs;
            }
            *block_matrix_mut(&mut factors, block) = result.updated;
        }

        let objective_now = last_smooth
            + objective::tv_penalty(&factors.a, w.lambda_a)
            + objective::tv_penalty(&factors.b, w.lambda_b);

        objective_trace.push(objective_now);
        step_trace.push(iter_steps);
        backtrack_counts.push(iter_backtracks);
        if let (Some(trace), Some(cube)) = (psnr_trace.as_mut(), reference) {
            let recon = reconstruct_cube(&factors);
            trace.push(metrics::psnr(cube, &recon, T::one())?);
        }

        iterations_run = k + 1;
        let rel_decrease = (prev_objective - objective_now) / (prev_objective.abs() + T::one());
        prev_objective = objective_now;
        if max_change < resolved.epsilon || rel_decrease < resolved.epsilon {
            stop_reason = StopReason::Converged;
            break;
        }
    }

    Ok(SolveReport {
        initial_objective,
        objective_trace,
        step_trace,
        backtrack_counts,
        psnr_trace,
        iterations_run,
        stop_reason,
        final_factors: factors,
    })
}
