//! Synthetic data: low-rank ground-truth cubes, Gaussian blur kernels, the
//! blur+noise degradation pipeline, and a rank-sweep experiment driver.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fourier::{self, KernelBank};
use crate::scalar::Scalar;
use crate::solver::{self, SolverConfig};
use crate::tensor::{parameter_count, reconstruct_cube, CpdFactors, HsiCube};

/// Blur-and-noise protocol applied to a clean cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationSpec<T> {
    /// Side length of the Gaussian kernel; must be odd. Size 1 means no
    /// blur at all.
    pub kernel_size: usize,
    pub kernel_sigma: T,
    /// Standard deviation of the additive white Gaussian noise; 0 disables
    /// the noise draw entirely.
    pub noise_sigma: T,
    pub seed: u64,
    /// Only `true` is supported: one kernel shared by all bands. `false` is
    /// reserved for per-band kernels and currently returns an error.
    pub spectrally_invariant: bool,
}

impl<T: Scalar> Default for DegradationSpec<T> {
    /// The standard protocol: 9x9 Gaussian kernel with sigma 2, noise
    /// sigma 0.01, applied identically to every band.
    fn default() -> Self {
        DegradationSpec {
            kernel_size: 9,
            kernel_sigma: T::of(2.0),
            noise_sigma: T::of(0.01),
            seed: 0,
            spectrally_invariant: true,
        }
    }
}

/// Normalized (unit mass) Gaussian kernel of odd side `size`.
pub fn gaussian_kernel<T: Scalar>(size: usize, sigma: T) -> Result<Array2<T>> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(Error::EvenKernelSize(size));
    }
    if !(sigma > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "kernel sigma must be positive, got {:e}",
            sigma
        )));
    }
    let c = (size / 2) as isize;
    let half = T::of(0.5);
    let mut kernel = Array2::zeros((size, size));
    let mut mass = T::zero();
    for i in 0..size {
        for j in 0..size {
            let di = T::of((i as isize - c) as f64) / sigma;
            let dj = T::of((j as isize - c) as f64) / sigma;
            let v = (-half * (di * di + dj * dj)).exp();
            kernel[[i, j]] = v;
            mass += v;
        }
    }
    kernel.mapv_inplace(|v| v / mass);
    Ok(kernel)
}

/// Blurs every band with the Gaussian kernel described by `spec` and adds
/// white Gaussian noise, returning the observed cube together with the
/// kernel bank that produced it.
///
/// Noise is drawn from one ChaCha8 generator per band, seeded with
/// `spec.seed` and keyed by the band index through the generator's stream,
/// so bands are independent and the output does not depend on band order.
/// With `noise_sigma == 0` no generator is created and the output is exactly
/// the blurred cube; with `kernel_size == 1` the blur is skipped too, making
/// degradation the identity.
pub fn degrade<T: Scalar>(
    clean: &HsiCube<T>,
    spec: &DegradationSpec<T>,
) -> Result<(HsiCube<T>, KernelBank<T>)> {
    if !spec.spectrally_invariant {
        return Err(Error::InvalidArgument(
            "spectrally varying degradation is not implemented; set spectrally_invariant".into(),
        ));
    }
    if !(spec.noise_sigma >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be non-negative, got {:e}",
            spec.noise_sigma
        )));
    }
    let kernel = gaussian_kernel(spec.kernel_size, spec.kernel_sigma)?;
    let bank = KernelBank::from_single_kernel(kernel.view(), clean.p(), clean.q(), clean.n())?;

    let mut observed = HsiCube::zeros(clean.p(), clean.q(), clean.n())?;
    for i in 0..clean.n() {
        if spec.kernel_size == 1 {
            // a 1x1 unit-mass kernel is the identity; skip the transform so
            // the noiseless case reproduces the input bit for bit
            observed.band_mut(i).assign(&clean.band(i));
        } else {
            let blurred = fourier::convolve(bank.fft(), bank.otf(i), clean.band(i))?;
            observed.band_mut(i).assign(&blurred);
        }
        if spec.noise_sigma > T::zero() {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64);
            for v in observed.band_mut(i).iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += spec.noise_sigma * T::of(z);
            }
        }
    }
    Ok((observed, bank))
}

/// Draws random non-negative factors, smooths the spatial ones, and scales
/// the spectral factor so the reconstructed cube peaks at 1. Returns the
/// cube together with the exact factors that generate it (the cube is
/// reconstructed from the returned factors, bit for bit).
///
/// `smoothness` counts passes of a 3-tap moving average (window shrinking
/// at the boundaries) over the columns of A and B; 0 leaves the uniform
/// draws untouched.
pub fn synth_lowrank<T: Scalar>(
    p: usize,
    q: usize,
    n: usize,
    r: usize,
    seed: u64,
    smoothness: usize,
) -> Result<(HsiCube<T>, CpdFactors<T>)> {
    if p == 0 || q == 0 || n == 0 || r == 0 {
        return Err(Error::InvalidArgument(format!(
            "synth_lowrank needs all dimensions >= 1, got {p}x{q}x{n} rank {r}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize| Array2::from_shape_fn((rows, r), |_| T::of(rng.random::<f64>()));
    let mut a = draw(p);
    let mut b = draw(q);
    let c = draw(n);
    for _ in 0..smoothness {
        smooth_columns(&mut a);
        smooth_columns(&mut b);
    }
    let mut factors = CpdFactors::new(a, b, c)?;

    let peak = reconstruct_cube(&factors)
        .values()
        .iter()
        .fold(T::zero(), |m, &v| m.max(v));
    if peak > T::zero() {
        factors.c.mapv_inplace(|v| v / peak);
    }
    let cube = reconstruct_cube(&factors);
    Ok((cube, factors))
}

fn smooth_columns<T: Scalar>(m: &mut Array2<T>) {
    let rows = m.nrows();
    if rows <= 1 {
        return;
    }
    for c in 0..m.ncols() {
        let old: Vec<T> = m.column(c).to_vec();
        for i in 0..rows {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(rows - 1);
            let mut acc = T::zero();
            for v in &old[lo..=hi] {
                acc += *v;
            }
            m[[i, c]] = acc / T::of((hi - lo + 1) as f64);
        }
    }
}

/// One row of a rank-sweep experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T> {
    pub rank: usize,
    /// (P + Q + N) · rank — the model size at this rank.
    pub parameter_count: usize,
    /// Best PSNR against the clean cube over the run's iterates; `None` when
    /// the run failed.
    pub best_psnr: Option<T>,
    /// Error message for a failed run.
    pub error: Option<String>,
}

/// Degrades `clean` once, then solves it at every rank in `ranks`, recording
/// the best PSNR each rank reaches over its iterates. A failed run becomes a
/// row with an error message instead of aborting the sweep.
pub fn rank_sweep<T: Scalar>(
    clean: &HsiCube<T>,
    deg: &DegradationSpec<T>,
    base: &SolverConfig<T>,
    ranks: &[usize],
) -> Result<Vec<SweepRow<T>>> {
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("rank list must be non-empty".into()));
    }
    let (observed, bank) = degrade(clean, deg)?;
    let mut rows = Vec::with_capacity(ranks.len());
    for &rank in ranks {
        let parameter_count = parameter_count(clean.p(), clean.q(), clean.n(), rank)?;
        let mut config = base.clone();
        config.rank = rank;
        let row = match solver::solve_traced(&observed, &bank, &config, None, Some(clean), |_| {}) {
            Ok(report) => {
                let best = report
                    .psnr_trace
                    .expect("reference supplied")
                    .into_iter()
                    .fold(T::neg_infinity(), |m, v| m.max(v));
                SweepRow {
                    rank,
                    parameter_count,
                    best_psnr: Some(best),
                    error: None,
                }
            }
            Err(e) => SweepRow {
                rank,
                parameter_count,
                best_psnr: None,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    Ok(rows)
}
