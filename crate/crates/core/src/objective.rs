//! The composite objective: smooth data-fidelity + Tikhonov term, its three
//! block gradients, and the anisotropic TV penalties on the spatial factors.

use ndarray::{Array2, ArrayView1};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fourier::{self, KernelBank};
use crate::scalar::Scalar;
use crate::solver::Block;
use crate::tensor::{reconstruct_slice, CpdFactors, HsiCube};

/// Regularization weights. `lambda1..3` are the Tikhonov weights on A, B, C
/// inside the smooth term; `lambda_a`/`lambda_b` weight the non-smooth TV
/// penalties on the spatial factors (the spectral factor carries no TV).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegWeights<T> {
    pub lambda1: T,
    pub lambda2: T,
    pub lambda3: T,
    pub lambda_a: T,
    pub lambda_b: T,
}

impl<T: Scalar> RegWeights<T> {
    pub fn zero() -> Self {
        RegWeights {
            lambda1: T::zero(),
            lambda2: T::zero(),
            lambda3: T::zero(),
            lambda_a: T::zero(),
            lambda_b: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda_a", self.lambda_a),
            ("lambda_b", self.lambda_b),
        ];
        for (name, v) in all {
            if !(v >= T::zero()) {
                return Err(Error::InvalidArgument(format!(
                    "{} must be non-negative, got {:e}",
                    name, v
                )));
            }
        }
        Ok(())
    }
}

/// Σ|v_{j+1} − v_j| down one vector.
pub fn tv_norm<T: Scalar>(v: ArrayView1<'_, T>) -> T {
    let mut acc = T::zero();
    for j in 1..v.len() {
        acc += (v[j] - v[j - 1]).abs();
    }
    acc
}

/// weight · Σ_r TV(column r).
pub fn tv_penalty<T: Scalar>(m: &Array2<T>, weight: T) -> T {
    let mut acc = T::zero();
    for c in 0..m.ncols() {
        acc += tv_norm(m.column(c));
    }
    weight * acc
}

pub(crate) fn check_cube_kernels<T: Scalar>(
    observed: &HsiCube<T>,
    kernels: &KernelBank<T>,
) -> Result<()> {
    if (observed.p(), observed.q(), observed.n()) != (kernels.p(), kernels.q(), kernels.n()) {
        return Err(Error::DimensionMismatch(format!(
            "cube is {}x{}x{} but kernel bank is {}x{}x{}",
            observed.p(),
            observed.q(),
            observed.n(),
            kernels.p(),
            kernels.q(),
            kernels.n()
        )));
    }
    Ok(())
}

pub(crate) fn check_problem_dims<T: Scalar>(
    factors: &CpdFactors<T>,
    observed: &HsiCube<T>,
    kernels: &KernelBank<T>,
) -> Result<()> {
    check_cube_kernels(observed, kernels)?;
    if (factors.p(), factors.q(), factors.n()) != (observed.p(), observed.q(), observed.n()) {
        return Err(Error::DimensionMismatch(format!(
            "factors describe a {}x{}x{} cube but the observation is {}x{}x{}",
            factors.p(),
            factors.q(),
            factors.n(),
            observed.p(),
            observed.q(),
            observed.n()
        )));
    }
    Ok(())
}

/// DFT of every band of a cube, in band order.
pub(crate) fn dft_bands<T: Scalar>(
    cube: &HsiCube<T>,
    kernels: &KernelBank<T>,
) -> Vec<Array2<Complex<T>>> {
    (0..cube.n())
        .map(|i| kernels.fft().forward(cube.band(i)))
        .collect()
}

fn frob_sq<T: Scalar>(m: &Array2<T>) -> T {
    let mut acc = T::zero();
    for &v in m.iter() {
        acc += v * v;
    }
    acc
}

/// Shared evaluation pass. Walks the bands once, accumulating the residual
/// energy by Parseval in the transform domain, and optionally the gradient
/// for one block. Keeping a single accumulation path guarantees the solver's
/// recorded objective values and any external re-evaluation agree bit for
/// bit.
pub(crate) fn eval_cached<T: Scalar>(
    factors: &CpdFactors<T>,
    yhat: &[Array2<Complex<T>>],
    kernels: &KernelBank<T>,
    w: &RegWeights<T>,
    grad_for: Option<Block>,
) -> (T, Option<Array2<T>>) {
    let fft = kernels.fft();
    let inv_pq = T::one() / T::of((kernels.p() * kernels.q()) as f64);
    let two = T::of(2.0);
    let mut grad = grad_for.map(|block| match block {
        Block::A => &factors.a * (two * w.lambda1),
        Block::B => &factors.b * (two * w.lambda2),
        Block::C => &factors.c * (two * w.lambda3),
    });

    let mut energy = T::zero();
    for i in 0..kernels.n() {
        let x = reconstruct_slice(factors, i).expect("dimensions checked by callers");
        let rhat = fourier::residual_hat(fft, kernels.otf(i), x.view(), &yhat[i]);
        let mut e = T::zero();
        for z in rhat.iter() {
            e += z.norm_sqr();
        }
        energy += e * inv_pq;

        if let (Some(block), Some(g)) = (grad_for, grad.as_mut()) {
            let s = fourier::backproject(fft, kernels.otf(i), &rhat);
            match block {
                Block::A => {
                    let sb = s.dot(&factors.b);
                    *g += &(&sb * &factors.c.row(i));
                }
                Block::B => {
                    let sta = s.t().dot(&factors.a);
                    *g += &(&sta * &factors.c.row(i));
                }
                Block::C => {
                    // row i gets diag(Aᵀ S_i B) = column dots of A with S_i·B
                    let sb = s.dot(&factors.b);
                    for r in 0..factors.rank() {
                        let mut acc = T::zero();
                        for p in 0..factors.p() {
                            acc += factors.a[[p, r]] * sb[[p, r]];
                        }
                        g[[i, r]] += acc;
                    }
                }
            }
        }
    }

    let half = T::of(0.5);
    let f = half * energy
        + w.lambda1 * frob_sq(&factors.a)
        + w.lambda2 * frob_sq(&factors.b)
        + w.lambda3 * frob_sq(&factors.c);
    (f, grad)
}

pub(crate) fn smooth_f_cached<T: Scalar>(
    factors: &CpdFactors<T>,
    yhat: &[Array2<Complex<T>>],
    kernels: &KernelBank<T>,
    w: &RegWeights<T>,
) -> T {
    eval_cached(factors, yhat, kernels, w, None).0
}

/// Smooth part of the objective:
/// ½ Σ_i ‖Y_i − H_i ⋆ X_i‖²_F + λ₁‖A‖²_F + λ₂‖B‖²_F + λ₃‖C‖²_F,
/// with X_i the reconstructed slice. The residual energy is accumulated in
/// the transform domain (Parseval), which is exact up to roundoff.
pub fn smooth_f<T: Scalar>(
    factors: &CpdFactors<T>,
    observed: &HsiCube<T>,
    kernels: &KernelBank<T>,
    w: &RegWeights<T>,
) -> Result<T> {
    w.validate()?;
    check_problem_dims(factors, observed, kernels)?;
    let yhat = dft_bands(observed, kernels);
    Ok(smooth_f_cached(factors, &yhat, kernels, w))
}

/// Full objective: smooth part plus the TV penalties on A and B.
pub fn objective<T: Scalar>(
    factors: &CpdFactors<T>,
    observed: &HsiCube<T>,
    kernels: &KernelBank<T>,
    w: &RegWeights<T>,
) -> Result<T> {
    Ok(smooth_f(factors, observed, kernels, w)?
        + tv_penalty(&factors.a, w.lambda_a)
        + tv_penalty(&factors.b, w.lambda_b))
}

fn grad_block<T: Scalar>(
    block: Block,
    factors: &CpdFactors<T>,
    observed: &HsiCube<T>,
    kernels: &KernelBank<T>,
    w: &RegWeights<T>,
) -> Result<Array2<T>> {
    w.validate()?;
    check_problem_dims(factors, observed, kernels)?;
    let yhat = dft_bands(observed, kernels);
    Ok(eval_cached(factors, &yhat, kernels, w, Some(block))
        .1
        .expect("gradient requested"))
}

/// ∇_A f = Σ_i S_i · B · diag(C(i,·)) + 2λ₁A.
pub fn grad_a<T: Scalar>(
    factors: &CpdFactors<T>,
    observed: &HsiCube<T>,
    kernels: &KernelBank<T>,
    w: &RegWeights<T>,
) -> Result<Array2<T>> {
    grad_block(Block::A, factors, observed, kernels, w)
}

/// ∇_B f = Σ_i S_iᵀ · A · diag(C(i,·)) + 2λ₂B.
pub fn grad_b<T: Scalar>(
    factors: &CpdFactors<T>,
    observed: &HsiCube<T>,
    kernels: &KernelBank<T>,
    w: &RegWeights<T>,
) -> Result<Array2<T>> {
    grad_block(Block::B, factors, observed, kernels, w)
}

/// Row i of ∇_C f is diag(Aᵀ S_i B)ᵀ + 2λ₃C(i,·).
pub fn grad_c<T: Scalar>(
    factors: &CpdFactors<T>,
    observed: &HsiCube<T>,
    kernels: &KernelBank<T>,
    w: &RegWeights<T>,
) -> Result<Array2<T>> {
    grad_block(Block::C, factors, observed, kernels, w)
}
