//! DFT-based 2-D circular convolution: kernel centering, OTF banks, forward
//! blur, and the per-slice residual back-projection the gradients need.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Forward/inverse 2-D DFT plans for one P x Q plane size.
///
/// The transform is unnormalized going forward; the inverse carries the
/// 1/(P*Q) factor, so `inverse(forward(x)) == x` up to roundoff.
#[derive(Clone)]
pub struct Fft2<T: Scalar> {
    p: usize,
    q: usize,
    row_fwd: Arc<dyn Fft<T>>,
    row_inv: Arc<dyn Fft<T>>,
    col_fwd: Arc<dyn Fft<T>>,
    col_inv: Arc<dyn Fft<T>>,
}

impl<T: Scalar> Fft2<T> {
    pub fn new(p: usize, q: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            p,
            q,
            row_fwd: planner.plan_fft_forward(q),
            row_inv: planner.plan_fft_inverse(q),
            col_fwd: planner.plan_fft_forward(p),
            col_inv: planner.plan_fft_inverse(p),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    /// 2-D DFT of a real P x Q matrix.
    pub fn forward(&self, image: ArrayView2<'_, T>) -> Array2<Complex<T>> {
        debug_assert_eq!(image.dim(), (self.p, self.q));
        let mut buf: Vec<Complex<T>> = image.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.transform(&mut buf, true);
        Array2::from_shape_vec((self.p, self.q), buf).expect("buffer holds p*q values")
    }

    /// Inverse 2-D DFT, normalized by 1/(P*Q).
    pub fn inverse(&self, spectrum: &Array2<Complex<T>>) -> Array2<Complex<T>> {
        debug_assert_eq!(spectrum.dim(), (self.p, self.q));
        let mut buf: Vec<Complex<T>> = spectrum.iter().copied().collect();
        self.transform(&mut buf, false);
        let scale = T::one() / T::of((self.p * self.q) as f64);
        for z in buf.iter_mut() {
            *z *= scale;
        }
        Array2::from_shape_vec((self.p, self.q), buf).expect("buffer holds p*q values")
    }

    /// Inverse transform collapsed to its real part after asserting the
    /// imaginary residue is negligible (it is, whenever the spectrum came
    /// from real-valued data through this module).
    pub fn inverse_real(&self, spectrum: &Array2<Complex<T>>) -> Array2<T> {
        let full = self.inverse(spectrum);
        let mut worst = T::zero();
        for z in full.iter() {
            worst = worst.max(z.im.abs());
        }
        assert!(
            worst <= T::imag_residue_tol(),
            "imaginary residue {:e} exceeds {:e}; spectrum was not real-consistent",
            worst,
            T::imag_residue_tol()
        );
        full.mapv(|z| z.re)
    }

    /// Row-column decomposition; rustfft batches all rows of one axis per call.
    fn transform(&self, buf: &mut Vec<Complex<T>>, forward: bool) {
        let (row, col) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        row.process(buf);
        let mut flipped = transposed(buf, self.p, self.q);
        col.process(&mut flipped);
        *buf = transposed(&flipped, self.q, self.p);
    }
}

impl<T: Scalar> fmt::Debug for Fft2<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2")
            .field("p", &self.p)
            .field("q", &self.q)
            .finish()
    }
}

fn transposed<T: Copy>(src: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for c in 0..cols {
        for r in 0..rows {
            out.push(src[r * cols + c]);
        }
    }
    out
}

/// Zero-pads a k x k kernel (k odd) onto a P x Q plane, circularly shifted so
/// the kernel's center lands at (0, 0). DFT-domain multiplication by the
/// result then blurs each pixel with the kernel centered on it.
pub fn center_and_pad<T: Scalar>(
    kernel: ArrayView2<'_, T>,
    p: usize,
    q: usize,
) -> Result<Array2<T>> {
    let k = kernel.nrows();
    if kernel.ncols() != k {
        return Err(Error::InvalidArgument(format!(
            "kernel must be square, got {}x{}",
            kernel.nrows(),
            kernel.ncols()
        )));
    }
    if k.is_multiple_of(2) {
        return Err(Error::EvenKernelSize(k));
    }
    if k > p || k > q {
        return Err(Error::KernelTooLarge { size: k, p, q });
    }
    let c = k / 2;
    let mut out = Array2::zeros((p, q));
    for i in 0..k {
        for j in 0..k {
            out[[(i + p - c) % p, (j + q - c) % q]] = kernel[[i, j]];
        }
    }
    Ok(out)
}

/// Circular 2-D convolution: IDFT{ otf ⊙ DFT{image} }.
pub fn convolve<T: Scalar>(
    fft: &Fft2<T>,
    otf: &Array2<Complex<T>>,
    image: ArrayView2<'_, T>,
) -> Result<Array2<T>> {
    check_plane(fft, otf.dim(), "otf")?;
    check_plane(fft, image.dim(), "image")?;
    let mut spectrum = fft.forward(image);
    spectrum.zip_mut_with(otf, |x, h| *x *= *h);
    Ok(fft.inverse_real(&spectrum))
}

/// Data-consistency residual in the transform domain: Ĥ ⊙ DFT{X} − Ŷ.
pub(crate) fn residual_hat<T: Scalar>(
    fft: &Fft2<T>,
    otf: &Array2<Complex<T>>,
    x: ArrayView2<'_, T>,
    yhat: &Array2<Complex<T>>,
) -> Array2<Complex<T>> {
    let mut spectrum = fft.forward(x);
    ndarray::Zip::from(&mut spectrum)
        .and(otf)
        .and(yhat)
        .for_each(|s, &h, &y| *s = h * *s - y);
    spectrum
}

/// Applies the adjoint blur to a transform-domain residual and returns the
/// spatial-domain result.
pub(crate) fn backproject<T: Scalar>(
    fft: &Fft2<T>,
    otf: &Array2<Complex<T>>,
    rhat: &Array2<Complex<T>>,
) -> Array2<T> {
    let mut spectrum = rhat.clone();
    spectrum.zip_mut_with(otf, |s, h| *s = h.conj() * *s);
    fft.inverse_real(&spectrum)
}

/// The gradient's per-slice intermediate term
/// S_i = IDFT{ conj(Ĥ_i) ⊙ (Ĥ_i ⊙ DFT{X_i} − Ŷ_i) }.
///
/// The outer factor applies the adjoint of the blur, i.e. the conjugate
/// transfer function. For real symmetric kernels the OTF is real and the
/// conjugation is a no-op; for asymmetric kernels it is what makes this the
/// true partial gradient of the data term (finite differences agree only
/// with the conjugated form).
pub fn residual_term<T: Scalar>(
    fft: &Fft2<T>,
    otf: &Array2<Complex<T>>,
    x: ArrayView2<'_, T>,
    yhat: &Array2<Complex<T>>,
) -> Result<Array2<T>> {
    check_plane(fft, otf.dim(), "otf")?;
    check_plane(fft, x.dim(), "slice")?;
    check_plane(fft, yhat.dim(), "observed spectrum")?;
    let rhat = residual_hat(fft, otf, x, yhat);
    Ok(backproject(fft, otf, &rhat))
}

fn check_plane<T: Scalar>(fft: &Fft2<T>, dim: (usize, usize), what: &str) -> Result<()> {
    if dim != (fft.p(), fft.q()) {
        return Err(Error::DimensionMismatch(format!(
            "{} is {}x{}, expected {}x{}",
            what,
            dim.0,
            dim.1,
            fft.p(),
            fft.q()
        )));
    }
    Ok(())
}

/// The N per-band blur kernels (stored centered on the P x Q plane) together
/// with their precomputed OTFs and the FFT plans for that plane size.
///
/// Immutable once built; cheap to share read-only. Spectrally invariant
/// banks share one kernel/OTF allocation across all bands.
#[derive(Clone)]
pub struct KernelBank<T: Scalar> {
    kernels: Vec<Arc<Array2<T>>>,
    otfs: Vec<Arc<Array2<Complex<T>>>>,
    fft: Fft2<T>,
}

impl<T: Scalar> KernelBank<T> {
    /// One kernel applied to every band.
    pub fn from_single_kernel(
        kernel: ArrayView2<'_, T>,
        p: usize,
        q: usize,
        n: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("band count must be >= 1".into()));
        }
        let fft = Fft2::new(p, q);
        let padded = Arc::new(center_and_pad(kernel, p, q)?);
        let otf = Arc::new(fft.forward(padded.view()));
        Ok(KernelBank {
            kernels: vec![Arc::clone(&padded); n],
            otfs: vec![Arc::clone(&otf); n],
            fft,
        })
    }

    /// One raw (small, uncentered) kernel per band.
    pub fn from_kernels(kernels: &[Array2<T>], p: usize, q: usize) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::InvalidArgument("band count must be >= 1".into()));
        }
        let fft = Fft2::new(p, q);
        let mut planes = Vec::with_capacity(kernels.len());
        let mut otfs = Vec::with_capacity(kernels.len());
        for kernel in kernels {
            let padded = Arc::new(center_and_pad(kernel.view(), p, q)?);
            otfs.push(Arc::new(fft.forward(padded.view())));
            planes.push(padded);
        }
        Ok(KernelBank {
            kernels: planes,
            otfs,
            fft,
        })
    }

    /// Rebuilds a bank from already centered P x Q planes (the on-disk form);
    /// OTFs are recomputed.
    pub fn from_padded_planes(planes: Vec<Array2<T>>) -> Result<Self> {
        let n = planes.len();
        if n == 0 {
            return Err(Error::InvalidArgument("band count must be >= 1".into()));
        }
        let (p, q) = planes[0].dim();
        if p == 0 || q == 0 {
            return Err(Error::InvalidArgument(
                "kernel planes must be non-empty".into(),
            ));
        }
        if let Some(bad) = planes.iter().find(|pl| pl.dim() != (p, q)) {
            return Err(Error::DimensionMismatch(format!(
                "kernel planes disagree: {}x{} vs {}x{}",
                bad.dim().0,
                bad.dim().1,
                p,
                q
            )));
        }
        let fft = Fft2::new(p, q);
        let otfs = planes
            .iter()
            .map(|pl| Arc::new(fft.forward(pl.view())))
            .collect();
        Ok(KernelBank {
            kernels: planes.into_iter().map(Arc::new).collect(),
            otfs,
            fft,
        })
    }

    pub fn p(&self) -> usize {
        self.fft.p()
    }

    pub fn q(&self) -> usize {
        self.fft.q()
    }

    pub fn n(&self) -> usize {
        self.otfs.len()
    }

    /// Centered spatial-domain kernel for band `i`.
    pub fn kernel(&self, i: usize) -> &Array2<T> {
        &self.kernels[i]
    }

    /// OTF for band `i`.
    pub fn otf(&self, i: usize) -> &Array2<Complex<T>> {
        &self.otfs[i]
    }

    pub fn fft(&self) -> &Fft2<T> {
        &self.fft
    }
}

impl<T: Scalar> fmt::Debug for KernelBank<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelBank")
            .field("p", &self.p())
            .field("q", &self.q())
            .field("n", &self.n())
            .finish()
    }
}
