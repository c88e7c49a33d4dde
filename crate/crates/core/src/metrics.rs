//! Reconstruction quality metrics.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::HsiCube;

/// PSNR values are clipped here (in dB) once the residual drops below
/// `peak * 1e-10`, where the ratio stops being numerically meaningful.
pub const PSNR_CAP_DB: f64 = 200.0;

/// Root-mean-square error over all voxels.
pub fn rmse<T: Scalar>(reference: &HsiCube<T>, test: &HsiCube<T>) -> Result<T> {
    check_same_shape(reference, test)?;
    let mut acc = T::zero();
    for (a, b) in reference.values().iter().zip(test.values()) {
        let d = *a - *b;
        acc += d * d;
    }
    Ok((acc / T::of(reference.values().len() as f64)).sqrt())
}

/// 20·log10(peak / rmse), capped at [`PSNR_CAP_DB`] for near-exact
/// reconstructions. `peak` is the nominal signal maximum (1.0 for the
/// normalized cubes this crate produces).
pub fn psnr<T: Scalar>(reference: &HsiCube<T>, test: &HsiCube<T>, peak: T) -> Result<T> {
    if !(peak > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "peak must be positive, got {:e}",
            peak
        )));
    }
    let e = rmse(reference, test)?;
    if e < peak * T::of(1e-10) {
        return Ok(T::of(PSNR_CAP_DB));
    }
    Ok(T::of(20.0) * (peak / e).log10())
}

fn check_same_shape<T: Scalar>(reference: &HsiCube<T>, test: &HsiCube<T>) -> Result<()> {
    if (reference.p(), reference.q(), reference.n()) != (test.p(), test.q(), test.n()) {
        return Err(Error::DimensionMismatch(format!(
            "cubes differ: {}x{}x{} vs {}x{}x{}",
            reference.p(),
            reference.q(),
            reference.n(),
            test.p(),
            test.q(),
            test.n()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_from(values: Vec<f64>, p: usize, q: usize, n: usize) -> HsiCube<f64> {
        HsiCube::from_vec(p, q, n, values).unwrap()
    }

    #[test]
    fn identical_cubes_have_zero_rmse_and_capped_psnr() {
        let a = cube_from(vec![0.25; 8], 2, 2, 2);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), 200.0);
    }

    #[test]
    fn uniform_offset_has_known_rmse() {
        let a = cube_from(vec![0.5; 12], 2, 3, 2);
        let b = cube_from(vec![0.6; 12], 2, 3, 2);
        assert!((rmse(&a, &b).unwrap() - 0.1).abs() <= 1e-15);
        // PSNR = 20·log10(1/0.1) = 20 dB
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() <= 1e-12);
    }

    #[test]
    fn halving_the_error_adds_six_db() {
        let a = cube_from(vec![0.0; 4], 2, 2, 1);
        let b = cube_from(vec![0.2; 4], 2, 2, 1);
        let c = cube_from(vec![0.1; 4], 2, 2, 1);
        let gain = psnr(&a, &c, 1.0).unwrap() - psnr(&a, &b, 1.0).unwrap();
        assert!((gain - 20.0 * 2.0f64.log10()).abs() <= 1e-12);
    }

    #[test]
    fn peak_rescales_psnr() {
        let a = cube_from(vec![0.0; 4], 2, 2, 1);
        let b = cube_from(vec![25.5; 4], 2, 2, 1);
        let db255 = psnr(&a, &b, 255.0).unwrap();
        assert!((db255 - 20.0).abs() <= 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = cube_from(vec![0.0; 4], 2, 2, 1);
        let b = cube_from(vec![0.0; 8], 2, 2, 2);
        assert!(rmse(&a, &b).is_err());
    }

    #[test]
    fn nonpositive_peak_is_rejected() {
        let a = cube_from(vec![0.0; 4], 2, 2, 1);
        assert!(psnr(&a, &a, 0.0).is_err());
        assert!(psnr(&a, &a, -1.0).is_err());
    }
}
