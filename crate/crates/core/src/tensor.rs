//! Cube and CPD factor containers plus low-rank reconstruction.

use ndarray::{Array2, Array3, ArrayView2, ArrayViewMut2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A dense P x Q x N hyperspectral cube.
///
/// Stored band-major: band index outermost, row-major within each P x Q
/// frontal slice, so every slice is contiguous in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube<T> {
    data: Array3<T>,
}

impl<T: Scalar> HsiCube<T> {
    /// All-zero cube with `p` rows, `q` columns, `n` bands.
    pub fn zeros(p: usize, q: usize, n: usize) -> Result<Self> {
        check_dims(p, q, n)?;
        Ok(HsiCube {
            data: Array3::zeros((n, p, q)),
        })
    }

    /// Builds a cube from slice-major (band outer, row-major in slice) values.
    pub fn from_vec(p: usize, q: usize, n: usize, values: Vec<T>) -> Result<Self> {
        check_dims(p, q, n)?;
        let expected = p
            .checked_mul(q)
            .and_then(|pq| pq.checked_mul(n))
            .ok_or(Error::Overflow("cube size"))?;
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "cube payload holds {} values, {}x{}x{} needs {}",
                values.len(),
                p,
                q,
                n,
                expected
            )));
        }
        let data = Array3::from_shape_vec((n, p, q), values).expect("length checked above");
        Ok(HsiCube { data })
    }

    pub fn p(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn q(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn n(&self) -> usize {
        self.data.shape()[0]
    }

    /// Frontal slice `i` as a P x Q view. Panics if `i >= n`.
    pub fn band(&self, i: usize) -> ArrayView2<'_, T> {
        self.data.index_axis(Axis(0), i)
    }

    pub fn band_mut(&mut self, i: usize) -> ArrayViewMut2<'_, T> {
        self.data.index_axis_mut(Axis(0), i)
    }

    /// Slice-major view of every value.
    pub fn values(&self) -> &[T] {
        self.data.as_slice().expect("cube storage is contiguous")
    }

    pub fn mean(&self) -> T {
        let total: T = self.values().iter().copied().sum();
        total / T::of(self.values().len() as f64)
    }
}

fn check_dims(p: usize, q: usize, n: usize) -> Result<()> {
    if p == 0 || q == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "cube dimensions must all be >= 1, got {}x{}x{}",
            p, q, n
        )));
    }
    Ok(())
}

/// The CPD factor triple (A, B, C): A is P x R, B is Q x R, C is N x R.
///
/// Columns line up across the three matrices; column r of each contributes
/// one rank-one component. Feasible factors are entry-wise non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct CpdFactors<T> {
    pub a: Array2<T>,
    pub b: Array2<T>,
    pub c: Array2<T>,
}

impl<T: Scalar> CpdFactors<T> {
    pub fn new(a: Array2<T>, b: Array2<T>, c: Array2<T>) -> Result<Self> {
        let r = a.ncols();
        if r == 0 || b.ncols() != r || c.ncols() != r {
            return Err(Error::DimensionMismatch(format!(
                "factor ranks disagree: A has {} columns, B {}, C {}",
                a.ncols(),
                b.ncols(),
                c.ncols()
            )));
        }
        if a.nrows() == 0 || b.nrows() == 0 || c.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "factor matrices need at least one row".into(),
            ));
        }
        Ok(CpdFactors { a, b, c })
    }

    pub fn zeros(p: usize, q: usize, n: usize, r: usize) -> Result<Self> {
        check_dims(p, q, n)?;
        if r == 0 {
            return Err(Error::InvalidArgument("rank must be >= 1".into()));
        }
        Ok(CpdFactors {
            a: Array2::zeros((p, r)),
            b: Array2::zeros((q, r)),
            c: Array2::zeros((n, r)),
        })
    }

    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn p(&self) -> usize {
        self.a.nrows()
    }

    pub fn q(&self) -> usize {
        self.b.nrows()
    }

    pub fn n(&self) -> usize {
        self.c.nrows()
    }
}

/// Frontal slice i of the model: X_i = A diag(C(i,:)) B^T.
pub fn reconstruct_slice<T: Scalar>(factors: &CpdFactors<T>, band: usize) -> Result<Array2<T>> {
    if band >= factors.n() {
        return Err(Error::BandOutOfRange {
            index: band,
            bands: factors.n(),
        });
    }
    // Broadcasting the C row over A scales column r by C(band, r);
    // one matrix product then forms the slice in O(PQR).
    let scaled = &factors.a * &factors.c.row(band);
    Ok(scaled.dot(&factors.b.t()))
}

/// Full model cube; slice i equals `reconstruct_slice(factors, i)` bit for bit.
pub fn reconstruct_cube<T: Scalar>(factors: &CpdFactors<T>) -> HsiCube<T> {
    let mut cube = HsiCube::zeros(factors.p(), factors.q(), factors.n())
        .expect("factor dimensions are validated non-zero");
    for i in 0..factors.n() {
        let slice = reconstruct_slice(factors, i).expect("band index in range");
        cube.band_mut(i).assign(&slice);
    }
    cube
}

/// Number of free model parameters, (P+Q+N)*R, with overflow checked.
pub fn parameter_count(p: usize, q: usize, n: usize, r: usize) -> Result<usize> {
    if p == 0 || q == 0 || n == 0 || r == 0 {
        return Err(Error::InvalidArgument(
            "parameter_count arguments must all be >= 1".into(),
        ));
    }
    p.checked_add(q)
        .and_then(|s| s.checked_add(n))
        .and_then(|s| s.checked_mul(r))
        .ok_or(Error::Overflow("parameter count"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_factors(p: usize, q: usize, n: usize, r: usize, seed: u64) -> CpdFactors<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize| Array2::from_shape_fn((rows, r), |_| rng.random::<f64>());
        let a = draw(p);
        let b = draw(q);
        let c = draw(n);
        CpdFactors::new(a, b, c).unwrap()
    }

    /// Entry-wise triple sum of Eq-style rank-one components.
    fn naive_slice(f: &CpdFactors<f64>, i: usize) -> Array2<f64> {
        let mut out = Array2::zeros((f.p(), f.q()));
        for p in 0..f.p() {
            for q in 0..f.q() {
                let mut acc = 0.0;
                for r in 0..f.rank() {
                    acc += f.c[[i, r]] * f.a[[p, r]] * f.b[[q, r]];
                }
                out[[p, q]] = acc;
            }
        }
        out
    }

    #[test]
    fn zero_spectral_weight_gives_zero_slice() {
        let f = CpdFactors::new(array![[1.0], [1.0]], array![[1.0], [1.0]], array![[0.0]]).unwrap();
        let x = reconstruct_slice(&f, 0).unwrap();
        assert_eq!(x, array![[0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn rank_one_outer_product() {
        let f = CpdFactors::new(array![[1.0], [2.0]], array![[3.0], [4.0]], array![[1.0]]).unwrap();
        let x = reconstruct_slice(&f, 0).unwrap();
        assert_eq!(x, array![[3.0, 4.0], [6.0, 8.0]]);
    }

    #[test]
    fn slice_matches_triple_loop_oracle() {
        let f = random_factors(4, 4, 3, 3, 7);
        for i in 0..3 {
            let fast = reconstruct_slice(&f, i).unwrap();
            let slow = naive_slice(&f, i);
            for (x, y) in fast.iter().zip(slow.iter()) {
                assert!(
                    (x - y).abs() <= 1e-12,
                    "slice {} disagrees: {} vs {}",
                    i,
                    x,
                    y
                );
            }
        }
    }

    #[test]
    fn band_out_of_range_is_an_error() {
        let f = random_factors(2, 2, 2, 1, 0);
        assert!(matches!(
            reconstruct_slice(&f, 2),
            Err(Error::BandOutOfRange { index: 2, bands: 2 })
        ));
    }

    #[test]
    fn zero_factors_give_zero_cube() {
        let f = CpdFactors::<f64>::zeros(3, 2, 4, 2).unwrap();
        let cube = reconstruct_cube(&f);
        assert!(cube.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rank_one_cube_slices_are_proportional() {
        let f = random_factors(4, 5, 3, 1, 11);
        let cube = reconstruct_cube(&f);
        // slice_i * c_j == slice_j * c_i for a rank-one cube
        let (ci, cj) = (f.c[[0, 0]], f.c[[1, 0]]);
        for (x, y) in cube.band(0).iter().zip(cube.band(1).iter()) {
            assert!((x * cj - y * ci).abs() <= 1e-12);
        }
    }

    #[test]
    fn cube_matches_four_index_oracle() {
        let f = random_factors(3, 3, 2, 2, 23);
        let cube = reconstruct_cube(&f);
        for i in 0..2 {
            let slow = naive_slice(&f, i);
            for (x, y) in cube.band(i).iter().zip(slow.iter()) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn cube_slices_equal_slice_reconstruction_bitwise() {
        let f = random_factors(5, 4, 3, 2, 42);
        let cube = reconstruct_cube(&f);
        for i in 0..3 {
            let slice = reconstruct_slice(&f, i).unwrap();
            assert_eq!(cube.band(i), slice.view());
        }
    }

    #[test]
    fn nonnegative_factors_give_nonnegative_cube() {
        let f = random_factors(6, 5, 4, 3, 3);
        let cube = reconstruct_cube(&f);
        assert!(cube.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn column_rescaling_is_an_indeterminacy() {
        let f = random_factors(4, 4, 3, 2, 9);
        let mut g = f.clone();
        let s = 3.5;
        for p in 0..g.p() {
            g.a[[p, 1]] *= s;
        }
        for q in 0..g.q() {
            g.b[[q, 1]] /= s;
        }
        let x = reconstruct_cube(&f);
        let y = reconstruct_cube(&g);
        for (u, v) in x.values().iter().zip(y.values().iter()) {
            let denom = u.abs().max(1.0);
            assert!((u - v).abs() / denom <= 1e-12);
        }
    }

    #[test]
    fn parameter_count_small_case() {
        assert_eq!(parameter_count(2, 3, 4, 1).unwrap(), 9);
    }

    #[test]
    fn parameter_count_at_rank_twenty() {
        assert_eq!(parameter_count(512, 512, 31, 20).unwrap(), 21_100);
    }

    #[test]
    fn parameter_count_near_rank_twenty_eight() {
        let count = parameter_count(512, 512, 31, 28).unwrap();
        assert_eq!(count, 29_540);
        // the ~3e4 magnitude quoted for this model size
        assert!((2e4..=4e4).contains(&(count as f64)));
    }

    #[test]
    fn parameter_count_rejects_zero_and_overflow() {
        assert!(parameter_count(0, 1, 1, 1).is_err());
        assert!(parameter_count(1, 1, 1, 0).is_err());
        assert!(matches!(
            parameter_count(usize::MAX, 1, 1, 2),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn parameter_count_is_smaller_than_dense_cube() {
        for &(p, q, n) in &[(8usize, 8usize, 3usize), (32, 32, 8), (512, 512, 31)] {
            let limit = p * q * n / (p + q + n);
            for r in 1..limit {
                assert!(parameter_count(p, q, n, r).unwrap() < p * q * n);
            }
        }
    }

    #[test]
    fn cube_from_vec_validates_length() {
        let err = HsiCube::<f64>::from_vec(2, 2, 2, vec![0.0; 7]);
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
        let ok = HsiCube::from_vec(2, 2, 2, (0..8).map(f64::from).collect());
        assert!(ok.is_ok());
    }

    #[test]
    fn cube_band_layout_is_slice_major() {
        let cube = HsiCube::from_vec(2, 2, 2, (0..8).map(f64::from).collect()).unwrap();
        assert_eq!(cube.band(0), array![[0.0, 1.0], [2.0, 3.0]]);
        assert_eq!(cube.band(1), array![[4.0, 5.0], [6.0, 7.0]]);
    }

    #[test]
    fn factor_rank_mismatch_is_rejected() {
        let a = Array2::<f64>::zeros((2, 2));
        let b = Array2::<f64>::zeros((2, 3));
        let c = Array2::<f64>::zeros((2, 2));
        assert!(CpdFactors::new(a, b, c).is_err());
    }
}
