//! Orthonormal DCT-II / DCT-III along the temporal axis.
//!
//! The basis is an `N×N` orthonormal matrix whose row `k` samples the
//! `k`-th cosine; the inverse transform is its transpose. Both directions
//! are plain matrix products, so they also run on the tape.

use std::f64::consts::PI;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct DctBasis {
    len: usize,
    keep: usize,
    // Full N×N basis, rows by increasing frequency.
    matrix: Tensor,
    // First `keep` rows, cached as a K×N tensor.
    truncated: Tensor,
}

impl DctBasis {
    pub fn new(len: usize) -> Result<Self> {
        Self::truncated(len, len)
    }

    /// Basis of length `len` keeping the lowest `keep` frequencies.
    pub fn truncated(len: usize, keep: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidArgument("DCT length must be positive".into()));
        }
        if keep == 0 || keep > len {
            return Err(Error::InvalidArgument(format!(
                "DCT truncation K={keep} must lie in 1..={len}"
            )));
        }
        let n = len as f64;
        let mut data = vec![0.0; len * len];
        for k in 0..len {
            let w = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for i in 0..len {
                data[k * len + i] = w * (PI * (i as f64 + 0.5) * k as f64 / n).cos();
            }
        }
        let matrix = Tensor::new(&[len, len], data)?;
        let truncated = matrix.slice_rows(0, keep)?;
        Ok(DctBasis {
            len,
            keep,
            matrix,
            truncated,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn keep(&self) -> usize {
        self.keep
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    /// The `K×N` analysis matrix.
    pub fn analysis(&self) -> &Tensor {
        &self.truncated
    }

    /// `traj` is `N×D`; returns `K×D` coefficients.
    pub fn forward(&self, traj: &Tensor) -> Result<Tensor> {
        if traj.ndim() != 2 || traj.shape()[0] != self.len {
            return Err(Error::shape("dct_forward", traj.shape(), &[self.len]));
        }
        self.truncated.matmul(traj)
    }

    /// `coeffs` is `K×D`; returns the `N×D` trajectory.
    pub fn inverse(&self, coeffs: &Tensor) -> Result<Tensor> {
        if coeffs.ndim() != 2 || coeffs.shape()[0] > self.len {
            return Err(Error::shape("dct_inverse", coeffs.shape(), &[self.len]));
        }
        let k = coeffs.shape()[0];
        self.matrix.slice_rows(0, k)?.transpose2().matmul(coeffs)
    }

    /// Tape version of [`forward`](Self::forward); `basis` must be the
    /// recorded [`analysis`](Self::analysis) matrix.
    pub fn forward_var<'t>(basis: Var<'t>, traj: Var<'t>) -> Result<Var<'t>> {
        basis.matmul(traj)
    }

    /// Tape version of [`inverse`](Self::inverse); `synthesis` must be the
    /// recorded transpose of the analysis matrix.
    pub fn inverse_var<'t>(synthesis: Var<'t>, coeffs: Var<'t>) -> Result<Var<'t>> {
        synthesis.matmul(coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn constant_trajectory_only_dc() {
        let b = DctBasis::new(8).unwrap();
        let c = b.forward(&Tensor::full(&[8, 2], 1.5)).unwrap();
        assert!((c.data()[0] - 1.5 * 8f64.sqrt()).abs() < 1e-12);
        for v in &c.data()[2..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn basis_row_gives_unit_coefficient() {
        let b = DctBasis::new(6).unwrap();
        for k in 0..6 {
            let row = b.matrix().slice_rows(k, k + 1).unwrap().transpose2();
            let c = b.forward(&row).unwrap();
            for (i, v) in c.data().iter().enumerate() {
                let expect = if i == k { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let b = DctBasis::new(5).unwrap();
        let z = Tensor::zeros(&[5, 3]);
        assert_eq!(b.forward(&z).unwrap(), z);
        assert_eq!(b.inverse(&z).unwrap(), z);
    }

    #[test]
    fn roundtrip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let b = DctBasis::new(16).unwrap();
        let x = Tensor::randn(&[16, 6], &mut rng);
        let back = b.inverse(&b.forward(&x).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn truncated_roundtrip_is_projection() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (n, k) = (12, 4);
        let b = DctBasis::truncated(n, k).unwrap();
        let x = Tensor::randn(&[n, 3], &mut rng);
        let approx = b.inverse(&b.forward(&x).unwrap()).unwrap();
        // Least-squares projection onto span of the first k rows: P = Bk^T Bk,
        // computed entry by entry from cosines.
        let mut expect = Tensor::zeros(&[n, 3]);
        for i in 0..n {
            for c in 0..3 {
                let mut acc = 0.0;
                for j in 0..n {
                    let mut p = 0.0;
                    for f in 0..k {
                        let w = if f == 0 { 1.0 / n as f64 } else { 2.0 / n as f64 };
                        let ci = (PI * (i as f64 + 0.5) * f as f64 / n as f64).cos();
                        let cj = (PI * (j as f64 + 0.5) * f as f64 / n as f64).cos();
                        p += w * ci * cj;
                    }
                    acc += p * x.data()[j * 3 + c];
                }
                expect.data_mut()[i * 3 + c] = acc;
            }
        }
        assert!(approx.max_abs_diff(&expect) < 1e-10);
    }

    #[test]
    fn rejects_bad_lengths() {
        let b = DctBasis::new(4).unwrap();
        assert!(b.forward(&Tensor::zeros(&[5, 1])).is_err());
        assert!(b.inverse(&Tensor::zeros(&[5, 1])).is_err());
        assert!(DctBasis::truncated(4, 5).is_err());
    }
}
