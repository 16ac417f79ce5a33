//! Dense symmetric positive-definite linear algebra on top of `nalgebra`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative jitter ladder, scaled by the mean diagonal.
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-12, 1e-10, 1e-8, 1e-6];

/// Cholesky factor of `A + jitter·I`.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    jitter_used: f64,
}

impl SpdFactor {
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    /// `L⁻¹ rhs`.
    pub fn solve_lower(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(rhs)
            .expect("Cholesky factor has a positive diagonal")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn logdet(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Factorizes the symmetric part of `a`, escalating diagonal jitter through
/// [`JITTER_LADDER`] until the factorization succeeds.
pub fn cholesky(a: &DMatrix<f64>) -> Result<SpdFactor> {
    if !a.is_square() {
        return Err(Error::InvalidArgument(format!(
            "cannot factor a {:?} matrix",
            a.shape()
        )));
    }
    let sym = symmetrize(a);
    let n = sym.nrows();
    let scale = if n == 0 { 0.0 } else { sym.trace() / n as f64 };
    let mut max_jitter = 0.0;
    for rel in JITTER_LADDER {
        let jitter = rel * scale;
        if rel > 0.0 && !(jitter > 0.0) {
            break;
        }
        max_jitter = jitter;
        let mut shifted = sym.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(shifted) {
            let l = chol.l_dirty();
            if (0..n).all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite()) {
                return Ok(SpdFactor {
                    chol,
                    jitter_used: jitter,
                });
            }
        }
    }
    Err(Error::Factorization { max_jitter })
}

pub fn logdet(factor: &SpdFactor) -> f64 {
    factor.logdet()
}

/// Eigenvalues of the symmetric part of `a`, descending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    values.sort_by(|x, y| y.total_cmp(x));
    values
}

/// Eigenpairs of the symmetric part of `a`, sorted by descending eigenvalue;
/// column `p` of the matrix is the eigenvector for value `p`.
pub fn sym_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn identity_factor() {
        let f = cholesky(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(f.l(), DMatrix::identity(4, 4));
        assert_eq!(f.jitter_used(), 0.0);
        assert_eq!(f.logdet(), 0.0);
        let r = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        assert_eq!(f.solve(&r), r);
    }

    #[test]
    fn hand_factor() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 5.0]);
        let f = cholesky(&a).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 2.0]);
        assert!((f.l() - expected).norm() < 1e-15);
        let rhs = DVector::from_vec(vec![8.0, 9.0]);
        let x = f.solve(&rhs);
        assert!((&a * &x - &rhs).norm() < 1e-12);
        assert!((x[0] - 11.0 / 8.0).abs() < 1e-14 && (x[1] - 5.0 / 4.0).abs() < 1e-14);
    }

    #[test]
    fn singular_needs_jitter() {
        let a = DMatrix::from_element(3, 3, 1.0);
        let f = cholesky(&a).unwrap();
        assert!(f.jitter_used() > 0.0);
        let l = f.l();
        let mut shifted = a.clone();
        for i in 0..3 {
            shifted[(i, i)] += f.jitter_used();
        }
        assert!((&l * l.transpose() - shifted).norm() <= 1e-8 * a.norm());
    }

    #[test]
    fn indefinite_fails() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(cholesky(&a), Err(Error::Factorization { .. })));
    }

    #[test]
    fn inverse_residual() {
        let a = random_spd(6, 3);
        let f = cholesky(&a).unwrap();
        let inv = f.solve_matrix(&DMatrix::identity(6, 6));
        assert!((&a * inv - DMatrix::identity(6, 6)).norm() < 1e-10);
    }

    #[test]
    fn logdet_values() {
        let f = cholesky(&DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 8.0]))).unwrap();
        assert!((f.logdet() - 16.0_f64.ln()).abs() < 1e-14);
        for seed in 0..5 {
            let a = random_spd(5, seed);
            let lu_det = a.clone().lu().determinant();
            let ld = cholesky(&a).unwrap().logdet();
            assert!(lu_det > 0.0);
            assert!((ld - lu_det.ln()).abs() <= 1e-9 * lu_det.ln().abs().max(1.0));
            let eig_sum: f64 = sym_eigenvalues(&a).iter().map(|v| v.ln()).sum();
            assert!((ld - eig_sum).abs() <= 1e-8 * ld.abs().max(1.0));
        }
    }

    #[test]
    fn eigenvalues() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        assert_eq!(sym_eigenvalues(&d), vec![3.0, 2.0, 1.0]);
        let ones = sym_eigenvalues(&DMatrix::from_element(3, 3, 1.0));
        assert!((ones[0] - 3.0).abs() < 1e-12 && ones[1].abs() < 1e-12 && ones[2].abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let a = symmetrize(&b);
        let (vals, vecs) = sym_eigen(&a);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        assert!((vals.iter().sum::<f64>() - a.trace()).abs() <= 1e-8 * a.norm());
        let recon = &vecs * DMatrix::from_diagonal(&DVector::from_vec(vals)) * vecs.transpose();
        assert!((recon - a).norm() < 1e-8);
    }
}
