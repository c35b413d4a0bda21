//! Dense Cholesky helpers, including the rank-one downdate used to obtain
//! leave-one-out posteriors from the full-data factor.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_lower(a: DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(a)
        .map(|c| c.unpack())
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

/// `log |L L^T|` for a lower factor.
pub fn chol_logdet(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// In-place rank-one update (`sign = 1`) or downdate (`sign = -1`) of a lower
/// Cholesky factor: on exit `L' L'^T = L L^T + sign * v v^T`. `v` is clobbered.
pub fn chol_rank_one(l: &mut DMatrix<f64>, v: &mut DVector<f64>, sign: f64) -> Result<()> {
    let n = l.nrows();
    for j in 0..n {
        let ljj = l[(j, j)];
        let vj = v[j];
        let arg = ljj * ljj + sign * vj * vj;
        if !(arg > 0.0) {
            return Err(Error::Numerical("Cholesky downdate lost definiteness".into()));
        }
        let r = arg.sqrt();
        let c = r / ljj;
        let s = vj / ljj;
        l[(j, j)] = r;
        for i in (j + 1)..n {
            let lij = (l[(i, j)] + sign * s * v[i]) / c;
            l[(i, j)] = lij;
            v[i] = c * v[i] - s * lij;
        }
    }
    Ok(())
}

/// Solves `L^T x = b` for lower `L`.
pub fn solve_lower_transpose(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.tr_solve_lower_triangular(b)
        .expect("triangular factor has a zero diagonal")
}

/// Solves `L x = b` for lower `L`.
pub fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    l.solve_lower_triangular(b)
        .expect("triangular factor has a zero diagonal")
}

/// `(L L^T)^{-1}` from a lower factor.
pub fn chol_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("triangular factor has a zero diagonal");
    let mut inv = linv.tr_mul(&linv);
    symmetrize(&mut inv);
    inv
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}
