//! Sparse linear algebra backing the Poisson and continuity Newton steps.
//!
//! The default backend is a direct LU factorization with partial pivoting on
//! a reverse Cuthill–McKee reordered band. Desk-scale 2D meshes keep the
//! bandwidth small, so this is both fast and fully deterministic. A
//! BiCGSTAB solver with an ILU(0) preconditioner is available for larger
//! meshes.

mod band_lu;
mod csr;
mod iterative;
mod ordering;

pub use band_lu::BandLu;
pub use csr::{CsrMatrix, TripletBuilder};
pub use iterative::{bicgstab, Ilu0};
pub use ordering::reverse_cuthill_mckee;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: matrix has {expected} rows, vector has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular matrix: zero pivot in column {column}")]
    Singular { column: usize },
    #[error("iterative solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("iterative solver breakdown at iteration {iteration}")]
    Breakdown { iteration: usize },
    #[error("non-finite value in linear system")]
    NonFinite,
}

/// Which solver [`factor_and_solve`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolverOptions {
    pub backend: Backend,
    /// Relative tolerance for the iterative backend.
    pub lin_tol: f64,
    pub max_iterations: usize,
}

impl Default for LinearSolverOptions {
    fn default() -> Self {
        Self { backend: Backend::Direct, lin_tol: 1e-12, max_iterations: 2000 }
    }
}

/// Post-solve residual check returned alongside every solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveDiagnostics {
    /// `‖Ax − b‖∞` of the returned solution.
    pub residual: f64,
    /// `1e-12·(1 + ‖b‖∞)`.
    pub bound: f64,
    /// Normwise backward error `‖Ax − b‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)`.
    pub backward_error: f64,
    pub refinement_steps: usize,
    pub iterations: usize,
}

impl SolveDiagnostics {
    pub fn within_bound(&self) -> bool {
        self.residual <= self.bound
    }
}

const RESIDUAL_FACTOR: f64 = 1e-12;
const MAX_REFINEMENT: usize = 2;

/// Solve `A x = b` and verify the residual.
///
/// The direct path runs up to two steps of iterative refinement when the
/// residual misses `1e-12·(1 + ‖b‖∞)`; the diagnostics report what was
/// achieved either way.
pub fn factor_and_solve(
    a: &CsrMatrix,
    b: &[f64],
    opts: &LinearSolverOptions,
) -> Result<(Vec<f64>, SolveDiagnostics), LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    if b.len() != a.nrows() {
        return Err(LinalgError::DimensionMismatch { expected: a.nrows(), got: b.len() });
    }
    if !b.iter().all(|v| v.is_finite()) || !a.values().iter().all(|v| v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let b_norm = norm_inf(b);
    let bound = RESIDUAL_FACTOR * (1.0 + b_norm);
    let (x, refinement_steps, iterations) = match opts.backend {
        Backend::Direct => {
            let lu = BandLu::factor(a)?;
            let mut x = lu.solve(b)?;
            let mut steps = 0;
            while steps < MAX_REFINEMENT {
                let r = residual_vec(a, &x, b);
                if norm_inf(&r) <= bound {
                    break;
                }
                let dx = lu.solve(&r)?;
                for (xi, di) in x.iter_mut().zip(&dx) {
                    *xi += di;
                }
                steps += 1;
            }
            (x, steps, 0)
        }
        Backend::Iterative => {
            let pre = Ilu0::new(a)?;
            let (x, its) = bicgstab(a, b, &pre, opts.lin_tol, opts.max_iterations)?;
            (x, 0, its)
        }
    };
    let residual = norm_inf(&residual_vec(a, &x, b));
    let backward_error = residual / (a.norm_inf() * norm_inf(&x) + b_norm).max(f64::MIN_POSITIVE);
    let diag = SolveDiagnostics { residual, bound, backward_error, refinement_steps, iterations };
    if opts.backend == Backend::Direct {
        debug_assert!(
            diag.within_bound() || backward_error <= RESIDUAL_FACTOR,
            "direct solve residual {residual:e} exceeds bound {bound:e} (backward error {backward_error:e})"
        );
    }
    if !diag.within_bound() {
        log::debug!(
            "linear solve residual {:e} above {:e} (backward error {:e})",
            residual,
            bound,
            backward_error
        );
    }
    Ok((x, diag))
}

pub(crate) fn residual_vec(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = a.matvec(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    r
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_to_csr(a: &[Vec<f64>]) -> CsrMatrix {
        let n = a.len();
        let mut t = TripletBuilder::new(n, n);
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        t.build()
    }

    /// Dense Gaussian elimination with partial pivoting, kept deliberately
    /// naive as an oracle.
    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut rhs = b.to_vec();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap()).unwrap();
            m.swap(k, p);
            rhs.swap(k, p);
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..n {
                    m[i][j] -= f * m[k][j];
                }
                rhs[i] -= f * rhs[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
            x[i] = (rhs[i] - s) / m[i][i];
        }
        x
    }

    #[test]
    fn identity_returns_rhs() {
        let a = CsrMatrix::identity(5);
        let b = vec![1.0, -2.0, 3.5, 0.0, 7.0];
        let (x, d) = factor_and_solve(&a, &b, &LinearSolverOptions::default()).unwrap();
        assert_eq!(x, b);
        assert!(d.within_bound());
    }

    #[test]
    fn two_by_two() {
        let a = dense_to_csr(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let (x, _) = factor_and_solve(&a, &[3.0, 3.0], &LinearSolverOptions::default()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_spd_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let g: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = (0..n).map(|k| g[i][k] * g[j][k]).sum::<f64>();
            }
            a[i][i] += n as f64;
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, d) = factor_and_solve(&dense_to_csr(&a), &b, &LinearSolverOptions::default()).unwrap();
        assert!(d.within_bound(), "{d:?}");
        let oracle = dense_solve(&a, &b);
        for (u, v) in x.iter().zip(&oracle) {
            assert!((u - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn iterative_backend_agrees() {
        // 1D Laplacian with a convection term (unsymmetric).
        let n = 40;
        let mut t = TripletBuilder::new(n, n);
        for i in 0..n {
            t.push(i, i, 2.5);
            if i > 0 {
                t.push(i, i - 1, -1.2);
            }
            if i + 1 < n {
                t.push(i, i + 1, -0.8);
            }
        }
        let a = t.build();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let (xd, _) = factor_and_solve(&a, &b, &LinearSolverOptions::default()).unwrap();
        let opts = LinearSolverOptions { backend: Backend::Iterative, lin_tol: 1e-13, ..Default::default() };
        let (xi, d) = factor_and_solve(&a, &b, &opts).unwrap();
        assert!(d.iterations > 0);
        for (u, v) in xd.iter().zip(&xi) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = dense_to_csr(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let err = factor_and_solve(&a, &[1.0, 2.0], &LinearSolverOptions::default()).unwrap_err();
        assert!(matches!(err, LinalgError::Singular { .. }));
    }

    #[test]
    fn deterministic_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 30;
        let mut t = TripletBuilder::new(n, n);
        for i in 0..n {
            t.push(i, i, 1.0 + rng.gen::<f64>());
            for _ in 0..3 {
                let j = rng.gen_range(0..n);
                t.push(i, j, rng.gen_range(-0.3..0.3));
            }
        }
        let a = t.build();
        let b: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let o = LinearSolverOptions::default();
        let (x1, _) = factor_and_solve(&a, &b, &o).unwrap();
        let (x2, _) = factor_and_solve(&a, &b, &o).unwrap();
        assert!(x1.iter().zip(&x2).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
