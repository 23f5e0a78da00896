use super::{norm2, CsrMatrix, LinalgError};

/// ILU(0): incomplete LU restricted to the sparsity pattern of `A`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    lu: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let n = a.nrows();
        let row_ptr = a.row_ptr().to_vec();
        let col_idx = a.col_idx().to_vec();
        let mut lu = a.values().to_vec();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                if col_idx[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return Err(LinalgError::Singular { column: i });
            }
        }
        for i in 1..n {
            for kk in row_ptr[i]..row_ptr[i + 1] {
                let k = col_idx[kk];
                if k >= i {
                    break;
                }
                let pivot = lu[diag[k]];
                if pivot == 0.0 {
                    return Err(LinalgError::Singular { column: k });
                }
                let m = lu[kk] / pivot;
                lu[kk] = m;
                // row i -= m * row k, restricted to the pattern of row i
                let mut p = kk + 1;
                for q in diag[k] + 1..row_ptr[k + 1] {
                    let j = col_idx[q];
                    while p < row_ptr[i + 1] && col_idx[p] < j {
                        p += 1;
                    }
                    if p < row_ptr[i + 1] && col_idx[p] == j {
                        lu[p] -= m * lu[q];
                    }
                }
            }
            if lu[diag[i]] == 0.0 {
                return Err(LinalgError::Singular { column: i });
            }
        }
        Ok(Self { n, row_ptr, col_idx, lu, diag })
    }

    /// `z = (LU)⁻¹ r`
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut z = r.to_vec();
        for i in 0..self.n {
            let mut s = z[i];
            for k in self.row_ptr[i]..self.diag[i] {
                s -= self.lu[k] * z[self.col_idx[k]];
            }
            z[i] = s;
        }
        for i in (0..self.n).rev() {
            let mut s = z[i];
            for k in self.diag[i] + 1..self.row_ptr[i + 1] {
                s -= self.lu[k] * z[self.col_idx[k]];
            }
            z[i] = s / self.lu[self.diag[i]];
        }
        z
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned BiCGSTAB. Returns the solution and iteration count.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    pre: &Ilu0,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize), LinalgError> {
    let n = b.len();
    let b_norm = norm2(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(LinalgError::Breakdown { iteration: it });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = pre.apply(&p);
        v = a.matvec(&p_hat);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            return Err(LinalgError::Breakdown { iteration: it });
        }
        alpha = rho_new / denom;
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm2(&s) <= tol * b_norm {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok((x, it));
        }
        let s_hat = pre.apply(&s);
        let t = a.matvec(&s_hat);
        let tt = dot(&t, &t);
        omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        rho = rho_new;
        let res = norm2(&r);
        if !res.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        if res <= tol * b_norm {
            return Ok((x, it));
        }
    }
    let r = super::residual_vec(a, &x, b);
    Err(LinalgError::NotConverged { iterations: max_iter, residual: norm2(&r) })
}
