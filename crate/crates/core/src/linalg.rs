//! Small dense-matrix helpers for the few spots that need more than a
//! matvec: PSD checks on planner weight matrices, eigenvalue assertions in
//! tests, and least-squares drift slopes in diagnostics. Everything here is
//! O(n³) on matrices of size ~2n (a handful of rows); a LAPACK binding would
//! be dead weight.

use ndarray::Array2;

/// y = W x for a row-major flat matrix.
pub fn matvec(w: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    let mut y = vec![0.0; rows];
    for (r, yr) in y.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        *yr = acc;
    }
    y
}

/// y = Wᵀ x for a row-major flat matrix (x has `rows` entries).
pub fn mat_t_vec(w: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), rows);
    let mut y = vec![0.0; cols];
    for (r, xr) in x.iter().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        for (yc, wi) in y.iter_mut().zip(row) {
            *yc += wi * xr;
        }
    }
    y
}

/// Attempts a Cholesky factorization of a symmetric matrix. Returns `None`
/// if a pivot goes negative beyond `tol`, i.e. the matrix is not positive
/// semidefinite to within tolerance.
pub fn cholesky_psd(a: &Array2<f64>, tol: f64) -> Option<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return None;
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s < -tol {
                    return None;
                }
                l[[i, i]] = s.max(0.0).sqrt();
            } else if l[[j, j]] > tol {
                l[[i, j]] = s / l[[j, j]];
            } else {
                // Zero pivot: column must be (numerically) zero too.
                if s.abs() > tol {
                    return None;
                }
                l[[i, j]] = 0.0;
            }
        }
    }
    Some(l)
}

/// True if the matrix is symmetric to `sym_tol` and PSD to `psd_tol`.
pub fn is_psd(a: &Array2<f64>, sym_tol: f64, psd_tol: f64) -> bool {
    let n = a.nrows();
    if a.ncols() != n {
        return false;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[[i, j]] - a[[j, i]]).abs() > sym_tol {
                return false;
            }
        }
    }
    cholesky_psd(a, psd_tol).is_some()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
/// Returns them sorted ascending.
pub fn symmetric_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "matrix must be square");
    let mut m = a.clone();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig
}

/// Slope of the least-squares line through (x_k, y_k).
pub fn lsq_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    num / den
}

/// Euclidean norm.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Max-abs norm.
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matvec_and_transpose() {
        // W = [[1,2,3],[4,5,6]]
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = matvec(&w, &[1.0, 0.0, -1.0], 2, 3);
        assert_eq!(y, vec![-2.0, -2.0]);
        let yt = mat_t_vec(&w, &[1.0, 1.0], 2, 3);
        assert_eq!(yt, vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn cholesky_accepts_psd_rejects_indefinite() {
        let spd = array![[4.0, 2.0], [2.0, 3.0]];
        assert!(is_psd(&spd, 1e-12, 1e-12));
        // Rank-deficient but PSD.
        let psd = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(is_psd(&psd, 1e-12, 1e-9));
        let indef = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(!is_psd(&indef, 1e-12, 1e-12));
    }

    #[test]
    fn jacobi_eigenvalues_match_hand_computation() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let e = symmetric_eigenvalues(&a);
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn slope_of_exact_line() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.5 * v - 2.0).collect();
        assert!((lsq_slope(&x, &y) - 3.5).abs() < 1e-12);
    }
}
