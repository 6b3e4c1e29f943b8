//! Small dense kernels: pivoted LU, Cholesky, and symmetric eigensolves.
//!
//! These back the element-local computations (interpolation projections,
//! trace-space eigenproblems, one-dimensional model problems) where the
//! systems are at most a few dozen unknowns and a direct dense method is
//! both simplest and most accurate.  Matrices are row-major `Vec<Vec<f64>>`.

use crate::error::{Error, Result};

/// Solves `A x = b` by LU with partial pivoting, overwriting nothing.
///
/// Intended for small systems (interpolation blocks, one-dimensional model
/// problems); fails with a pivot diagnostic when `A` is singular to working
/// precision.
pub fn lu_solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = a.len();
    assert!(a.iter().all(|row| row.len() == n), "lu_solve needs square A");
    assert_eq!(b.len(), n, "lu_solve dimension mismatch");
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x: Vec<f64> = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (piv, piv_val) = (k..n)
            .map(|r| (r, m[r][k].abs()))
            .fold((k, -1.0), |best, cand| if cand.1 > best.1 { cand } else { best });
        if piv_val == 0.0 {
            return Err(Error::solver(
                "dense LU",
                format!("zero pivot at elimination step {k} of {n}"),
            ));
        }
        m.swap(k, piv);
        x.swap(k, piv);
        perm.swap(k, piv);
        for r in (k + 1)..n {
            let f = m[r][k] / m[k][k];
            m[r][k] = f;
            for c in (k + 1)..n {
                let upper = m[k][c];
                m[r][c] -= f * upper;
            }
            x[r] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut acc = x[k];
        for c in (k + 1)..n {
            acc -= m[k][c] * x[c];
        }
        x[k] = acc / m[k][k];
    }
    Ok(x)
}

/// Cholesky factor `L` (lower triangular) of a symmetric positive-definite
/// matrix; fails with the offending pivot when the matrix is not SPD.
pub fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[i][j];
            for k in 0..j {
                acc -= l[i][k] * l[j][k];
            }
            if i == j {
                if acc <= 0.0 {
                    return Err(Error::solver(
                        "dense Cholesky",
                        format!("non-positive pivot {acc:e} at row {i}; matrix is not SPD"),
                    ));
                }
                l[i][j] = acc.sqrt();
            } else {
                l[i][j] = acc / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Forward substitution `L y = b` with lower-triangular `L`.
fn forward_sub(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..i {
            acc -= l[i][k] * y[k];
        }
        y[i] = acc / l[i][i];
    }
    y
}

/// Back substitution `Lᵀ x = y` with lower-triangular `L`.
fn backward_sub_t(l: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = y[i];
        for k in (i + 1)..n {
            acc -= l[k][i] * x[k];
        }
        x[i] = acc / l[i][i];
    }
    x
}

/// All eigenvalues and eigenvectors of a small symmetric matrix by cyclic
/// Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with `eigenvectors[k]` the unit
/// eigenvector for `eigenvalues[k]`; unordered.  Converges quadratically;
/// the iteration stops once every off-diagonal entry is below
/// `1e-15 * max|A|` or after a fixed sweep budget (at these sizes the budget
/// is never reached in practice).
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale = m
        .iter()
        .flat_map(|row| row.iter().map(|x| x.abs()))
        .fold(0.0, f64::max);
    if scale == 0.0 || n < 2 {
        return ((0..n).map(|i| m[i][i]).collect(), v);
    }
    let tol = 1e-15 * scale;
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m[p][q].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if m[p][q].abs() <= tol * 1e-2 {
                    continue;
                }
                // Classic symmetric Schur rotation annihilating m[p][q].
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let eigvals: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    let eigvecs: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|i| v[i][k]).collect()).collect();
    (eigvals, eigvecs)
}

/// Largest generalized eigenvalue `ν` (with its eigenvector) of
/// `S v = ν B v` for symmetric `S` and symmetric positive-definite `B`.
///
/// Reduction to a standard symmetric problem: with `B = L Lᵀ`, the matrix
/// `C = L⁻¹ S L⁻ᵀ` is symmetric with the same spectrum, and eigenvectors map
/// back through `v = L⁻ᵀ y`.  Handles the degenerate cases exactly: `S = 0`
/// yields `ν = 0`, and `S = B` yields `ν = 1` to rounding.
pub fn gen_eig_max(s: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let n = s.len();
    assert_eq!(b.len(), n, "gen_eig_max dimension mismatch");
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    if s.iter().all(|row| row.iter().all(|&x| x == 0.0)) {
        // Exact-zero numerator: the quotient is zero whatever B is.
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        return Ok((0.0, v));
    }
    let l = cholesky(b).map_err(|e| match e {
        Error::Solver { detail, .. } => Error::solver(
            "generalized eigenproblem",
            format!("denominator matrix is not SPD: {detail}"),
        ),
        other => other,
    })?;
    // C = L⁻¹ S L⁻ᵀ, built column by column.
    let mut c = vec![vec![0.0; n]; n];
    for j in 0..n {
        // Column j of S L⁻ᵀ: solve Lᵀ e_j first? Equivalent: w = L⁻ᵀ e_j,
        // then column = S w, then forward-substitute.
        let mut ej = vec![0.0; n];
        ej[j] = 1.0;
        let w = backward_sub_t(&l, &ej);
        let mut sw = vec![0.0; n];
        for (i, row) in s.iter().enumerate() {
            sw[i] = row.iter().zip(w.iter()).map(|(&a, &b)| a * b).sum();
        }
        let col = forward_sub(&l, &sw);
        for i in 0..n {
            c[i][j] = col[i];
        }
    }
    // Symmetrize to kill the rounding asymmetry before Jacobi.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (c[i][j] + c[j][i]);
            c[i][j] = avg;
            c[j][i] = avg;
        }
    }
    let (vals, vecs) = jacobi_eigen(&c);
    let (kmax, &numax) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty spectrum");
    let v = backward_sub_t(&l, &vecs[kmax]);
    Ok((numax, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(&r, &v)| r * v).sum())
            .collect()
    }

    #[test]
    fn lu_solves_a_saddle_point_system() {
        let a = vec![vec![1.0, 1.0], vec![1.0, 0.0]];
        let x = lu_solve(&a, &[1.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15);
        assert!(x[1].abs() < 1e-15);
    }

    #[test]
    fn lu_reports_singularity() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(lu_solve(&a, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn cholesky_reconstructs_spd_matrix() {
        let a = vec![
            vec![4.0, 2.0, 0.4],
            vec![2.0, 5.0, 1.0],
            vec![0.4, 1.0, 3.0],
        ];
        let l = cholesky(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += l[i][k] * l[j][k];
                }
                assert!((acc - a[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn jacobi_diagonalizes_a_known_matrix() {
        // Eigenvalues of [[2,1],[1,2]] are 1 and 3.
        let a = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let (mut vals, vecs) = jacobi_eigen(&a);
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!((vals[1] - 3.0).abs() < 1e-14);
        for (k, v) in vecs.iter().enumerate() {
            let av = matvec(&a, v);
            let lam = v.iter().zip(&av).map(|(&x, &y)| x * y).sum::<f64>();
            for i in 0..2 {
                assert!((av[i] - lam * v[i]).abs() < 1e-13);
            }
            let _ = k;
        }
    }

    #[test]
    fn gen_eig_equal_matrices_give_one() {
        let b = vec![
            vec![2.0, 0.5, 0.0],
            vec![0.5, 3.0, 0.25],
            vec![0.0, 0.25, 1.5],
        ];
        let (nu, _) = gen_eig_max(&b, &b).unwrap();
        assert!((nu - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gen_eig_zero_numerator_gives_zero() {
        let b = vec![vec![2.0, 0.0], vec![0.0, 1.0]];
        let s = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let (nu, _) = gen_eig_max(&s, &b).unwrap();
        assert_eq!(nu, 0.0);
    }

    #[test]
    fn gen_eig_matches_characteristic_polynomial_on_3x3() {
        // det(S - nu B) = 0 reduced to a cubic in nu, solved by bisection as
        // an independent oracle.
        let s = vec![
            vec![3.0, 1.0, 0.2],
            vec![1.0, 2.5, -0.5],
            vec![0.2, -0.5, 1.8],
        ];
        let b = vec![
            vec![2.0, 0.3, 0.0],
            vec![0.3, 1.0, 0.1],
            vec![0.0, 0.1, 0.7],
        ];
        let det3 = |m: &[Vec<f64>]| -> f64 {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let p = |nu: f64| -> f64 {
            let m: Vec<Vec<f64>> = (0..3)
                .map(|i| (0..3).map(|j| s[i][j] - nu * b[i][j]).collect())
                .collect();
            det3(&m)
        };
        let (nu, v) = gen_eig_max(&s, &b).unwrap();
        // Bracket the root from the computed value and bisect the oracle.
        let (mut lo, mut hi) = (nu - 1e-3, nu + 1e-3);
        assert!(p(lo) * p(hi) <= 0.0, "oracle root not bracketed");
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p(lo) * p(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!((nu - oracle).abs() < 1e-10, "{nu} vs {oracle}");
        // Eigenvector residual: S v = nu B v.
        let sv = matvec(&s, &v);
        let bv = matvec(&b, &v);
        for i in 0..3 {
            assert!((sv[i] - nu * bv[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn gen_eig_exceeds_every_rayleigh_quotient() {
        let s = vec![
            vec![1.0, 0.2, 0.0, 0.1],
            vec![0.2, 2.0, 0.3, 0.0],
            vec![0.0, 0.3, 0.5, 0.2],
            vec![0.1, 0.0, 0.2, 1.5],
        ];
        let b = vec![
            vec![1.0, 0.1, 0.0, 0.0],
            vec![0.1, 2.0, 0.2, 0.0],
            vec![0.0, 0.2, 1.0, 0.3],
            vec![0.0, 0.0, 0.3, 2.0],
        ];
        let (nu, _) = gen_eig_max(&s, &b).unwrap();
        // Deterministic probe directions.
        let probes = [
            [1.0, 0.0, 0.0, 0.0],
            [0.25, -1.0, 0.5, 0.75],
            [1.0, 1.0, 1.0, 1.0],
            [-0.3, 0.9, -1.1, 0.2],
        ];
        for v in probes {
            let sv = matvec(&s, &v);
            let bv = matvec(&b, &v);
            let num: f64 = v.iter().zip(&sv).map(|(&x, &y)| x * y).sum();
            let den: f64 = v.iter().zip(&bv).map(|(&x, &y)| x * y).sum();
            assert!(num / den <= nu + 1e-12);
        }
    }
}
