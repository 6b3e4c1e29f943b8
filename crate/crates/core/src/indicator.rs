//! Computable per-element error indicator for the offline-online
//! combination.
//!
//! Replacing the true local stiffness `b_T` (built from the sampled
//! coefficient) by the combined `b̃_T` (built from database coefficients)
//! commits a local consistency error.  For a coarse trial function `v` on
//! the element, the mismatch is controlled by the fine-grid field
//!
//! ```text
//! R_T v = (A − Ā)/√A · χ_T ∇v − Σ_i μ_i (A − A_i)/√A · ∇(C_T(A_i) v) ,
//! ```
//!
//! with `Ā = Σ_i μ_i A_i`, and the indicator is the largest energy
//! quotient over the element's trial space modulo constants:
//!
//! ```text
//! E_T² = max_v ‖R_T v‖²_{L²(U)} / ‖v‖²_{A,T} .
//! ```
//!
//! Both quadratic forms reduce to `2^d × 2^d` matrices over the corner
//! hats — `S` for the numerator Gram and `B` for the element energy — and
//! `E_T` is the square root of the largest generalized eigenvalue of
//! `S v = ν B v` on the orthogonal complement of constants.  Whenever a
//! patch's sampled coefficient coincides with a database coefficient the
//! per-element factors `(A − A_i)/√A` vanish identically and `S` is
//! exactly zero, so the indicator reports exact combinations as exact.
//!
//! All integrals are exact: coefficients are constant per fine element,
//! fields are gradients of bilinear functions, and the element tables
//! integrate their products in closed form.

use crate::coefficient::CoefficientField;
use crate::corrector::CorrectorWorkspace;
use crate::error::{Error, Result};
use crate::linalg::gen_eig_max;
use crate::mesh::PatchGeometry;
use crate::offline::OfflineDatabase;

/// The two quadratic forms behind the indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMatrices {
    /// Numerator Gram matrix `S_{jk} = ∫_U R_T λ_j · R_T λ_k`.
    pub s: Vec<Vec<f64>>,
    /// Element energy `B_{jk} = (A ∇λ_k, ∇λ_j)_T`.
    pub b: Vec<Vec<f64>>,
}

/// Assembles the indicator matrices using a reusable workspace.
///
/// The workspace must match the database (same mesh, layer count, and
/// interpolation); `a_patch` is the sampled coefficient on the element's
/// patch in patch-local order, `mu` the combination weights of that
/// patch.
pub fn compute_sb_with(
    ws: &CorrectorWorkspace,
    a_patch: &CoefficientField,
    db: &OfflineDatabase,
    mu: &[f64],
) -> Result<IndicatorMatrices> {
    if ws.patch().m != db.m || ws.kind() != db.kind {
        return Err(Error::config(format!(
            "workspace (m={}, {:?}) does not match the database (m={}, {:?})",
            ws.patch().m,
            ws.kind(),
            db.m,
            db.kind
        )));
    }
    if a_patch.values.len() != ws.fine_elems() {
        return Err(Error::data(format!(
            "coefficient has {} values for {} patch elements",
            a_patch.values.len(),
            ws.fine_elems()
        )));
    }
    if mu.len() != db.correctors.len() {
        return Err(Error::data(format!(
            "combination needs {} weights, got {}",
            db.correctors.len(),
            mu.len()
        )));
    }
    let corners = ws.corners();
    let k_unit = ws.unit_stiffness();
    let active: Vec<(usize, f64)> = mu
        .iter()
        .enumerate()
        .filter(|&(_, &w)| w != 0.0)
        .map(|(i, &w)| (i, w))
        .collect();
    let mut is_center = vec![false; ws.fine_elems()];
    for &le in ws.center_elems() {
        is_center[le] = true;
    }

    let mut s = vec![vec![0.0; corners]; corners];
    let mut b = vec![vec![0.0; corners]; corners];
    let mut field = vec![[0.0f64; 4]; corners];
    for le in 0..ws.fine_elems() {
        let nodes4 = ws.local_elem_nodes(le);
        let a_e = a_patch.values[le];
        let sq = a_e.sqrt();
        let abar: f64 = active
            .iter()
            .map(|&(i, w)| w * db.coefficients[i].values[le])
            .sum();
        let c0 = (a_e - abar) / sq;

        for f in field.iter_mut() {
            *f = [0.0; 4];
        }
        let mut any = false;
        if is_center[le] && c0 != 0.0 {
            for (j, f) in field.iter_mut().enumerate() {
                for c in 0..corners {
                    f[c] += c0 * ws.corner_hat(j)[nodes4[c]];
                }
            }
            any = true;
        }
        for &(i, w) in &active {
            // Computed as a difference of the stored values so a matching
            // coefficient contributes an exact zero.
            let ci = (a_e - db.coefficients[i].values[le]) / sq;
            if ci == 0.0 {
                continue;
            }
            let f = w * ci;
            for (j, fv) in field.iter_mut().enumerate() {
                for c in 0..corners {
                    fv[c] -= f * db.correctors[i].values[j][nodes4[c]];
                }
            }
            any = true;
        }
        if any {
            for j in 0..corners {
                let mut kf = [0.0; 4];
                for i in 0..corners {
                    for c in 0..corners {
                        kf[i] += k_unit[i][c] * field[j][c];
                    }
                }
                for k in j..corners {
                    let dot: f64 = (0..corners).map(|i| kf[i] * field[k][i]).sum();
                    s[j][k] += dot;
                }
            }
        }
        if is_center[le] {
            for j in 0..corners {
                let mut kh = [0.0; 4];
                for i in 0..corners {
                    for c in 0..corners {
                        kh[i] += k_unit[i][c] * ws.corner_hat(j)[nodes4[c]];
                    }
                }
                for k in j..corners {
                    let dot: f64 = (0..corners).map(|i| kh[i] * ws.corner_hat(k)[nodes4[i]]).sum();
                    b[j][k] += a_e * dot;
                }
            }
        }
    }
    for j in 0..corners {
        for k in 0..j {
            s[j][k] = s[k][j];
            b[j][k] = b[k][j];
        }
    }
    Ok(IndicatorMatrices { s, b })
}

/// One-shot assembly of the indicator matrices for one patch.
///
/// Builds the patch geometry workspace internally; campaigns evaluating
/// many elements should construct one [`CorrectorWorkspace`] and call
/// [`compute_sb_with`].
pub fn compute_sb(
    a_patch: &CoefficientField,
    db: &OfflineDatabase,
    mu: &[f64],
    patch: &PatchGeometry,
) -> Result<IndicatorMatrices> {
    let ws = CorrectorWorkspace::new(&db.mesh, patch, db.kind)?;
    compute_sb_with(&ws, a_patch, db, mu)
}

/// Evaluates the indicator from its matrices: the square root of the
/// largest generalized eigenvalue of `S v = ν B v` over the orthogonal
/// complement of the constant vector.
pub fn indicator_et(matrices: &IndicatorMatrices) -> Result<f64> {
    let n = matrices.s.len();
    if n < 2 {
        return Err(Error::data(
            "indicator matrices must pair at least two corner hats".to_string(),
        ));
    }
    // Orthonormal basis of the complement of constants (Helmert vectors):
    // column k has k leading entries 1/√(k(k+1)) and then −k/√(k(k+1)).
    let q = n - 1;
    let mut p = vec![vec![0.0; q]; n];
    for k in 1..n {
        let norm = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for row in p.iter_mut().take(k) {
            row[k - 1] = norm;
        }
        p[k][k - 1] = -(k as f64) * norm;
    }
    let project = |mat: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; q]; q];
        for (a, row_a) in out.iter_mut().enumerate() {
            for bcol in 0..q {
                let mut sum = 0.0;
                for i in 0..n {
                    for jj in 0..n {
                        sum += p[i][a] * mat[i][jj] * p[jj][bcol];
                    }
                }
                row_a[bcol] = sum;
            }
        }
        out
    };
    let s_hat = project(&matrices.s);
    let b_hat = project(&matrices.b);
    let (nu, _) = gen_eig_max(&s_hat, &b_hat)?;
    Ok(nu.max(0.0).sqrt())
}
