//! Coarse quasi-interpolation `I_H` and coarse-to-fine prolongation.
//!
//! The multiscale decomposition is defined by a projection-like operator
//! `I_H` from fine-mesh functions to coarse-mesh functions.  The default is
//! the **averaged elementwise L² projection**: project the fine function
//! onto the multilinear space of each coarse element separately, then
//! define the coarse nodal value as the arithmetic mean of the `2^d`
//! adjacent elementwise projections at that node.  It is local (one element
//! ring), bounded, and reproduces coarse functions *exactly* — the property
//! the decomposition rests on.  For one-dimensional studies a **nodal**
//! variant (point evaluation at coarse nodes) is provided; it is the
//! operator under which the coarse solver coincides with the classical
//! harmonic-mean scheme.
//!
//! On the uniform torus all element geometry is identical, so the
//! projection reduces to one precomputed template per mesh: a
//! `2^d x (refinement+1)^d` matrix mapping a coarse element's fine nodal
//! values to the projected coarse corner values, already containing the
//! `1/2^d` averaging weight.  The global operator scatters this template;
//! [`patch_constraint_rows`] assembles the same template patch-locally so
//! that every patch sees bitwise-identical constraint rows regardless of
//! where it sits on the torus (which keeps translated local problems
//! exactly translation invariant).

use crate::error::{Error, Result};
use crate::linalg::elements::{hat_1d, hat_2d, mass_1d, mass_2d};
use crate::linalg::{lu_solve, SparseMatrix};
use crate::mesh::{NestedMesh, PatchGeometry};

/// Which quasi-interpolation operator to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpKind {
    /// Elementwise L² projection followed by nodal averaging (any d).
    AveragedL2,
    /// Point evaluation at coarse nodes (d = 1 only).
    Nodal1d,
}

/// The assembled operator: a sparse `coarse_nodes x fine_nodes` matrix.
#[derive(Debug, Clone)]
pub struct InterpolationMap {
    /// Row `z` holds the weights of coarse value `z` over fine nodal
    /// values.
    pub matrix: SparseMatrix,
    /// Operator variant the matrix was built for.
    pub kind: InterpKind,
}

impl InterpolationMap {
    /// Applies the operator to a fine nodal vector.
    pub fn apply(&self, fine: &[f64]) -> Vec<f64> {
        self.matrix.matvec(fine)
    }
}

/// The per-element projection template: row `j` (coarse corner) over
/// `(r+1)^d` local fine nodes, including the `1/2^d` averaging factor.
///
/// Row `j` applied to a coarse element's fine values gives that element's
/// contribution to the coarse node at corner `j`.
fn projection_template(mesh: &NestedMesh) -> Vec<Vec<f64>> {
    let r = mesh.refinement;
    let h = mesh.h_fine();
    match mesh.d {
        1 => {
            let ln = r + 1;
            // Fine mass matrix of one coarse element.
            let mut mf = vec![vec![0.0; ln]; ln];
            let me = mass_1d(h);
            for g in 0..r {
                for i in 0..2 {
                    for j in 0..2 {
                        mf[g + i][g + j] += me[i][j];
                    }
                }
            }
            // P[a][j]: coarse basis j at local fine node a.
            let p: Vec<[f64; 2]> = (0..ln).map(|a| hat_1d(a as f64 / r as f64)).collect();
            // B[j][a] = sum_b P[b][j] * Mf[b][a].
            let mut b = vec![vec![0.0; ln]; 2];
            for j in 0..2 {
                for a in 0..ln {
                    b[j][a] = (0..ln).map(|q| p[q][j] * mf[q][a]).sum();
                }
            }
            let mc = mass_1d(mesh.h_coarse());
            let mc_rows: Vec<Vec<f64>> = mc.iter().map(|r| r.to_vec()).collect();
            // L = Mc^{-1} B, scaled by the nodal averaging weight 1/2.
            let mut l = vec![vec![0.0; ln]; 2];
            for a in 0..ln {
                let col: Vec<f64> = (0..2).map(|j| b[j][a]).collect();
                let x = lu_solve(&mc_rows, &col).expect("coarse mass matrix is SPD");
                for j in 0..2 {
                    l[j][a] = 0.5 * x[j];
                }
            }
            l
        }
        _ => {
            let ln1 = r + 1;
            let ln = ln1 * ln1;
            let mut mf = vec![vec![0.0; ln]; ln];
            let me = mass_2d(h);
            for g1 in 0..r {
                for g0 in 0..r {
                    let corners = [
                        g0 + ln1 * g1,
                        (g0 + 1) + ln1 * g1,
                        g0 + ln1 * (g1 + 1),
                        (g0 + 1) + ln1 * (g1 + 1),
                    ];
                    for i in 0..4 {
                        for j in 0..4 {
                            mf[corners[i]][corners[j]] += me[i][j];
                        }
                    }
                }
            }
            let p: Vec<[f64; 4]> = (0..ln)
                .map(|a| {
                    let (n0, n1) = (a % ln1, a / ln1);
                    hat_2d(n0 as f64 / r as f64, n1 as f64 / r as f64)
                })
                .collect();
            let mut b = vec![vec![0.0; ln]; 4];
            for j in 0..4 {
                for a in 0..ln {
                    b[j][a] = (0..ln).map(|q| p[q][j] * mf[q][a]).sum();
                }
            }
            let mc = mass_2d(mesh.h_coarse());
            let mc_rows: Vec<Vec<f64>> = mc.iter().map(|r| r.to_vec()).collect();
            let mut l = vec![vec![0.0; ln]; 4];
            for a in 0..ln {
                let col: Vec<f64> = (0..4).map(|j| b[j][a]).collect();
                let x = lu_solve(&mc_rows, &col).expect("coarse mass matrix is SPD");
                for j in 0..4 {
                    l[j][a] = 0.25 * x[j];
                }
            }
            l
        }
    }
}

/// Local fine-node indices (on the global fine lattice) of coarse element
/// `t`, lexicographic over the `(r+1)^d` element-local lattice.
fn coarse_elem_fine_nodes(mesh: &NestedMesh, t: usize) -> Vec<usize> {
    let r = mesh.refinement;
    let nf = mesh.n_fine;
    let c = mesh.coords(t, mesh.n_coarse);
    match mesh.d {
        1 => (0..=r).map(|g| (c[0] * r + g) % nf).collect(),
        _ => {
            let mut out = Vec::with_capacity((r + 1) * (r + 1));
            for g1 in 0..=r {
                for g0 in 0..=r {
                    out.push(mesh.index([c[0] * r + g0, c[1] * r + g1], nf));
                }
            }
            out
        }
    }
}

/// Builds the quasi-interpolation operator on the given mesh.
pub fn build_interpolation(mesh: &NestedMesh, kind: InterpKind) -> Result<InterpolationMap> {
    match kind {
        InterpKind::Nodal1d => {
            if mesh.d != 1 {
                return Err(Error::Unsupported(
                    "nodal interpolation is only defined in one dimension".to_string(),
                ));
            }
            let r = mesh.refinement;
            let trips: Vec<(usize, usize, f64)> = (0..mesh.coarse_nodes())
                .map(|z| (z, z * r, 1.0))
                .collect();
            let matrix = SparseMatrix::from_triplets(mesh.coarse_nodes(), mesh.fine_nodes(), &trips)?;
            Ok(InterpolationMap { matrix, kind })
        }
        InterpKind::AveragedL2 => {
            let template = projection_template(mesh);
            let npe = mesh.nodes_per_elem();
            let mut trips = Vec::new();
            for t in 0..mesh.coarse_elems() {
                let corners = mesh.coarse_elem_nodes(t);
                let fine = coarse_elem_fine_nodes(mesh, t);
                for j in 0..npe {
                    let row = corners[j];
                    for (a, &col) in fine.iter().enumerate() {
                        trips.push((row, col, template[j][a]));
                    }
                }
            }
            let matrix = SparseMatrix::from_triplets(mesh.coarse_nodes(), mesh.fine_nodes(), &trips)?;
            Ok(InterpolationMap { matrix, kind })
        }
    }
}

/// Evaluates a coarse nodal vector at every fine node (exact multilinear
/// interpolation); the right inverse of the quasi-interpolation.
pub fn prolong(mesh: &NestedMesh, coarse: &[f64]) -> Vec<f64> {
    assert_eq!(coarse.len(), mesh.coarse_nodes(), "prolong dimension mismatch");
    let r = mesh.refinement;
    let nc = mesh.n_coarse;
    let nf = mesh.n_fine;
    let mut out = vec![0.0; mesh.fine_nodes()];
    match mesh.d {
        1 => {
            for (n, o) in out.iter_mut().enumerate() {
                let k = n / r;
                let t = (n % r) as f64 / r as f64;
                let w = hat_1d(t);
                *o = w[0] * coarse[k % nc] + w[1] * coarse[(k + 1) % nc];
            }
        }
        _ => {
            for n1 in 0..nf {
                let k1 = n1 / r;
                let t1 = (n1 % r) as f64 / r as f64;
                for n0 in 0..nf {
                    let k0 = n0 / r;
                    let t0 = (n0 % r) as f64 / r as f64;
                    let w = hat_2d(t0, t1);
                    let c00 = coarse[mesh.index([k0, k1], nc)];
                    let c10 = coarse[mesh.index([k0 + 1, k1], nc)];
                    let c01 = coarse[mesh.index([k0, k1 + 1], nc)];
                    let c11 = coarse[mesh.index([k0 + 1, k1 + 1], nc)];
                    out[n0 + nf * n1] = w[0] * c00 + w[1] * c10 + w[2] * c01 + w[3] * c11;
                }
            }
        }
    }
    out
}

/// Quasi-interpolation rows restricted to one patch, in patch-local
/// indexing.
///
/// Returns one row per local coarse node (the patch closure lattice, local
/// lexicographic order); each row lists `(local fine node, weight)` pairs
/// sorted by node.  Rows are assembled from in-patch elements only, which
/// equals the global operator's action on functions vanishing outside the
/// patch interior — exactly the class the corrector constraints apply to.
/// Because assembly runs in local element order, translated patches get
/// bitwise-identical rows.
pub fn patch_constraint_rows(
    mesh: &NestedMesh,
    patch: &PatchGeometry,
    kind: InterpKind,
) -> Result<Vec<Vec<(usize, f64)>>> {
    let cnw = patch.coarse_nodes_per_axis(mesh);
    let fnw = patch.fine_nodes_per_axis(mesh);
    let n_rows = cnw[0] * cnw[1].max(1);
    match kind {
        InterpKind::Nodal1d => {
            if mesh.d != 1 {
                return Err(Error::Unsupported(
                    "nodal interpolation is only defined in one dimension".to_string(),
                ));
            }
            let r = mesh.refinement;
            Ok((0..n_rows).map(|z| vec![(z * r, 1.0)]).collect())
        }
        InterpKind::AveragedL2 => {
            let template = projection_template(mesh);
            let r = mesh.refinement;
            let npe = mesh.nodes_per_elem();
            let mut rows: Vec<std::collections::BTreeMap<usize, f64>> =
                vec![std::collections::BTreeMap::new(); n_rows];
            // Iterate local coarse elements in local lexicographic order.
            let ce = [patch.coarse_per_axis[0], patch.coarse_per_axis[1]];
            let n_elems = if mesh.d == 1 { ce[0] } else { ce[0] * ce[1] };
            for le in 0..n_elems {
                let (a0, a1) = if mesh.d == 1 { (le, 0) } else { (le % ce[0], le / ce[0]) };
                // Local coarse corner nodes, with wrap on full-torus axes.
                let wrap_node = |v: usize, axis: usize| -> usize {
                    if patch.wraps[axis] && v == cnw[axis] { 0 } else { v }
                };
                let corners: Vec<usize> = match mesh.d {
                    1 => vec![wrap_node(a0, 0), wrap_node(a0 + 1, 0)],
                    _ => vec![
                        wrap_node(a0, 0) + cnw[0] * wrap_node(a1, 1),
                        wrap_node(a0 + 1, 0) + cnw[0] * wrap_node(a1, 1),
                        wrap_node(a0, 0) + cnw[0] * wrap_node(a1 + 1, 1),
                        wrap_node(a0 + 1, 0) + cnw[0] * wrap_node(a1 + 1, 1),
                    ],
                };
                // Local fine nodes of this coarse element.
                let wrap_fine = |v: usize, axis: usize| -> usize {
                    if patch.wraps[axis] && v == fnw[axis] { 0 } else { v }
                };
                let fine: Vec<usize> = match mesh.d {
                    1 => (0..=r).map(|g| wrap_fine(a0 * r + g, 0)).collect(),
                    _ => {
                        let mut out = Vec::with_capacity((r + 1) * (r + 1));
                        for g1 in 0..=r {
                            for g0 in 0..=r {
                                out.push(
                                    wrap_fine(a0 * r + g0, 0) + fnw[0] * wrap_fine(a1 * r + g1, 1),
                                );
                            }
                        }
                        out
                    }
                };
                for j in 0..npe {
                    let row = &mut rows[corners[j]];
                    for (a, &col) in fine.iter().enumerate() {
                        *row.entry(col).or_insert(0.0) += template[j][a];
                    }
                }
            }
            Ok(rows
                .into_iter()
                .map(|m| m.into_iter().collect())
                .collect())
        }
    }
}
