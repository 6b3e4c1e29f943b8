//! Reference solvers and error norms: per-sample multiscale ground truth
//! and a standard fine-grid FEM.
//!
//! The offline-online machinery approximates what one would get by
//! running the full localized multiscale method on each sampled
//! coefficient.  This module computes exactly that ground truth — per
//! coarse element a corrector solve with the *actual* sampled coefficient
//! on its patch, then global assembly, coarse solve, and upscaling — by
//! reusing the corrector workspace with per-element coefficients.  The
//! only difference between the two paths is the combination step, which
//! is precisely what error measurements must isolate.
//!
//! A plain bilinear FEM solver on the fine torus grid supplies `u_h` for
//! convergence sanity checks, and the error norms used throughout the
//! experiments live here: coarse-mass `L²` norms for nodal coarse
//! functions and unit-coefficient stiffness `H¹` seminorms for fine-grid
//! functions, both evaluated by exact element tables.

use crate::coefficient::CoefficientField;
use crate::corrector::{CorrectorBasis, CorrectorWorkspace};
use crate::error::{Error, Result};
use crate::interpolation::{prolong, InterpKind};
use crate::linalg::elements::{
    hat_1d, hat_2d, mass_1d, mass_2d, quad_form, stiffness_1d, stiffness_2d, GAUSS2_NODES,
    GAUSS2_WEIGHTS,
};
use crate::linalg::{SparseMatrix, SparseSystem, Strategy};
use crate::mesh::{patch, NestedMesh};
use crate::online::{solve_coarse, CoarseSystem};
use crate::offline::coarse_load_vector;

/// Ground-truth multiscale solution of one sampled coefficient.
#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    /// Coarse nodal solution `u_m^H`.
    pub coarse: Vec<f64>,
    /// Upscaled fine nodal solution `u_m^ms`.
    pub upscaled: Vec<f64>,
    /// Standard fine FEM solution, when requested separately.
    pub fine_fem: Option<Vec<f64>>,
}

/// Solves the localized multiscale method with the actual coefficient.
///
/// Per coarse element: restrict `a_full` to the element's patch, solve
/// the corrector basis, assemble the local contribution, and scatter.
/// The coarse system is then solved on the zero-mean complement and
/// upscaled with the per-element correctors.
pub fn pglod_solve(
    a_full: &CoefficientField,
    mesh: &NestedMesh,
    m: usize,
    kind: InterpKind,
    f: impl Fn([f64; 2]) -> f64,
) -> Result<ReferenceSolution> {
    if a_full.values.len() != mesh.fine_elems() {
        return Err(Error::data(format!(
            "coefficient has {} values for {} fine elements",
            a_full.values.len(),
            mesh.fine_elems()
        )));
    }
    let reference = patch(mesh, 0, m);
    let mut ws = CorrectorWorkspace::new(mesh, &reference, kind)?;
    let nodes = mesh.coarse_nodes();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut bases: Vec<CorrectorBasis> = Vec::with_capacity(mesh.coarse_elems());
    for t in 0..mesh.coarse_elems() {
        let p = patch(mesh, t, m);
        let local = CoefficientField {
            values: p.fine_elements.iter().map(|&e| a_full.values[e]).collect(),
        };
        let basis = ws.solve_basis(&local)?;
        let bt = ws.local_stiffness(&local, &basis)?;
        let trial = mesh.coarse_elem_nodes(t);
        for (j, row) in bt.entries.iter().enumerate() {
            for (k_local, &v) in row.iter().enumerate() {
                triplets.push((p.coarse_nodes[k_local], trial[j], v));
            }
        }
        bases.push(basis);
    }
    let stiffness = SparseMatrix::from_triplets(nodes, nodes, &triplets)?;
    let mut system = CoarseSystem {
        stiffness,
        load: coarse_load_vector(mesh, f),
        solution: None,
    };
    let coarse = solve_coarse(&mut system)?;

    let mut upscaled = prolong(mesh, &coarse);
    for (t, basis) in bases.iter().enumerate() {
        let p = patch(mesh, t, m);
        let corners = mesh.coarse_elem_nodes(t);
        for (j, q) in basis.values.iter().enumerate() {
            let c = coarse[corners[j]];
            if c == 0.0 {
                continue;
            }
            for (local, &global) in p.fine_nodes.iter().enumerate() {
                upscaled[global] -= c * q[local];
            }
        }
    }
    Ok(ReferenceSolution {
        coarse,
        upscaled,
        fine_fem: None,
    })
}

/// Assembles the fine-grid load vector `∫ f φ` for the bilinear fine
/// basis, composite 2-point Gauss per fine element and axis.
pub fn fine_load_vector(mesh: &NestedMesh, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let h = mesh.h_fine();
    let mut load = vec![0.0; mesh.fine_nodes()];
    if mesh.d == 1 {
        for e in 0..mesh.fine_elems() {
            let nodes = mesh.fine_elem_nodes(e);
            for (g, &gx) in GAUSS2_NODES.iter().enumerate() {
                let x = (e as f64 + gx) * h;
                let hat = hat_1d(gx);
                let w = GAUSS2_WEIGHTS[g] * h * f([x, 0.0]);
                load[nodes[0]] += w * hat[0];
                load[nodes[1]] += w * hat[1];
            }
        }
    } else {
        for e in 0..mesh.fine_elems() {
            let ce = mesh.coords(e, mesh.n_fine);
            let nodes = mesh.fine_elem_nodes(e);
            for (g0, &gx) in GAUSS2_NODES.iter().enumerate() {
                for (g1, &gy) in GAUSS2_NODES.iter().enumerate() {
                    let x = [(ce[0] as f64 + gx) * h, (ce[1] as f64 + gy) * h];
                    let hat = hat_2d(gx, gy);
                    let w = GAUSS2_WEIGHTS[g0] * GAUSS2_WEIGHTS[g1] * h * h * f(x);
                    for c in 0..4 {
                        load[nodes[c]] += w * hat[c];
                    }
                }
            }
        }
    }
    load
}

/// Standard bilinear FEM on the fine torus grid with a zero-mean
/// constraint (mean Lagrange multiplier).
pub fn fem_fine_solve(
    a_full: &CoefficientField,
    mesh: &NestedMesh,
    f: impl Fn([f64; 2]) -> f64,
) -> Result<Vec<f64>> {
    if a_full.values.len() != mesh.fine_elems() {
        return Err(Error::data(format!(
            "coefficient has {} values for {} fine elements",
            a_full.values.len(),
            mesh.fine_elems()
        )));
    }
    let n = mesh.fine_nodes();
    let npe = mesh.nodes_per_elem();
    let mut k_unit = [[0.0; 4]; 4];
    match mesh.d {
        1 => {
            let k = stiffness_1d(mesh.h_fine());
            for i in 0..2 {
                for j in 0..2 {
                    k_unit[i][j] = k[i][j];
                }
            }
        }
        _ => k_unit = stiffness_2d(),
    }
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for e in 0..mesh.fine_elems() {
        let nodes = mesh.fine_elem_nodes(e);
        let ae = a_full.values[e];
        for i in 0..npe {
            for j in 0..npe {
                triplets.push((nodes[i], nodes[j], ae * k_unit[i][j]));
            }
        }
    }
    for k in 0..n {
        triplets.push((k, n, 1.0));
        triplets.push((n, k, 1.0));
    }
    let mut sys = SparseSystem::from_triplets(
        n + 1,
        &triplets,
        Strategy::Lu,
        "fine FEM system with mean constraint",
    )?;
    let mut rhs = fine_load_vector(mesh, f);
    rhs.push(0.0);
    let sol = sys.solve(&rhs)?;
    Ok(sol[..n].to_vec())
}

/// `L²` norm of a coarse nodal function via the exact coarse mass matrix.
pub fn coarse_l2_norm(mesh: &NestedMesh, v: &[f64]) -> f64 {
    grid_l2_norm(mesh.d, mesh.n_coarse, mesh.h_coarse(), v, |t| {
        mesh.coarse_elem_nodes(t)
    })
}

/// `L²` norm of a fine nodal function via the exact fine mass matrix.
pub fn fine_l2_norm(mesh: &NestedMesh, v: &[f64]) -> f64 {
    grid_l2_norm(mesh.d, mesh.n_fine, mesh.h_fine(), v, |e| {
        mesh.fine_elem_nodes(e)
    })
}

fn grid_l2_norm(
    d: usize,
    n: usize,
    h: f64,
    v: &[f64],
    elem_nodes: impl Fn(usize) -> [usize; 4],
) -> f64 {
    let mut total = 0.0;
    if d == 1 {
        let m = mass_1d(h);
        for e in 0..n {
            let nodes = elem_nodes(e);
            let local = [v[nodes[0]], v[nodes[1]]];
            total += quad_form(&m, &local);
        }
    } else {
        let m = mass_2d(h);
        for e in 0..n * n {
            let nodes = elem_nodes(e);
            let local = [v[nodes[0]], v[nodes[1]], v[nodes[2]], v[nodes[3]]];
            total += quad_form(&m, &local);
        }
    }
    total.max(0.0).sqrt()
}

/// `H¹` seminorm of a fine nodal function (unit-coefficient stiffness).
pub fn fine_h1_seminorm(mesh: &NestedMesh, v: &[f64]) -> f64 {
    let mut total = 0.0;
    if mesh.d == 1 {
        let k = stiffness_1d(mesh.h_fine());
        for e in 0..mesh.fine_elems() {
            let nodes = mesh.fine_elem_nodes(e);
            let local = [v[nodes[0]], v[nodes[1]]];
            total += quad_form(&k, &local);
        }
    } else {
        let k = stiffness_2d();
        for e in 0..mesh.fine_elems() {
            let nodes = mesh.fine_elem_nodes(e);
            let local = [v[nodes[0]], v[nodes[1]], v[nodes[2]], v[nodes[3]]];
            total += quad_form(&k, &local);
        }
    }
    total.max(0.0).sqrt()
}

/// Relative errors of an offline-online solution against the reference:
/// coarse `L²` quotient and upscaled `H¹`-seminorm quotient.
pub fn relative_errors(
    mesh: &NestedMesh,
    reference: &ReferenceSolution,
    tilde_coarse: &[f64],
    tilde_upscaled: &[f64],
) -> Result<(f64, f64)> {
    let denom_l2 = coarse_l2_norm(mesh, &reference.coarse);
    let denom_h1 = fine_h1_seminorm(mesh, &reference.upscaled);
    if denom_l2 == 0.0 || denom_h1 == 0.0 {
        return Err(Error::data(
            "relative error undefined: reference solution has zero norm".to_string(),
        ));
    }
    let diff_coarse: Vec<f64> = reference
        .coarse
        .iter()
        .zip(tilde_coarse)
        .map(|(a, b)| a - b)
        .collect();
    let diff_fine: Vec<f64> = reference
        .upscaled
        .iter()
        .zip(tilde_upscaled)
        .map(|(a, b)| a - b)
        .collect();
    Ok((
        coarse_l2_norm(mesh, &diff_coarse) / denom_l2,
        fine_h1_seminorm(mesh, &diff_fine) / denom_h1,
    ))
}
