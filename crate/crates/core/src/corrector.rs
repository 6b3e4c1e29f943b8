//! Element correctors and the localized multiscale stiffness contributions.
//!
//! For a coarse element `T` with patch `U`, the corrector of a coarse hat
//! function `λ_j` (corner of `T`) is the fine-grid function `q` solving
//!
//! ```text
//! (A ∇q, ∇v)_U = (A ∇λ_j, ∇v)_T    for all fine-scale test functions v,
//! ```
//!
//! where the fine-scale space consists of fine-grid functions that vanish
//! on the patch boundary and whose coarse interpolation is zero.  The
//! constraints are enforced with Lagrange multipliers, giving a symmetric
//! saddle-point system per patch: the fine stiffness block followed by one
//! row per active interpolation constraint.  When the patch covers the
//! whole torus there is no boundary; a zero-mean constraint replaces it to
//! keep the system nonsingular.
//!
//! From the corrector basis, [`local_stiffness`] assembles the element's
//! contribution to the multiscale bilinear form,
//!
//! ```text
//! b_T(λ_j, λ_k) = ∫_U A (χ_T ∇λ_j − ∇ C_T λ_j) · ∇λ_k ,
//! ```
//!
//! with `k` running over every coarse node of the patch.  All integrals
//! are exact: coefficients are constant per fine element and the closed
//! element tables from [`crate::linalg::elements`] integrate products of
//! hat-function gradients without quadrature error.
//!
//! Everything here is laid out in *patch-local* ordering.  Patches of the
//! same layer count have bitwise-identical local structure regardless of
//! their center, so one [`CorrectorWorkspace`] (symbolic factorization,
//! constraint rows, hat tables) serves every element of a mesh — campaigns
//! build it once and stream per-element coefficient values through it.

use crate::coefficient::CoefficientField;
use crate::error::{Error, Result};
use crate::interpolation::{patch_constraint_rows, InterpKind};
use crate::linalg::elements::{stiffness_1d, stiffness_2d};
use crate::linalg::{SparseSystem, Strategy};
use crate::mesh::{NestedMesh, PatchGeometry};

/// Marker for "this local node is not an unknown" in index maps.
const NO_UNKNOWN: usize = usize::MAX;

/// Fine-scale corrector values for the corner basis functions of one
/// coarse element.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorBasis {
    /// One vector per corner hat of the center element (lexicographic
    /// corner order), holding nodal values over all patch fine nodes in
    /// patch-local order.  Patch-boundary entries are exactly zero.
    pub values: Vec<Vec<f64>>,
}

/// One coarse element's contribution to the multiscale bilinear form.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStiffness {
    /// `entries[j][k] = b_T(λ_j, λ_k)`: row `j` runs over the center
    /// element's corners, column `k` over all patch coarse nodes in
    /// patch-local order.
    pub entries: Vec<Vec<f64>>,
}

/// Largest absolute row sum of a [`LocalStiffness`].
///
/// The patch coarse hats sum to one on the patch, so each row integrates
/// the corresponding flux against a constant and must vanish; anything
/// above roundoff (`~1e-12` on well-scaled coefficients) indicates an
/// assembly bug.
pub fn row_sum_check(local: &LocalStiffness) -> f64 {
    local
        .entries
        .iter()
        .map(|row| row.iter().sum::<f64>().abs())
        .fold(0.0, f64::max)
}

/// Reusable per-(mesh, layer count, interpolation) corrector solver.
///
/// Holds everything about a patch that does not depend on the coefficient:
/// local index maps, restricted constraint rows, the saddle-point pattern
/// with its symbolic factorization, per-element slot tables for fast value
/// refresh, and the patch coarse hats.  [`Self::solve_basis`] then costs
/// one numeric factorization per coefficient.
pub struct CorrectorWorkspace {
    patch: PatchGeometry,
    kind: InterpKind,
    /// Corner hats per element, `2^d`.
    corners: usize,
    /// Local fine nodes in the patch.
    nodes: usize,
    /// Local fine elements in the patch.
    elems: usize,
    /// Unknown (non-boundary) fine nodes.
    n_int: usize,
    /// Active constraint rows, including the zero-mean row on a full-torus
    /// patch.
    n_con: usize,
    /// Unknown index per local fine node (`NO_UNKNOWN` on the boundary).
    unknown_of_node: Vec<usize>,
    /// Local fine node per unknown index.
    node_of_unknown: Vec<usize>,
    /// Constraint rows over unknown indices (zero columns removed).
    constraints: Vec<Vec<(usize, f64)>>,
    /// Corner nodes of each local fine element (entries beyond `2^d`
    /// unused).
    elem_nodes: Vec<[usize; 4]>,
    /// Local fine elements of the center coarse element.
    center: Vec<usize>,
    /// Unit-coefficient element stiffness (top-left `2^d` block).
    k_unit: [[f64; 4]; 4],
    /// Center-corner hats, dense over local fine nodes.
    p_basis: Vec<Vec<f64>>,
    /// Every patch coarse hat as a sparse `(local fine node, value)` list,
    /// aligned with the patch's coarse node ordering.
    hat_rows: Vec<Vec<(usize, f64)>>,
    /// Saddle-point system; built lazily on the first solve so that
    /// assembly-only uses of the workspace skip the symbolic analysis.
    sys: Option<SparseSystem>,
    /// Per element, the value slot of each `(corner i, corner j)` pair in
    /// the system (`NO_UNKNOWN` where either node is on the boundary).
    elem_slots: Vec<[usize; 16]>,
}

impl CorrectorWorkspace {
    /// Builds the coefficient-independent part of a patch solver.
    ///
    /// The patch determines local structure only; a workspace built for
    /// one element serves every element of the same mesh and layer count
    /// (local orderings are translation-invariant).
    pub fn new(mesh: &NestedMesh, patch: &PatchGeometry, kind: InterpKind) -> Result<Self> {
        let corners = mesh.nodes_per_elem();
        let fnw = patch.fine_nodes_per_axis(mesh);
        let few = patch.fine_elems_per_axis(mesh);
        let nodes = fnw[0] * fnw[1].max(1);
        let elems = few[0] * few[1].max(1);

        let mut unknown_of_node = vec![NO_UNKNOWN; nodes];
        let mut node_of_unknown = Vec::new();
        for n in 0..nodes {
            if !patch.fine_boundary[n] {
                unknown_of_node[n] = node_of_unknown.len();
                node_of_unknown.push(n);
            }
        }
        let n_int = node_of_unknown.len();

        // Interpolation constraints, restricted to the unknowns.  Rows that
        // lose all support (hats living entirely on the boundary) drop out;
        // they are trivially satisfied and would make the multiplier block
        // rank-deficient.
        let mut constraints: Vec<Vec<(usize, f64)>> = Vec::new();
        for row in patch_constraint_rows(mesh, patch, kind)? {
            let restricted: Vec<(usize, f64)> = row
                .into_iter()
                .filter_map(|(n, w)| {
                    let u = unknown_of_node[n];
                    (u != NO_UNKNOWN).then_some((u, w))
                })
                .collect();
            if !restricted.is_empty() {
                constraints.push(restricted);
            }
        }
        // A full-torus patch has no boundary, so the stiffness block keeps
        // constants in its kernel; a zero-mean constraint (uniform grid, so
        // the nodal sum is the mean) restores well-posedness.
        if n_int == nodes {
            constraints.push((0..n_int).map(|u| (u, 1.0)).collect());
        }
        let n_con = constraints.len();

        let elem_nodes: Vec<[usize; 4]> = (0..elems)
            .map(|le| patch.local_fine_elem_nodes(mesh, le))
            .collect();

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

        let cnw = patch.coarse_nodes_per_axis(mesh);
        let refinement = mesh.refinement;
        let mut hat_rows = Vec::with_capacity(cnw[0] * cnw[1].max(1));
        if mesh.d == 1 {
            for c0 in 0..cnw[0] {
                let w0 = axis_hat_weights(c0, fnw[0], refinement, patch.wraps[0]);
                let row: Vec<(usize, f64)> = w0
                    .iter()
                    .enumerate()
                    .filter(|&(_, &v)| v != 0.0)
                    .map(|(n, &v)| (n, v))
                    .collect();
                hat_rows.push(row);
            }
        } else {
            let weights0: Vec<Vec<f64>> = (0..cnw[0])
                .map(|c| axis_hat_weights(c, fnw[0], refinement, patch.wraps[0]))
                .collect();
            let weights1: Vec<Vec<f64>> = (0..cnw[1])
                .map(|c| axis_hat_weights(c, fnw[1], refinement, patch.wraps[1]))
                .collect();
            for c1 in 0..cnw[1] {
                for c0 in 0..cnw[0] {
                    let mut row = Vec::new();
                    for (i1, &v1) in weights1[c1].iter().enumerate() {
                        if v1 == 0.0 {
                            continue;
                        }
                        for (i0, &v0) in weights0[c0].iter().enumerate() {
                            if v0 != 0.0 {
                                row.push((i1 * fnw[0] + i0, v0 * v1));
                            }
                        }
                    }
                    hat_rows.push(row);
                }
            }
        }

        // The center element sits at local coarse coordinates `lo`; its
        // corner hats are densified for right-hand-side gathers.
        let mut p_basis = Vec::with_capacity(corners);
        for corner in 0..corners {
            let mut c = [0usize; 2];
            for a in 0..mesh.d {
                c[a] = patch.lo[a] + ((corner >> a) & 1);
                if patch.wraps[a] {
                    c[a] %= cnw[a];
                }
            }
            let k = if mesh.d == 1 { c[0] } else { c[1] * cnw[0] + c[0] };
            let mut dense = vec![0.0; nodes];
            for &(n, v) in &hat_rows[k] {
                dense[n] = v;
            }
            p_basis.push(dense);
        }

        Ok(CorrectorWorkspace {
            patch: patch.clone(),
            kind,
            corners,
            nodes,
            elems,
            n_int,
            n_con,
            unknown_of_node,
            node_of_unknown,
            constraints,
            elem_nodes,
            center: patch.center_local_fine_elems(mesh),
            k_unit,
            p_basis,
            hat_rows,
            sys: None,
            elem_slots: Vec::new(),
        })
    }

    /// Number of local fine nodes in the patch.
    pub fn fine_nodes(&self) -> usize {
        self.nodes
    }

    /// Number of local fine elements in the patch.
    pub fn fine_elems(&self) -> usize {
        self.elems
    }

    /// Corner hats per element (`2^d`).
    pub fn corners(&self) -> usize {
        self.corners
    }

    /// Patch geometry the workspace was built from.
    pub fn patch(&self) -> &PatchGeometry {
        &self.patch
    }

    /// Interpolation flavor the constraints encode.
    pub fn kind(&self) -> InterpKind {
        self.kind
    }

    /// Center-corner hat values over the local fine nodes.
    pub fn corner_hat(&self, j: usize) -> &[f64] {
        &self.p_basis[j]
    }

    /// Local fine elements making up the center coarse element.
    pub fn center_elems(&self) -> &[usize] {
        &self.center
    }

    /// Corner nodes of a local fine element.
    pub fn local_elem_nodes(&self, le: usize) -> &[usize; 4] {
        &self.elem_nodes[le]
    }

    /// Unit-coefficient element stiffness table (top-left `2^d` block).
    pub fn unit_stiffness(&self) -> &[[f64; 4]; 4] {
        &self.k_unit
    }

    /// Assembles the saddle-point pattern and its symbolic factorization.
    fn ensure_system(&mut self) -> Result<()> {
        if self.sys.is_some() {
            return Ok(());
        }
        let dim = self.n_int + self.n_con;
        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        for nodes4 in &self.elem_nodes {
            for i in 0..self.corners {
                let ri = self.unknown_of_node[nodes4[i]];
                if ri == NO_UNKNOWN {
                    continue;
                }
                for j in 0..self.corners {
                    let rj = self.unknown_of_node[nodes4[j]];
                    if rj != NO_UNKNOWN {
                        trips.push((ri, rj, 0.0));
                    }
                }
            }
        }
        for (c, row) in self.constraints.iter().enumerate() {
            for &(u, w) in row {
                trips.push((self.n_int + c, u, w));
                trips.push((u, self.n_int + c, w));
            }
        }
        // Boundary patches give a positive-definite leading block, so the
        // constraints-last factorization applies; a full-torus patch keeps
        // constants in the stiffness kernel and goes through LU instead.
        let strategy = if self.n_int == self.nodes {
            Strategy::Lu
        } else {
            Strategy::SaddlePoint { leading: self.n_int }
        };
        let context = format!(
            "corrector saddle-point system ({} unknowns, {} constraints, m={})",
            self.n_int, self.n_con, self.patch.m
        );
        let sys = SparseSystem::from_triplets(dim, &trips, strategy, context)?;
        let mut elem_slots = Vec::with_capacity(self.elems);
        for nodes4 in &self.elem_nodes {
            let mut slots = [NO_UNKNOWN; 16];
            for i in 0..self.corners {
                let ri = self.unknown_of_node[nodes4[i]];
                if ri == NO_UNKNOWN {
                    continue;
                }
                for j in 0..self.corners {
                    let rj = self.unknown_of_node[nodes4[j]];
                    if rj != NO_UNKNOWN {
                        slots[i * 4 + j] = sys
                            .slot(ri, rj)
                            .expect("assembled pattern must contain its own entries");
                    }
                }
            }
            elem_slots.push(slots);
        }
        self.sys = Some(sys);
        self.elem_slots = elem_slots;
        Ok(())
    }

    /// Checks a coefficient against the patch and the positivity
    /// requirement.
    fn check_coefficient(&self, a: &CoefficientField) -> Result<()> {
        if a.values.len() != self.elems {
            return Err(Error::data(format!(
                "coefficient has {} values but the patch has {} fine elements",
                a.values.len(),
                self.elems
            )));
        }
        if let Some(bad) = a.values.iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::data(format!(
                "coefficient must be positive on every fine element (found {bad})"
            )));
        }
        Ok(())
    }

    /// Writes a coefficient's stiffness values into the system pattern.
    fn refresh_values(&mut self, a: &CoefficientField) {
        let corners = self.corners;
        let sys = self.sys.as_mut().expect("system built before refresh");
        let vals = sys.values_mut();
        for slots in &self.elem_slots {
            for s in slots.iter().take(4 * corners) {
                if *s != NO_UNKNOWN {
                    vals[*s] = 0.0;
                }
            }
        }
        for (le, slots) in self.elem_slots.iter().enumerate() {
            let ae = a.values[le];
            for i in 0..corners {
                for j in 0..corners {
                    let s = slots[i * 4 + j];
                    if s != NO_UNKNOWN {
                        vals[s] += ae * self.k_unit[i][j];
                    }
                }
            }
        }
    }

    /// Solves for the corrector basis of the center element under the
    /// given patch-local coefficient.
    pub fn solve_basis(&mut self, a: &CoefficientField) -> Result<CorrectorBasis> {
        self.check_coefficient(a)?;
        if self.n_int == 0 {
            // Every fine node is on the patch boundary (refinement 1 with
            // m = 0): the fine-scale space is trivial.
            return Ok(CorrectorBasis {
                values: vec![vec![0.0; self.nodes]; self.corners],
            });
        }
        self.ensure_system()?;
        self.refresh_values(a);

        let dim = self.n_int + self.n_con;
        let mut rhs = vec![0.0; dim * self.corners];
        for &le in &self.center {
            let nodes4 = self.elem_nodes[le];
            let ae = a.values[le];
            for j in 0..self.corners {
                let col = &mut rhs[j * dim..(j + 1) * dim];
                let mut pv = [0.0; 4];
                for c in 0..self.corners {
                    pv[c] = self.p_basis[j][nodes4[c]];
                }
                for i in 0..self.corners {
                    let u = self.unknown_of_node[nodes4[i]];
                    if u == NO_UNKNOWN {
                        continue;
                    }
                    let mut s = 0.0;
                    for c in 0..self.corners {
                        s += self.k_unit[i][c] * pv[c];
                    }
                    col[u] += ae * s;
                }
            }
        }

        let sol = self
            .sys
            .as_mut()
            .expect("system built above")
            .solve_block(&rhs, self.corners)?;
        let mut values = vec![vec![0.0; self.nodes]; self.corners];
        for (j, q) in values.iter_mut().enumerate() {
            let col = &sol[j * dim..(j + 1) * dim];
            for (u, &n) in self.node_of_unknown.iter().enumerate() {
                q[n] = col[u];
            }
        }
        Ok(CorrectorBasis { values })
    }

    /// Assembles the element's multiscale stiffness contribution from a
    /// corrector basis computed for the same coefficient.
    ///
    /// Internally this forms, per corner `j`, the nodal flux functional
    /// `g_j = K_T p_j − K_U q_j` (center-element stiffness applied to the
    /// hat minus patch stiffness applied to the corrector) and pairs it
    /// with every patch coarse hat.
    pub fn local_stiffness(&self, a: &CoefficientField, basis: &CorrectorBasis) -> Result<LocalStiffness> {
        self.check_coefficient(a)?;
        let corners = self.corners;
        let mut flux = vec![vec![0.0; self.nodes]; corners];
        for &le in &self.center {
            let nodes4 = self.elem_nodes[le];
            let ae = a.values[le];
            for (j, g) in flux.iter_mut().enumerate() {
                let mut pv = [0.0; 4];
                for c in 0..corners {
                    pv[c] = self.p_basis[j][nodes4[c]];
                }
                for i in 0..corners {
                    let mut s = 0.0;
                    for c in 0..corners {
                        s += self.k_unit[i][c] * pv[c];
                    }
                    g[nodes4[i]] += ae * s;
                }
            }
        }
        for (le, nodes4) in self.elem_nodes.iter().enumerate() {
            let ae = a.values[le];
            for (j, g) in flux.iter_mut().enumerate() {
                let mut qv = [0.0; 4];
                for c in 0..corners {
                    qv[c] = basis.values[j][nodes4[c]];
                }
                for i in 0..corners {
                    let mut s = 0.0;
                    for c in 0..corners {
                        s += self.k_unit[i][c] * qv[c];
                    }
                    g[nodes4[i]] -= ae * s;
                }
            }
        }
        let entries = flux
            .iter()
            .map(|g| {
                self.hat_rows
                    .iter()
                    .map(|row| row.iter().map(|&(n, w)| w * g[n]).sum())
                    .collect()
            })
            .collect();
        Ok(LocalStiffness { entries })
    }
}

/// One axis of a coarse hat, tabulated on the local fine lattice.
///
/// Distance is measured in fine steps from the hat's node at `c ·
/// refinement` and wraps on a full-torus axis; the hat is `1 − d/r`
/// clipped at zero, which is exact for the nested lattices used here.
fn axis_hat_weights(c: usize, fine_width: usize, refinement: usize, wraps: bool) -> Vec<f64> {
    let r = refinement as f64;
    let peak = (c * refinement) as isize;
    (0..fine_width)
        .map(|n| {
            let mut dist = (n as isize - peak).unsigned_abs() as f64;
            if wraps {
                dist = dist.min(fine_width as f64 - dist);
            }
            (1.0 - dist / r).max(0.0)
        })
        .collect()
}

/// Solves the corrector problem for every corner hat of the patch's
/// center element.
///
/// One-shot form of [`CorrectorWorkspace::solve_basis`]; loops over many
/// coefficients should hold a workspace instead.
pub fn solve_corrector(
    a_patch: &CoefficientField,
    mesh: &NestedMesh,
    patch: &PatchGeometry,
    kind: InterpKind,
) -> Result<CorrectorBasis> {
    CorrectorWorkspace::new(mesh, patch, kind)?.solve_basis(a_patch)
}

/// Assembles one element's multiscale stiffness contribution.
///
/// One-shot form of [`CorrectorWorkspace::local_stiffness`]; the corrector
/// must come from the same coefficient.
pub fn local_stiffness(
    a_patch: &CoefficientField,
    corrector: &CorrectorBasis,
    mesh: &NestedMesh,
    patch: &PatchGeometry,
    kind: InterpKind,
) -> Result<LocalStiffness> {
    CorrectorWorkspace::new(mesh, patch, kind)?.local_stiffness(a_patch, corrector)
}
