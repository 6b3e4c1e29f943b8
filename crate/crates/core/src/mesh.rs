//! Nested Cartesian meshes on the unit torus and element patches.
//!
//! The domain is `[0, 1]^d` (d = 1 or 2) with periodic identification of
//! opposite faces.  Three uniform lattices live on it:
//!
//! * the **coarse mesh** with `n_coarse` elements per axis (width
//!   `H = 1/n_coarse`), carrying the coarse trial/test functions;
//! * the **fine mesh** with `n_fine = n_coarse * refinement` elements per
//!   axis (width `h`), on which coefficients are resolved and corrector
//!   problems are solved;
//! * the **defect lattice** with `n_eps` cells per axis (width
//!   `ε = 1/n_eps`), on which coefficient perturbations live.
//!
//! The divisibility chain `n_coarse | n_eps | n_fine` keeps every lattice
//! nested in the next finer one, so ε-cells never straddle coarse-element
//! faces and fine elements never straddle ε-cell faces.
//!
//! Elements and nodes are indexed lexicographically (axis 0 fastest).  On
//! the torus, nodes on identified faces are a single entity, so there are
//! exactly as many nodes as elements per lattice.
//!
//! [`patch`] builds the element neighbourhoods on which corrector problems
//! are posed: `patch(T, m)` is the m-fold closure of element `T` under
//! shared-vertex adjacency, i.e. a `(2m+1)^d` box of coarse elements
//! (clipped per axis once it covers the whole torus), together with its
//! fine submesh and a boundary mask.  All patches of the same `m` are
//! translates of each other; [`PatchGeometry::shift`] records the lattice
//! translation from element 0's patch, which is what lets offline data
//! computed on one reference patch be reused everywhere.

use crate::error::{Error, Result};

/// Nested coarse/fine/defect lattices on the unit torus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestedMesh {
    /// Spatial dimension, 1 or 2.
    pub d: usize,
    /// Coarse elements per axis; `H = 1/n_coarse`.
    pub n_coarse: usize,
    /// Fine elements per axis; `h = 1/n_fine`.
    pub n_fine: usize,
    /// Fine elements per coarse element per axis (`n_fine / n_coarse`).
    pub refinement: usize,
    /// Defect cells per axis; `ε = 1/n_eps`.
    pub n_eps: usize,
}

/// Validates parameters and constructs a [`NestedMesh`].
///
/// Requirements: `d ∈ {1, 2}`, `n_coarse >= 2`, `refinement >= 1`,
/// `n_eps` a multiple of `n_coarse`, and `n_fine = n_coarse * refinement`
/// a multiple of `n_eps`.
pub fn build_mesh(d: usize, n_coarse: usize, refinement: usize, n_eps: usize) -> Result<NestedMesh> {
    if d != 1 && d != 2 {
        return Err(Error::config(format!("dimension must be 1 or 2, got {d}")));
    }
    if n_coarse < 2 {
        return Err(Error::config(format!(
            "need at least 2 coarse elements per axis, got {n_coarse}"
        )));
    }
    if refinement < 1 {
        return Err(Error::config("refinement must be at least 1".to_string()));
    }
    if n_eps == 0 || n_eps % n_coarse != 0 {
        return Err(Error::config(format!(
            "defect lattice ({n_eps} cells) must subdivide the coarse mesh ({n_coarse} elements)"
        )));
    }
    let n_fine = n_coarse * refinement;
    if n_fine % n_eps != 0 {
        return Err(Error::config(format!(
            "fine mesh ({n_fine} elements) must subdivide the defect lattice ({n_eps} cells)"
        )));
    }
    Ok(NestedMesh {
        d,
        n_coarse,
        n_fine,
        refinement,
        n_eps,
    })
}

impl NestedMesh {
    /// Coarse element width `H`.
    pub fn h_coarse(&self) -> f64 {
        1.0 / self.n_coarse as f64
    }

    /// Fine element width `h`.
    pub fn h_fine(&self) -> f64 {
        1.0 / self.n_fine as f64
    }

    /// Defect cell width `ε`.
    pub fn eps(&self) -> f64 {
        1.0 / self.n_eps as f64
    }

    /// Total number of coarse elements.
    pub fn coarse_elems(&self) -> usize {
        self.n_coarse.pow(self.d as u32)
    }

    /// Total number of coarse nodes (equal to elements on the torus).
    pub fn coarse_nodes(&self) -> usize {
        self.coarse_elems()
    }

    /// Total number of fine elements.
    pub fn fine_elems(&self) -> usize {
        self.n_fine.pow(self.d as u32)
    }

    /// Total number of fine nodes (equal to elements on the torus).
    pub fn fine_nodes(&self) -> usize {
        self.fine_elems()
    }

    /// Total number of defect cells.
    pub fn defect_cells(&self) -> usize {
        self.n_eps.pow(self.d as u32)
    }

    /// Defect cells per coarse element per axis.
    pub fn cells_per_coarse(&self) -> usize {
        self.n_eps / self.n_coarse
    }

    /// Fine elements per defect cell per axis.
    pub fn fine_per_cell(&self) -> usize {
        self.n_fine / self.n_eps
    }

    /// Number of corner nodes of one element (`2^d`).
    pub fn nodes_per_elem(&self) -> usize {
        1 << self.d
    }

    /// Lexicographic coordinates of index `idx` on an `n`-per-axis lattice.
    pub fn coords(&self, idx: usize, n: usize) -> [usize; 2] {
        match self.d {
            1 => [idx, 0],
            _ => [idx % n, idx / n],
        }
    }

    /// Lexicographic index of (wrapped) coordinates on an `n`-per-axis
    /// lattice.
    pub fn index(&self, c: [usize; 2], n: usize) -> usize {
        match self.d {
            1 => c[0] % n,
            _ => (c[0] % n) + n * (c[1] % n),
        }
    }

    /// Corner nodes of fine element `e`, lexicographic corner order
    /// (low corner first, axis 0 fastest), wrapped on the torus.
    pub fn fine_elem_nodes(&self, e: usize) -> [usize; 4] {
        let n = self.n_fine;
        let c = self.coords(e, n);
        match self.d {
            1 => {
                let a = c[0];
                [a, (a + 1) % n, usize::MAX, usize::MAX]
            }
            _ => {
                let (x0, x1) = (c[0], (c[0] + 1) % n);
                let (y0, y1) = (c[1], (c[1] + 1) % n);
                [
                    x0 + n * y0,
                    x1 + n * y0,
                    x0 + n * y1,
                    x1 + n * y1,
                ]
            }
        }
    }

    /// Corner nodes of coarse element `t`, same conventions as
    /// [`Self::fine_elem_nodes`].
    pub fn coarse_elem_nodes(&self, t: usize) -> [usize; 4] {
        let n = self.n_coarse;
        let c = self.coords(t, n);
        match self.d {
            1 => {
                let a = c[0];
                [a, (a + 1) % n, usize::MAX, usize::MAX]
            }
            _ => {
                let (x0, x1) = (c[0], (c[0] + 1) % n);
                let (y0, y1) = (c[1], (c[1] + 1) % n);
                [
                    x0 + n * y0,
                    x1 + n * y0,
                    x0 + n * y1,
                    x1 + n * y1,
                ]
            }
        }
    }

    /// Fine elements covered by coarse element `t`, local lexicographic
    /// order.
    pub fn fine_elems_of_coarse(&self, t: usize) -> Vec<usize> {
        let r = self.refinement;
        let c = self.coords(t, self.n_coarse);
        let base = [c[0] * r, c[1] * r];
        let mut out = Vec::with_capacity(r.pow(self.d as u32));
        match self.d {
            1 => {
                for g in 0..r {
                    out.push(base[0] + g);
                }
            }
            _ => {
                for g1 in 0..r {
                    for g0 in 0..r {
                        out.push(self.index([base[0] + g0, base[1] + g1], self.n_fine));
                    }
                }
            }
        }
        out
    }

    /// Defect cell containing fine element `e`.
    pub fn cell_of_fine_elem(&self, e: usize) -> usize {
        let f = self.fine_per_cell();
        let c = self.coords(e, self.n_fine);
        self.index([c[0] / f, c[1] / f], self.n_eps)
    }
}

/// Geometry of one element patch: its coarse and fine submeshes in a fixed
/// local ordering, plus the data needed to translate it onto other
/// elements.
///
/// All vectors are in patch-local lexicographic order (axis 0 fastest) over
/// the local offset lattice; entry values are the corresponding *global*
/// indices.  On an axis where the patch covers the whole torus, the local
/// node lattice wraps (no duplicated layer) and there is no boundary on
/// that axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGeometry {
    /// Coarse element at the patch center.
    pub center: usize,
    /// Number of element layers added around the center.
    pub m: usize,
    /// Layers kept below / above the center per axis (clipped on small
    /// tori); patch extent per axis is `lo + hi + 1` coarse elements.
    pub lo: [usize; 2],
    /// See [`Self::lo`].
    pub hi: [usize; 2],
    /// Whether the patch covers the full torus extent on each axis.
    pub wraps: [bool; 2],
    /// Coarse coordinates of the patch's low corner (wrapped).
    pub origin: [usize; 2],
    /// Coarse elements per axis in the patch.
    pub coarse_per_axis: [usize; 2],
    /// Global coarse element index per local patch position.
    pub coarse_elements: Vec<usize>,
    /// Global fine element index per local patch position.
    pub fine_elements: Vec<usize>,
    /// Global coarse node index per local node-lattice position.
    pub coarse_nodes: Vec<usize>,
    /// Global fine node index per local node-lattice position.
    pub fine_nodes: Vec<usize>,
    /// `true` where the local fine node lies on the patch boundary
    /// (aligned with [`Self::fine_nodes`]; all `false` on a full-torus
    /// patch).
    pub fine_boundary: Vec<bool>,
    /// Coarse-lattice translation mapping element 0's patch onto this one
    /// (equals the center's coarse coordinates).
    pub shift: [usize; 2],
}

impl PatchGeometry {
    /// Local fine node-lattice size per axis.
    pub fn fine_nodes_per_axis(&self, mesh: &NestedMesh) -> [usize; 2] {
        let mut out = [1usize; 2];
        for a in 0..mesh.d {
            let fw = self.coarse_per_axis[a] * mesh.refinement;
            out[a] = if self.wraps[a] { fw } else { fw + 1 };
        }
        out
    }

    /// Local coarse node-lattice size per axis.
    pub fn coarse_nodes_per_axis(&self, mesh: &NestedMesh) -> [usize; 2] {
        let mut out = [1usize; 2];
        for a in 0..mesh.d {
            let cw = self.coarse_per_axis[a];
            out[a] = if self.wraps[a] { cw } else { cw + 1 };
        }
        out
    }

    /// Local fine element-lattice size per axis.
    pub fn fine_elems_per_axis(&self, mesh: &NestedMesh) -> [usize; 2] {
        let mut out = [1usize; 2];
        for a in 0..mesh.d {
            out[a] = self.coarse_per_axis[a] * mesh.refinement;
        }
        out
    }

    /// Local node index of the corner nodes of local fine element `le`,
    /// lexicographic corner order.
    pub fn local_fine_elem_nodes(&self, mesh: &NestedMesh, le: usize) -> [usize; 4] {
        let ew = self.fine_elems_per_axis(mesh);
        let nw = self.fine_nodes_per_axis(mesh);
        match mesh.d {
            1 => {
                let g = le;
                let right = if g + 1 == ew[0] && self.wraps[0] { 0 } else { g + 1 };
                [g, right, usize::MAX, usize::MAX]
            }
            _ => {
                let (g0, g1) = (le % ew[0], le / ew[0]);
                let x1 = if g0 + 1 == ew[0] && self.wraps[0] { 0 } else { g0 + 1 };
                let y1 = if g1 + 1 == ew[1] && self.wraps[1] { 0 } else { g1 + 1 };
                [
                    g0 + nw[0] * g1,
                    x1 + nw[0] * g1,
                    g0 + nw[0] * y1,
                    x1 + nw[0] * y1,
                ]
            }
        }
    }

    /// Local indices of the center element's fine elements, in the same
    /// order as [`NestedMesh::fine_elems_of_coarse`] lists them globally.
    pub fn center_local_fine_elems(&self, mesh: &NestedMesh) -> Vec<usize> {
        let r = mesh.refinement;
        let ew = self.fine_elems_per_axis(mesh);
        let base = [self.lo[0] * r, self.lo[1] * r];
        let mut out = Vec::with_capacity(r.pow(mesh.d as u32));
        match mesh.d {
            1 => {
                for g in 0..r {
                    out.push(base[0] + g);
                }
            }
            _ => {
                for g1 in 0..r {
                    for g0 in 0..r {
                        out.push((base[0] + g0) + ew[0] * (base[1] + g1));
                    }
                }
            }
        }
        out
    }
}

/// Builds the patch of `m` element layers around coarse element `center`.
pub fn patch(mesh: &NestedMesh, center: usize, m: usize) -> PatchGeometry {
    let n = mesh.n_coarse;
    let c = mesh.coords(center, n);
    let mut lo = [0usize; 2];
    let mut hi = [0usize; 2];
    let mut wraps = [false; 2];
    let mut origin = [0usize; 2];
    let mut coarse_per_axis = [1usize; 2];
    for a in 0..mesh.d {
        // Grow the box one layer per step until it covers the axis; on a
        // torus of n elements that caps the extent at n (favouring the low
        // side when n is even, which matches closure growth order).
        lo[a] = m.min(n / 2);
        hi[a] = m.min((n - 1) / 2);
        let extent = lo[a] + hi[a] + 1;
        wraps[a] = extent == n;
        origin[a] = (c[a] + n - lo[a]) % n;
        coarse_per_axis[a] = extent;
    }

    let mut coarse_elements = Vec::new();
    match mesh.d {
        1 => {
            for g in 0..coarse_per_axis[0] {
                coarse_elements.push((origin[0] + g) % n);
            }
        }
        _ => {
            for g1 in 0..coarse_per_axis[1] {
                for g0 in 0..coarse_per_axis[0] {
                    coarse_elements.push(mesh.index([origin[0] + g0, origin[1] + g1], n));
                }
            }
        }
    }

    let r = mesh.refinement;
    let nf = mesh.n_fine;
    let fine_origin = [origin[0] * r, origin[1] * r];
    let ew = [coarse_per_axis[0] * r, coarse_per_axis[1] * r];
    let mut fine_elements = Vec::new();
    match mesh.d {
        1 => {
            for g in 0..ew[0] {
                fine_elements.push((fine_origin[0] + g) % nf);
            }
        }
        _ => {
            for g1 in 0..ew[1] {
                for g0 in 0..ew[0] {
                    fine_elements
                        .push(mesh.index([fine_origin[0] + g0, fine_origin[1] + g1], nf));
                }
            }
        }
    }

    let coarse_nw = [
        if wraps[0] { coarse_per_axis[0] } else { coarse_per_axis[0] + 1 },
        if wraps[1] { coarse_per_axis[1] } else { coarse_per_axis[1] + 1 },
    ];
    let mut coarse_nodes = Vec::new();
    match mesh.d {
        1 => {
            for g in 0..coarse_nw[0] {
                coarse_nodes.push((origin[0] + g) % n);
            }
        }
        _ => {
            for g1 in 0..coarse_nw[1] {
                for g0 in 0..coarse_nw[0] {
                    coarse_nodes.push(mesh.index([origin[0] + g0, origin[1] + g1], n));
                }
            }
        }
    }

    let fine_nw = [
        if wraps[0] { ew[0] } else { ew[0] + 1 },
        if wraps[1] { ew[1] } else { ew[1] + 1 },
    ];
    let mut fine_nodes = Vec::new();
    let mut fine_boundary = Vec::new();
    match mesh.d {
        1 => {
            for g in 0..fine_nw[0] {
                fine_nodes.push((fine_origin[0] + g) % nf);
                fine_boundary.push(!wraps[0] && (g == 0 || g == ew[0]));
            }
        }
        _ => {
            for g1 in 0..fine_nw[1] {
                for g0 in 0..fine_nw[0] {
                    fine_nodes.push(mesh.index([fine_origin[0] + g0, fine_origin[1] + g1], nf));
                    let b0 = !wraps[0] && (g0 == 0 || g0 == ew[0]);
                    let b1 = !wraps[1] && (g1 == 0 || g1 == ew[1]);
                    fine_boundary.push(b0 || b1);
                }
            }
        }
    }

    PatchGeometry {
        center,
        m,
        lo,
        hi,
        wraps,
        origin,
        coarse_per_axis,
        coarse_elements,
        fine_elements,
        coarse_nodes,
        fine_nodes,
        fine_boundary,
        shift: c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn build_mesh_validates_divisibility() {
        assert!(build_mesh(2, 4, 8, 8).is_ok());
        assert!(build_mesh(2, 4, 8, 6).is_err()); // 6 not a multiple of 4
        assert!(build_mesh(2, 4, 1, 8).is_err()); // fine mesh coarser than cells
        assert!(build_mesh(3, 4, 8, 8).is_err()); // bad dimension
        assert!(build_mesh(2, 1, 8, 8).is_err()); // single coarse element
        assert!(build_mesh(1, 4, 2, 8).is_ok());
    }

    #[test]
    fn index_coordinate_roundtrip() {
        let mesh = build_mesh(2, 8, 2, 8).unwrap();
        for idx in 0..mesh.coarse_elems() {
            let c = mesh.coords(idx, mesh.n_coarse);
            assert_eq!(mesh.index(c, mesh.n_coarse), idx);
        }
        let mesh1 = build_mesh(1, 8, 4, 16).unwrap();
        for idx in 0..mesh1.fine_elems() {
            let c = mesh1.coords(idx, mesh1.n_fine);
            assert_eq!(mesh1.index(c, mesh1.n_fine), idx);
        }
    }

    /// Oracle: grow the element set by shared-vertex adjacency on the torus.
    fn closure_oracle(mesh: &NestedMesh, center: usize, m: usize) -> BTreeSet<usize> {
        let n = mesh.n_coarse;
        let mut set: BTreeSet<usize> = BTreeSet::new();
        set.insert(center);
        for _ in 0..m {
            let mut grown = set.clone();
            for &t in &set {
                let c = mesh.coords(t, n);
                match mesh.d {
                    1 => {
                        for da in [-1i64, 0, 1] {
                            let x = ((c[0] as i64 + da).rem_euclid(n as i64)) as usize;
                            grown.insert(x);
                        }
                    }
                    _ => {
                        for da in [-1i64, 0, 1] {
                            for db in [-1i64, 0, 1] {
                                let x = ((c[0] as i64 + da).rem_euclid(n as i64)) as usize;
                                let y = ((c[1] as i64 + db).rem_euclid(n as i64)) as usize;
                                grown.insert(mesh.index([x, y], n));
                            }
                        }
                    }
                }
            }
            set = grown;
        }
        set
    }

    #[test]
    fn patch_equals_adjacency_closure() {
        for (d, n, r, ne) in [(2usize, 4usize, 2usize, 4usize), (2, 5, 2, 5), (2, 8, 2, 8), (1, 6, 2, 6)] {
            let mesh = build_mesh(d, n, r, ne).unwrap();
            for m in 0..4 {
                for center in 0..mesh.coarse_elems() {
                    let p = patch(&mesh, center, m);
                    let got: BTreeSet<usize> = p.coarse_elements.iter().copied().collect();
                    let want = closure_oracle(&mesh, center, m);
                    assert_eq!(got, want, "d={d} n={n} m={m} center={center}");
                    // No duplicates in the local listing.
                    assert_eq!(got.len(), p.coarse_elements.len());
                }
            }
        }
    }

    #[test]
    fn zero_radius_patches_partition_the_fine_mesh() {
        let mesh = build_mesh(2, 4, 3, 4).unwrap();
        let mut seen = vec![0usize; mesh.fine_elems()];
        for t in 0..mesh.coarse_elems() {
            let p = patch(&mesh, t, 0);
            assert_eq!(p.fine_elements.len(), mesh.refinement.pow(2));
            for &e in &p.fine_elements {
                seen[e] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn full_torus_patch_has_no_boundary_and_each_element_once() {
        let mesh = build_mesh(2, 4, 2, 4).unwrap();
        let p = patch(&mesh, 5, 2); // 2m+1 = 5 >= 4 on both axes
        assert!(p.wraps.iter().take(2).all(|&w| w));
        assert!(p.fine_boundary.iter().all(|&b| !b));
        let set: BTreeSet<usize> = p.coarse_elements.iter().copied().collect();
        assert_eq!(set.len(), mesh.coarse_elems());
        assert_eq!(p.fine_nodes.len(), mesh.fine_nodes());
    }

    #[test]
    fn interior_patch_boundary_mask_is_the_box_boundary() {
        let mesh = build_mesh(2, 8, 2, 8).unwrap();
        let p = patch(&mesh, mesh.index([4, 4], 8), 1);
        assert_eq!(p.coarse_per_axis, [3, 3]);
        let nw = p.fine_nodes_per_axis(&mesh);
        assert_eq!(nw, [7, 7]);
        let mut count = 0;
        for g1 in 0..nw[1] {
            for g0 in 0..nw[0] {
                let on_edge = g0 == 0 || g0 + 1 == nw[0] || g1 == 0 || g1 + 1 == nw[1];
                assert_eq!(p.fine_boundary[g0 + nw[0] * g1], on_edge);
                if on_edge {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 4 * (nw[0] - 1));
    }

    #[test]
    fn patches_are_translates_of_the_reference_patch() {
        let mesh = build_mesh(2, 8, 2, 8).unwrap();
        let reference = patch(&mesh, 0, 2);
        for center in [3usize, 17, 42, 63] {
            let p = patch(&mesh, center, 2);
            assert_eq!(p.lo, reference.lo);
            assert_eq!(p.hi, reference.hi);
            let s = p.shift;
            for (k, (&e_ref, &e)) in reference
                .coarse_elements
                .iter()
                .zip(&p.coarse_elements)
                .enumerate()
            {
                let cr = mesh.coords(e_ref, mesh.n_coarse);
                let translated =
                    mesh.index([cr[0] + s[0], cr[1] + s[1]], mesh.n_coarse);
                assert_eq!(translated, e, "local position {k}");
            }
            for (&e_ref, &e) in reference.fine_elements.iter().zip(&p.fine_elements) {
                let cr = mesh.coords(e_ref, mesh.n_fine);
                let translated = mesh.index(
                    [cr[0] + s[0] * mesh.refinement, cr[1] + s[1] * mesh.refinement],
                    mesh.n_fine,
                );
                assert_eq!(translated, e);
            }
        }
    }

    #[test]
    fn local_element_corners_match_global_corners() {
        let mesh = build_mesh(2, 8, 2, 8).unwrap();
        for (center, m) in [(11usize, 1usize), (60, 2), (5, 4)] {
            let p = patch(&mesh, center, m);
            for (le, &ge) in p.fine_elements.iter().enumerate() {
                let local = p.local_fine_elem_nodes(&mesh, le);
                let global = mesh.fine_elem_nodes(ge);
                for k in 0..4 {
                    assert_eq!(p.fine_nodes[local[k]], global[k], "elem {le} corner {k}");
                }
            }
        }
        let mesh1 = build_mesh(1, 8, 4, 8).unwrap();
        let p = patch(&mesh1, 3, 1);
        for (le, &ge) in p.fine_elements.iter().enumerate() {
            let local = p.local_fine_elem_nodes(&mesh1, le);
            let global = mesh1.fine_elem_nodes(ge);
            for k in 0..2 {
                assert_eq!(p.fine_nodes[local[k]], global[k]);
            }
        }
    }

    #[test]
    fn center_local_elements_agree_with_global_listing() {
        let mesh = build_mesh(2, 8, 4, 8).unwrap();
        for (center, m) in [(0usize, 1usize), (27, 2), (63, 1)] {
            let p = patch(&mesh, center, m);
            let local = p.center_local_fine_elems(&mesh);
            let global = mesh.fine_elems_of_coarse(center);
            assert_eq!(local.len(), global.len());
            for (k, &le) in local.iter().enumerate() {
                assert_eq!(p.fine_elements[le], global[k]);
            }
        }
    }

    #[test]
    fn even_torus_cap_keeps_one_layer_difference() {
        // On an even torus the capped patch keeps lo = hi + 1.
        let mesh = build_mesh(2, 4, 2, 4).unwrap();
        let p = patch(&mesh, 0, 2);
        assert_eq!(p.lo, [2, 2]);
        assert_eq!(p.hi, [1, 1]);
        assert_eq!(p.coarse_per_axis, [4, 4]);
    }

    #[test]
    fn cell_of_fine_elem_is_consistent() {
        let mesh = build_mesh(2, 4, 4, 8).unwrap();
        // fine_per_cell = 16/8 = 2: fine element (3, 5) sits in cell (1, 2).
        let e = mesh.index([3, 5], mesh.n_fine);
        assert_eq!(mesh.cell_of_fine_elem(e), mesh.index([1, 2], mesh.n_eps));
    }
}
