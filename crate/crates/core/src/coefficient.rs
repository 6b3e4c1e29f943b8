//! Periodic coefficient models with random cell defects.
//!
//! A coefficient on the torus is built from two ingredients, both resolved
//! on the fine mesh and constant per fine element:
//!
//! * a **periodic background** `A_per`, one pattern of `cell_div^d` values
//!   tiled over every ε-cell, and
//! * a **perturbation pattern** `B_per` (same resolution, supported inside
//!   a sub-box `Q` of the cell).
//!
//! Each ε-cell independently carries a defect with probability `p`; a
//! defective cell's coefficient is `A_per + B_per` instead of `A_per`.
//! Realized values stay inside the spectral bounds `[alpha, beta]`, which
//! both patterns are validated against.
//!
//! Two base microstructures are provided: a two-valued **checkerboard**
//! (background `alpha`, defective cells `beta`) and centred **inclusions**
//! (value `beta` on the middle quarter-box, `alpha` outside; a defect
//! erases the inclusion).  [`defect_variant`] derives further defect laws
//! from the inclusion geometry — changed inclusion value, filled cell,
//! shifted inclusion, and an L-shaped partial erasure.
//!
//! Defect sampling is a counter-based keyed hash rather than a sequential
//! generator: the bit of cell `k` under seed `s` is a fixed mixing function
//! of `(s, k)`.  Draws are therefore reproducible for a given seed
//! independent of evaluation order, thread count, or how many other cells
//! are sampled, which is what makes whole campaigns bitwise reproducible.

use crate::error::{Error, Result};
use crate::mesh::{NestedMesh, PatchGeometry};

/// Relative slack allowed when checking realized values against the
/// spectral bounds (guards against accumulated rounding in pattern
/// construction, not against modelling errors).
const BOUND_TOL: f64 = 1e-12;

/// A periodic background plus a cellwise defect perturbation.
///
/// `a_per_cell` and `b_per_cell` hold one ε-cell of values in lexicographic
/// subcell order (axis 0 fastest), `cell_div` subcells per axis.
/// `b_per_cell` is zero outside the defect sub-box `Q`, which is recorded
/// in exact subcell units as `q_lo..q_hi` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicModel {
    /// Spatial dimension, 1 or 2.
    pub d: usize,
    /// Lower spectral bound of every realizable coefficient.
    pub alpha: f64,
    /// Upper spectral bound of every realizable coefficient.
    pub beta: f64,
    /// Fine subcells per axis inside one ε-cell.
    pub cell_div: usize,
    /// Background pattern, `cell_div^d` values.
    pub a_per_cell: Vec<f64>,
    /// Defect perturbation pattern, `cell_div^d` values, zero outside `Q`.
    pub b_per_cell: Vec<f64>,
    /// Low corner of `Q` in subcell units, per axis.
    pub q_lo: [usize; 2],
    /// Exclusive high corner of `Q` in subcell units, per axis.
    pub q_hi: [usize; 2],
    /// Defect probability per cell.
    pub p: f64,
    /// Human-readable model name used in manifests and error messages.
    pub label: String,
}

/// One realization of the defect configuration: `bits[k]` says whether
/// ε-cell `k` (lexicographic) is defective.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefectSample {
    /// Per-cell defect indicators, lexicographic cell order.
    pub bits: Vec<bool>,
    /// Seed the sample was drawn from.
    pub seed: u64,
}

impl DefectSample {
    /// Number of defective cells.
    pub fn defect_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// A coefficient resolved on a fine-element range (global mesh or
/// patch-local, depending on how it was produced), constant per element.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    /// One value per fine element, in the ordering of the producing call.
    pub values: Vec<f64>,
}

/// Derived defect laws on the inclusion microstructure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DefectVariant {
    /// Defective inclusions take the value `beta_tilde` instead of being
    /// erased.
    Value {
        /// Replacement value on the inclusion; must be positive.
        beta_tilde: f64,
    },
    /// A defective cell is filled with the inclusion value everywhere.
    Fill,
    /// The inclusion moves to the high-corner quarter of the cell
    /// (two-dimensional models only).
    Shift,
    /// The high-corner quadrant of the inclusion is erased, leaving an
    /// L-shape (two-dimensional models only).
    Lshape,
}

// ---------------------------------------------------------------------------
// Keyed-hash sampling.

/// 64-bit finalizer mix (SplitMix64); bijective, well-distributed.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a campaign seed and two indices
/// (e.g. probability-grid position and sample number).
///
/// Each argument passes through the mixer before combination, so related
/// inputs (consecutive indices, equal seed/index values) yield unrelated
/// streams.
pub fn derive_seed(campaign_seed: u64, stream: u64, index: u64) -> u64 {
    let a = mix64(campaign_seed ^ 0x9e37_79b9_7f4a_7c15);
    let b = mix64(a ^ mix64(stream.wrapping_add(0x6a09_e667_f3bc_c909)));
    mix64(b ^ mix64(index.wrapping_add(0xbb67_ae85_84ca_a73b)))
}

/// Uniform draw in `[0, 1)` keyed by `(seed, counter)`.
#[inline]
fn keyed_uniform(seed: u64, counter: u64) -> f64 {
    let h = mix64(seed ^ mix64(counter.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    // Top 53 bits -> [0, 1) with full double precision.
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draws the defect configuration for every ε-cell of `mesh`.
///
/// Cell `k` is defective iff `u(seed, k) < model.p`, so `p = 0` yields no
/// defects and `p = 1` defects everywhere, exactly.
pub fn sample_defects(model: &PeriodicModel, mesh: &NestedMesh, seed: u64) -> DefectSample {
    let n = mesh.defect_cells();
    let bits = (0..n)
        .map(|k| keyed_uniform(seed, k as u64) < model.p)
        .collect();
    DefectSample { bits, seed }
}

// ---------------------------------------------------------------------------
// Model constructors.

fn validate_common(d: usize, alpha: f64, beta: f64, cell_div: usize, p: f64) -> Result<()> {
    if d != 1 && d != 2 {
        return Err(Error::config(format!("dimension must be 1 or 2, got {d}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::config(format!("lower bound must be positive, got {alpha}")));
    }
    if !(beta >= alpha) {
        return Err(Error::config(format!(
            "upper bound {beta} must be at least the lower bound {alpha}"
        )));
    }
    if cell_div == 0 {
        return Err(Error::config("cell resolution must be positive".to_string()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("defect probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

impl PeriodicModel {
    /// Two-valued checkerboard: background `alpha` everywhere, a defective
    /// cell takes the value `beta` on the whole cell (`Q` = full cell).
    pub fn checkerboard(d: usize, alpha: f64, beta: f64, cell_div: usize, p: f64) -> Result<Self> {
        validate_common(d, alpha, beta, cell_div, p)?;
        let len = cell_div.pow(d as u32);
        let mut q_lo = [0usize; 2];
        let mut q_hi = [0usize; 2];
        for a in 0..d {
            q_lo[a] = 0;
            q_hi[a] = cell_div;
        }
        Ok(PeriodicModel {
            d,
            alpha,
            beta,
            cell_div,
            a_per_cell: vec![alpha; len],
            b_per_cell: vec![beta - alpha; len],
            q_lo,
            q_hi,
            p,
            label: "checkerboard".to_string(),
        })
    }

    /// Centred inclusions: value `beta` on the middle quarter-box
    /// `[1/4, 3/4]^d` of each cell, `alpha` outside; a defect erases the
    /// inclusion (`Q` = the inclusion box).
    ///
    /// Requires `cell_div` divisible by 4 so the inclusion boundary lies on
    /// subcell faces.
    pub fn inclusions(d: usize, alpha: f64, beta: f64, cell_div: usize, p: f64) -> Result<Self> {
        validate_common(d, alpha, beta, cell_div, p)?;
        if cell_div % 4 != 0 {
            return Err(Error::config(format!(
                "inclusion boundaries at quarter-cell positions need a cell resolution \
                 divisible by 4, got {cell_div}"
            )));
        }
        let (lo, hi) = (cell_div / 4, 3 * cell_div / 4);
        let mut model = PeriodicModel {
            d,
            alpha,
            beta,
            cell_div,
            a_per_cell: Vec::new(),
            b_per_cell: Vec::new(),
            q_lo: [0; 2],
            q_hi: [0; 2],
            p,
            label: "inclusions".to_string(),
        };
        for a in 0..d {
            model.q_lo[a] = lo;
            model.q_hi[a] = hi;
        }
        let len = cell_div.pow(d as u32);
        model.a_per_cell = (0..len)
            .map(|s| if model.subcell_in_box(s, [lo; 2], [hi; 2]) { beta } else { alpha })
            .collect();
        model.b_per_cell = (0..len)
            .map(|s| if model.subcell_in_box(s, [lo; 2], [hi; 2]) { alpha - beta } else { 0.0 })
            .collect();
        Ok(model)
    }

    /// Subcell coordinates of lexicographic subcell index `s`.
    fn subcell_coords(&self, s: usize) -> [usize; 2] {
        match self.d {
            1 => [s, 0],
            _ => [s % self.cell_div, s / self.cell_div],
        }
    }

    fn subcell_in_box(&self, s: usize, lo: [usize; 2], hi: [usize; 2]) -> bool {
        let c = self.subcell_coords(s);
        (0..self.d).all(|a| c[a] >= lo[a] && c[a] < hi[a])
    }

    /// Defect sub-box `Q` in cell coordinates, `[axis][lo/hi]`.
    pub fn q_box(&self) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for a in 0..self.d {
            out[a][0] = self.q_lo[a] as f64 / self.cell_div as f64;
            out[a][1] = self.q_hi[a] as f64 / self.cell_div as f64;
        }
        out
    }

    /// Measure of `Q` in cell coordinates (`|Q| <= 1`).
    pub fn q_measure(&self) -> f64 {
        (0..self.d)
            .map(|a| (self.q_hi[a] - self.q_lo[a]) as f64 / self.cell_div as f64)
            .product()
    }

    /// Recomputes the spectral bounds as the min/max over all realizable
    /// values (background and defective).
    fn recompute_bounds(&mut self) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (a, b) in self.a_per_cell.iter().zip(&self.b_per_cell) {
            lo = lo.min(*a).min(a + b);
            hi = hi.max(*a).max(a + b);
        }
        self.alpha = lo;
        self.beta = hi;
    }
}

/// Builds a defect-law variant of the inclusion model.
///
/// `base` must be an unmodified [`PeriodicModel::inclusions`] model; the
/// variant replaces its perturbation pattern and, where the perturbed
/// values leave `[alpha, beta]` (e.g. an inclusion value below `alpha`),
/// widens the spectral bounds to the realizable min/max.
pub fn defect_variant(base: &PeriodicModel, variant: DefectVariant) -> Result<PeriodicModel> {
    // Verify the base really is the inclusion microstructure by rebuilding
    // the expected pattern; variants are defined relative to it.
    let expect = PeriodicModel::inclusions(base.d, base.alpha, base.beta, base.cell_div, base.p)?;
    if base.a_per_cell != expect.a_per_cell || base.b_per_cell != expect.b_per_cell {
        return Err(Error::config(
            "defect variants are defined for the unmodified inclusion model".to_string(),
        ));
    }
    let cd = base.cell_div;
    let (ilo, ihi) = (cd / 4, 3 * cd / 4);
    let len = cd.pow(base.d as u32);
    let mut out = base.clone();
    match variant {
        DefectVariant::Value { beta_tilde } => {
            if !(beta_tilde > 0.0) {
                return Err(Error::data(format!(
                    "replacement inclusion value must be positive, got {beta_tilde}"
                )));
            }
            // Defective inclusions take beta_tilde: B = beta_tilde - beta
            // on the inclusion box.
            out.b_per_cell = (0..len)
                .map(|s| {
                    if out.subcell_in_box(s, [ilo; 2], [ihi; 2]) {
                        beta_tilde - base.beta
                    } else {
                        0.0
                    }
                })
                .collect();
            out.label = format!("inclusions+value({beta_tilde})");
        }
        DefectVariant::Fill => {
            // The whole defective cell takes the inclusion value: add
            // beta - alpha off the inclusion, nothing on it.
            out.b_per_cell = (0..len)
                .map(|s| {
                    if out.subcell_in_box(s, [ilo; 2], [ihi; 2]) {
                        0.0
                    } else {
                        base.beta - base.alpha
                    }
                })
                .collect();
            for a in 0..base.d {
                out.q_lo[a] = 0;
                out.q_hi[a] = cd;
            }
            out.label = "inclusions+fill".to_string();
        }
        DefectVariant::Shift => {
            if base.d != 2 {
                return Err(Error::Unsupported(
                    "the shifted-inclusion variant is two-dimensional".to_string(),
                ));
            }
            // Erase the centred inclusion and add one in the high corner.
            out.b_per_cell = (0..len)
                .map(|s| {
                    if out.subcell_in_box(s, [ilo; 2], [ihi; 2]) {
                        base.alpha - base.beta
                    } else if out.subcell_in_box(s, [ihi; 2], [cd; 2]) {
                        base.beta - base.alpha
                    } else {
                        0.0
                    }
                })
                .collect();
            for a in 0..2 {
                out.q_lo[a] = 0;
                out.q_hi[a] = cd;
            }
            out.label = "inclusions+shift".to_string();
        }
        DefectVariant::Lshape => {
            if base.d != 2 {
                return Err(Error::Unsupported(
                    "the L-shaped variant is two-dimensional".to_string(),
                ));
            }
            // Erase only the high-corner quadrant of the inclusion.
            let mid = cd / 2;
            out.b_per_cell = (0..len)
                .map(|s| {
                    if out.subcell_in_box(s, [mid; 2], [ihi; 2]) {
                        base.alpha - base.beta
                    } else {
                        0.0
                    }
                })
                .collect();
            out.label = "inclusions+lshape".to_string();
        }
    }
    out.recompute_bounds();
    Ok(out)
}

// ---------------------------------------------------------------------------
// Realization.

fn check_mesh_model(model: &PeriodicModel, mesh: &NestedMesh) -> Result<()> {
    if model.d != mesh.d {
        return Err(Error::config(format!(
            "model dimension {} does not match mesh dimension {}",
            model.d, mesh.d
        )));
    }
    if mesh.fine_per_cell() != model.cell_div {
        return Err(Error::config(format!(
            "model resolves cells with {} subcells per axis but the mesh provides {}",
            model.cell_div,
            mesh.fine_per_cell()
        )));
    }
    Ok(())
}

/// Coefficient value on global fine element `e` under the given defect
/// configuration.
#[inline]
fn value_at(model: &PeriodicModel, mesh: &NestedMesh, bits: &[bool], e: usize) -> f64 {
    let f = mesh.fine_per_cell();
    let c = mesh.coords(e, mesh.n_fine);
    let cell = mesh.index([c[0] / f, c[1] / f], mesh.n_eps);
    let s = match model.d {
        1 => c[0] % f,
        _ => (c[0] % f) + f * (c[1] % f),
    };
    let mut v = model.a_per_cell[s];
    if bits[cell] {
        v += model.b_per_cell[s];
    }
    v
}

fn check_bounds(model: &PeriodicModel, values: &[f64]) -> Result<()> {
    let slack = BOUND_TOL * model.beta.max(1.0);
    for &v in values {
        if v < model.alpha - slack || v > model.beta + slack {
            return Err(Error::data(format!(
                "realized coefficient value {v} escapes the spectral bounds [{}, {}]",
                model.alpha, model.beta
            )));
        }
    }
    Ok(())
}

/// Realizes the coefficient of a defect sample on the whole fine mesh,
/// one value per fine element in global lexicographic order.
pub fn realize(model: &PeriodicModel, sample: &DefectSample, mesh: &NestedMesh) -> Result<CoefficientField> {
    check_mesh_model(model, mesh)?;
    if sample.bits.len() != mesh.defect_cells() {
        return Err(Error::data(format!(
            "sample carries {} cells but the mesh has {}",
            sample.bits.len(),
            mesh.defect_cells()
        )));
    }
    let values: Vec<f64> = (0..mesh.fine_elems())
        .map(|e| value_at(model, mesh, &sample.bits, e))
        .collect();
    check_bounds(model, &values)?;
    Ok(CoefficientField { values })
}

/// Realizes the coefficient on one patch, in patch-local fine element
/// order.
pub fn realize_patch(
    model: &PeriodicModel,
    sample: &DefectSample,
    mesh: &NestedMesh,
    patch: &PatchGeometry,
) -> Result<CoefficientField> {
    check_mesh_model(model, mesh)?;
    if sample.bits.len() != mesh.defect_cells() {
        return Err(Error::data(format!(
            "sample carries {} cells but the mesh has {}",
            sample.bits.len(),
            mesh.defect_cells()
        )));
    }
    let values: Vec<f64> = patch
        .fine_elements
        .iter()
        .map(|&e| value_at(model, mesh, &sample.bits, e))
        .collect();
    check_bounds(model, &values)?;
    Ok(CoefficientField { values })
}

// ---------------------------------------------------------------------------
// Offline coefficient family.

/// The ε-cells whose defect box lies entirely inside the patch, in
/// patch-local lexicographic order, as global cell indices.
///
/// These are exactly the defect locations the offline database
/// parametrizes; the enumeration order defines the index `i` of the
/// single-defect coefficient `A_i` (with `i = 0` reserved for the
/// defect-free background).
pub fn patch_cells(model: &PeriodicModel, mesh: &NestedMesh, patch: &PatchGeometry) -> Vec<usize> {
    let cpc = mesh.cells_per_coarse();
    let fpc = mesh.fine_per_cell();
    let r = mesh.refinement;
    let mut cells = Vec::new();
    // Local cell counts and the patch box width in fine units, per axis.
    let mut counts = [1usize; 2];
    let mut widths = [0usize; 2];
    for a in 0..mesh.d {
        counts[a] = patch.coarse_per_axis[a] * cpc;
        widths[a] = patch.coarse_per_axis[a] * r;
    }
    let origin_cell = [patch.origin[0] * cpc, patch.origin[1] * cpc];
    let inside = |t: [usize; 2]| -> bool {
        (0..mesh.d).all(|a| {
            // On a wrapping axis every cell fits; otherwise the defect box
            // ε(k + Q) must stay inside the patch box (exact integer test
            // on the fine lattice).
            patch.wraps[a]
                || (t[a] * fpc + model.q_lo[a] < widths[a] + 1
                    && t[a] * fpc + model.q_hi[a] <= widths[a])
        })
    };
    match mesh.d {
        1 => {
            for t0 in 0..counts[0] {
                if inside([t0, 0]) {
                    cells.push((origin_cell[0] + t0) % mesh.n_eps);
                }
            }
        }
        _ => {
            for t1 in 0..counts[1] {
                for t0 in 0..counts[0] {
                    if inside([t0, t1]) {
                        cells.push(mesh.index(
                            [origin_cell[0] + t0, origin_cell[1] + t1],
                            mesh.n_eps,
                        ));
                    }
                }
            }
        }
    }
    cells
}

/// Builds the offline coefficient family on the reference patch: entry 0
/// is the defect-free background, entry `i >= 1` adds one defect at the
/// i-th patch cell (the order of [`patch_cells`]).
pub fn offline_coefficients(
    model: &PeriodicModel,
    mesh: &NestedMesh,
    patch: &PatchGeometry,
) -> Result<(Vec<CoefficientField>, Vec<usize>)> {
    check_mesh_model(model, mesh)?;
    let cells = patch_cells(model, mesh, patch);
    let no_defects = DefectSample {
        bits: vec![false; mesh.defect_cells()],
        seed: 0,
    };
    let base = realize_patch(model, &no_defects, mesh, patch)?;
    let mut family = Vec::with_capacity(cells.len() + 1);
    family.push(base.clone());
    let mut bits = vec![false; mesh.defect_cells()];
    for &cell in &cells {
        bits[cell] = true;
        let sample = DefectSample {
            bits: bits.clone(),
            seed: 0,
        };
        family.push(realize_patch(model, &sample, mesh, patch)?);
        bits[cell] = false;
    }
    Ok((family, cells))
}

/// Combination weights of one element's local system for a sample.
///
/// `reference_cells` are the offline defect locations of the *reference*
/// patch ([`patch_cells`] of element 0's patch); they are translated onto
/// `patch` by its lattice shift and looked up in the sample.  The result
/// has length `N + 1`: `mu[i] = 1` for each defective location `i >= 1`,
/// and `mu[0] = 1 - (number of defects)`, so the weights always sum to
/// one exactly.
pub fn extract_mu(
    sample: &DefectSample,
    mesh: &NestedMesh,
    reference_cells: &[usize],
    patch: &PatchGeometry,
) -> Vec<f64> {
    let cpc = mesh.cells_per_coarse();
    let shift = [patch.shift[0] * cpc, patch.shift[1] * cpc];
    let mut mu = vec![0.0; reference_cells.len() + 1];
    let mut defects = 0i64;
    for (i, &cell) in reference_cells.iter().enumerate() {
        let c = mesh.coords(cell, mesh.n_eps);
        let translated = mesh.index([c[0] + shift[0], c[1] + shift[1]], mesh.n_eps);
        if sample.bits[translated] {
            mu[i + 1] = 1.0;
            defects += 1;
        }
    }
    mu[0] = 1.0 - defects as f64;
    mu
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, patch};

    fn all_defects(mesh: &NestedMesh) -> DefectSample {
        DefectSample {
            bits: vec![true; mesh.defect_cells()],
            seed: 0,
        }
    }

    fn no_defects(mesh: &NestedMesh) -> DefectSample {
        DefectSample {
            bits: vec![false; mesh.defect_cells()],
            seed: 0,
        }
    }

    #[test]
    fn checkerboard_realizes_two_values() {
        let mesh = build_mesh(2, 4, 4, 8).unwrap();
        let model = PeriodicModel::checkerboard(2, 0.1, 1.0, mesh.fine_per_cell(), 0.5).unwrap();
        let clean = realize(&model, &no_defects(&mesh), &mesh).unwrap();
        assert!(clean.values.iter().all(|&v| v == 0.1));
        let dirty = realize(&model, &all_defects(&mesh), &mesh).unwrap();
        assert!(dirty.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn inclusions_have_the_right_geometry() {
        let mesh = build_mesh(2, 4, 8, 8).unwrap();
        let cd = mesh.fine_per_cell(); // 4 subcells per axis
        let model = PeriodicModel::inclusions(2, 1.0, 10.0, cd, 0.1).unwrap();
        let clean = realize(&model, &no_defects(&mesh), &mesh).unwrap();
        // Within each cell, the middle half carries beta.
        for e in 0..mesh.fine_elems() {
            let c = mesh.coords(e, mesh.n_fine);
            let (s0, s1) = (c[0] % cd, c[1] % cd);
            let inside = (cd / 4..3 * cd / 4).contains(&s0) && (cd / 4..3 * cd / 4).contains(&s1);
            assert_eq!(clean.values[e], if inside { 10.0 } else { 1.0 });
        }
        // A defect erases the inclusion entirely.
        let dirty = realize(&model, &all_defects(&mesh), &mesh).unwrap();
        assert!(dirty.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn inclusion_resolution_is_validated() {
        assert!(PeriodicModel::inclusions(2, 1.0, 10.0, 6, 0.1).is_err());
        assert!(PeriodicModel::inclusions(2, 1.0, 10.0, 8, 0.1).is_ok());
    }

    #[test]
    fn value_variant_replaces_the_inclusion_value() {
        let base = PeriodicModel::inclusions(2, 1.0, 10.0, 4, 0.1).unwrap();
        let v = defect_variant(&base, DefectVariant::Value { beta_tilde: 5.0 }).unwrap();
        let mesh = build_mesh(2, 4, 8, 8).unwrap();
        let dirty = realize(&v, &all_defects(&mesh), &mesh).unwrap();
        let cd = 4;
        for e in 0..mesh.fine_elems() {
            let c = mesh.coords(e, mesh.n_fine);
            let (s0, s1) = (c[0] % cd, c[1] % cd);
            let inside = (1..3).contains(&s0) && (1..3).contains(&s1);
            assert_eq!(dirty.values[e], if inside { 5.0 } else { 1.0 });
        }
        // A sub-alpha replacement value widens the spectral bounds.
        let low = defect_variant(&base, DefectVariant::Value { beta_tilde: 0.5 }).unwrap();
        assert_eq!(low.alpha, 0.5);
        assert_eq!(low.beta, 10.0);
        assert!(defect_variant(&base, DefectVariant::Value { beta_tilde: -1.0 }).is_err());
    }

    #[test]
    fn fill_variant_floods_the_cell() {
        let base = PeriodicModel::inclusions(2, 1.0, 10.0, 4, 0.1).unwrap();
        let v = defect_variant(&base, DefectVariant::Fill).unwrap();
        let mesh = build_mesh(2, 4, 8, 8).unwrap();
        let dirty = realize(&v, &all_defects(&mesh), &mesh).unwrap();
        assert!(dirty.values.iter().all(|&x| x == 10.0));
        // Q widens to the whole cell.
        assert_eq!(v.q_lo[0], 0);
        assert_eq!(v.q_hi[0], 4);
    }

    #[test]
    fn shift_variant_moves_the_inclusion() {
        let base = PeriodicModel::inclusions(2, 1.0, 10.0, 4, 0.1).unwrap();
        let v = defect_variant(&base, DefectVariant::Shift).unwrap();
        let mesh = build_mesh(2, 4, 8, 8).unwrap();
        let dirty = realize(&v, &all_defects(&mesh), &mesh).unwrap();
        let cd = 4;
        for e in 0..mesh.fine_elems() {
            let c = mesh.coords(e, mesh.n_fine);
            let (s0, s1) = (c[0] % cd, c[1] % cd);
            let in_corner = (3..4).contains(&s0) && (3..4).contains(&s1);
            assert_eq!(dirty.values[e], if in_corner { 10.0 } else { 1.0 });
        }
    }

    #[test]
    fn lshape_variant_erases_one_quadrant() {
        let base = PeriodicModel::inclusions(2, 1.0, 10.0, 4, 0.1).unwrap();
        let v = defect_variant(&base, DefectVariant::Lshape).unwrap();
        let mesh = build_mesh(2, 4, 8, 8).unwrap();
        let dirty = realize(&v, &all_defects(&mesh), &mesh).unwrap();
        let cd = 4;
        for e in 0..mesh.fine_elems() {
            let c = mesh.coords(e, mesh.n_fine);
            let (s0, s1) = (c[0] % cd, c[1] % cd);
            let in_inclusion = (1..3).contains(&s0) && (1..3).contains(&s1);
            let carved = (2..3).contains(&s0) && (2..3).contains(&s1);
            let expect = if in_inclusion && !carved { 10.0 } else { 1.0 };
            assert_eq!(dirty.values[e], expect);
        }
    }

    #[test]
    fn variants_reject_non_inclusion_bases() {
        let cb = PeriodicModel::checkerboard(2, 1.0, 10.0, 4, 0.1).unwrap();
        assert!(defect_variant(&cb, DefectVariant::Fill).is_err());
    }

    #[test]
    fn sampling_is_reproducible_and_extreme_probabilities_are_exact() {
        let mesh = build_mesh(2, 8, 4, 16).unwrap();
        let m_half = PeriodicModel::checkerboard(2, 0.1, 1.0, mesh.fine_per_cell(), 0.5).unwrap();
        let s1 = sample_defects(&m_half, &mesh, 42);
        let s2 = sample_defects(&m_half, &mesh, 42);
        assert_eq!(s1, s2);
        let s3 = sample_defects(&m_half, &mesh, 43);
        assert_ne!(s1.bits, s3.bits);

        let m0 = PeriodicModel::checkerboard(2, 0.1, 1.0, mesh.fine_per_cell(), 0.0).unwrap();
        assert_eq!(sample_defects(&m0, &mesh, 7).defect_count(), 0);
        let m1 = PeriodicModel::checkerboard(2, 0.1, 1.0, mesh.fine_per_cell(), 1.0).unwrap();
        assert_eq!(sample_defects(&m1, &mesh, 7).defect_count(), mesh.defect_cells());
    }

    #[test]
    fn sampling_frequency_tracks_probability() {
        let mesh = build_mesh(2, 8, 8, 64).unwrap(); // 4096 cells
        let model = PeriodicModel::checkerboard(2, 0.1, 1.0, mesh.fine_per_cell(), 0.3).unwrap();
        let freq =
            sample_defects(&model, &mesh, 123).defect_count() as f64 / mesh.defect_cells() as f64;
        assert!((freq - 0.3).abs() < 0.03, "frequency {freq}");
    }

    #[test]
    fn derived_seeds_are_pairwise_distinct() {
        let mut seen = std::collections::BTreeSet::new();
        for stream in 0..8u64 {
            for idx in 0..64u64 {
                assert!(seen.insert(derive_seed(99, stream, idx)));
            }
        }
    }

    #[test]
    fn patch_cells_cover_the_patch_lattice() {
        let mesh = build_mesh(2, 4, 4, 8).unwrap();
        let model = PeriodicModel::checkerboard(2, 0.1, 1.0, mesh.fine_per_cell(), 0.1).unwrap();
        // m = 1 on a 4-torus: 3x3 coarse elements = 6x6 cells.
        let p = patch(&mesh, 0, 1);
        let cells = patch_cells(&model, &mesh, &p);
        assert_eq!(cells.len(), 36);
        // All distinct.
        let set: std::collections::BTreeSet<usize> = cells.iter().copied().collect();
        assert_eq!(set.len(), 36);
        // Full-torus patch: every cell exactly once.
        let pfull = patch(&mesh, 0, 2);
        let cells_full = patch_cells(&model, &mesh, &pfull);
        assert_eq!(cells_full.len(), mesh.defect_cells());
    }

    #[test]
    fn offline_family_has_single_cell_differences() {
        let mesh = build_mesh(2, 4, 4, 4).unwrap();
        let model = PeriodicModel::checkerboard(2, 0.5, 2.0, mesh.fine_per_cell(), 0.1).unwrap();
        let p = patch(&mesh, 5, 1);
        let (family, cells) = offline_coefficients(&model, &mesh, &p).unwrap();
        assert_eq!(family.len(), cells.len() + 1);
        let fpc = mesh.fine_per_cell();
        for (i, &cell) in cells.iter().enumerate() {
            let ai = &family[i + 1];
            let mut diff_elems = Vec::new();
            for (le, (&v0, &vi)) in family[0].values.iter().zip(&ai.values).enumerate() {
                if v0 != vi {
                    diff_elems.push(le);
                }
            }
            // The change covers exactly the Q-part of one cell.
            assert_eq!(diff_elems.len(), fpc * fpc, "family entry {i}");
            for &le in &diff_elems {
                assert_eq!(mesh.cell_of_fine_elem(p.fine_elements[le]), cell);
            }
        }
    }

    #[test]
    fn extract_mu_translates_and_sums_to_one() {
        let mesh = build_mesh(2, 4, 4, 8).unwrap();
        let model = PeriodicModel::checkerboard(2, 0.1, 1.0, mesh.fine_per_cell(), 0.1).unwrap();
        let reference = patch(&mesh, 0, 1);
        let ref_cells = patch_cells(&model, &mesh, &reference);
        // Put one defect at global cell (3, 2).
        let mut bits = vec![false; mesh.defect_cells()];
        bits[mesh.index([3, 2], mesh.n_eps)] = true;
        let sample = DefectSample { bits, seed: 0 };
        // The patch of element (1, 1) covers cells (0..6, 0..6); its shift
        // is (1, 1), i.e. one coarse element = two cells.
        let t = mesh.index([1, 1], mesh.n_coarse);
        let p = patch(&mesh, t, 1);
        let mu = extract_mu(&sample, &mesh, &ref_cells, &p);
        assert_eq!(mu.len(), ref_cells.len() + 1);
        assert!((mu.iter().sum::<f64>() - 1.0).abs() == 0.0);
        assert_eq!(mu.iter().filter(|&&w| w == 1.0).count(), 1);
        // The defective index must correspond to cell (3, 2) after the
        // (2, 2)-cell translation: reference cell (1, 0).
        let hit = mu[1..].iter().position(|&w| w == 1.0).unwrap();
        let rc = mesh.coords(ref_cells[hit], mesh.n_eps);
        assert_eq!(rc, [1, 0]);
        // An element whose patch misses the defect sees only the base term.
        let far = patch(&mesh, mesh.index([3, 0], mesh.n_coarse), 1);
        let mu_far = extract_mu(&sample, &mesh, &ref_cells, &far);
        // Patch of (3,0) covers cells x in {4..=9 mod 8} = {4,..,7,0,1}, y in {6,7,0,..,3}: the
        // defect at (3,2) is outside, so mu = e_0.
        assert_eq!(mu_far[0], 1.0);
        assert!(mu_far[1..].iter().all(|&w| w == 0.0));
    }

    #[test]
    fn patch_realization_matches_global_restriction() {
        let mesh = build_mesh(2, 4, 8, 8).unwrap();
        let model = PeriodicModel::inclusions(2, 1.0, 10.0, mesh.fine_per_cell(), 0.5).unwrap();
        let sample = sample_defects(&model, &mesh, 7);
        let global = realize(&model, &sample, &mesh).unwrap();
        let p = patch(&mesh, 9, 1);
        let local = realize_patch(&model, &sample, &mesh, &p).unwrap();
        for (le, &ge) in p.fine_elements.iter().enumerate() {
            assert_eq!(local.values[le], global.values[ge]);
        }
    }

    #[test]
    fn one_dimensional_models_work_end_to_end() {
        let mesh = build_mesh(1, 4, 16, 16).unwrap();
        let model = PeriodicModel::checkerboard(1, 0.1, 1.0, mesh.fine_per_cell(), 0.25).unwrap();
        let sample = sample_defects(&model, &mesh, 11);
        let field = realize(&model, &sample, &mesh).unwrap();
        assert_eq!(field.values.len(), mesh.fine_elems());
        let p = patch(&mesh, 2, 0);
        let cells = patch_cells(&model, &mesh, &p);
        assert_eq!(cells.len(), mesh.cells_per_coarse());
        let mu = extract_mu(&sample, &mesh, &cells, &p);
        assert_eq!(mu.iter().sum::<f64>(), 1.0);
    }
}
