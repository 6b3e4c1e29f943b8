//! Offline precomputation: the per-coefficient corrector database.
//!
//! The random coefficients considered here differ from the periodic
//! background only on ε-cells, and cell defects translate with the cell
//! lattice.  All patch-local data is therefore determined by *which patch
//! cells are defective*, not by where the patch sits — so the entire
//! multiscale machinery can be precomputed once, on the patch of a single
//! reference element:
//!
//! * coefficient `0`: the defect-free periodic background on the patch,
//! * coefficient `i ≥ 1`: the background plus a defect in the patch's
//!   `i`-th ε-cell (patch-local cell order).
//!
//! For each coefficient the corrector basis and the element's multiscale
//! stiffness contribution are solved and stored, together with the coarse
//! load vector of the fixed right-hand side.  The online stage then
//! reconstructs any sampled coefficient's local data as a short weighted
//! sum — exact whenever a patch holds at most one defect, and an
//! approximation whose error the indicator module measures otherwise.
//!
//! Databases serialize to a small self-describing binary format (magic
//! bytes, format version, explicit array shapes, CRC-64 trailer) so that
//! campaigns can split the expensive offline stage from cheap online
//! sampling runs.

use std::f64::consts::PI;
use std::path::Path;

use crc::{Crc, CRC_64_ECMA_182};

use crate::coefficient::{offline_coefficients, CoefficientField, PeriodicModel};
use crate::corrector::{CorrectorBasis, CorrectorWorkspace, LocalStiffness};
use crate::error::{Error, Result};
use crate::interpolation::InterpKind;
use crate::linalg::elements::{hat_1d, hat_2d, GAUSS2_NODES, GAUSS2_WEIGHTS};
use crate::mesh::{build_mesh, patch, NestedMesh, PatchGeometry};

/// Current on-disk format version.
pub const FORMAT_VERSION: u32 = 1;

const MAGIC: &[u8; 4] = b"LODB";

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_ECMA_182);

/// Everything precomputed on the reference element's patch, plus the
/// global coarse load vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDatabase {
    /// Mesh the database was built on.
    pub mesh: NestedMesh,
    /// Patch layer count.
    pub m: usize,
    /// Interpolation flavor the correctors were constrained with.
    pub kind: InterpKind,
    /// Coefficient model (geometry, bounds, defect probability).
    pub model: PeriodicModel,
    /// Global ε-cell ids covered by the reference patch, in patch-local
    /// order; entry `i − 1` is the defective cell of coefficient `i`.
    pub reference_cells: Vec<usize>,
    /// Patch-local coefficient fields, defect-free first.
    pub coefficients: Vec<CoefficientField>,
    /// Element stiffness contributions per coefficient.
    pub local_matrices: Vec<LocalStiffness>,
    /// Corrector bases per coefficient (needed for upscaling and the
    /// error indicator).
    pub correctors: Vec<CorrectorBasis>,
    /// Coarse load vector of the fixed right-hand side, all coarse nodes.
    pub load_vector: Vec<f64>,
    /// On-disk format version this database round-trips through.
    pub format_version: u32,
}

impl OfflineDatabase {
    /// Number of single-defect coefficients (database holds this plus the
    /// defect-free entry).
    pub fn defect_coefficients(&self) -> usize {
        self.reference_cells.len()
    }

    /// Geometry of the reference patch the data lives on.
    pub fn reference_patch(&self) -> PatchGeometry {
        patch(&self.mesh, 0, self.m)
    }
}

/// The fixed right-hand side: `8π² sin(2πx)` in one dimension,
/// `8π² sin(2πx₁) cos(2πx₂)` in two.
pub fn default_forcing(d: usize) -> fn([f64; 2]) -> f64 {
    fn f1(x: [f64; 2]) -> f64 {
        8.0 * PI * PI * (2.0 * PI * x[0]).sin()
    }
    fn f2(x: [f64; 2]) -> f64 {
        8.0 * PI * PI * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()
    }
    if d == 1 {
        f1
    } else {
        f2
    }
}

/// Assembles the coarse load vector `F(λ_k) = ∫ f λ_k` with a composite
/// 2-point Gauss rule per fine element and axis.
///
/// The rule integrates the bilinear test functions exactly against any
/// fine-elementwise-linear interpolant of `f`, so its error matches the
/// discretization order of the fine grid.
pub fn coarse_load_vector(mesh: &NestedMesh, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let nf = mesh.n_fine;
    let r = mesh.refinement;
    let h = mesh.h_fine();
    let mut load = vec![0.0; mesh.coarse_nodes()];
    if mesh.d == 1 {
        for e in 0..mesh.fine_elems() {
            let t = e / r;
            let nodes = mesh.coarse_elem_nodes(t);
            let s_base = (e % r) as f64;
            for (g, &gx) in GAUSS2_NODES.iter().enumerate() {
                let x = (e as f64 + gx) * h;
                let s = (s_base + gx) / r as f64;
                let hat = hat_1d(s);
                let w = GAUSS2_WEIGHTS[g] * h * f([x, 0.0]);
                load[nodes[0]] += w * hat[0];
                load[nodes[1]] += w * hat[1];
            }
        }
    } else {
        for e in 0..mesh.fine_elems() {
            let ce = mesh.coords(e, nf);
            let t =
                mesh.index([ce[0] / r, ce[1] / r], mesh.n_coarse);
            let nodes = mesh.coarse_elem_nodes(t);
            let s_base = [(ce[0] % r) as f64, (ce[1] % r) as f64];
            for (g0, &gx) in GAUSS2_NODES.iter().enumerate() {
                for (g1, &gy) in GAUSS2_NODES.iter().enumerate() {
                    let x = [(ce[0] as f64 + gx) * h, (ce[1] as f64 + gy) * h];
                    let s = (s_base[0] + gx) / r as f64;
                    let u = (s_base[1] + gy) / r as f64;
                    let hat = hat_2d(s, u);
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

/// Builds the complete offline database for a model on a mesh.
///
/// Solves one corrector basis and local stiffness per coefficient (the
/// defect-free background plus one per patch cell), strictly in
/// coefficient order, and assembles the coarse load vector of `f`.
pub fn build_offline(
    model: &PeriodicModel,
    mesh: &NestedMesh,
    m: usize,
    kind: InterpKind,
    f: impl Fn([f64; 2]) -> f64,
) -> Result<OfflineDatabase> {
    let reference = patch(mesh, 0, m);
    let (coefficients, reference_cells) = offline_coefficients(model, mesh, &reference)?;
    let mut workspace = CorrectorWorkspace::new(mesh, &reference, kind)?;
    let mut correctors = Vec::with_capacity(coefficients.len());
    let mut local_matrices = Vec::with_capacity(coefficients.len());
    for (i, a) in coefficients.iter().enumerate() {
        let annotate = |e: Error| {
            Error::solver(
                format!("offline coefficient {i} of {}", coefficients.len()),
                e.to_string(),
            )
        };
        let basis = workspace.solve_basis(a).map_err(annotate)?;
        let matrix = workspace.local_stiffness(a, &basis).map_err(annotate)?;
        correctors.push(basis);
        local_matrices.push(matrix);
    }
    Ok(OfflineDatabase {
        mesh: mesh.clone(),
        m,
        kind,
        model: model.clone(),
        reference_cells,
        coefficients,
        local_matrices,
        correctors,
        load_vector: coarse_load_vector(mesh, f),
        format_version: FORMAT_VERSION,
    })
}

/// Byte-buffer writer for the database format (little-endian throughout).
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn len_u32(&mut self, n: usize) -> Result<()> {
        let v = u32::try_from(n)
            .map_err(|_| Error::data(format!("array of {n} entries exceeds the format limit")))?;
        self.u32(v);
        Ok(())
    }

    fn f64_array(&mut self, vals: &[f64]) -> Result<()> {
        self.len_u32(vals.len())?;
        for &v in vals {
            self.f64(v);
        }
        Ok(())
    }

    fn str(&mut self, s: &str) -> Result<()> {
        self.len_u32(s.len())?;
        self.buf.extend_from_slice(s.as_bytes());
        Ok(())
    }
}

/// Byte-buffer reader; every access is bounds-checked so truncation that
/// slips past the checksum still fails cleanly.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::DbTruncated {
                offset: self.pos as u64,
                needed: n as u64,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_array(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::DbFormat("label is not valid UTF-8".to_string()))
    }
}

fn kind_code(kind: InterpKind) -> u8 {
    match kind {
        InterpKind::AveragedL2 => 0,
        InterpKind::Nodal1d => 1,
    }
}

fn kind_from_code(code: u8) -> Result<InterpKind> {
    match code {
        0 => Ok(InterpKind::AveragedL2),
        1 => Ok(InterpKind::Nodal1d),
        other => Err(Error::DbFormat(format!(
            "unknown interpolation code {other}"
        ))),
    }
}

/// Serializes a database to its binary format (checksummed, versioned).
pub fn save_database(db: &OfflineDatabase, path: &Path) -> Result<()> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);

    w.u32(db.mesh.d as u32);
    w.u32(db.mesh.n_coarse as u32);
    w.u32(db.mesh.refinement as u32);
    w.u32(db.mesh.n_eps as u32);
    w.u32(db.m as u32);
    w.u8(kind_code(db.kind));

    let model = &db.model;
    w.f64(model.alpha);
    w.f64(model.beta);
    w.u32(model.cell_div as u32);
    for a in 0..2 {
        w.u32(model.q_lo[a] as u32);
        w.u32(model.q_hi[a] as u32);
    }
    w.f64(model.p);
    w.str(&model.label)?;
    w.f64_array(&model.a_per_cell)?;
    w.f64_array(&model.b_per_cell)?;

    w.len_u32(db.reference_cells.len())?;
    for &c in &db.reference_cells {
        w.u32(c as u32);
    }

    w.len_u32(db.coefficients.len())?;
    for a in &db.coefficients {
        w.f64_array(&a.values)?;
    }
    for mat in &db.local_matrices {
        w.len_u32(mat.entries.len())?;
        let cols = mat.entries.first().map_or(0, Vec::len);
        w.len_u32(cols)?;
        for row in &mat.entries {
            for &v in row {
                w.f64(v);
            }
        }
    }
    for basis in &db.correctors {
        w.len_u32(basis.values.len())?;
        let cols = basis.values.first().map_or(0, Vec::len);
        w.len_u32(cols)?;
        for q in &basis.values {
            for &v in q {
                w.f64(v);
            }
        }
    }
    w.f64_array(&db.load_vector)?;

    let checksum = CRC64.checksum(&w.buf);
    w.u64(checksum);
    std::fs::write(path, &w.buf)?;
    Ok(())
}

/// Reads a database back; fails with distinct errors on bad magic bytes,
/// version mismatch, checksum failure, and truncation.
pub fn load_database(path: &Path) -> Result<OfflineDatabase> {
    let buf = std::fs::read(path)?;
    if buf.len() < MAGIC.len() + 4 + 8 {
        return Err(Error::DbTruncated {
            offset: buf.len() as u64,
            needed: (MAGIC.len() + 4 + 8) as u64,
        });
    }
    if &buf[..4] != MAGIC {
        return Err(Error::DbFormat(
            "missing database magic bytes".to_string(),
        ));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::DbVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let body = &buf[..buf.len() - 8];
    let stored = u64::from_le_bytes(buf[buf.len() - 8..].try_into().unwrap());
    let computed = CRC64.checksum(body);
    if stored != computed {
        return Err(Error::DbChecksum { stored, computed });
    }

    let mut r = Reader { buf: body, pos: 8 };
    let d = r.u32()? as usize;
    let n_coarse = r.u32()? as usize;
    let refinement = r.u32()? as usize;
    let n_eps = r.u32()? as usize;
    let m = r.u32()? as usize;
    let kind = kind_from_code(r.u8()?)?;
    let mesh = build_mesh(d, n_coarse, refinement, n_eps)
        .map_err(|e| Error::DbFormat(format!("stored mesh is invalid: {e}")))?;

    let alpha = r.f64()?;
    let beta = r.f64()?;
    let cell_div = r.u32()? as usize;
    let mut q_lo = [0usize; 2];
    let mut q_hi = [0usize; 2];
    for a in 0..2 {
        q_lo[a] = r.u32()? as usize;
        q_hi[a] = r.u32()? as usize;
    }
    let p = r.f64()?;
    let label = r.str()?;
    let a_per_cell = r.f64_array()?;
    let b_per_cell = r.f64_array()?;
    let model = PeriodicModel {
        d,
        alpha,
        beta,
        cell_div,
        a_per_cell,
        b_per_cell,
        q_lo,
        q_hi,
        p,
        label,
    };

    let n_cells = r.u32()? as usize;
    let mut reference_cells = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        reference_cells.push(r.u32()? as usize);
    }

    let n_coeff = r.u32()? as usize;
    if n_coeff != n_cells + 1 {
        return Err(Error::DbFormat(format!(
            "{n_coeff} coefficients stored for {n_cells} patch cells"
        )));
    }
    let mut coefficients = Vec::with_capacity(n_coeff);
    for _ in 0..n_coeff {
        coefficients.push(CoefficientField {
            values: r.f64_array()?,
        });
    }
    let mut local_matrices = Vec::with_capacity(n_coeff);
    for _ in 0..n_coeff {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let mut entries = Vec::with_capacity(rows);
        for _ in 0..rows {
            let mut row = Vec::with_capacity(cols);
            for _ in 0..cols {
                row.push(r.f64()?);
            }
            entries.push(row);
        }
        local_matrices.push(LocalStiffness { entries });
    }
    let mut correctors = Vec::with_capacity(n_coeff);
    for _ in 0..n_coeff {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let mut values = Vec::with_capacity(rows);
        for _ in 0..rows {
            let mut q = Vec::with_capacity(cols);
            for _ in 0..cols {
                q.push(r.f64()?);
            }
            values.push(q);
        }
        correctors.push(CorrectorBasis { values });
    }
    let load_vector = r.f64_array()?;
    if load_vector.len() != mesh.coarse_nodes() {
        return Err(Error::DbFormat(format!(
            "load vector has {} entries for {} coarse nodes",
            load_vector.len(),
            mesh.coarse_nodes()
        )));
    }

    let db = OfflineDatabase {
        mesh,
        m,
        kind,
        model,
        reference_cells,
        coefficients,
        local_matrices,
        correctors,
        load_vector,
        format_version: version,
    };
    let rebuilt = crate::coefficient::patch_cells(&db.model, &db.mesh, &db.reference_patch());
    if rebuilt != db.reference_cells {
        return Err(Error::DbFormat(
            "stored cell list does not match the mesh geometry".to_string(),
        ));
    }
    Ok(db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::PeriodicModel;

    fn small_db() -> OfflineDatabase {
        let mesh = build_mesh(2, 4, 2, 4).unwrap();
        let model = PeriodicModel::checkerboard(2, 0.1, 1.0, 2, 0.1).unwrap();
        build_offline(&model, &mesh, 1, InterpKind::AveragedL2, default_forcing(2)).unwrap()
    }

    #[test]
    fn database_counts_follow_the_patch_cell_lattice() {
        // Two ε-cells per coarse element and two patch layers: the patch
        // spans 5 coarse elements = 10 cells per axis.
        let mesh = build_mesh(2, 32, 4, 64).unwrap();
        let model = PeriodicModel::checkerboard(2, 0.1, 1.0, 2, 0.1).unwrap();
        let db = build_offline(&model, &mesh, 2, InterpKind::AveragedL2, default_forcing(2)).unwrap();
        assert_eq!(db.defect_coefficients(), 100);
        assert_eq!(db.local_matrices.len(), 101);
        assert_eq!(db.correctors.len(), 101);
        assert_eq!(db.coefficients.len(), 101);
    }

    #[test]
    fn minimal_one_dimensional_database() {
        // One ε-cell per coarse element and no patch layers: a single
        // defect coefficient, and each local matrix pairs the two corner
        // hats with the two patch coarse nodes.
        let mesh = build_mesh(1, 4, 2, 4).unwrap();
        let model = PeriodicModel::checkerboard(1, 0.1, 1.0, 2, 0.1).unwrap();
        let db = build_offline(&model, &mesh, 0, InterpKind::Nodal1d, default_forcing(1)).unwrap();
        assert_eq!(db.defect_coefficients(), 1);
        assert_eq!(db.local_matrices.len(), 2);
        for mat in &db.local_matrices {
            assert_eq!(mat.entries.len(), 2);
            assert_eq!(mat.entries[0].len(), 2);
        }
    }

    #[test]
    fn load_vector_matches_an_independent_dense_assembly() {
        let mesh = build_mesh(2, 4, 4, 4).unwrap();
        let f = default_forcing(2);
        let load = coarse_load_vector(&mesh, f);

        // Independent route: for each coarse node, integrate f times its
        // hat with the same composite rule, evaluating the hat from the
        // wrapped-distance formula instead of element-local tables.
        let nh = mesh.n_coarse;
        let nf = mesh.n_fine;
        let h = mesh.h_fine();
        let hh = mesh.h_coarse();
        let hat = |node: usize, x: [f64; 2]| -> f64 {
            let nc = mesh.coords(node, nh);
            let mut v = 1.0;
            for a in 0..2 {
                let mut dist = (x[a] - nc[a] as f64 * hh).abs();
                dist = dist.min(1.0 - dist);
                v *= (1.0 - dist / hh).max(0.0);
            }
            v
        };
        for k in 0..mesh.coarse_nodes() {
            let mut want = 0.0;
            for e in 0..mesh.fine_elems() {
                let ce = mesh.coords(e, nf);
                for (g0, &gx) in GAUSS2_NODES.iter().enumerate() {
                    for (g1, &gy) in GAUSS2_NODES.iter().enumerate() {
                        let x = [(ce[0] as f64 + gx) * h, (ce[1] as f64 + gy) * h];
                        want += GAUSS2_WEIGHTS[g0] * GAUSS2_WEIGHTS[g1] * h * h * f(x) * hat(k, x);
                    }
                }
            }
            assert!(
                (load[k] - want).abs() < 1e-12,
                "node {k}: {} vs {want}",
                load[k]
            );
        }
    }

    #[test]
    fn load_quadrature_converges_at_fourth_order() {
        // In one dimension the integral of f against a hat has a closed
        // form; the composite 2-point rule should approach it like h⁴.
        let exact = |k: usize, nh: usize| {
            let hh = 1.0 / nh as f64;
            4.0 / hh * (1.0 - (2.0 * PI * hh).cos()) * (2.0 * PI * k as f64 * hh).sin()
        };
        let err_at = |refinement: usize| {
            let mesh = build_mesh(1, 8, refinement, 8).unwrap();
            let load = coarse_load_vector(&mesh, default_forcing(1));
            load.iter()
                .enumerate()
                .map(|(k, &v)| (v - exact(k, 8)).abs())
                .fold(0.0, f64::max)
        };
        let coarse = err_at(2);
        let fine = err_at(4);
        let ratio = coarse / fine;
        assert!(
            (12.0..20.0).contains(&ratio),
            "expected ~16x decay, got {ratio} ({coarse} -> {fine})"
        );
    }

    #[test]
    fn build_is_deterministic_and_round_trips_bit_exactly() {
        let db = small_db();
        let again = small_db();
        assert_eq!(db, again, "identical inputs must give identical databases");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.lodb");
        save_database(&db, &path).unwrap();
        let loaded = load_database(&path).unwrap();
        assert_eq!(db, loaded, "round trip must be bit-exact");
    }

    #[test]
    fn stored_matrices_regenerate_from_stored_coefficients() {
        let db = small_db();
        let reference = db.reference_patch();
        let mut ws = CorrectorWorkspace::new(&db.mesh, &reference, db.kind).unwrap();
        for (i, a) in db.coefficients.iter().enumerate() {
            let basis = ws.solve_basis(a).unwrap();
            let mat = ws.local_stiffness(a, &basis).unwrap();
            assert_eq!(basis, db.correctors[i], "corrector {i}");
            assert_eq!(mat, db.local_matrices[i], "local matrix {i}");
        }
    }

    #[test]
    fn corrupted_files_fail_with_distinct_errors() {
        let db = small_db();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.lodb");
        save_database(&db, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        // Bit flip in the payload: checksum mismatch.
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x40;
        let bad = dir.path().join("flip.lodb");
        std::fs::write(&bad, &flipped).unwrap();
        match load_database(&bad) {
            Err(Error::DbChecksum { .. }) => {}
            other => panic!("expected checksum error, got {other:?}"),
        }

        // Truncation: also caught by the checksum (no partial database).
        let cut = dir.path().join("cut.lodb");
        std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
        match load_database(&cut) {
            Err(Error::DbChecksum { .. }) | Err(Error::DbTruncated { .. }) => {}
            other => panic!("expected checksum/truncation error, got {other:?}"),
        }

        // Version bump with a recomputed trailer: version error naming
        // both versions.
        let mut bumped = bytes.clone();
        bumped[4..8].copy_from_slice(&2u32.to_le_bytes());
        let len = bumped.len();
        let sum = CRC64.checksum(&bumped[..len - 8]);
        bumped[len - 8..].copy_from_slice(&sum.to_le_bytes());
        let vpath = dir.path().join("v2.lodb");
        std::fs::write(&vpath, &bumped).unwrap();
        match load_database(&vpath) {
            Err(Error::DbVersion { found: 2, expected: 1 }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }
}
