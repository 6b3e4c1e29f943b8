//! Exact element integrals for tensor-product P1/Q1 finite elements.
//!
//! All meshes in this crate are uniform Cartesian grids, so every element
//! integral reduces to a fixed reference table scaled by powers of the mesh
//! width.  Element node ordering is lexicographic: in 1D `(left, right)`, in
//! 2D `((0,0), (1,0), (0,1), (1,1))` in reference coordinates.
//!
//! The tables are closed-form integrals of products of the reference basis
//! gradients/values; `stiffness` carries a unit (constant-one) coefficient,
//! so an elementwise-constant coefficient `a` contributes `a * K` exactly.
//! Tests recompute every table with tensor Gauss quadrature of sufficient
//! order as an independent check.

/// Two-point Gauss nodes on the unit interval `[0, 1]`.
///
/// Exact for polynomials of degree up to three, which covers products of
/// two P1/Q1 factors per axis.
pub const GAUSS2_NODES: [f64; 2] = [
    0.5 - 0.288_675_134_594_812_88, // 1/2 - 1/(2*sqrt(3))
    0.5 + 0.288_675_134_594_812_88,
];

/// Weights paired with [`GAUSS2_NODES`] on `[0, 1]`.
pub const GAUSS2_WEIGHTS: [f64; 2] = [0.5, 0.5];

/// 1D P1 stiffness on an interval of width `h`, unit coefficient:
/// `K_ij = ∫ φ_i' φ_j' dx`.
pub fn stiffness_1d(h: f64) -> [[f64; 2]; 2] {
    let k = 1.0 / h;
    [[k, -k], [-k, k]]
}

/// 1D P1 mass on an interval of width `h`: `M_ij = ∫ φ_i φ_j dx`.
pub fn mass_1d(h: f64) -> [[f64; 2]; 2] {
    let m = h / 6.0;
    [[2.0 * m, m], [m, 2.0 * m]]
}

/// 2D Q1 stiffness on a square of any width, unit coefficient.
///
/// The gradient scaling and the area element cancel in two dimensions, so
/// the table is independent of the element width.  Node order is
/// lexicographic.
pub fn stiffness_2d() -> [[f64; 4]; 4] {
    let s = 1.0 / 6.0;
    [
        [4.0 * s, -s, -s, -2.0 * s],
        [-s, 4.0 * s, -2.0 * s, -s],
        [-s, -2.0 * s, 4.0 * s, -s],
        [-2.0 * s, -s, -s, 4.0 * s],
    ]
}

/// 2D Q1 mass on a square of width `h`, lexicographic node order.
pub fn mass_2d(h: f64) -> [[f64; 4]; 4] {
    let m = h * h / 36.0;
    [
        [4.0 * m, 2.0 * m, 2.0 * m, m],
        [2.0 * m, 4.0 * m, m, 2.0 * m],
        [2.0 * m, m, 4.0 * m, 2.0 * m],
        [m, 2.0 * m, 2.0 * m, 4.0 * m],
    ]
}

/// Value of the 1D reference hat pair at local coordinate `t ∈ [0, 1]`:
/// `(1 - t, t)`.
#[inline]
pub fn hat_1d(t: f64) -> [f64; 2] {
    [1.0 - t, t]
}

/// Values of the four reference Q1 basis functions at `(s, t) ∈ [0, 1]²`,
/// lexicographic order.
#[inline]
pub fn hat_2d(s: f64, t: f64) -> [f64; 4] {
    let a = hat_1d(s);
    let b = hat_1d(t);
    [a[0] * b[0], a[1] * b[0], a[0] * b[1], a[1] * b[1]]
}

/// Quadratic form `vᵀ T v` of an element table, for norm accumulation.
#[inline]
pub fn quad_form<const N: usize>(table: &[[f64; N]; N], v: &[f64; N]) -> f64 {
    let mut acc = 0.0;
    for (i, row) in table.iter().enumerate() {
        let mut inner = 0.0;
        for (j, &t) in row.iter().enumerate() {
            inner += t * v[j];
        }
        acc += v[i] * inner;
    }
    acc
}

/// Bilinear form `uᵀ T v` of an element table.
#[inline]
pub fn bilin_form<const N: usize>(table: &[[f64; N]; N], u: &[f64; N], v: &[f64; N]) -> f64 {
    let mut acc = 0.0;
    for (i, row) in table.iter().enumerate() {
        let mut inner = 0.0;
        for (j, &t) in row.iter().enumerate() {
            inner += t * v[j];
        }
        acc += u[i] * inner;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference Q1 gradients at `(s, t)`, lexicographic order.
    fn grad_2d(s: f64, t: f64) -> [[f64; 2]; 4] {
        [
            [-(1.0 - t), -(1.0 - s)],
            [1.0 - t, -s],
            [-t, 1.0 - s],
            [t, s],
        ]
    }

    #[test]
    fn stiffness_2d_matches_quadrature() {
        // On a width-h square, grad phi = (1/h) * grad_ref and dx = h^2 ds dt,
        // so the h's cancel; integrate the reference-gradient products with
        // 2x2 Gauss (exact: the integrand is biquadratic).
        let mut num = [[0.0f64; 4]; 4];
        for (gi, &s) in GAUSS2_NODES.iter().enumerate() {
            for (gj, &t) in GAUSS2_NODES.iter().enumerate() {
                let w = GAUSS2_WEIGHTS[gi] * GAUSS2_WEIGHTS[gj];
                let g = grad_2d(s, t);
                for i in 0..4 {
                    for j in 0..4 {
                        num[i][j] += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                    }
                }
            }
        }
        let table = stiffness_2d();
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (num[i][j] - table[i][j]).abs() < 1e-14,
                    "({i},{j}): {} vs {}",
                    num[i][j],
                    table[i][j]
                );
            }
        }
    }

    #[test]
    fn mass_2d_matches_quadrature() {
        let h = 0.37;
        let mut num = [[0.0f64; 4]; 4];
        for (gi, &s) in GAUSS2_NODES.iter().enumerate() {
            for (gj, &t) in GAUSS2_NODES.iter().enumerate() {
                let w = GAUSS2_WEIGHTS[gi] * GAUSS2_WEIGHTS[gj] * h * h;
                let v = hat_2d(s, t);
                for i in 0..4 {
                    for j in 0..4 {
                        num[i][j] += w * v[i] * v[j];
                    }
                }
            }
        }
        let table = mass_2d(h);
        for i in 0..4 {
            for j in 0..4 {
                assert!((num[i][j] - table[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn one_dimensional_tables_match_quadrature() {
        let h = 0.21;
        let mut k = [[0.0f64; 2]; 2];
        let mut m = [[0.0f64; 2]; 2];
        for (gi, &t) in GAUSS2_NODES.iter().enumerate() {
            let w = GAUSS2_WEIGHTS[gi] * h;
            let v = hat_1d(t);
            let g = [-1.0 / h, 1.0 / h];
            for i in 0..2 {
                for j in 0..2 {
                    k[i][j] += w * g[i] * g[j];
                    m[i][j] += w * v[i] * v[j];
                }
            }
        }
        let kt = stiffness_1d(h);
        let mt = mass_1d(h);
        for i in 0..2 {
            for j in 0..2 {
                assert!((k[i][j] - kt[i][j]).abs() < 1e-12);
                assert!((m[i][j] - mt[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stiffness_rows_annihilate_constants() {
        for row in stiffness_2d() {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
        for row in stiffness_1d(0.5) {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
    }

    #[test]
    fn mass_rows_integrate_basis_exactly() {
        // Row sums of the mass table are ∫ φ_i, i.e. h²/4 per corner in 2D.
        let h = 0.25;
        for row in mass_2d(h) {
            assert!((row.iter().sum::<f64>() - h * h / 4.0).abs() < 1e-16);
        }
    }

    #[test]
    fn quadratic_and_bilinear_forms_agree() {
        let t = stiffness_2d();
        let v = [0.3, -1.2, 0.7, 2.0];
        assert!((quad_form(&t, &v) - bilin_form(&t, &v, &v)).abs() < 1e-15);
    }
}
