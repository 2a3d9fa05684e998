//! Trilinear hexahedron and its 2×2×2 Gauss rule.

/// Reference coordinates of the nodes, in Abaqus C3D8 order.
pub const NODE_SIGNS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

pub const QUAD_POINTS: usize = 8;

/// Gauss points (all weights are 1).
pub fn gauss_points() -> [[f64; 3]; QUAD_POINTS] {
    let g = 1.0 / 3f64.sqrt();
    NODE_SIGNS.map(|s| [s[0] * g, s[1] * g, s[2] * g])
}

/// Values and reference gradients of the eight shape functions.
pub fn shape_functions(xi: [f64; 3]) -> ([f64; 8], [[f64; 3]; 8]) {
    let mut n = [0.0; 8];
    let mut dn = [[0.0; 3]; 8];
    for (a, s) in NODE_SIGNS.iter().enumerate() {
        let f = [1.0 + s[0] * xi[0], 1.0 + s[1] * xi[1], 1.0 + s[2] * xi[2]];
        n[a] = 0.125 * f[0] * f[1] * f[2];
        dn[a] = [0.125 * s[0] * f[1] * f[2], 0.125 * f[0] * s[1] * f[2], 0.125 * f[0] * f[1] * s[2]];
    }
    (n, dn)
}

/// Quadrature data of one element in its reference configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementGeometry {
    pub n: [[f64; 8]; QUAD_POINTS],
    /// `∂N_a/∂X` at each quadrature point.
    pub dn_dx: [[[f64; 3]; 8]; QUAD_POINTS],
    /// Jacobian determinant times weight.
    pub jw: [f64; QUAD_POINTS],
}

impl ElementGeometry {
    /// Fails with the smallest Jacobian determinant when the element is
    /// degenerate or inverted.
    pub fn new(coords: &[[f64; 3]; 8]) -> Result<Self, f64> {
        let mut geo =
            ElementGeometry { n: [[0.0; 8]; QUAD_POINTS], dn_dx: [[[0.0; 3]; 8]; QUAD_POINTS], jw: [0.0; QUAD_POINTS] };
        for (q, xi) in gauss_points().into_iter().enumerate() {
            let (n, dn) = shape_functions(xi);
            let mut j = [[0.0; 3]; 3];
            for a in 0..8 {
                for r in 0..3 {
                    for c in 0..3 {
                        j[r][c] += coords[a][r] * dn[a][c];
                    }
                }
            }
            let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
                - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
                + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
            if !(det > 0.0) {
                return Err(det);
            }
            // J_rc = ∂X_r/∂ξ_c, so ∂N/∂X = J⁻ᵀ ∂N/∂ξ
            let inv = [
                [
                    (j[1][1] * j[2][2] - j[1][2] * j[2][1]) / det,
                    (j[0][2] * j[2][1] - j[0][1] * j[2][2]) / det,
                    (j[0][1] * j[1][2] - j[0][2] * j[1][1]) / det,
                ],
                [
                    (j[1][2] * j[2][0] - j[1][0] * j[2][2]) / det,
                    (j[0][0] * j[2][2] - j[0][2] * j[2][0]) / det,
                    (j[0][2] * j[1][0] - j[0][0] * j[1][2]) / det,
                ],
                [
                    (j[1][0] * j[2][1] - j[1][1] * j[2][0]) / det,
                    (j[0][1] * j[2][0] - j[0][0] * j[2][1]) / det,
                    (j[0][0] * j[1][1] - j[0][1] * j[1][0]) / det,
                ],
            ];
            for a in 0..8 {
                for r in 0..3 {
                    geo.dn_dx[q][a][r] = (0..3).map(|c| inv[c][r] * dn[a][c]).sum();
                }
            }
            geo.n[q] = n;
            geo.jw[q] = det;
        }
        Ok(geo)
    }

    pub fn volume(&self) -> f64 {
        self.jw.iter().sum()
    }
}
