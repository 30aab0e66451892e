//! Triangle quadrature rules and Lagrange basis evaluation.
//!
//! Points are barycentric; weights are normalised to sum to 1 and must be
//! multiplied by the element area. The 7-point rule is exact for polynomials
//! up to degree 5, which integrates the P2 x P2 mass exactly on straight
//! elements, and is used for all physical integrals.

/// One quadrature rule: barycentric points with weights summing to 1.
#[derive(Debug, Clone)]
pub struct TriQuadrature {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl TriQuadrature {
    /// Symmetric 7-point rule, exact to degree 5.
    pub fn degree5() -> Self {
        let a = 0.059715871789770;
        let b = 0.470142064105115;
        let c = 0.797426985353087;
        let d = 0.101286507323456;
        let w1 = 0.225;
        let w2 = 0.132394152788506;
        let w3 = 0.125939180544827;
        TriQuadrature {
            points: vec![
                [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                [a, b, b],
                [b, a, b],
                [b, b, a],
                [c, d, d],
                [d, c, d],
                [d, d, c],
            ],
            weights: vec![w1, w2, w2, w2, w3, w3, w3],
            degree: 5,
        }
    }

    /// 25-point collapsed Gauss-Legendre rule, exact beyond degree 8; used as
    /// an oracle for the production rule and for reference mass matrices in
    /// tests.
    pub fn degree8() -> Self {
        // 5-point Gauss-Legendre on [0, 1].
        let gl_nodes = [
            0.5 * (1.0 - 0.9061798459386640),
            0.5 * (1.0 - 0.5384693101056831),
            0.5,
            0.5 * (1.0 + 0.5384693101056831),
            0.5 * (1.0 + 0.9061798459386640),
        ];
        let gl_weights = [
            0.5 * 0.2369268850561891,
            0.5 * 0.4786286704993665,
            0.5 * 0.5688888888888889,
            0.5 * 0.4786286704993665,
            0.5 * 0.2369268850561891,
        ];
        // Map the square onto the triangle: (u, v) -> (u, v (1 - u)).
        let mut points = Vec::with_capacity(25);
        let mut weights = Vec::with_capacity(25);
        for iu in 0..5 {
            for iv in 0..5 {
                let u = gl_nodes[iu];
                let v = gl_nodes[iv];
                let x = u;
                let y = v * (1.0 - u);
                points.push([1.0 - x - y, x, y]);
                weights.push(2.0 * gl_weights[iu] * gl_weights[iv] * (1.0 - u));
            }
        }
        TriQuadrature { points, weights, degree: 8 }
    }
}

/// Quadratic Lagrange basis on the reference triangle, in barycentric form.
/// Local DOF order: vertices 0, 1, 2, then midpoints of edges (0-1), (1-2),
/// (2-0), matching the VTK quadratic-triangle convention.
pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

/// Derivatives of the P2 basis with respect to the barycentric coordinates.
pub fn p2_bary_grads(l: [f64; 3]) -> [[f64; 3]; 6] {
    [
        [4.0 * l[0] - 1.0, 0.0, 0.0],
        [0.0, 4.0 * l[1] - 1.0, 0.0],
        [0.0, 0.0, 4.0 * l[2] - 1.0],
        [4.0 * l[1], 4.0 * l[0], 0.0],
        [0.0, 4.0 * l[2], 4.0 * l[1]],
        [4.0 * l[2], 0.0, 4.0 * l[0]],
    ]
}

/// Physical-space gradients of the barycentric coordinates of a triangle.
pub fn bary_phys_grads(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> [[f64; 2]; 3] {
    let area2 = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    [
        [(b[1] - c[1]) / area2, (c[0] - b[0]) / area2],
        [(c[1] - a[1]) / area2, (a[0] - c[0]) / area2],
        [(a[1] - b[1]) / area2, (b[0] - a[0]) / area2],
    ]
}

/// Evaluate a P2 field from its six local DOF values at a barycentric point.
pub fn p2_eval(values: &[f64; 6], l: [f64; 3]) -> f64 {
    let n = p2_values(l);
    (0..6).map(|k| values[k] * n[k]).sum()
}
