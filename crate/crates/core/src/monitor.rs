//! Monitor input fields, the AL/BM monitor functions with their adaptive
//! floor, and the spatial/temporal smoothing passes.
//!
//! Inputs are per-vertex scalars built from the P2 solution at the vertices.
//! Derivatives of the input are recovered by lumped-mass L2 projection of
//! the piecewise-constant P1 gradient; the Hessian applies the same recovery
//! to each recovered gradient component (symmetrised).

use crate::mesh::TriMesh;
use crate::qtensor::QTensor;
use crate::quadrature::TriQuadrature;

/// Monitor function / input function combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorKind {
    /// Arc-length monitor on tr(Q^2).
    Al,
    /// First-derivative monitor on tr(Q^2).
    Bm1a,
    /// First-derivative monitor on the biaxiality.
    Bm1b,
    /// Second-derivative monitor on the biaxiality.
    Bm2b,
}

impl MonitorKind {
    pub fn parse(s: &str) -> Option<MonitorKind> {
        match s.to_ascii_uppercase().as_str() {
            "AL" => Some(MonitorKind::Al),
            "BM1A" => Some(MonitorKind::Bm1a),
            "BM1B" => Some(MonitorKind::Bm1b),
            "BM2B" => Some(MonitorKind::Bm2b),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MonitorKind::Al => "AL",
            MonitorKind::Bm1a => "BM1a",
            MonitorKind::Bm1b => "BM1b",
            MonitorKind::Bm2b => "BM2b",
        }
    }

    /// Whether the monitor input is the biaxiality (else tr(Q^2)).
    pub fn uses_biaxiality(&self) -> bool {
        matches!(self, MonitorKind::Bm1b | MonitorKind::Bm2b)
    }
}

/// Nodal monitor values with the previous-step history used for temporal
/// under-relaxation.
#[derive(Debug, Clone)]
pub struct MonitorField {
    pub w: Vec<f64>,
}

impl MonitorField {
    pub fn uniform(n: usize) -> Self {
        MonitorField { w: vec![1.0; n] }
    }
}

/// tr(Q^2) at each vertex.
pub fn input_trace(q: &[Vec<f64>; 5], mesh: &TriMesh) -> Vec<f64> {
    let nv = mesh.n_vertices();
    (0..nv)
        .map(|v| {
            QTensor::from_components([q[0][v], q[1][v], q[2][v], q[3][v], q[4][v]]).trace_q2()
        })
        .collect()
}

/// Biaxiality at each vertex, with the isotropic guard mapping to 0.
pub fn input_biaxiality(q: &[Vec<f64>; 5], mesh: &TriMesh) -> Vec<f64> {
    let nv = mesh.n_vertices();
    (0..nv)
        .map(|v| {
            QTensor::from_components([q[0][v], q[1][v], q[2][v], q[3][v], q[4][v]])
                .biaxiality_or_zero()
        })
        .collect()
}

/// Recovered per-vertex gradient and Hessian (xx, xy, yy) of a P1 field on
/// the physical mesh.
pub fn recover_derivatives(field: &[f64], mesh: &TriMesh) -> (Vec<[f64; 2]>, Vec<[f64; 3]>) {
    let grad = recover_gradient(field, mesh);
    let gx: Vec<f64> = grad.iter().map(|g| g[0]).collect();
    let gy: Vec<f64> = grad.iter().map(|g| g[1]).collect();
    let hx = recover_gradient(&gx, mesh);
    let hy = recover_gradient(&gy, mesh);
    let hess = (0..mesh.n_vertices())
        .map(|v| [hx[v][0], 0.5 * (hx[v][1] + hy[v][0]), hy[v][1]])
        .collect();
    (grad, hess)
}

/// Lumped-mass L2 projection of the elementwise P1 gradient onto the
/// vertices: the area-weighted average of incident element gradients.
fn recover_gradient(field: &[f64], mesh: &TriMesh) -> Vec<[f64; 2]> {
    let nv = mesh.n_vertices();
    let mut acc = vec![[0.0f64; 2]; nv];
    let mut wsum = vec![0.0f64; nv];
    for (e, tri) in mesh.elements().iter().enumerate() {
        let a = mesh.phys_coords()[tri[0]];
        let b = mesh.phys_coords()[tri[1]];
        let c = mesh.phys_coords()[tri[2]];
        let dl = crate::quadrature::bary_phys_grads(a, b, c);
        let area = mesh.phys_area(e).abs();
        let mut g = [0.0f64; 2];
        for k in 0..3 {
            g[0] += field[tri[k]] * dl[k][0];
            g[1] += field[tri[k]] * dl[k][1];
        }
        for &v in tri {
            acc[v][0] += area * g[0];
            acc[v][1] += area * g[1];
            wsum[v] += area;
        }
    }
    for v in 0..nv {
        acc[v][0] /= wsum[v];
        acc[v][1] /= wsum[v];
    }
    acc
}

/// Evaluate the monitor function on a per-vertex input field.
///
/// AL:  `w = sqrt(1 + |grad T|^2)`.
/// BM1: `w = alpha + |grad T|^(1/m)`.
/// BM2: `w = alpha + (sqrt(Txx^2 + 2 Txy^2 + Tyy^2))^(1/m)`.
///
/// The floor `alpha = max(1, mean of the derivative magnitude term over the
/// physical domain)` keeps mesh points outside the layers; the mean uses the
/// same quadrature as the physical assembly.
pub fn monitor_evaluate(
    input: &[f64],
    mesh: &TriMesh,
    kind: MonitorKind,
    m_exp: f64,
) -> MonitorField {
    let nv = mesh.n_vertices();
    let (grad, hess) = recover_derivatives(input, mesh);
    let mut w = vec![0.0f64; nv];
    match kind {
        MonitorKind::Al => {
            for v in 0..nv {
                let g2 = grad[v][0] * grad[v][0] + grad[v][1] * grad[v][1];
                w[v] = (1.0 + g2).sqrt();
            }
        }
        MonitorKind::Bm1a | MonitorKind::Bm1b | MonitorKind::Bm2b => {
            let second = kind == MonitorKind::Bm2b;
            let mag: Vec<f64> = (0..nv)
                .map(|v| {
                    let base = if second {
                        let h = hess[v];
                        (h[0] * h[0] + 2.0 * h[1] * h[1] + h[2] * h[2]).sqrt()
                    } else {
                        (grad[v][0] * grad[v][0] + grad[v][1] * grad[v][1]).sqrt()
                    };
                    base.powf(1.0 / m_exp)
                })
                .collect();
            let alpha = alpha_floor(&mag, mesh);
            for v in 0..nv {
                w[v] = alpha + mag[v];
            }
        }
    }
    MonitorField { w }
}

/// `max(1, (1/meas(Omega)) * int I dx)` over the physical domain, with the
/// P1 interpolant of the vertex values integrated by the assembly rule.
fn alpha_floor(mag: &[f64], mesh: &TriMesh) -> f64 {
    let quad = TriQuadrature::degree5();
    let mut integral = 0.0;
    let mut measure = 0.0;
    for (e, tri) in mesh.elements().iter().enumerate() {
        let area = mesh.phys_area(e).abs();
        measure += area;
        for (qp, wq) in quad.weights.iter().enumerate() {
            let lam = quad.points[qp];
            let val = lam[0] * mag[tri[0]] + lam[1] * mag[tri[1]] + lam[2] * mag[tri[2]];
            integral += wq * area * val;
        }
    }
    (integral / measure).max(1.0)
}

/// One pass of local averaging in the computational domain: each vertex
/// value becomes the area-weighted average of the P1 interpolant over all
/// cells sharing the vertex. Conservative with respect to the lumped
/// computational measure.
pub fn smooth_spatial(w: &MonitorField, mesh: &TriMesh, sweeps: usize) -> MonitorField {
    let nv = mesh.n_vertices();
    let mut cur = w.w.clone();
    for _ in 0..sweeps {
        let mut acc = vec![0.0f64; nv];
        let mut wsum = vec![0.0f64; nv];
        for (e, tri) in mesh.elements().iter().enumerate() {
            let area = mesh.ref_area(e).abs();
            let mean = (cur[tri[0]] + cur[tri[1]] + cur[tri[2]]) / 3.0;
            for &v in tri {
                acc[v] += area * mean;
                wsum[v] += area;
            }
        }
        for v in 0..nv {
            cur[v] = acc[v] / wsum[v];
        }
    }
    MonitorField { w: cur }
}

/// Temporal under-relaxation `w <- (1 - omega) w_now + omega w_prev`.
pub fn smooth_temporal(w_now: &MonitorField, w_prev: &MonitorField, omega: f64) -> MonitorField {
    assert_eq!(w_now.w.len(), w_prev.w.len());
    let w = w_now
        .w
        .iter()
        .zip(&w_prev.w)
        .map(|(&a, &b)| (1.0 - omega) * a + omega * b)
        .collect();
    MonitorField { w }
}
