//! The moving-mesh PDE: one backward-Euler step of the Winslow-type mesh
//! equation for the interior vertices, with a one-dimensional moving-mesh
//! step along each boundary segment supplying the essential boundary data.
//!
//! The interior step discretises, with P1 elements on the fixed
//! computational triangulation and all coefficients frozen at the old mesh,
//!
//! ```text
//! (tau / P) dx/dt = a x_xixi + b x_xieta + c x_etaeta + d x_xi + e x_eta
//! ```
//!
//! where (with metric terms g11 = x_eta^2 + y_eta^2, g12 = x_xi x_eta
//! + y_xi y_eta, g22 = x_xi^2 + y_xi^2 and jacobian J)
//!
//! ```text
//! a = g11 / (w J^2),   b = -2 g12 / (w J^2),   c = g22 / (w J^2),
//! d = [ w_xi g11 - w_eta g12] / (w J)^2,
//! e = [-w_xi g12 + w_eta g22] / (w J)^2.
//! ```
//!
//! Both coordinates share one matrix; the "balancing" choice P = w gives the
//! mesh motion a spatially uniform time scale (P = 1 is available).

use crate::mesh::{MeshError, Side, TriMesh, SIDES};
use crate::monitor::{MonitorField, MonitorKind};
use crate::sparse::{bicgstab, ilu0, CsrPattern, SparseError};
use crate::quadrature::TriQuadrature;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MmpdeError {
    #[error("mesh equation solve failed: {0}")]
    Solve(#[from] SparseError),
    #[error("mesh step rejected: {0}")]
    Rejected(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("invalid MMPDE parameter: {0}")]
    InvalidParameter(String),
}

/// Balancing function P in the gradient flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PChoice {
    /// P = w at each vertex (spatially uniform mesh time scale).
    Monitor,
    /// P = 1.
    One,
}

#[derive(Debug, Clone)]
pub struct MmpdeParams {
    /// Temporal smoothing parameter of the gradient flow.
    pub tau: f64,
    /// Exponent m regulating clustering in the BM monitors.
    pub m_exp: f64,
    /// Temporal under-relaxation factor for the monitor.
    pub omega: f64,
    /// Number of spatial smoothing sweeps.
    pub smooth_sweeps: usize,
    pub monitor_kind: MonitorKind,
    pub p_choice: PChoice,
}

impl MmpdeParams {
    pub fn validate(&self) -> Result<(), MmpdeError> {
        if !(self.tau > 0.0) {
            return Err(MmpdeError::InvalidParameter(format!("tau must be > 0 (tau = {})", self.tau)));
        }
        if !(self.omega > 0.0 && self.omega < 1.0) {
            return Err(MmpdeError::InvalidParameter(format!(
                "omega must be in (0, 1) (omega = {})",
                self.omega
            )));
        }
        if !(self.m_exp >= 1.0) {
            return Err(MmpdeError::InvalidParameter(format!("m must be >= 1 (m = {})", self.m_exp)));
        }
        Ok(())
    }
}

impl Default for MmpdeParams {
    fn default() -> Self {
        MmpdeParams {
            tau: 0.1,
            m_exp: 3.0,
            omega: 0.8,
            smooth_sweeps: 2,
            monitor_kind: MonitorKind::Bm2b,
            p_choice: PChoice::Monitor,
        }
    }
}

/// Reusable discretisation of the mesh equation on the fixed computational
/// triangulation.
pub struct MmpdeSolver {
    pattern: CsrPattern,
    quad: TriQuadrature,
}

impl MmpdeSolver {
    pub fn new(mesh: &TriMesh) -> Self {
        let nv = mesh.n_vertices();
        let mut rows = vec![Vec::new(); nv];
        for tri in mesh.elements() {
            for &a in tri {
                for &b in tri {
                    rows[a].push(b);
                }
            }
        }
        MmpdeSolver { pattern: CsrPattern::from_row_cols(nv, rows), quad: TriQuadrature::degree5() }
    }

    /// One backward-Euler step of the mesh equation. Returns the new
    /// physical coordinates; the mesh itself is not modified.
    pub fn mmpde_step(
        &self,
        mesh: &TriMesh,
        w: &MonitorField,
        dt: f64,
        params: &MmpdeParams,
    ) -> Result<Vec<[f64; 2]>, MmpdeError> {
        params.validate()?;
        if dt <= 0.0 {
            return Err(MmpdeError::InvalidParameter(format!("dt must be > 0 (dt = {dt})")));
        }
        let nv = mesh.n_vertices();
        let boundary = boundary_move(mesh, w, dt, params)?;

        let mut matrix = self.pattern.zero_matrix();
        let mut rhs_x = vec![0.0f64; nv];
        let mut rhs_y = vec![0.0f64; nv];
        let tau_dt = params.tau / dt;

        for (e, tri) in mesh.elements().iter().enumerate() {
            // Affine map data of the old mesh, constant per element.
            let r0 = mesh.ref_coords()[tri[0]];
            let r1 = mesh.ref_coords()[tri[1]];
            let r2 = mesh.ref_coords()[tri[2]];
            let (jac, _) = mesh.element_jacobian(e)?;
            // x_xi etc: derivative of the P1 map, via computational-space
            // gradients of the barycentric coordinates.
            let dl = crate::quadrature::bary_phys_grads(r0, r1, r2);
            let mut x_xi = [0.0f64; 2]; // (x_xi, y_xi)
            let mut x_eta = [0.0f64; 2];
            let mut w_grad = [0.0f64; 2]; // (w_xi, w_eta)
            for k in 0..3 {
                let p = mesh.phys_coords()[tri[k]];
                x_xi[0] += p[0] * dl[k][0];
                x_xi[1] += p[1] * dl[k][0];
                x_eta[0] += p[0] * dl[k][1];
                x_eta[1] += p[1] * dl[k][1];
                w_grad[0] += w.w[tri[k]] * dl[k][0];
                w_grad[1] += w.w[tri[k]] * dl[k][1];
            }
            let g11 = x_eta[0] * x_eta[0] + x_eta[1] * x_eta[1];
            let g12 = x_xi[0] * x_eta[0] + x_xi[1] * x_eta[1];
            let g22 = x_xi[0] * x_xi[0] + x_xi[1] * x_xi[1];
            let j2 = jac * jac;
            let area = mesh.ref_area(e).abs();

            let mut local = [[0.0f64; 3]; 3];
            let mut local_mass = [[0.0f64; 3]; 3];
            for (qp, wq) in self.quad.weights.iter().enumerate() {
                let lam = self.quad.points[qp];
                let wv = lam[0] * w.w[tri[0]] + lam[1] * w.w[tri[1]] + lam[2] * w.w[tri[2]];
                let scale = wq * area;
                // Coefficients and their computational gradients at this
                // point (w is P1, the metric is constant per element).
                let a = g11 / (wv * j2);
                let b = -2.0 * g12 / (wv * j2);
                let c = g22 / (wv * j2);
                let wj2 = (wv * jac) * (wv * jac);
                let d = (w_grad[0] * g11 - w_grad[1] * g12) / wj2;
                let ecf = (-w_grad[0] * g12 + w_grad[1] * g22) / wj2;
                let dv = wv * wv * j2;
                let a_xi = -g11 * w_grad[0] / dv;
                let c_eta = -g22 * w_grad[1] / dv;
                let b_xi = 2.0 * g12 * w_grad[0] / dv;
                let b_eta = 2.0 * g12 * w_grad[1] / dv;
                let inv_p = match params.p_choice {
                    PChoice::Monitor => 1.0 / wv,
                    PChoice::One => 1.0,
                };
                for t in 0..3 {
                    // Test function index (hat v).
                    let vt = lam[t];
                    let vt_xi = dl[t][0];
                    let vt_eta = dl[t][1];
                    for s in 0..3 {
                        // Trial function index (x^{n+1}).
                        let s_xi = dl[s][0];
                        let s_eta = dl[s][1];
                        local_mass[t][s] += scale * inv_p * vt * lam[s];
                        local[t][s] += scale
                            * (s_xi * (a * vt_xi + a_xi * vt)
                                + s_eta * (c * vt_eta + c_eta * vt)
                                + 0.5
                                    * (s_xi * (b * vt_eta + b_eta * vt)
                                        + s_eta * (b * vt_xi + b_xi * vt))
                                - (d * s_xi + ecf * s_eta) * vt);
                    }
                }
            }
            let vals = matrix.values_mut();
            for t in 0..3 {
                for s in 0..3 {
                    let idx = self.pattern.index_of(tri[t], tri[s]);
                    vals[idx] += tau_dt * local_mass[t][s] + local[t][s];
                }
            }
            for t in 0..3 {
                for s in 0..3 {
                    let m = tau_dt * local_mass[t][s];
                    rhs_x[tri[t]] += m * mesh.phys_coords()[tri[s]][0];
                    rhs_y[tri[t]] += m * mesh.phys_coords()[tri[s]][1];
                }
            }
        }

        // Essential boundary data from the one-dimensional step.
        let constrained: Vec<bool> = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
        for v in 0..nv {
            if constrained[v] {
                let lo = matrix.row_ptr()[v];
                let hi = matrix.row_ptr()[v + 1];
                for k in lo..hi {
                    let c = matrix.col_idx()[k];
                    matrix.values_mut()[k] = if c == v { 1.0 } else { 0.0 };
                }
                rhs_x[v] = boundary[v][0];
                rhs_y[v] = boundary[v][1];
            }
        }

        let factors = ilu0(&matrix)?;
        let x_old: Vec<f64> = mesh.phys_coords().iter().map(|p| p[0]).collect();
        let y_old: Vec<f64> = mesh.phys_coords().iter().map(|p| p[1]).collect();
        let sol_x = bicgstab(&matrix, &rhs_x, Some(&factors), 1e-10, 2000, Some(&x_old))?;
        let sol_y = bicgstab(&matrix, &rhs_y, Some(&factors), 1e-10, 2000, Some(&y_old))?;

        let new_coords: Vec<[f64; 2]> =
            (0..nv).map(|v| [sol_x.x[v], sol_y.x[v]]).collect();

        // Reject steps that tangle the mesh or crush an element so hard that
        // the frozen-coefficient linearisation cannot be trusted; the caller
        // retries with a smaller dt.
        for (e, tri) in mesh.elements().iter().enumerate() {
            let area = crate::mesh::tri_signed_area(
                new_coords[tri[0]],
                new_coords[tri[1]],
                new_coords[tri[2]],
            );
            if area <= 0.0 {
                return Err(MmpdeError::Rejected(format!(
                    "element {e} tangles (area = {area:.3e})"
                )));
            }
            let old_area = mesh.phys_area(e);
            if area < 0.3 * old_area {
                return Err(MmpdeError::Rejected(format!(
                    "element {e} crushed by {:.1}x in one step",
                    old_area / area
                )));
            }
        }
        Ok(new_coords)
    }
}

/// One-dimensional backward-Euler moving-mesh step along each boundary
/// segment: nodes slide along the segment under the restriction of the
/// monitor, corners never move. Steady state equidistributes w along the
/// segment.
pub fn boundary_move(
    mesh: &TriMesh,
    w: &MonitorField,
    dt: f64,
    params: &MmpdeParams,
) -> Result<Vec<[f64; 2]>, MmpdeError> {
    let mut out = mesh.phys_coords().to_vec();
    for side in SIDES {
        let chain = mesh.side_chain(side);
        if chain.len() < 3 {
            continue;
        }
        let horizontal = matches!(side, Side::Bottom | Side::Top);
        let axis = if horizontal { 0 } else { 1 };
        let p_first = mesh.phys_coords()[chain[0]];
        let p_last = mesh.phys_coords()[*chain.last().unwrap()];
        let n = chain.len();
        // Arc coordinate along the (straight) segment and the computational
        // coordinate along the side.
        let s: Vec<f64> = chain.iter().map(|&v| mesh.phys_coords()[v][axis]).collect();
        let sigma: Vec<f64> = chain.iter().map(|&v| mesh.ref_coords()[v][axis]).collect();
        let wv: Vec<f64> = chain.iter().map(|&v| w.w[v]).collect();

        // P1 assembly of tau/P ds/dt = (w s_sigma)_sigma on the chain.
        let mut diag = vec![0.0f64; n];
        let mut lower = vec![0.0f64; n - 1];
        let mut upper = vec![0.0f64; n - 1];
        let mut rhs = vec![0.0f64; n];
        let tau_dt = params.tau / dt;
        for k in 0..n - 1 {
            let h = sigma[k + 1] - sigma[k];
            let wm = 0.5 * (wv[k] + wv[k + 1]);
            let stiff = wm / h;
            // Lumped mass with the 1/P weight.
            let inv_p = |i: usize| match params.p_choice {
                PChoice::Monitor => 1.0 / wv[i],
                PChoice::One => 1.0,
            };
            let m0 = 0.5 * h * inv_p(k);
            let m1 = 0.5 * h * inv_p(k + 1);
            diag[k] += tau_dt * m0 + stiff;
            diag[k + 1] += tau_dt * m1 + stiff;
            lower[k] -= stiff;
            upper[k] -= stiff;
            rhs[k] += tau_dt * m0 * s[k];
            rhs[k + 1] += tau_dt * m1 * s[k + 1];
        }
        // Corners fixed.
        diag[0] = 1.0;
        upper[0] = 0.0;
        rhs[0] = s[0];
        diag[n - 1] = 1.0;
        lower[n - 2] = 0.0;
        rhs[n - 1] = s[n - 1];
        let new_s = solve_tridiagonal(&lower, &mut diag, &upper, &mut rhs);

        for k in 1..n - 1 {
            if new_s[k] <= new_s[k - 1] {
                return Err(MmpdeError::Rejected(format!(
                    "boundary node ordering inverted on side {side:?}"
                )));
            }
        }
        if new_s[n - 1] <= new_s[n - 2] {
            return Err(MmpdeError::Rejected(format!(
                "boundary node ordering inverted on side {side:?}"
            )));
        }
        for (k, &v) in chain.iter().enumerate() {
            // Nodes slide along the (straight) segment; the transverse
            // coordinate is shared with the corners.
            let mut p = [0.0f64; 2];
            p[axis] = new_s[k];
            p[1 - axis] = p_first[1 - axis];
            out[v] = p;
        }
        // Corners exactly preserved.
        out[chain[0]] = p_first;
        out[*chain.last().unwrap()] = p_last;
    }
    Ok(out)
}

/// Mesh velocity `(x_new - x_old) / dt`, constant over the physical step.
pub fn mesh_velocity(old: &[[f64; 2]], new: &[[f64; 2]], dt: f64) -> Vec<[f64; 2]> {
    assert!(dt > 0.0);
    old.iter()
        .zip(new)
        .map(|(o, n)| [(n[0] - o[0]) / dt, (n[1] - o[1]) / dt])
        .collect()
}

/// Thomas algorithm; overwrites its scratch inputs.
fn solve_tridiagonal(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64]) -> Vec<f64> {
    let n = diag.len();
    for i in 1..n {
        let m = lower[i - 1] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    let mut x = vec![0.0f64; n];
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (rhs[i] - upper[i] * x[i + 1]) / diag[i];
    }
    x
}
