//! Element-level and global assembly of the discrete physical system.
//!
//! P2 Lagrange fields over P1 (straight-edge) geometry. The weak form of the
//! evolution equations assembled here is, per component,
//!
//! ```text
//! d/dt (M q_i) = G_i,
//! G_i(v) = + int (div(xdot q_i)) v   (mesh-motion term)
//!          - int Gamma_i . grad v
//!          - int f_i v
//! ```
//!
//! The signs of the Gamma and f terms are fixed by requiring that the
//! semi-discrete system is the gradient flow of the bulk energy on a frozen
//! mesh (discrete energy decay), which pins the otherwise ambiguous global
//! orientation of the right-hand side.
//!
//! Assembly never mutates mesh or field data; sparsity patterns are built
//! once per mesh and reused for every reassembly.

use crate::energy::{
    self, bulk_derivatives, scale_hessian_rows, scaled_rhs, thermotropic_hessian, BulkParams,
    GradQ,
};
use crate::mesh::{MeshError, TriMesh};
use crate::qtensor::QTensor;
use crate::quadrature::{bary_phys_grads, p2_bary_grads, p2_values, TriQuadrature};
use crate::sparse::{CsrMatrix, CsrPattern};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("conflicting Dirichlet constraints on dof {dof}: {a} vs {b}")]
    ConflictingConstraint { dof: usize, a: f64, b: f64 },
    #[error("constraint dof {dof} out of range (system has {n} dofs)")]
    ConstraintOutOfRange { dof: usize, n: usize },
}

/// Sparse system with its right-hand side and the constraints already
/// applied to it.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dirichlet: Vec<(usize, f64)>,
}

/// Fixed P2 discretisation data for one mesh: DOF map, quadrature tables and
/// sparsity patterns. Connectivity never changes during a simulation, so
/// this is built once.
pub struct P2Space {
    pub n_vertices: usize,
    pub n_edges: usize,
    /// Six global DOFs per element: three vertices, then the midpoints of
    /// edges (v0-v1), (v1-v2), (v2-v0).
    pub elem_dofs: Vec<[usize; 6]>,
    pub scalar_pattern: CsrPattern,
    /// CSR value index of each local (a, b) pair, per element.
    scatter: Vec<[u32; 36]>,
    /// Row starts/lengths of the scalar pattern, for coupled-index maths.
    row_start: Vec<usize>,
    row_len: Vec<usize>,
    /// Coupled (5-field, field-minor interleaved) pattern.
    coupled_row_ptr: Vec<usize>,
    coupled_col_idx: Vec<usize>,
    pub quad: TriQuadrature,
    basis_vals: Vec<[f64; 6]>,
    basis_bgrads: Vec<[[f64; 3]; 6]>,
}

impl P2Space {
    pub fn new(mesh: &TriMesh) -> Self {
        let n_vertices = mesh.n_vertices();
        let n_edges = mesh.n_edges();
        let n_dofs = n_vertices + n_edges;
        let elem_dofs: Vec<[usize; 6]> = mesh
            .elements()
            .iter()
            .zip(mesh.elem_edges())
            .map(|(tri, eids)| {
                [
                    tri[0],
                    tri[1],
                    tri[2],
                    n_vertices + eids[0],
                    n_vertices + eids[1],
                    n_vertices + eids[2],
                ]
            })
            .collect();

        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_dofs];
        for dofs in &elem_dofs {
            for &a in dofs {
                for &b in dofs {
                    rows[a].push(b);
                }
            }
        }
        let scalar_pattern = CsrPattern::from_row_cols(n_dofs, rows);
        let scatter = elem_dofs
            .iter()
            .map(|dofs| {
                let mut idx = [0u32; 36];
                for (a, &ga) in dofs.iter().enumerate() {
                    for (b, &gb) in dofs.iter().enumerate() {
                        idx[a * 6 + b] = scalar_pattern.index_of(ga, gb) as u32;
                    }
                }
                idx
            })
            .collect();

        let mut row_start = vec![0usize; n_dofs];
        let mut row_len = vec![0usize; n_dofs];
        for a in 0..n_dofs {
            row_start[a] = scalar_pattern.row_ptr()[a];
            row_len[a] = scalar_pattern.row_ptr()[a + 1] - scalar_pattern.row_ptr()[a];
        }
        // The coupled (field-minor) pattern replicates every scalar row five
        // times with its columns fanned out over the five fields.
        let mut coupled_row_ptr = Vec::with_capacity(5 * n_dofs + 1);
        coupled_row_ptr.push(0usize);
        let mut coupled_col_idx = Vec::with_capacity(25 * scalar_pattern.nnz());
        for a in 0..n_dofs {
            for _i in 0..5 {
                for k in 0..row_len[a] {
                    let b = scalar_pattern.col_idx()[row_start[a] + k];
                    for j in 0..5 {
                        coupled_col_idx.push(5 * b + j);
                    }
                }
                coupled_row_ptr.push(coupled_col_idx.len());
            }
        }

        let quad = TriQuadrature::degree5();
        let basis_vals = quad.points.iter().map(|&l| p2_values(l)).collect();
        let basis_bgrads = quad.points.iter().map(|&l| p2_bary_grads(l)).collect();

        P2Space {
            n_vertices,
            n_edges,
            elem_dofs,
            scalar_pattern,
            scatter,
            row_start,
            row_len,
            coupled_row_ptr,
            coupled_col_idx,
            quad,
            basis_vals,
            basis_bgrads,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.n_vertices + self.n_edges
    }

    pub fn n_coupled(&self) -> usize {
        5 * self.n_dofs()
    }

    /// Coupled CSR value index for entry ((a, i), (b, j)) given the scalar
    /// value index k_ab of (a, b).
    #[inline]
    fn coupled_index(&self, a: usize, k_ab: usize, i: usize, j: usize) -> usize {
        let start = self.row_start[a];
        25 * start + i * 5 * self.row_len[a] + (k_ab - start) * 5 + j
    }

    fn zero_coupled(&self) -> CsrMatrix {
        CsrMatrix::from_parts_unchecked(
            self.n_coupled(),
            self.n_coupled(),
            self.coupled_row_ptr.clone(),
            self.coupled_col_idx.clone(),
            vec![0.0; self.coupled_col_idx.len()],
        )
    }

    /// Geometry of one element on the current physical coordinates:
    /// barycentric gradients, area and the vertex coordinates.
    fn element_geometry(&self, mesh: &TriMesh, e: usize) -> Result<ElemGeom, FemError> {
        let [va, vb, vc] = mesh.elements()[e];
        let pa = mesh.phys_coords()[va];
        let pb = mesh.phys_coords()[vb];
        let pc = mesh.phys_coords()[vc];
        let area = crate::mesh::tri_signed_area(pa, pb, pc);
        if area <= 0.0 {
            return Err(MeshError::Tangled { element: e, jacobian: area }.into());
        }
        Ok(ElemGeom { verts: [va, vb, vc], coords: [pa, pb, pc], area, dl: bary_phys_grads(pa, pb, pc) })
    }

    /// Physical gradients of the six P2 basis functions at quadrature point
    /// `qp` of an element with barycentric gradients `dl`.
    #[inline]
    fn phys_grads(&self, qp: usize, dl: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
        let bg = &self.basis_bgrads[qp];
        let mut out = [[0.0; 2]; 6];
        for a in 0..6 {
            for k in 0..3 {
                out[a][0] += bg[a][k] * dl[k][0];
                out[a][1] += bg[a][k] * dl[k][1];
            }
        }
        out
    }

    /// Symmetric positive definite P2 mass matrix on the current physical
    /// coordinates.
    pub fn assemble_mass(&self, mesh: &TriMesh) -> Result<CsrMatrix, FemError> {
        let mut m = self.scalar_pattern.zero_matrix();
        let vals = m.values_mut();
        for e in 0..self.elem_dofs.len() {
            let geom = self.element_geometry(mesh, e)?;
            let mut local = [0.0f64; 36];
            for (qp, w) in self.quad.weights.iter().enumerate() {
                let n = &self.basis_vals[qp];
                let scale = w * geom.area;
                for a in 0..6 {
                    let na = scale * n[a];
                    for b in 0..6 {
                        local[a * 6 + b] += na * n[b];
                    }
                }
            }
            let idx = &self.scatter[e];
            for k in 0..36 {
                vals[idx[k] as usize] += local[k];
            }
        }
        Ok(m)
    }

    /// Right-hand sides G_i of the five evolution equations, including the
    /// mesh-motion term. `vel` is the P1 mesh velocity at the vertices.
    pub fn assemble_physics_rhs(
        &self,
        mesh: &TriMesh,
        q: &[Vec<f64>; 5],
        u: &[f64],
        vel: &[[f64; 2]],
        params: &BulkParams,
    ) -> Result<[Vec<f64>; 5], FemError> {
        let n = self.n_dofs();
        let mut g: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
        for e in 0..self.elem_dofs.len() {
            let geom = self.element_geometry(mesh, e)?;
            let dofs = &self.elem_dofs[e];
            // P1 divergence of the mesh velocity is constant per element.
            let mut div_v = 0.0;
            for k in 0..3 {
                let vv = vel[geom.verts[k]];
                div_v += vv[0] * geom.dl[k][0] + vv[1] * geom.dl[k][1];
            }
            let mut local = [[0.0f64; 6]; 5];
            for (qp, w) in self.quad.weights.iter().enumerate() {
                let scale = w * geom.area;
                let nvals = &self.basis_vals[qp];
                let grads = self.phys_grads(qp, &geom.dl);
                let (qt, gq, efield) = sample_state(q, u, dofs, nvals, &grads);
                let lam = self.quad.points[qp];
                let mut vqp = [0.0f64; 2];
                for k in 0..3 {
                    let vv = vel[geom.verts[k]];
                    vqp[0] += lam[k] * vv[0];
                    vqp[1] += lam[k] * vv[1];
                }
                let (fhat, ghat) = bulk_derivatives(&qt, &gq, efield, params);
                let (f, gam) = scaled_rhs(&fhat, &ghat, params.nu).expect("nu > 0");
                for i in 0..5 {
                    // div(xdot q_i) = q_i div xdot + xdot . grad q_i.
                    let conv = qt_component(&qt, i) * div_v + vqp[0] * gq[i][0] + vqp[1] * gq[i][1];
                    for a in 0..6 {
                        local[i][a] += scale
                            * (conv * nvals[a]
                                - gam[i][0] * grads[a][0]
                                - gam[i][1] * grads[a][1]
                                - f[i] * nvals[a]);
                    }
                }
            }
            for i in 0..5 {
                for a in 0..6 {
                    g[i][dofs[a]] += local[i][a];
                }
            }
        }
        Ok(g)
    }

    /// Newton matrix of one SDIRK stage: `M - dt_gamma * dG/dq` on the
    /// coupled (field-minor interleaved) pattern, with the electric field
    /// frozen at the current iterate. The elastic and mesh-motion blocks are
    /// linear and assembled exactly; the local 5x5 coupling comes from the
    /// thermotropic Hessian.
    pub fn assemble_newton(
        &self,
        mesh: &TriMesh,
        q: &[Vec<f64>; 5],
        vel: &[[f64; 2]],
        params: &BulkParams,
        dt_gamma: f64,
    ) -> Result<CsrMatrix, FemError> {
        let mut m = self.zero_coupled();
        let elastic = params.l / params.nu;
        for e in 0..self.elem_dofs.len() {
            let geom = self.element_geometry(mesh, e)?;
            let dofs = &self.elem_dofs[e];
            let mut div_v = 0.0;
            for k in 0..3 {
                let vv = vel[geom.verts[k]];
                div_v += vv[0] * geom.dl[k][0] + vv[1] * geom.dl[k][1];
            }
            let mut scalar_block = [0.0f64; 36]; // mass - dtg*(motion - elastic stiffness)
            let mut hess_block = [[[0.0f64; 5]; 5]; 36];
            for (qp, w) in self.quad.weights.iter().enumerate() {
                let scale = w * geom.area;
                let nvals = &self.basis_vals[qp];
                let grads = self.phys_grads(qp, &geom.dl);
                let lam = self.quad.points[qp];
                let mut vqp = [0.0f64; 2];
                for k in 0..3 {
                    let vv = vel[geom.verts[k]];
                    vqp[0] += lam[k] * vv[0];
                    vqp[1] += lam[k] * vv[1];
                }
                let mut comp = [0.0f64; 5];
                for i in 0..5 {
                    let qi = &q[i];
                    let mut acc = 0.0;
                    for a in 0..6 {
                        acc += qi[dofs[a]] * nvals[a];
                    }
                    comp[i] = acc;
                }
                let qt = QTensor::from_components(comp);
                let hmix = scale_hessian_rows(&thermotropic_hessian(&qt, params), params.nu);
                for a in 0..6 {
                    for b in 0..6 {
                        let k = a * 6 + b;
                        let mass = nvals[a] * nvals[b];
                        let motion =
                            (nvals[b] * div_v + vqp[0] * grads[b][0] + vqp[1] * grads[b][1])
                                * nvals[a];
                        let stiff = grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1];
                        scalar_block[k] +=
                            scale * (mass - dt_gamma * motion + dt_gamma * elastic * stiff);
                        let hscale = scale * dt_gamma * mass;
                        for i in 0..5 {
                            for j in 0..5 {
                                hess_block[k][i][j] += hscale * hmix[i][j];
                            }
                        }
                    }
                }
            }
            let idx = &self.scatter[e];
            let vals = m.values_mut();
            for a in 0..6 {
                let ga = dofs[a];
                for b in 0..6 {
                    let k = a * 6 + b;
                    let k_ab = idx[k] as usize;
                    let sb = scalar_block[k];
                    let hb = &hess_block[k];
                    for i in 0..5 {
                        for j in 0..5 {
                            let ci = self.coupled_index(ga, k_ab, i, j);
                            vals[ci] += hb[i][j] + if i == j { sb } else { 0.0 };
                        }
                    }
                }
            }
        }
        Ok(m)
    }

    /// Maxwell constraint system for the potential: the displacement is
    /// linear in E at fixed Q, so this is a stiffness-like matrix with the
    /// Q-dependent anisotropic coefficient plus the flexoelectric load.
    pub fn assemble_maxwell(
        &self,
        mesh: &TriMesh,
        q: &[Vec<f64>; 5],
        params: &BulkParams,
        dirichlet: &[(usize, f64)],
    ) -> Result<AssembledSystem, FemError> {
        let n = self.n_dofs();
        let mut m = self.scalar_pattern.zero_matrix();
        let mut rhs = vec![0.0; n];
        for e in 0..self.elem_dofs.len() {
            let geom = self.element_geometry(mesh, e)?;
            let dofs = &self.elem_dofs[e];
            let mut local = [0.0f64; 36];
            let mut local_rhs = [0.0f64; 6];
            for (qp, w) in self.quad.weights.iter().enumerate() {
                let scale = w * geom.area;
                let nvals = &self.basis_vals[qp];
                let grads = self.phys_grads(qp, &geom.dl);
                let (qt, gq, _) = sample_state(q, &[], dofs, nvals, &grads);
                // eps0 (eps_bar I + eps_a Q) restricted to the plane.
                let exx = params.eps0 * (params.eps_bar + params.eps_a * qt.q1);
                let exy = params.eps0 * params.eps_a * qt.q3;
                let eyy = params.eps0 * (params.eps_bar + params.eps_a * (-qt.q1 - qt.q4));
                for a in 0..6 {
                    let ga = grads[a];
                    for b in 0..6 {
                        let gb = grads[b];
                        local[a * 6 + b] += scale
                            * (exx * ga[0] * gb[0]
                                + exy * (ga[0] * gb[1] + ga[1] * gb[0])
                                + eyy * ga[1] * gb[1]);
                    }
                    let dq = energy::div_q(&gq);
                    local_rhs[a] += scale * params.e_flexo * (dq[0] * ga[0] + dq[1] * ga[1]);
                }
            }
            let idx = &self.scatter[e];
            let vals = m.values_mut();
            for k in 0..36 {
                vals[idx[k] as usize] += local[k];
            }
            for a in 0..6 {
                rhs[dofs[a]] += local_rhs[a];
            }
        }
        let mut sys = AssembledSystem { matrix: m, rhs, dirichlet: dirichlet.to_vec() };
        apply_dirichlet(&mut sys)?;
        Ok(sys)
    }

    /// Total bulk free energy integrated with the assembly quadrature.
    pub fn assemble_energy(
        &self,
        mesh: &TriMesh,
        q: &[Vec<f64>; 5],
        u: &[f64],
        params: &BulkParams,
    ) -> Result<f64, FemError> {
        let mut total = 0.0;
        for e in 0..self.elem_dofs.len() {
            let geom = self.element_geometry(mesh, e)?;
            let dofs = &self.elem_dofs[e];
            for (qp, w) in self.quad.weights.iter().enumerate() {
                let nvals = &self.basis_vals[qp];
                let grads = self.phys_grads(qp, &geom.dl);
                let (qt, gq, efield) = sample_state(q, u, dofs, nvals, &grads);
                total += w * geom.area * energy::bulk_density(&qt, &gq, efield, params);
            }
        }
        Ok(total)
    }
}

struct ElemGeom {
    verts: [usize; 3],
    #[allow(dead_code)]
    coords: [[f64; 2]; 3],
    area: f64,
    dl: [[f64; 2]; 3],
}

fn qt_component(q: &QTensor, i: usize) -> f64 {
    match i {
        0 => q.q1,
        1 => q.q2,
        2 => q.q3,
        3 => q.q4,
        _ => q.q5,
    }
}

/// Sample Q, grad Q and E = -grad U at one quadrature point. Pass an empty
/// `u` slice to skip the field.
fn sample_state(
    q: &[Vec<f64>; 5],
    u: &[f64],
    dofs: &[usize; 6],
    nvals: &[f64; 6],
    grads: &[[f64; 2]; 6],
) -> (QTensor, GradQ, [f64; 2]) {
    let mut comp = [0.0f64; 5];
    let mut gq: GradQ = [[0.0; 2]; 5];
    for i in 0..5 {
        let qi = &q[i];
        let mut val = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for a in 0..6 {
            let c = qi[dofs[a]];
            val += c * nvals[a];
            gx += c * grads[a][0];
            gy += c * grads[a][1];
        }
        comp[i] = val;
        gq[i] = [gx, gy];
    }
    let mut efield = [0.0f64; 2];
    if !u.is_empty() {
        for a in 0..6 {
            let c = u[dofs[a]];
            efield[0] -= c * grads[a][0];
            efield[1] -= c * grads[a][1];
        }
    }
    (QTensor::from_components(comp), gq, efield)
}

/// Symmetric row/column elimination of Dirichlet constraints: constrained
/// rows become identity rows with the boundary value in the right-hand side,
/// and known values move to the right-hand side of free rows.
pub fn apply_dirichlet(sys: &mut AssembledSystem) -> Result<(), FemError> {
    let n = sys.rhs.len();
    let mut value = vec![f64::NAN; n];
    for &(dof, g) in &sys.dirichlet {
        if dof >= n {
            return Err(FemError::ConstraintOutOfRange { dof, n });
        }
        if !value[dof].is_nan() && value[dof] != g {
            return Err(FemError::ConflictingConstraint { dof, a: value[dof], b: g });
        }
        value[dof] = g;
    }
    let m = &mut sys.matrix;
    for r in 0..n {
        let lo = m.row_ptr()[r];
        let hi = m.row_ptr()[r + 1];
        if value[r].is_nan() {
            for k in lo..hi {
                let c = m.col_idx()[k];
                if !value[c].is_nan() {
                    sys.rhs[r] -= m.values()[k] * value[c];
                    m.values_mut()[k] = 0.0;
                }
            }
        } else {
            for k in lo..hi {
                let c = m.col_idx()[k];
                m.values_mut()[k] = if c == r { 1.0 } else { 0.0 };
            }
            sys.rhs[r] = value[r];
        }
    }
    Ok(())
}

/// Row-only elimination for unsymmetric Newton systems: constrained rows
/// become identity rows with zero right-hand side (the update vanishes
/// there), columns stay.
pub fn apply_dirichlet_rows(matrix: &mut CsrMatrix, rhs: &mut [f64], constrained: &[bool]) {
    for r in 0..rhs.len() {
        if constrained[r] {
            let lo = matrix.row_ptr()[r];
            let hi = matrix.row_ptr()[r + 1];
            for k in lo..hi {
                let c = matrix.col_idx()[k];
                matrix.values_mut()[k] = if c == r { 1.0 } else { 0.0 };
            }
            rhs[r] = 0.0;
        }
    }
}
