//! Experiment definitions: the static +1/2 disclination and the perturbed
//! Pi-cell, plus defect detection for the dynamic runs.
//!
//! The simulation plane is identified with the (x1, x3) plane of the tensor
//! frame; the middle tensor axis points out of plane. An "in-plane" director
//! with planar components (a, b) therefore embeds as the lab vector
//! (a, 0, b), which keeps the components q2 and q5 exactly zero for purely
//! in-plane problems.

use crate::energy::BulkParams;
use crate::fem::P2Space;
use crate::mesh::{Side, TriMesh};
use crate::qtensor::QTensor;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Static disclination test problem on `[-hw, hw]^2` (units of the
/// coherence length).
#[derive(Debug, Clone, Copy)]
pub struct DefectConfig {
    /// Disclination index.
    pub d_index: f64,
    /// Domain half-size in units of zeta.
    pub half_width: f64,
    /// Boundary order parameter.
    pub s_boundary: f64,
}

impl DefectConfig {
    pub fn new(d_index: f64, half_width: f64, s_boundary: f64) -> Result<Self, ProblemError> {
        if half_width <= 0.0 {
            return Err(ProblemError::Invalid(format!("half_width must be > 0 (got {half_width})")));
        }
        Ok(DefectConfig { d_index, half_width, s_boundary })
    }
}

impl Default for DefectConfig {
    fn default() -> Self {
        DefectConfig { d_index: 0.5, half_width: 10.0, s_boundary: 0.65 }
    }
}

/// Pi-cell geometry and driving, nondimensional.
#[derive(Debug, Clone, Copy)]
pub struct PiCellConfig {
    /// Cell width (the perturbation period), units of zeta.
    pub width: f64,
    /// Cell thickness, units of zeta.
    pub thickness: f64,
    /// Pretilt magnitude in degrees; the plates tilt oppositely.
    pub pretilt_deg: f64,
    /// Potential difference across the plates (nondimensional).
    pub voltage: f64,
    /// Sinusoidal midplane perturbation on/off.
    pub perturb: bool,
    /// Perturbation amplitude in degrees of tilt.
    pub perturb_amp_deg: f64,
}

impl PiCellConfig {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.width <= 0.0 || self.thickness <= 0.0 {
            return Err(ProblemError::Invalid("cell dimensions must be positive".into()));
        }
        if self.pretilt_deg.abs() >= 90.0 {
            return Err(ProblemError::Invalid(format!(
                "pretilt must satisfy |theta| < 90 deg (got {})",
                self.pretilt_deg
            )));
        }
        Ok(())
    }
}

/// Director of the disclination field at polar angle `theta`:
/// `(cos(d theta), sin(d theta), 0)` with the first two components in the
/// simulation plane.
pub fn defect_director(theta: f64, d_index: f64) -> [f64; 3] {
    [(d_index * theta).cos(), (d_index * theta).sin(), 0.0]
}

/// Embed a planar director (a, b, 0) into the lab frame as (a, 0, b).
pub fn embed_planar(n: [f64; 3]) -> [f64; 3] {
    [n[0], n[2], n[1]]
}

/// In-plane uniaxial tensor from a planar director angle.
fn uniaxial_planar(angle: f64, s: f64) -> QTensor {
    let n = embed_planar([angle.cos(), angle.sin(), 0.0]);
    QTensor::uniaxial_from_director(n, s).expect("unit director")
}

/// Initial data of one field set: the five P2 coefficient vectors plus the
/// constrained-DOF mask (Dirichlet values live in the vectors themselves)
/// and the Dirichlet set of the potential.
pub struct ProblemFields {
    pub q: [Vec<f64>; 5],
    pub q_constrained: Vec<bool>,
    pub u_dirichlet: Vec<(usize, f64)>,
}

/// Defect initial and boundary data: the director winds with the polar
/// angle, S is uniform, the whole boundary is pinned. The potential has no
/// electrodes; its gauge is fixed at node 0.
pub fn defect_initial_and_boundary(
    mesh: &TriMesh,
    space: &P2Space,
    cfg: &DefectConfig,
) -> ProblemFields {
    let n = space.n_dofs();
    let coords = mesh.dof_coords();
    let mut q: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    for dof in 0..n {
        let [x, y] = coords[dof];
        // Origin convention: theta = 0 at the defect core (any value is
        // admissible there; S relaxes immediately).
        let theta = if x == 0.0 && y == 0.0 { 0.0 } else { y.atan2(x) };
        let qt = uniaxial_planar(cfg.d_index * theta, cfg.s_boundary);
        let c = qt.components();
        for i in 0..5 {
            q[i][dof] = c[i];
        }
    }
    let q_constrained = boundary_dof_mask(mesh, space, &[Side::Bottom, Side::Right, Side::Top, Side::Left]);
    ProblemFields { q, q_constrained, u_dirichlet: vec![(0, 0.0)] }
}

/// Pi-cell initial data: splay state with the tilt varying linearly between
/// the (opposite) plate pretilts, optionally perturbed around the midplane by
/// `sin(2 pi x / p)` with a half-cosine vertical decay over a quarter of the
/// thickness. Plates carry Dirichlet data for q and the potential; the
/// vertical sides are natural.
pub fn picell_initial(
    mesh: &TriMesh,
    space: &P2Space,
    cfg: &PiCellConfig,
    params: &BulkParams,
) -> Result<ProblemFields, ProblemError> {
    cfg.validate()?;
    let n = space.n_dofs();
    let coords = mesh.dof_coords();
    let th_t = cfg.pretilt_deg.to_radians();
    let amp = cfg.perturb_amp_deg.to_radians();
    let h = cfg.thickness;
    let p = cfg.width;
    let mut q: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    for dof in 0..n {
        let [x, y] = coords[dof];
        // -theta_t at the bottom plate, +theta_t at the top plate.
        let mut tilt = th_t * (2.0 * y / h - 1.0);
        if cfg.perturb {
            let dy = (y - 0.5 * h).abs();
            if dy <= 0.125 * h {
                let blend = (std::f64::consts::PI * dy / (0.25 * h)).cos();
                tilt += amp * (2.0 * std::f64::consts::PI * x / p).sin() * blend;
            }
        }
        let qt = uniaxial_planar(tilt, params.s_eq);
        let c = qt.components();
        for i in 0..5 {
            q[i][dof] = c[i];
        }
    }
    let q_constrained = boundary_dof_mask(mesh, space, &[Side::Bottom, Side::Top]);

    // Electrodes: U = 0 at the bottom plate, the applied potential at the top.
    let mut u_dirichlet = Vec::new();
    for v in 0..mesh.n_vertices() {
        match mesh.vertex_side(v) {
            Some(Side::Bottom) => u_dirichlet.push((v, 0.0)),
            Some(Side::Top) => u_dirichlet.push((v, cfg.voltage)),
            _ => {}
        }
    }
    for e in 0..mesh.n_edges() {
        match mesh.edge_side(e) {
            Some(Side::Bottom) => u_dirichlet.push((mesh.n_vertices() + e, 0.0)),
            Some(Side::Top) => u_dirichlet.push((mesh.n_vertices() + e, cfg.voltage)),
            _ => {}
        }
    }
    Ok(ProblemFields { q, q_constrained, u_dirichlet })
}

/// Constrained-DOF mask covering the vertices and edge midpoints of the
/// given sides. Corners count as part of the horizontal sides.
fn boundary_dof_mask(mesh: &TriMesh, space: &P2Space, sides: &[Side]) -> Vec<bool> {
    let mut mask = vec![false; space.n_dofs()];
    for side in sides {
        for &v in mesh.side_chain(*side) {
            mask[v] = true;
        }
    }
    for e in 0..mesh.n_edges() {
        if let Some(side) = mesh.edge_side(e) {
            if sides.contains(&side) {
                mask[mesh.n_vertices() + e] = true;
            }
        }
    }
    mask
}

/// Defect detection thresholds.
#[derive(Debug, Clone, Copy)]
pub struct DetectThresholds {
    /// Order-parameter ceiling for a core candidate.
    pub s_core: f64,
    /// Required biaxiality maximum near the core.
    pub beta_min: f64,
    /// Search radius around a candidate (units of zeta).
    pub radius: f64,
}

impl Default for DetectThresholds {
    fn default() -> Self {
        DetectThresholds { s_core: 0.35, beta_min: 0.9, radius: 3.0 }
    }
}

/// One detected defect core.
#[derive(Debug, Clone, Copy)]
pub struct DefectDetection {
    pub position: [f64; 2],
    /// Winding of the in-plane director around the core (+-1/2), when a
    /// closed circuit fits inside the domain.
    pub charge: Option<f64>,
}

/// Locate defect cores: vertex-local minima of S below the threshold whose
/// neighbourhood reaches the required biaxiality, with the charge estimated
/// from the director winding along a small circuit.
pub fn detect_defects(
    q: &[Vec<f64>; 5],
    mesh: &TriMesh,
    thresholds: &DetectThresholds,
) -> Vec<DefectDetection> {
    let nv = mesh.n_vertices();
    let s: Vec<f64> = (0..nv)
        .map(|v| {
            QTensor::from_components([q[0][v], q[1][v], q[2][v], q[3][v], q[4][v]])
                .order_parameter()
        })
        .collect();
    let beta: Vec<f64> = (0..nv)
        .map(|v| {
            QTensor::from_components([q[0][v], q[1][v], q[2][v], q[3][v], q[4][v]])
                .biaxiality_or_zero()
        })
        .collect();

    // Vertex adjacency from the edges.
    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for e in mesh.edges() {
        neighbours[e[0]].push(e[1]);
        neighbours[e[1]].push(e[0]);
    }

    let mut candidates: Vec<usize> = (0..nv)
        .filter(|&v| s[v] < thresholds.s_core && neighbours[v].iter().all(|&u| s[v] <= s[u]))
        .collect();
    candidates.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap());

    let coords = mesh.phys_coords();
    let r2 = thresholds.radius * thresholds.radius;
    let mut cores: Vec<usize> = Vec::new();
    'cand: for v in candidates {
        for &c in &cores {
            let dx = coords[v][0] - coords[c][0];
            let dy = coords[v][1] - coords[c][1];
            if dx * dx + dy * dy < r2 {
                continue 'cand;
            }
        }
        // Biaxiality must peak near the core.
        let beta_max = (0..nv)
            .filter(|&u| {
                let dx = coords[u][0] - coords[v][0];
                let dy = coords[u][1] - coords[v][1];
                dx * dx + dy * dy <= r2
            })
            .map(|u| beta[u])
            .fold(0.0f64, f64::max);
        if beta_max < thresholds.beta_min {
            continue;
        }
        cores.push(v);
    }

    let locator = mesh.locator();
    let space_elem_dofs: Vec<[usize; 6]> = mesh
        .elements()
        .iter()
        .zip(mesh.elem_edges())
        .map(|(tri, eids)| {
            [
                tri[0],
                tri[1],
                tri[2],
                mesh.n_vertices() + eids[0],
                mesh.n_vertices() + eids[1],
                mesh.n_vertices() + eids[2],
            ]
        })
        .collect();

    cores
        .into_iter()
        .map(|v| {
            let pos = coords[v];
            let charge =
                director_winding(q, &locator, &space_elem_dofs, mesh.domain(), pos, 0.75 * thresholds.radius);
            DefectDetection { position: pos, charge }
        })
        .collect()
}

/// Winding number of the headless in-plane director along a circle; returns
/// None when the circuit does not fit inside the domain.
fn director_winding(
    q: &[Vec<f64>; 5],
    locator: &crate::mesh::PointLocator,
    elem_dofs: &[[usize; 6]],
    domain: crate::mesh::Rect,
    centre: [f64; 2],
    radius: f64,
) -> Option<f64> {
    let eps = 1e-9 * (domain.width() + domain.height());
    if centre[0] - radius < domain.x0 - eps
        || centre[0] + radius > domain.x1 + eps
        || centre[1] - radius < domain.y0 - eps
        || centre[1] + radius > domain.y1 + eps
    {
        return None;
    }
    let samples = 24;
    let mut total = 0.0;
    let mut prev_angle: Option<f64> = None;
    for k in 0..=samples {
        let phi = 2.0 * std::f64::consts::PI * (k as f64) / (samples as f64);
        let p = [
            (centre[0] + radius * phi.cos()).clamp(domain.x0, domain.x1),
            (centre[1] + radius * phi.sin()).clamp(domain.y0, domain.y1),
        ];
        let (e, bary) = locator.locate(p).ok()?;
        let nvals = crate::quadrature::p2_values(bary);
        let mut comp = [0.0f64; 5];
        for i in 0..5 {
            for a in 0..6 {
                comp[i] += q[i][elem_dofs[e][a]] * nvals[a];
            }
        }
        let frame = QTensor::from_components(comp).eigen_frame();
        // In-plane director angle, defined modulo pi (headless).
        let angle = frame.n[2].atan2(frame.n[0]);
        if let Some(prev) = prev_angle {
            let mut d = angle - prev;
            while d > std::f64::consts::FRAC_PI_2 {
                d -= std::f64::consts::PI;
            }
            while d < -std::f64::consts::FRAC_PI_2 {
                d += std::f64::consts::PI;
            }
            total += d;
        }
        prev_angle = Some(angle);
    }
    Some(total / (2.0 * std::f64::consts::PI))
}
