//! Unstructured triangulation with fixed computational coordinates and
//! moving physical coordinates.
//!
//! Geometry is piecewise linear (straight edges); solution spaces are
//! quadratic with edge-midpoint degrees of freedom whose locations are always
//! derived as edge-endpoint averages, never stored. Connectivity (elements,
//! edges, DOF numbering) is built once and never changes; only
//! `phys_coords` moves.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("degenerate rectangle: [{x0}, {x1}] x [{y0}, {y1}]")]
    DegenerateRectangle { x0: f64, x1: f64, y0: f64, y1: f64 },
    #[error("mesh resolution must be at least 1x1 (got {nx}x{ny})")]
    BadResolution { nx: usize, ny: usize },
    #[error("element {element} is tangled (jacobian = {jacobian:.3e})")]
    Tangled { element: usize, jacobian: f64 },
    #[error("point ({x}, {y}) is outside the mesh")]
    PointNotFound { x: f64, y: f64 },
}

/// Axis-aligned rectangular domain.
#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Boundary side labels of the rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

pub const SIDES: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

#[derive(Debug, Clone)]
pub struct TriMesh {
    /// Fixed computational coordinates, never modified after construction.
    ref_coords: Vec<[f64; 2]>,
    /// Time-dependent physical coordinates.
    phys_coords: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
    /// Unique edges as sorted vertex pairs.
    edges: Vec<[usize; 2]>,
    /// Edge index of each element's local edges (v0-v1, v1-v2, v2-v0).
    elem_edges: Vec<[usize; 3]>,
    /// Number of elements sharing each edge (1 = boundary, 2 = interior).
    edge_count: Vec<u8>,
    /// Side label for boundary vertices; corners carry the label of the
    /// horizontal side they sit on.
    vertex_side: Vec<Option<Side>>,
    corner: Vec<bool>,
    /// Ordered vertex chains per side, corner to corner.
    side_chains: [Vec<usize>; 4],
    /// Side label for boundary edges, geometric.
    edge_side: Vec<Option<Side>>,
    /// Elements incident to each vertex.
    vertex_elems: Vec<Vec<usize>>,
    domain: Rect,
}

/// Health report of a mesh state.
#[derive(Debug, Clone)]
pub struct MeshReport {
    pub min_jacobian: f64,
    pub min_angle_deg: f64,
    pub max_aspect: f64,
    pub conforming: bool,
    pub tangled_elements: Vec<usize>,
}

impl MeshReport {
    pub fn is_valid(&self) -> bool {
        self.conforming && self.tangled_elements.is_empty()
    }
}

impl TriMesh {
    /// Structured criss-cross triangulation of a rectangle: `nx * ny` cells,
    /// each split into two triangles with the diagonal direction alternating
    /// in a checkerboard to avoid directional bias. Reference and physical
    /// coordinates start identical.
    pub fn build_structured(nx: usize, ny: usize, domain: Rect) -> Result<Self, MeshError> {
        if nx < 1 || ny < 1 {
            return Err(MeshError::BadResolution { nx, ny });
        }
        if domain.width() <= 0.0 || domain.height() <= 0.0 {
            return Err(MeshError::DegenerateRectangle {
                x0: domain.x0,
                x1: domain.x1,
                y0: domain.y0,
                y1: domain.y1,
            });
        }
        let nvx = nx + 1;
        let nvy = ny + 1;
        let mut coords = Vec::with_capacity(nvx * nvy);
        for j in 0..nvy {
            for i in 0..nvx {
                let x = domain.x0 + domain.width() * (i as f64) / (nx as f64);
                let y = domain.y0 + domain.height() * (j as f64) / (ny as f64);
                coords.push([x, y]);
            }
        }
        let vid = |i: usize, j: usize| j * nvx + i;
        let mut elements = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let v00 = vid(i, j);
                let v10 = vid(i + 1, j);
                let v01 = vid(i, j + 1);
                let v11 = vid(i + 1, j + 1);
                if (i + j) % 2 == 0 {
                    elements.push([v00, v10, v11]);
                    elements.push([v00, v11, v01]);
                } else {
                    elements.push([v00, v10, v01]);
                    elements.push([v10, v11, v01]);
                }
            }
        }

        let mut mesh = TriMesh::from_parts(coords, elements, domain)?;

        // Ordered boundary chains.
        mesh.side_chains[0] = (0..nvx).map(|i| vid(i, 0)).collect();
        mesh.side_chains[1] = (0..nvy).map(|j| vid(nx, j)).collect();
        mesh.side_chains[2] = (0..nvx).map(|i| vid(i, ny)).collect();
        mesh.side_chains[3] = (0..nvy).map(|j| vid(0, j)).collect();
        for j in 0..nvy {
            for i in 0..nvx {
                let v = vid(i, j);
                let side = if j == 0 {
                    Some(Side::Bottom)
                } else if j == ny {
                    Some(Side::Top)
                } else if i == 0 {
                    Some(Side::Left)
                } else if i == nx {
                    Some(Side::Right)
                } else {
                    None
                };
                mesh.vertex_side[v] = side;
                mesh.corner[v] = (i == 0 || i == nx) && (j == 0 || j == ny);
            }
        }
        mesh.tag_boundary_edges();
        Ok(mesh)
    }

    fn from_parts(
        coords: Vec<[f64; 2]>,
        elements: Vec<[usize; 3]>,
        domain: Rect,
    ) -> Result<Self, MeshError> {
        let nv = coords.len();
        let mut edge_map = std::collections::HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut edge_count: Vec<u8> = Vec::new();
        let mut elem_edges = Vec::with_capacity(elements.len());
        let mut vertex_elems = vec![Vec::new(); nv];
        for (e, tri) in elements.iter().enumerate() {
            let mut eids = [0usize; 3];
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                let key = if a < b { (a, b) } else { (b, a) };
                let id = *edge_map.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_count.push(0);
                    edges.len() - 1
                });
                edge_count[id] += 1;
                eids[k] = id;
            }
            elem_edges.push(eids);
            for &v in tri {
                vertex_elems[v].push(e);
            }
        }
        Ok(TriMesh {
            ref_coords: coords.clone(),
            phys_coords: coords,
            elements,
            edges,
            elem_edges,
            edge_count,
            vertex_side: vec![None; nv],
            corner: vec![false; nv],
            side_chains: [Vec::new(), Vec::new(), Vec::new(), Vec::new()],
            edge_side: Vec::new(),
            vertex_elems,
            domain,
        })
    }

    fn tag_boundary_edges(&mut self) {
        let tol = 1e-12 * (self.domain.width() + self.domain.height());
        self.edge_side = self
            .edges
            .iter()
            .enumerate()
            .map(|(id, e)| {
                if self.edge_count[id] != 1 {
                    return None;
                }
                let a = self.ref_coords[e[0]];
                let b = self.ref_coords[e[1]];
                if (a[1] - self.domain.y0).abs() < tol && (b[1] - self.domain.y0).abs() < tol {
                    Some(Side::Bottom)
                } else if (a[1] - self.domain.y1).abs() < tol && (b[1] - self.domain.y1).abs() < tol
                {
                    Some(Side::Top)
                } else if (a[0] - self.domain.x0).abs() < tol && (b[0] - self.domain.x0).abs() < tol
                {
                    Some(Side::Left)
                } else if (a[0] - self.domain.x1).abs() < tol && (b[0] - self.domain.x1).abs() < tol
                {
                    Some(Side::Right)
                } else {
                    None
                }
            })
            .collect();
    }

    pub fn n_vertices(&self) -> usize {
        self.phys_coords.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn elem_edges(&self) -> &[[usize; 3]] {
        &self.elem_edges
    }

    pub fn ref_coords(&self) -> &[[f64; 2]] {
        &self.ref_coords
    }

    pub fn phys_coords(&self) -> &[[f64; 2]] {
        &self.phys_coords
    }

    /// Replace the physical coordinates (the per-step synchronisation point).
    pub fn set_phys_coords(&mut self, coords: Vec<[f64; 2]>) {
        assert_eq!(coords.len(), self.phys_coords.len());
        self.phys_coords = coords;
    }

    pub fn vertex_side(&self, v: usize) -> Option<Side> {
        self.vertex_side[v]
    }

    pub fn is_corner(&self, v: usize) -> bool {
        self.corner[v]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vertex_side[v].is_some()
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_count[e] == 1
    }

    pub fn edge_side(&self, e: usize) -> Option<Side> {
        self.edge_side[e]
    }

    /// Ordered vertex chain along one side, corners included.
    pub fn side_chain(&self, side: Side) -> &[usize] {
        &self.side_chains[side as usize]
    }

    pub fn vertex_elements(&self, v: usize) -> &[usize] {
        &self.vertex_elems[v]
    }

    /// Signed physical area of an element.
    pub fn phys_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e];
        tri_signed_area(self.phys_coords[a], self.phys_coords[b], self.phys_coords[c])
    }

    /// Signed computational-domain area of an element.
    pub fn ref_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.elements[e];
        tri_signed_area(self.ref_coords[a], self.ref_coords[b], self.ref_coords[c])
    }

    /// Jacobian of the computational-to-physical affine map on one element,
    /// together with the inverse map. Errors on non-positive jacobians.
    pub fn element_jacobian(&self, e: usize) -> Result<(f64, [[f64; 2]; 2]), MeshError> {
        let [a, b, c] = self.elements[e];
        let r0 = self.ref_coords[a];
        let r1 = self.ref_coords[b];
        let r2 = self.ref_coords[c];
        let p0 = self.phys_coords[a];
        let p1 = self.phys_coords[b];
        let p2 = self.phys_coords[c];
        // F = P R^{-1} with columns (r1-r0, r2-r0) and (p1-p0, p2-p0).
        let rd = [[r1[0] - r0[0], r2[0] - r0[0]], [r1[1] - r0[1], r2[1] - r0[1]]];
        let pd = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det_r = rd[0][0] * rd[1][1] - rd[0][1] * rd[1][0];
        let inv_r = [
            [rd[1][1] / det_r, -rd[0][1] / det_r],
            [-rd[1][0] / det_r, rd[0][0] / det_r],
        ];
        let f = mat2_mul(&pd, &inv_r);
        let j = f[0][0] * f[1][1] - f[0][1] * f[1][0];
        if j <= 0.0 {
            return Err(MeshError::Tangled { element: e, jacobian: j });
        }
        let inv_f = [
            [f[1][1] / j, -f[0][1] / j],
            [-f[1][0] / j, f[0][0] / j],
        ];
        Ok((j, inv_f))
    }

    /// All P2 DOF locations: vertices first, then edge midpoints (derived).
    pub fn dof_coords(&self) -> Vec<[f64; 2]> {
        let mut out = self.phys_coords.clone();
        out.reserve(self.edges.len());
        for e in &self.edges {
            let a = self.phys_coords[e[0]];
            let b = self.phys_coords[e[1]];
            out.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        }
        out
    }

    /// Check all invariants and collect mesh quality measures.
    pub fn validate(&self) -> MeshReport {
        let mut min_j = f64::INFINITY;
        let mut min_angle = f64::INFINITY;
        let mut max_aspect: f64 = 0.0;
        let mut tangled = Vec::new();
        for e in 0..self.elements.len() {
            let [a, b, c] = self.elements[e];
            let pa = self.phys_coords[a];
            let pb = self.phys_coords[b];
            let pc = self.phys_coords[c];
            let area = tri_signed_area(pa, pb, pc);
            min_j = min_j.min(area / self.ref_area(e).abs());
            if area <= 0.0 {
                tangled.push(e);
                continue;
            }
            let la = dist(pb, pc);
            let lb = dist(pa, pc);
            let lc = dist(pa, pb);
            let lmax = la.max(lb).max(lc);
            let lmin = la.min(lb).min(lc);
            max_aspect = max_aspect.max(lmax / lmin);
            for (u, v, w) in [(pa, pb, pc), (pb, pc, pa), (pc, pa, pb)] {
                let d1 = [v[0] - u[0], v[1] - u[1]];
                let d2 = [w[0] - u[0], w[1] - u[1]];
                let cosang = (d1[0] * d2[0] + d1[1] * d2[1])
                    / ((d1[0] * d1[0] + d1[1] * d1[1]).sqrt()
                        * (d2[0] * d2[0] + d2[1] * d2[1]).sqrt());
                min_angle = min_angle.min(cosang.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        // Conformity: every edge borders one or two elements.
        let conforming = self.edge_count.iter().all(|&c| c == 1 || c == 2);
        MeshReport {
            min_jacobian: min_j,
            min_angle_deg: min_angle,
            max_aspect,
            conforming,
            tangled_elements: tangled,
        }
    }

    /// Build a point locator over the current physical coordinates.
    pub fn locator(&self) -> PointLocator {
        PointLocator::build(self)
    }
}

/// Cell-bucket spatial hash for point location, rebuilt per snapshot.
pub struct PointLocator {
    x0: f64,
    y0: f64,
    inv_hx: f64,
    inv_hy: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
    coords: Vec<[f64; 2]>,
    elements: Vec<[usize; 3]>,
}

impl PointLocator {
    fn build(mesh: &TriMesh) -> Self {
        Self::from_raw(mesh.phys_coords.clone(), mesh.elements.clone())
    }

    /// Locator over raw triangulation data (used for snapshot post-processing
    /// where only corner geometry matters).
    pub fn from_raw(coords: Vec<[f64; 2]>, elements: Vec<[usize; 3]>) -> Self {
        let n_elem = elements.len();
        let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
        let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for tri in &elements {
            for &v in tri {
                x0 = x0.min(coords[v][0]);
                y0 = y0.min(coords[v][1]);
                x1 = x1.max(coords[v][0]);
                y1 = y1.max(coords[v][1]);
            }
        }
        let n_side = ((n_elem as f64).sqrt().ceil() as usize).max(1);
        let (nx, ny) = (n_side, n_side);
        let hx = ((x1 - x0) / nx as f64).max(f64::MIN_POSITIVE);
        let hy = ((y1 - y0) / ny as f64).max(f64::MIN_POSITIVE);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (e, tri) in elements.iter().enumerate() {
            let (mut ex0, mut ey0) = (f64::INFINITY, f64::INFINITY);
            let (mut ex1, mut ey1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &v in tri {
                ex0 = ex0.min(coords[v][0]);
                ey0 = ey0.min(coords[v][1]);
                ex1 = ex1.max(coords[v][0]);
                ey1 = ey1.max(coords[v][1]);
            }
            let i0 = (((ex0 - x0) / hx).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let i1 = (((ex1 - x0) / hx).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let j0 = (((ey0 - y0) / hy).floor() as isize).clamp(0, ny as isize - 1) as usize;
            let j1 = (((ey1 - y0) / hy).floor() as isize).clamp(0, ny as isize - 1) as usize;
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(e);
                }
            }
        }
        PointLocator {
            x0,
            y0,
            inv_hx: 1.0 / hx,
            inv_hy: 1.0 / hy,
            nx,
            ny,
            buckets,
            coords,
            elements,
        }
    }

    /// Element containing `p` and its barycentric coordinates. Tolerates
    /// points up to 1e-12 (relative) outside an element edge.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 3]), MeshError> {
        let i = (((p[0] - self.x0) * self.inv_hx).floor() as isize).clamp(0, self.nx as isize - 1)
            as usize;
        let j = (((p[1] - self.y0) * self.inv_hy).floor() as isize).clamp(0, self.ny as isize - 1)
            as usize;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &e in &self.buckets[j * self.nx + i] {
            let bary = self.barycentric(e, p);
            let worst = bary[0].min(bary[1]).min(bary[2]);
            if worst >= -1e-12 {
                return Ok((e, bary));
            }
            if best.map_or(true, |(_, _, w)| worst > w) {
                best = Some((e, bary, worst));
            }
        }
        // Fall back to a full scan: points exactly on bucket borders or just
        // outside the hull by rounding.
        for (e, _) in self.elements.iter().enumerate() {
            let bary = self.barycentric(e, p);
            let worst = bary[0].min(bary[1]).min(bary[2]);
            if worst >= -1e-12 {
                return Ok((e, bary));
            }
            if best.map_or(true, |(_, _, w)| worst > w) {
                best = Some((e, bary, worst));
            }
        }
        // Accept slightly exterior points near the hull (boundary rounding).
        if let Some((e, bary, worst)) = best {
            if worst >= -1e-9 {
                return Ok((e, bary));
            }
        }
        Err(MeshError::PointNotFound { x: p[0], y: p[1] })
    }

    fn barycentric(&self, e: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.elements[e];
        barycentric_of_point(
            self.coords[a],
            self.coords[b],
            self.coords[c],
            p,
        )
    }
}

/// Barycentric coordinates of `p` in the triangle (a, b, c).
pub fn barycentric_of_point(a: [f64; 2], b: [f64; 2], c: [f64; 2], p: [f64; 2]) -> [f64; 3] {
    let area = tri_signed_area(a, b, c);
    let l0 = tri_signed_area(p, b, c) / area;
    let l1 = tri_signed_area(a, p, c) / area;
    let l2 = 1.0 - l0 - l1;
    [l0, l1, l2]
}

pub fn tri_signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn mat2_mul(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}
