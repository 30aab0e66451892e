//! Triangulation construction, jacobians, point location and validation.

use lcmm_core::mesh::{MeshError, Rect, Side, TriMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_square(nx: usize, ny: usize) -> TriMesh {
    TriMesh::build_structured(nx, ny, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap()
}

#[test]
fn single_cell_counts_and_area() {
    let mesh = unit_square(1, 1);
    assert_eq!(mesh.n_elements(), 2);
    assert_eq!(mesh.n_vertices(), 4);
    let total: f64 = (0..mesh.n_elements()).map(|e| mesh.phys_area(e)).sum();
    assert!((total - 1.0).abs() < 1e-15);
}

#[test]
fn two_by_one_counts() {
    let mesh = unit_square(2, 1);
    assert_eq!(mesh.n_elements(), 4);
    assert_eq!(mesh.n_vertices(), 6);
}

#[test]
fn euler_characteristic_of_disc() {
    let mesh = unit_square(8, 8);
    let v = mesh.n_vertices() as isize;
    let e = mesh.n_edges() as isize;
    let f = mesh.n_elements() as isize;
    assert_eq!(v - e + f, 1);
}

#[test]
fn degenerate_rectangle_rejected() {
    let err = TriMesh::build_structured(4, 4, Rect::new(0.0, 0.0, 0.0, 1.0));
    assert!(matches!(err, Err(MeshError::DegenerateRectangle { .. })));
    assert!(matches!(
        TriMesh::build_structured(0, 4, Rect::new(0.0, 1.0, 0.0, 1.0)),
        Err(MeshError::BadResolution { .. })
    ));
}

#[test]
fn element_jacobian_identity_and_scaling() {
    let mut mesh = unit_square(3, 3);
    for e in 0..mesh.n_elements() {
        let (j, _) = mesh.element_jacobian(e).unwrap();
        assert!((j - 1.0).abs() < 1e-14, "identity map should have J = 1");
    }
    // Scale x by 2: J doubles.
    let coords: Vec<[f64; 2]> =
        mesh.phys_coords().iter().map(|p| [2.0 * p[0], p[1]]).collect();
    mesh.set_phys_coords(coords);
    for e in 0..mesh.n_elements() {
        let (j, _) = mesh.element_jacobian(e).unwrap();
        assert!((j - 2.0).abs() < 1e-14);
    }
}

#[test]
fn jacobian_matches_shoelace_area_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut mesh = unit_square(4, 4);
    // Random valid interior perturbation.
    let mut coords = mesh.phys_coords().to_vec();
    for (v, c) in coords.iter_mut().enumerate() {
        if !mesh.is_boundary_vertex(v) {
            c[0] += rng.gen_range(-0.05..0.05);
            c[1] += rng.gen_range(-0.05..0.05);
        }
    }
    mesh.set_phys_coords(coords);
    for e in 0..mesh.n_elements() {
        let (j, _) = mesh.element_jacobian(e).unwrap();
        let ratio = mesh.phys_area(e) / mesh.ref_area(e);
        assert!((j - ratio).abs() < 1e-12);
    }
}

#[test]
fn tangled_element_detected() {
    let mesh = unit_square(2, 2);
    let mut coords = mesh.phys_coords().to_vec();
    // Drag the centre vertex far outside its patch to invert elements.
    let centre = (0..mesh.n_vertices())
        .find(|&v| {
            let p = mesh.phys_coords()[v];
            (p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12
        })
        .unwrap();
    coords[centre] = [2.0, 2.0];
    let mut m = mesh.clone();
    m.set_phys_coords(coords);
    let report = m.validate();
    assert!(!report.tangled_elements.is_empty());
    assert!(report.min_jacobian <= 0.0);
    let bad = report.tangled_elements[0];
    assert!(matches!(m.element_jacobian(bad), Err(MeshError::Tangled { .. })));
}

#[test]
fn fresh_mesh_validates() {
    let mesh = unit_square(8, 8);
    let report = mesh.validate();
    assert!(report.is_valid());
    assert!(report.min_jacobian > 0.0);
    assert!(report.conforming);
    assert!(report.min_angle_deg > 30.0);
}

#[test]
fn locate_centroid_and_vertices() {
    let mesh = unit_square(5, 5);
    let locator = mesh.locator();
    for e in 0..mesh.n_elements() {
        let tri = mesh.elements()[e];
        let mut centroid = [0.0f64; 2];
        for &v in &tri {
            centroid[0] += mesh.phys_coords()[v][0] / 3.0;
            centroid[1] += mesh.phys_coords()[v][1] / 3.0;
        }
        let (found, bary) = locator.locate(centroid).unwrap();
        assert_eq!(found, e);
        for b in bary {
            assert!((b - 1.0 / 3.0).abs() < 1e-12);
        }
    }
    // A vertex point: some incident element with one coordinate at 1.
    let (e, bary) = locator.locate(mesh.phys_coords()[7]).unwrap();
    let one = bary.iter().filter(|&&b| (b - 1.0).abs() < 1e-12).count();
    assert_eq!(one, 1);
    assert!(mesh.elements()[e].contains(&7));
}

#[test]
fn locate_matches_brute_force_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mesh = unit_square(9, 7);
    let locator = mesh.locator();
    for _ in 0..1000 {
        let p = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let (e, bary) = locator.locate(p).unwrap();
        assert!(bary.iter().all(|&b| b >= -1e-12));
        assert!((bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Brute force: p must be inside the reported element.
        let tri = mesh.elements()[e];
        let b2 = lcmm_core::mesh::barycentric_of_point(
            mesh.phys_coords()[tri[0]],
            mesh.phys_coords()[tri[1]],
            mesh.phys_coords()[tri[2]],
            p,
        );
        assert!(b2.iter().all(|&b| b >= -1e-9));
    }
    assert!(locator.locate([3.0, 0.5]).is_err());
}

#[test]
fn boundary_tags_and_chains() {
    let mesh = unit_square(4, 3);
    for side in [Side::Bottom, Side::Right, Side::Top, Side::Left] {
        let chain = mesh.side_chain(side);
        let expect = match side {
            Side::Bottom | Side::Top => 5,
            _ => 4,
        };
        assert_eq!(chain.len(), expect);
        assert!(mesh.is_corner(chain[0]));
        assert!(mesh.is_corner(*chain.last().unwrap()));
    }
    // Every boundary edge is tagged; interior edges are not.
    for e in 0..mesh.n_edges() {
        assert_eq!(mesh.is_boundary_edge(e), mesh.edge_side(e).is_some());
    }
}

#[test]
fn midpoints_are_edge_averages() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut mesh = unit_square(4, 4);
    let mut coords = mesh.phys_coords().to_vec();
    for (v, c) in coords.iter_mut().enumerate() {
        if !mesh.is_boundary_vertex(v) {
            c[0] += rng.gen_range(-0.04..0.04);
            c[1] += rng.gen_range(-0.04..0.04);
        }
    }
    mesh.set_phys_coords(coords);
    let dofs = mesh.dof_coords();
    for (eid, e) in mesh.edges().iter().enumerate() {
        let a = mesh.phys_coords()[e[0]];
        let b = mesh.phys_coords()[e[1]];
        let mid = dofs[mesh.n_vertices() + eid];
        assert_eq!(mid[0], 0.5 * (a[0] + b[0]));
        assert_eq!(mid[1], 0.5 * (a[1] + b[1]));
    }
}

#[test]
fn total_area_preserved_under_interior_motion() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mut mesh = unit_square(6, 6);
    let area0: f64 = (0..mesh.n_elements()).map(|e| mesh.phys_area(e)).sum();
    let mut coords = mesh.phys_coords().to_vec();
    for (v, c) in coords.iter_mut().enumerate() {
        if !mesh.is_boundary_vertex(v) {
            c[0] += rng.gen_range(-0.03..0.03);
            c[1] += rng.gen_range(-0.03..0.03);
        }
    }
    mesh.set_phys_coords(coords);
    let area1: f64 = (0..mesh.n_elements()).map(|e| mesh.phys_area(e)).sum();
    assert!((area0 - area1).abs() < 1e-12);
}
