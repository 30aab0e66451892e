//! Assembly oracles: quadrature exactness, the P2 mass matrix against a
//! higher-order rule, stationarity of the equilibrium state, a manufactured
//! elastic problem against a hand-assembled stiffness action, the Maxwell
//! capacitor, and Dirichlet elimination against dense solves.

use lcmm_core::energy::{BulkParams, MaterialParams};
use lcmm_core::fem::{apply_dirichlet, AssembledSystem, P2Space};
use lcmm_core::mesh::{Rect, TriMesh};
use lcmm_core::qtensor::QTensor;
use lcmm_core::quadrature::{bary_phys_grads, p2_bary_grads, p2_values, TriQuadrature};
use lcmm_core::sparse::{bicgstab, ilu0, CsrMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product::<f64>().max(1.0)
}

#[test]
fn quadrature_integrates_monomials_exactly() {
    // Reference triangle (0,0)-(1,0)-(0,1): int x^p y^q = p! q! / (p+q+2)!.
    for rule in [TriQuadrature::degree5(), TriQuadrature::degree8()] {
        assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for p in 0..=rule.degree {
            for q in 0..=(rule.degree - p) {
                let exact = factorial(p) * factorial(q) / factorial(p + q + 2);
                let mut acc = 0.0;
                for (k, w) in rule.weights.iter().enumerate() {
                    let l = rule.points[k];
                    let (x, y) = (l[1], l[2]);
                    acc += w * 0.5 * x.powi(p as i32) * y.powi(q as i32);
                }
                assert!(
                    (acc - exact).abs() < 1e-14,
                    "degree-{} rule fails on x^{p} y^{q}: {} vs {}",
                    rule.degree,
                    acc,
                    exact
                );
            }
        }
    }
}

#[test]
fn p2_basis_partition_of_unity_and_nodal_values() {
    let pts = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.5, 0.5, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
    ];
    for (node, &l) in pts.iter().enumerate() {
        let vals = p2_values(l);
        for (a, v) in vals.iter().enumerate() {
            let expect = if a == node { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-15);
        }
    }
    let l = [0.3, 0.25, 0.45];
    assert!((p2_values(l).iter().sum::<f64>() - 1.0).abs() < 1e-14);
    // Partition of unity implies the physical gradients sum to zero on any
    // triangle.
    let g = p2_bary_grads(l);
    let dl = bary_phys_grads([0.1, -0.2], [1.3, 0.4], [0.2, 1.7]);
    for comp in 0..2 {
        let mut s = 0.0;
        for a in 0..6 {
            for k in 0..3 {
                s += g[a][k] * dl[k][comp];
            }
        }
        assert!(s.abs() < 1e-13);
    }
}

#[test]
fn p2_mass_matrix_matches_degree8_oracle() {
    // Per-element degree-8 quadrature oracle, summed over the two elements
    // of the smallest mesh and compared entry by entry.
    let mesh = TriMesh::build_structured(1, 1, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
    let space = P2Space::new(&mesh);
    let mass = space.assemble_mass(&mesh).unwrap();
    let mut full_oracle = vec![vec![0.0f64; space.n_dofs()]; space.n_dofs()];
    let rule = TriQuadrature::degree8();
    for e in 0..mesh.n_elements() {
        let area = mesh.phys_area(e);
        let ed = &space.elem_dofs[e];
        for (k, w) in rule.weights.iter().enumerate() {
            let n = p2_values(rule.points[k]);
            for a in 0..6 {
                for b in 0..6 {
                    full_oracle[ed[a]][ed[b]] += w * area * n[a] * n[b];
                }
            }
        }
    }
    for r in 0..space.n_dofs() {
        for c in 0..space.n_dofs() {
            assert!(
                (mass.get(r, c) - full_oracle[r][c]).abs() < 1e-14,
                "mass({r},{c})"
            );
        }
    }
}

#[test]
fn mass_row_sums_give_domain_area_and_scale_quadratically() {
    let mut mesh = TriMesh::build_structured(4, 4, Rect::new(0.0, 2.0, 0.0, 1.5)).unwrap();
    let space = P2Space::new(&mesh);
    let mass = space.assemble_mass(&mesh).unwrap();
    let total: f64 = mass.values().iter().sum();
    assert!((total - 3.0).abs() < 1e-12, "sum of all entries is the area (partition of unity)");
    let coords: Vec<[f64; 2]> = mesh.phys_coords().iter().map(|p| [2.0 * p[0], 2.0 * p[1]]).collect();
    mesh.set_phys_coords(coords);
    let mass2 = space.assemble_mass(&mesh).unwrap();
    for (v1, v2) in mass.values().iter().zip(mass2.values()) {
        assert!((4.0 * v1 - v2).abs() < 1e-12 * (1.0 + v2.abs()));
    }
}

#[test]
fn mass_matrix_is_spd() {
    let mesh = TriMesh::build_structured(10, 10, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
    let space = P2Space::new(&mesh);
    let mass = space.assemble_mass(&mesh).unwrap();
    let n = space.n_dofs();
    assert_eq!(mesh.n_elements(), 200);
    let mut dense = DMatrix::zeros(n, n);
    for r in 0..n {
        let (cols, vals) = mass.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            dense[(r, c)] = v;
        }
    }
    // Symmetric within 1e-14 and positive definite (Cholesky succeeds).
    for r in 0..n {
        for c in 0..n {
            assert!((dense[(r, c)] - dense[(c, r)]).abs() < 1e-14);
        }
    }
    assert!(dense.cholesky().is_some(), "mass must be positive definite");
}

fn uniform_state(space: &P2Space, params: &BulkParams) -> [Vec<f64>; 5] {
    let q = QTensor::uniaxial_from_director([0.0, 0.0, 1.0], params.s_eq).unwrap();
    let c = q.components();
    std::array::from_fn(|i| vec![c[i]; space.n_dofs()])
}

#[test]
fn equilibrium_state_has_zero_rhs() {
    let params = MaterialParams::lc_5cb_like().nondimensional();
    let mesh = TriMesh::build_structured(6, 6, Rect::new(-1.0, 1.0, -1.0, 1.0)).unwrap();
    let space = P2Space::new(&mesh);
    let q = uniform_state(&space, &params);
    let u = vec![0.0; space.n_dofs()];
    let vel = vec![[0.0; 2]; mesh.n_vertices()];
    let g = space.assemble_physics_rhs(&mesh, &q, &u, &vel, &params).unwrap();
    for gi in &g {
        for v in gi {
            assert!(v.abs() < 1e-10, "equilibrium rhs entry {v}");
        }
    }
}

#[test]
fn zero_fields_zero_velocity_give_exactly_zero_rhs() {
    let params = BulkParams::elastic_only(1.3, 1.0);
    let mesh = TriMesh::build_structured(3, 3, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
    let space = P2Space::new(&mesh);
    let q: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; space.n_dofs()]);
    let u = vec![0.0; space.n_dofs()];
    let vel = vec![[0.0; 2]; mesh.n_vertices()];
    let g = space.assemble_physics_rhs(&mesh, &q, &u, &vel, &params).unwrap();
    for gi in &g {
        assert!(gi.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn manufactured_linear_field_matches_hand_assembled_stiffness() {
    // q1 = x with only elastic energy on a 2-element mesh: G_1 must equal
    // -(l/nu) K x with K the hand-assembled P2 stiffness matrix.
    let l_c = 0.8;
    let nu = 2.0;
    let params = BulkParams::elastic_only(l_c, nu);
    let mesh = TriMesh::build_structured(1, 1, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
    let space = P2Space::new(&mesh);
    let n = space.n_dofs();
    let coords = mesh.dof_coords();
    let mut q: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    for dof in 0..n {
        q[0][dof] = coords[dof][0];
    }
    let u = vec![0.0; n];
    let vel = vec![[0.0; 2]; mesh.n_vertices()];
    let g = space.assemble_physics_rhs(&mesh, &q, &u, &vel, &params).unwrap();

    // Hand-assembled dense P2 stiffness via the degree-8 rule.
    let rule = TriQuadrature::degree8();
    let mut k = vec![vec![0.0f64; n]; n];
    for e in 0..mesh.n_elements() {
        let tri = mesh.elements()[e];
        let dl = bary_phys_grads(
            mesh.phys_coords()[tri[0]],
            mesh.phys_coords()[tri[1]],
            mesh.phys_coords()[tri[2]],
        );
        let area = mesh.phys_area(e);
        let ed = &space.elem_dofs[e];
        for (qp, w) in rule.weights.iter().enumerate() {
            let bg = p2_bary_grads(rule.points[qp]);
            let mut grads = [[0.0f64; 2]; 6];
            for a in 0..6 {
                for kk in 0..3 {
                    grads[a][0] += bg[a][kk] * dl[kk][0];
                    grads[a][1] += bg[a][kk] * dl[kk][1];
                }
            }
            for a in 0..6 {
                for b in 0..6 {
                    k[ed[a]][ed[b]] +=
                        w * area * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                }
            }
        }
    }
    for dof in 0..n {
        let mut kx = 0.0;
        for b in 0..n {
            kx += k[dof][b] * q[0][b];
        }
        let expected = -(l_c / nu) * kx;
        assert!(
            (g[0][dof] - expected).abs() < 1e-12,
            "dof {dof}: {} vs {}",
            g[0][dof],
            expected
        );
        // The (1,4) mixing cancels the cross coupling exactly, so every
        // other field keeps a zero right-hand side.
        for i in 1..5 {
            assert!(g[i][dof].abs() < 1e-12);
        }
    }
}

#[test]
fn motion_term_vanishes_for_zero_velocity() {
    // With mesh_velocity = 0 the assembled G reduces to the fixed-mesh weak
    // form; compare against a run with a velocity field that is then zeroed.
    let params = MaterialParams::lc_5cb_like().nondimensional();
    let mesh = TriMesh::build_structured(4, 4, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
    let space = P2Space::new(&mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = space.n_dofs();
    let mut q: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    for f in q.iter_mut() {
        for v in f.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    let u = vec![0.0; n];
    let vel0 = vec![[0.0; 2]; mesh.n_vertices()];
    let g0 = space.assemble_physics_rhs(&mesh, &q, &u, &vel0, &params).unwrap();
    let vel: Vec<[f64; 2]> = (0..mesh.n_vertices())
        .map(|_| [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)])
        .collect();
    let g1 = space.assemble_physics_rhs(&mesh, &q, &u, &vel, &params).unwrap();
    // The two differ (the motion term is active) ...
    let diff: f64 = (0..5)
        .map(|i| {
            g0[i].iter()
                .zip(&g1[i])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
        })
        .fold(0.0f64, f64::max);
    assert!(diff > 1e-6);
    // ... and zeroing the velocity reproduces g0 exactly.
    let g2 = space.assemble_physics_rhs(&mesh, &q, &u, &vel0, &params).unwrap();
    for i in 0..5 {
        assert_eq!(g0[i], g2[i]);
    }
}

#[test]
fn maxwell_capacitor_gives_linear_ramp() {
    let params = BulkParams {
        e_flexo: 0.0,
        ..MaterialParams::lc_5cb_like().nondimensional()
    };
    let mesh = TriMesh::build_structured(6, 6, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
    let space = P2Space::new(&mesh);
    let n = space.n_dofs();
    let q: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    let v0 = 2.5;
    // Electrodes on bottom (0) and top (v0).
    let mut dirichlet = Vec::new();
    let coords = mesh.dof_coords();
    for dof in 0..n {
        let y = coords[dof][1];
        if y.abs() < 1e-12 {
            dirichlet.push((dof, 0.0));
        } else if (y - 1.0).abs() < 1e-12 {
            dirichlet.push((dof, v0));
        }
    }
    let sys = space.assemble_maxwell(&mesh, &q, &params, &dirichlet).unwrap();
    let f = ilu0(&sys.matrix).unwrap();
    let sol = bicgstab(&sys.matrix, &sys.rhs, Some(&f), 1e-12, 2000, None).unwrap();
    for dof in 0..n {
        let expected = v0 * coords[dof][1];
        assert!(
            (sol.x[dof] - expected).abs() < 1e-10,
            "dof {dof}: {} vs {}",
            sol.x[dof],
            expected
        );
    }
}

#[test]
fn maxwell_zero_voltage_no_flexo_gives_zero_potential() {
    let params = BulkParams {
        e_flexo: 0.0,
        ..MaterialParams::lc_5cb_like().nondimensional()
    };
    let mesh = TriMesh::build_structured(4, 4, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
    let space = P2Space::new(&mesh);
    let n = space.n_dofs();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut q: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    for f in q.iter_mut() {
        for v in f.iter_mut() {
            *v = rng.gen_range(-0.4..0.4);
        }
    }
    let dirichlet = vec![(0usize, 0.0)];
    let sys = space.assemble_maxwell(&mesh, &q, &params, &dirichlet).unwrap();
    assert!(sys.rhs.iter().all(|&v| v == 0.0));
}

#[test]
fn maxwell_matrix_symmetric_and_matches_dense_solve_with_tilted_q() {
    let params = MaterialParams::lc_5cb_like().nondimensional();
    let mesh = TriMesh::build_structured(4, 4, Rect::new(0.0, 1.0, 0.0, 1.0)).unwrap();
    let space = P2Space::new(&mesh);
    let n = space.n_dofs();
    // Uniform uniaxial Q tilted 45 degrees in the simulation plane.
    let tilt = std::f64::consts::FRAC_PI_4;
    let dir = [tilt.cos(), 0.0, tilt.sin()];
    let qt = QTensor::uniaxial_from_director(dir, 0.65).unwrap();
    let c = qt.components();
    let q: [Vec<f64>; 5] = std::array::from_fn(|i| vec![c[i]; n]);
    let coords = mesh.dof_coords();
    let mut dirichlet = Vec::new();
    for dof in 0..n {
        let y = coords[dof][1];
        if y.abs() < 1e-12 {
            dirichlet.push((dof, 0.0));
        } else if (y - 1.0).abs() < 1e-12 {
            dirichlet.push((dof, 1.0));
        }
    }
    let sys = space.assemble_maxwell(&mesh, &q, &params, &dirichlet).unwrap();
    // Symmetry within 1e-14.
    for r in 0..n {
        let (cols, vals) = sys.matrix.row(r);
        for (&cc, &v) in cols.iter().zip(vals) {
            assert!((v - sys.matrix.get(cc, r)).abs() < 1e-14);
        }
    }
    // Dense oracle.
    let mut dense = DMatrix::zeros(n, n);
    for r in 0..n {
        let (cols, vals) = sys.matrix.row(r);
        for (&cc, &v) in cols.iter().zip(vals) {
            dense[(r, cc)] = v;
        }
    }
    let oracle = dense.lu().solve(&DVector::from_column_slice(&sys.rhs)).unwrap();
    let f = ilu0(&sys.matrix).unwrap();
    let sol = bicgstab(&sys.matrix, &sys.rhs, Some(&f), 1e-12, 4000, None).unwrap();
    for dof in 0..n {
        assert!((sol.x[dof] - oracle[dof]).abs() < 1e-9);
    }
}

#[test]
fn dirichlet_elimination_matches_dense_constrained_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let n = 25;
    // Random SPD system: A = B^T B + n I.
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let spd = b.transpose() * &b + DMatrix::identity(n, n) * (n as f64);
    let mut triplets = Vec::new();
    for r in 0..n {
        for c in 0..n {
            triplets.push((r, c, spd[(r, c)]));
        }
    }
    let matrix = CsrMatrix::from_triplets(n, n, &triplets);
    let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut constraints: Vec<(usize, f64)> = Vec::new();
    for dof in 0..n {
        if rng.gen_bool(0.3) {
            constraints.push((dof, rng.gen_range(-1.0..1.0)));
        }
    }

    let mut sys = AssembledSystem { matrix, rhs: rhs.clone(), dirichlet: constraints.clone() };
    apply_dirichlet(&mut sys).unwrap();
    let f = ilu0(&sys.matrix).unwrap();
    let sol = bicgstab(&sys.matrix, &sys.rhs, Some(&f), 1e-13, 4000, None).unwrap();

    // Dense oracle: solve the reduced system on the free DOFs.
    let constrained: Vec<Option<f64>> = {
        let mut v = vec![None; n];
        for &(dof, g) in &constraints {
            v[dof] = Some(g);
        }
        v
    };
    let free: Vec<usize> = (0..n).filter(|&i| constrained[i].is_none()).collect();
    let mut a_ff = DMatrix::zeros(free.len(), free.len());
    let mut b_f = DVector::zeros(free.len());
    for (i, &fi) in free.iter().enumerate() {
        b_f[i] = rhs[fi];
        for (j, &fj) in free.iter().enumerate() {
            a_ff[(i, j)] = spd[(fi, fj)];
        }
        for c in 0..n {
            if let Some(g) = constrained[c] {
                b_f[i] -= spd[(fi, c)] * g;
            }
        }
    }
    let x_f = a_ff.lu().solve(&b_f).unwrap();
    for (i, &fi) in free.iter().enumerate() {
        assert!((sol.x[fi] - x_f[i]).abs() < 1e-9, "free dof {fi}");
    }
    for &(dof, g) in &constraints {
        assert_eq!(sol.x[dof], g, "constrained dof holds its value exactly");
    }

    // Conflicting duplicate constraints are rejected.
    let mut sys2 = AssembledSystem {
        matrix: CsrMatrix::identity(3),
        rhs: vec![0.0; 3],
        dirichlet: vec![(1, 1.0), (1, 2.0)],
    };
    assert!(apply_dirichlet(&mut sys2).is_err());

    // No constraints: system unchanged.
    let m3 = CsrMatrix::identity(3);
    let mut sys3 = AssembledSystem { matrix: m3.clone(), rhs: vec![1.0, 2.0, 3.0], dirichlet: vec![] };
    apply_dirichlet(&mut sys3).unwrap();
    assert_eq!(sys3.rhs, vec![1.0, 2.0, 3.0]);
    assert_eq!(sys3.matrix.values(), m3.values());

    // All DOFs constrained: identity with the constraint values.
    let mut sys4 = AssembledSystem {
        matrix: CsrMatrix::from_triplets(2, 2, &[(0, 0, 3.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)]),
        rhs: vec![9.0, 9.0],
        dirichlet: vec![(0, 5.0), (1, -4.0)],
    };
    apply_dirichlet(&mut sys4).unwrap();
    assert_eq!(sys4.rhs, vec![5.0, -4.0]);
    assert_eq!(sys4.matrix.get(0, 0), 1.0);
    assert_eq!(sys4.matrix.get(0, 1), 0.0);
}
