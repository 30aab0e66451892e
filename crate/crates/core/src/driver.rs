//! The top-level decoupled mesh/physics step loop: monitor evaluation and
//! smoothing, one backward-Euler mesh step, SDIRK2 stages with the Maxwell
//! constraint enforced inside every Newton iteration, and the adaptive
//! time-step controller.

use crate::energy::BulkParams;
use crate::fem::{apply_dirichlet_rows, AssembledSystem, FemError, P2Space};
use crate::mesh::TriMesh;
use crate::mmpde::{mesh_velocity, MmpdeError, MmpdeParams, MmpdeSolver};
use crate::monitor::{
    input_biaxiality, input_trace, monitor_evaluate, smooth_spatial, smooth_temporal, MonitorField,
};
use crate::sdirk::{error_indicator, ControllerError, Sdirk2Tableau, StepController};
use crate::sparse::{bicgstab, ilu0, norm2, CsrMatrix, SparseError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Mmpde(#[from] MmpdeError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("Newton failed to converge in stage {stage} ({iterations} iterations, residual {residual:.3e})")]
    StageFailure { stage: usize, iterations: usize, residual: f64 },
    #[error("time step underflow after repeated rejections (dt = {dt:.3e})")]
    StepSizeUnderflow { dt: f64 },
}

/// Options of the nonlinear and linear solvers inside a stage.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub linear_tol: f64,
    pub linear_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            newton_tol: 1e-9,
            newton_max_iter: 25,
            linear_tol: 1e-10,
            linear_max_iter: 4000,
        }
    }
}

/// Running record of every converged linear solve: count and the worst
/// achieved-to-requested residual ratio (verified against the recomputed
/// true residual).
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveLog {
    pub solves: usize,
    pub max_residual_ratio: f64,
}

impl SolveLog {
    fn record(&mut self, residual: f64, tol: f64) {
        self.solves += 1;
        let ratio = residual / tol;
        if ratio > self.max_residual_ratio {
            self.max_residual_ratio = ratio;
        }
    }
}

/// Running statistics over all accepted steps.
#[derive(Debug, Clone, Copy)]
pub struct RunStats {
    pub accepted: usize,
    pub rejected: usize,
    pub newton_iterations: usize,
    /// Minimum element jacobian observed after any accepted step.
    pub min_jacobian: f64,
    /// Largest |q2| or |q5| over the whole run (symmetry tracking).
    pub max_q2_q5: f64,
}

impl Default for RunStats {
    fn default() -> Self {
        RunStats {
            accepted: 0,
            rejected: 0,
            newton_iterations: 0,
            min_jacobian: f64::INFINITY,
            max_q2_q5: 0.0,
        }
    }
}

/// Outcome of one accepted outer step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub t: f64,
    pub dt_used: f64,
    pub dt_next: f64,
    pub indicator: [f64; 5],
    pub rejected_attempts: usize,
}

/// Full simulation state plus the solver machinery bound to one mesh.
pub struct Simulation {
    pub mesh: TriMesh,
    pub space: P2Space,
    mm: MmpdeSolver,
    pub params: BulkParams,
    pub tableau: Sdirk2Tableau,
    pub controller: StepController,
    pub mmpde: MmpdeParams,
    pub opts: SolverOptions,
    /// Mesh frozen (MMPDE disabled) when set.
    pub frozen_mesh: bool,
    pub q: [Vec<f64>; 5],
    pub u: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    pub w_prev: Option<MonitorField>,
    /// Scalar DOFs carrying Dirichlet data for all five tensor fields; the
    /// values live in `q` and are never written by the solver.
    pub q_constrained: Vec<bool>,
    /// Dirichlet constraints of the potential (electrodes or gauge node).
    pub u_dirichlet: Vec<(usize, f64)>,
    pub log: SolveLog,
    pub stats: RunStats,
    coupled_constrained: Vec<bool>,
}

impl Simulation {
    pub fn new(
        mesh: TriMesh,
        params: BulkParams,
        q: [Vec<f64>; 5],
        q_constrained: Vec<bool>,
        u_dirichlet: Vec<(usize, f64)>,
    ) -> Self {
        let space = P2Space::new(&mesh);
        let mm = MmpdeSolver::new(&mesh);
        let n = space.n_dofs();
        assert!(q.iter().all(|f| f.len() == n));
        assert_eq!(q_constrained.len(), n);
        let mut coupled_constrained = vec![false; 5 * n];
        for dof in 0..n {
            if q_constrained[dof] {
                for i in 0..5 {
                    coupled_constrained[5 * dof + i] = true;
                }
            }
        }
        Simulation {
            mesh,
            space,
            mm,
            params,
            tableau: Sdirk2Tableau::default(),
            controller: StepController::default(),
            mmpde: MmpdeParams::default(),
            opts: SolverOptions::default(),
            frozen_mesh: false,
            u: vec![0.0; n],
            q,
            t: 0.0,
            dt: 1e-3,
            w_prev: None,
            q_constrained,
            u_dirichlet,
            log: SolveLog::default(),
            stats: RunStats::default(),
            coupled_constrained,
        }
    }

    /// Whether the potential equation has any content for this problem.
    fn electrostatics_active(&self) -> bool {
        self.params.e_flexo != 0.0 || self.u_dirichlet.iter().any(|&(_, v)| v != 0.0)
    }

    /// Solve the (linear in u) Maxwell system for the current q.
    fn solve_maxwell(&mut self, guess: &[f64]) -> Result<Vec<f64>, DriverError> {
        if !self.electrostatics_active() {
            return Ok(vec![0.0; self.space.n_dofs()]);
        }
        let sys: AssembledSystem =
            self.space
                .assemble_maxwell(&self.mesh, &self.q_view(), &self.params, &self.u_dirichlet)?;
        let factors = ilu0(&sys.matrix)?;
        let sol = bicgstab(
            &sys.matrix,
            &sys.rhs,
            Some(&factors),
            self.opts.linear_tol,
            self.opts.linear_max_iter,
            Some(guess),
        )?;
        self.log.record(sol.residual, self.opts.linear_tol);
        Ok(sol.x)
    }

    fn q_view(&self) -> [Vec<f64>; 5] {
        self.q.clone()
    }

    /// Newton iteration for one SDIRK stage: find q solving
    /// `M_s q - rhs_fixed - dt_gamma G(q, u(q)) = 0` with the potential
    /// re-solved at every iteration, then report the converged stage state.
    #[allow(clippy::too_many_arguments)]
    fn newton_stage_solve(
        &mut self,
        stage: usize,
        mass_stage: &CsrMatrix,
        rhs_fixed: &[Vec<f64>; 5],
        vel: &[[f64; 2]],
        dt_gamma: f64,
        q_guess: &[Vec<f64>; 5],
        u_guess: &[f64],
    ) -> Result<([Vec<f64>; 5], Vec<f64>, usize), DriverError> {
        let n = self.space.n_dofs();
        let mut q = q_guess.clone();
        let mut u = u_guess.to_vec();
        let mut last_res = f64::INFINITY;
        for it in 0..self.opts.newton_max_iter {
            // Gauss-Seidel coupling: potential from the current iterate.
            std::mem::swap(&mut self.q, &mut q);
            let u_new = self.solve_maxwell(&u);
            std::mem::swap(&mut self.q, &mut q);
            u = u_new?;

            let g = self.space.assemble_physics_rhs(&self.mesh, &q, &u, vel, &self.params)?;
            let mut residual = vec![0.0f64; 5 * n];
            let mut scale2 = 0.0f64;
            for i in 0..5 {
                let mq = mass_stage.spmv(&q[i])?;
                for dof in 0..n {
                    if self.q_constrained[dof] {
                        continue;
                    }
                    let r = mq[dof] - rhs_fixed[i][dof] - dt_gamma * g[i][dof];
                    residual[5 * dof + i] = r;
                    scale2 += mq[dof] * mq[dof];
                }
            }
            let res_norm = norm2(&residual) / scale2.sqrt().max(1.0);
            last_res = res_norm;
            if res_norm < self.opts.newton_tol {
                return Ok((q, u, it));
            }

            let mut jac =
                self.space.assemble_newton(&self.mesh, &q, vel, &self.params, dt_gamma)?;
            // Newton solves for the update, so constrained rows carry zero.
            for r in residual.iter_mut() {
                *r = -*r;
            }
            apply_dirichlet_rows(&mut jac, &mut residual, &self.coupled_constrained);
            let factors = ilu0(&jac)?;
            let sol = bicgstab(
                &jac,
                &residual,
                Some(&factors),
                self.opts.linear_tol,
                self.opts.linear_max_iter,
                None,
            )?;
            self.log.record(sol.residual, self.opts.linear_tol);
            for dof in 0..n {
                for i in 0..5 {
                    q[i][dof] += sol.x[5 * dof + i];
                }
            }
            self.stats.newton_iterations += 1;
        }
        Err(DriverError::StageFailure {
            stage,
            iterations: self.opts.newton_max_iter,
            residual: last_res,
        })
    }

    /// One SDIRK2 step on the moving mesh: returns the second-order and the
    /// embedded first-order end-of-step solutions together with the final
    /// potential. The mesh ends on `coords_new`.
    pub fn sdirk2_step(
        &mut self,
        coords_old: &[[f64; 2]],
        coords_new: &[[f64; 2]],
        vel: &[[f64; 2]],
        dt: f64,
    ) -> Result<([Vec<f64>; 5], [Vec<f64>; 5], Vec<f64>), DriverError> {
        let n = self.space.n_dofs();
        let g = self.tableau.gamma;

        self.mesh.set_phys_coords(coords_old.to_vec());
        let mass_n = self.space.assemble_mass(&self.mesh)?;
        let mut rhs1: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
        for i in 0..5 {
            rhs1[i] = mass_n.spmv(&self.q[i])?;
        }

        // Stage 1 at t_n + gamma dt, mesh interpolated along the step.
        let coords_s1 = lerp_coords(coords_old, coords_new, g);
        self.mesh.set_phys_coords(coords_s1);
        let mass_s1 = self.space.assemble_mass(&self.mesh)?;
        let q_start = self.q.clone();
        let u_start = self.u.clone();
        let (q1, u1, _) =
            self.newton_stage_solve(1, &mass_s1, &rhs1, vel, g * dt, &q_start, &u_start)?;

        // k1 = (M1 q1 - M_n q_n) / (gamma dt).
        let mut k1: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
        for i in 0..5 {
            let mq = mass_s1.spmv(&q1[i])?;
            for dof in 0..n {
                k1[i][dof] = (mq[dof] - rhs1[i][dof]) / (g * dt);
            }
        }

        // Stage 2 at t_{n+1} on the new mesh.
        self.mesh.set_phys_coords(coords_new.to_vec());
        let mass_s2 = self.space.assemble_mass(&self.mesh)?;
        let mut rhs2: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
        for i in 0..5 {
            for dof in 0..n {
                rhs2[i][dof] = rhs1[i][dof] + (1.0 - g) * dt * k1[i][dof];
            }
        }
        let (q2, u2, _) = self.newton_stage_solve(2, &mass_s2, &rhs2, vel, g * dt, &q1, &u1)?;

        // Embedded first-order solution: M2 q_hat = M_n q_n + dt k1, with the
        // boundary DOFs pinned to their Dirichlet data. The eliminated matrix
        // is shared by all five fields.
        let mut q_emb: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
        let mut mass_dir = mass_s2.clone();
        eliminate_matrix(&mut mass_dir, &self.q_constrained);
        let factors = ilu0(&mass_dir)?;
        for i in 0..5 {
            let mut b: Vec<f64> =
                (0..n).map(|dof| rhs1[i][dof] + dt * k1[i][dof]).collect();
            eliminate_rhs_only(&mass_s2, &mut b, &self.q_constrained, &q2[i]);
            let sol = bicgstab(
                &mass_dir,
                &b,
                Some(&factors),
                1e-12,
                self.opts.linear_max_iter,
                Some(&q2[i]),
            )?;
            self.log.record(sol.residual, 1e-12);
            q_emb[i] = sol.x;
        }

        Ok((q2, q_emb, u2))
    }

    /// One outer step of the decoupled algorithm. On rejection (indicator too
    /// large, tangled mesh or stage failure) the state is restored and the
    /// step retried with a smaller dt and the same monitor.
    pub fn advance(&mut self) -> Result<StepReport, DriverError> {
        let coords_old = self.mesh.phys_coords().to_vec();
        let n = self.space.n_dofs();

        // Monitor built once per outer step from the current solution.
        let w = if self.frozen_mesh {
            None
        } else {
            let input = if self.mmpde.monitor_kind.uses_biaxiality() {
                input_biaxiality(&self.q, &self.mesh)
            } else {
                input_trace(&self.q, &self.mesh)
            };
            let w_now =
                monitor_evaluate(&input, &self.mesh, self.mmpde.monitor_kind, self.mmpde.m_exp);
            let w_s = smooth_spatial(&w_now, &self.mesh, self.mmpde.smooth_sweeps);
            let w_t = match &self.w_prev {
                Some(prev) => smooth_temporal(&w_s, prev, self.mmpde.omega),
                None => w_s,
            };
            Some(w_t)
        };

        let mut rejected_here = 0usize;
        loop {
            self.mesh.set_phys_coords(coords_old.clone());
            let dt = self.dt;

            // Mesh step.
            let coords_new = if let Some(w) = &w {
                match self.mm.mmpde_step(&self.mesh, w, dt, &self.mmpde) {
                    Ok(c) => c,
                    Err(MmpdeError::Rejected(_)) | Err(MmpdeError::Solve(_)) => {
                        rejected_here += 1;
                        self.stats.rejected += 1;
                        self.dt *= 0.5;
                        if self.dt < self.controller.dt_min {
                            return Err(DriverError::StepSizeUnderflow { dt: self.dt });
                        }
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                }
            } else {
                coords_old.clone()
            };
            let vel = if self.frozen_mesh {
                vec![[0.0; 2]; self.mesh.n_vertices()]
            } else {
                mesh_velocity(&coords_old, &coords_new, dt)
            };

            // Physics step.
            let step = self.sdirk2_step(&coords_old, &coords_new, &vel, dt);
            let (q2, q_emb, u2) = match step {
                Ok(s) => s,
                Err(DriverError::StageFailure { .. }) => {
                    rejected_here += 1;
                    self.stats.rejected += 1;
                    self.dt *= 0.5;
                    if self.dt < self.controller.dt_min {
                        return Err(DriverError::StepSizeUnderflow { dt: self.dt });
                    }
                    continue;
                }
                Err(e) => return Err(e),
            };

            // Indicator on the time-n mesh.
            self.mesh.set_phys_coords(coords_old.clone());
            let indicator = error_indicator(&q2, &q_emb, &self.mesh, &self.space.elem_dofs);
            let e_max = indicator.iter().cloned().fold(0.0f64, f64::max);
            let (accept, dt_next) = self.controller.adjust_dt(e_max, dt)?;
            if !accept {
                rejected_here += 1;
                self.stats.rejected += 1;
                self.dt = dt_next;
                continue;
            }

            // Commit.
            self.mesh.set_phys_coords(coords_new);
            self.q = q2;
            self.u = u2;
            self.t += dt;
            self.dt = dt_next;
            if let Some(w) = w {
                self.w_prev = Some(w);
            }
            self.stats.accepted += 1;
            let report = self.mesh.validate();
            if report.min_jacobian < self.stats.min_jacobian {
                self.stats.min_jacobian = report.min_jacobian;
            }
            for dof in 0..n {
                let m = self.q[1][dof].abs().max(self.q[4][dof].abs());
                if m > self.stats.max_q2_q5 {
                    self.stats.max_q2_q5 = m;
                }
            }
            return Ok(StepReport {
                t: self.t,
                dt_used: dt,
                dt_next: self.dt,
                indicator,
                rejected_attempts: rejected_here,
            });
        }
    }

    /// Total bulk free energy of the current state (assembly quadrature).
    pub fn total_energy(&self) -> Result<f64, DriverError> {
        Ok(self.space.assemble_energy(&self.mesh, &self.q, &self.u, &self.params)?)
    }

    /// Latest monitor field (uniform before the first moving step).
    pub fn monitor(&self) -> MonitorField {
        self.w_prev
            .clone()
            .unwrap_or_else(|| MonitorField::uniform(self.mesh.n_vertices()))
    }
}

fn lerp_coords(a: &[[f64; 2]], b: &[[f64; 2]], s: f64) -> Vec<[f64; 2]> {
    a.iter()
        .zip(b)
        .map(|(p, q)| [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])])
        .collect()
}

/// Symmetric elimination of constrained rows and columns: both become zero
/// with a unit diagonal.
fn eliminate_matrix(m: &mut CsrMatrix, constrained: &[bool]) {
    for r in 0..constrained.len() {
        let lo = m.row_ptr()[r];
        let hi = m.row_ptr()[r + 1];
        for k in lo..hi {
            let c = m.col_idx()[k];
            if constrained[r] || constrained[c] {
                m.values_mut()[k] = if r == c && constrained[r] { 1.0 } else { 0.0 };
            }
        }
    }
}

/// Move known boundary values of a mass solve to the right-hand side and pin
/// the constrained entries, mirroring the symmetric elimination done on the
/// matrix.
fn eliminate_rhs_only(mass: &CsrMatrix, rhs: &mut [f64], constrained: &[bool], values: &[f64]) {
    let n = rhs.len();
    for r in 0..n {
        if constrained[r] {
            rhs[r] = values[r];
        } else {
            let lo = mass.row_ptr()[r];
            let hi = mass.row_ptr()[r + 1];
            for k in lo..hi {
                let c = mass.col_idx()[k];
                if constrained[c] {
                    rhs[r] -= mass.values()[k] * values[c];
                }
            }
        }
    }
}
