//! SDIRK2 tableau, the element-midpoint error indicator and the adaptive
//! step-size controller.

use crate::mesh::TriMesh;
use crate::quadrature::p2_values;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("time step underflow: required dt {required:.3e} below dt_min {dt_min:.3e}")]
    Underflow { required: f64, dt_min: f64 },
}

/// Two-stage, stiffly accurate SDIRK2 tableau with an embedded first-order
/// solution:
///
/// ```text
/// gamma     | gamma      0
/// 1         | 1 - gamma  gamma
/// ----------+-----------------
/// order 2   | 1 - gamma  gamma
/// order 1   | 1          0
/// ```
///
/// with `gamma = 1 - sqrt(2)/2`. The embedded weights reuse the first stage
/// only, so the lower-order solution costs nothing extra.
#[derive(Debug, Clone, Copy)]
pub struct Sdirk2Tableau {
    pub gamma: f64,
    pub b: [f64; 2],
    pub b_embedded: [f64; 2],
    pub c: [f64; 2],
}

impl Default for Sdirk2Tableau {
    fn default() -> Self {
        let gamma = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
        Sdirk2Tableau { gamma, b: [1.0 - gamma, gamma], b_embedded: [1.0, 0.0], c: [gamma, 1.0] }
    }
}

impl Sdirk2Tableau {
    /// Advance a scalar ODE y' = f(y) by one step; returns the second-order
    /// and the embedded first-order end values. Used by the order tests and
    /// as executable documentation of the stage structure.
    pub fn scalar_step<F: Fn(f64) -> f64 + Copy>(&self, y: f64, dt: f64, f: F) -> (f64, f64) {
        let g = self.gamma;
        let k1 = solve_scalar_stage(y, g * dt, f);
        let k2 = solve_scalar_stage(y + (1.0 - g) * dt * k1, g * dt, f);
        let main = y + dt * (self.b[0] * k1 + self.b[1] * k2);
        let embedded = y + dt * (self.b_embedded[0] * k1 + self.b_embedded[1] * k2);
        (main, embedded)
    }
}

/// Solve z = y0 + a f(z) for the stage value by damped fixed-point/Newton
/// (finite-difference derivative); scalar helper for tests.
fn solve_scalar_stage<F: Fn(f64) -> f64>(y0: f64, a: f64, f: F) -> f64 {
    let mut z = y0;
    for _ in 0..100 {
        let r = z - y0 - a * f(z);
        let h = 1e-7 * z.abs().max(1.0);
        let dr = 1.0 - a * (f(z + h) - f(z - h)) / (2.0 * h);
        let step = r / dr;
        z -= step;
        if step.abs() < 1e-14 * z.abs().max(1.0) {
            break;
        }
    }
    f(z)
}

/// Per-field error indicator: the area-weighted l2 norm of the difference of
/// two end-of-step solutions evaluated at the element centroids, with areas
/// taken from the time-n mesh.
pub fn error_indicator(
    q_2nd: &[Vec<f64>; 5],
    q_1st: &[Vec<f64>; 5],
    mesh: &TriMesh,
    elem_dofs: &[[usize; 6]],
) -> [f64; 5] {
    let centroid = p2_values([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
    let mut e2 = [0.0f64; 5];
    for (e, dofs) in elem_dofs.iter().enumerate() {
        let area = mesh.phys_area(e).abs();
        for i in 0..5 {
            let mut diff = 0.0;
            for a in 0..6 {
                diff += (q_2nd[i][dofs[a]] - q_1st[i][dofs[a]]) * centroid[a];
            }
            e2[i] += area * diff * diff;
        }
    }
    [e2[0].sqrt(), e2[1].sqrt(), e2[2].sqrt(), e2[3].sqrt(), e2[4].sqrt()]
}

/// Adaptive step-size controller acting on the maximum indicator over the
/// five tensor fields.
#[derive(Debug, Clone, Copy)]
pub struct StepController {
    pub tol: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub safety: f64,
    pub shrink: f64,
    pub grow: f64,
}

impl Default for StepController {
    fn default() -> Self {
        StepController { tol: 1e-4, dt_min: 1e-12, dt_max: 25.0, safety: 0.9, shrink: 0.2, grow: 2.0 }
    }
}

impl StepController {
    /// Accept iff `e_max <= tol`; the next step scales with the inverse
    /// square root of the indicator ratio, clamped between the shrink and
    /// grow limits and the absolute dt bounds.
    pub fn adjust_dt(&self, e_max: f64, dt: f64) -> Result<(bool, f64), ControllerError> {
        let accept = e_max <= self.tol;
        let floor = 1e-300;
        let factor = (self.safety * (self.tol / e_max.max(floor)).sqrt())
            .clamp(self.shrink, self.grow);
        let dt_next = (dt * factor).clamp(self.dt_min, self.dt_max);
        if !accept && dt_next < self.dt_min * (1.0 + 1e-12) && dt <= self.dt_min * (1.0 + 1e-12) {
            return Err(ControllerError::Underflow { required: dt_next, dt_min: self.dt_min });
        }
        Ok((accept, dt_next))
    }
}
