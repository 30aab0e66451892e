//! Landau-de Gennes bulk free energy and its exact partial derivatives.
//!
//! The bulk density is `F_b = F_t + F_e + F_u` with
//!
//! * thermotropic: `F_t = (A/2) tr(Q^2) - (B/3) sqrt(6) tr(Q^3) + (C/4) tr(Q^2)^2`,
//!   whose restriction to uniaxial states is the scalar potential
//!   `g(S) = (A/2) S^2 - (B/3) S^3 + (C/4) S^4`;
//! * elastic (one-constant): `F_e = (L/2) sum_ijk (dQ_ij/dx_k)^2`;
//! * electrostatic with a single flexoelectric coefficient:
//!   `F_u = -(eps0/2)(eps_bar |E|^2 + eps_a E.QE) - e_flexo (div Q).E`.
//!
//! The two spatial coordinates of the simulation plane are identified with
//! the *first and third* axes of the tensor frame, so an in-plane director
//! has a zero second component and the components q2, q5 decouple exactly
//! for in-plane problems. Gradient vectors, the electric field and `div Q`
//! below all live in that (x1, x3) plane.
//!
//! Everything here operates on nondimensional quantities ([`BulkParams`]);
//! [`MaterialParams`] holds the SI profile and produces the working set plus
//! the unit conversions ([`Scales`]).

use crate::qtensor::QTensor;
use thiserror::Error;

/// Vacuum permittivity, F/m.
pub const EPS0_SI: f64 = 8.8541878128e-12;

const SQRT6: f64 = 2.449489742783178;

/// Gradients of the five tensor components; `grad[i] = (d q_i/dx, d q_i/dy)`
/// with (x, y) the simulation-plane coordinates.
pub type GradQ = [[f64; 2]; 5];

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("invalid material constant: {0}")]
    InvalidConstant(String),
    #[error("thermotropic potential has no nematic minimum (B^2 - 4AC = {discriminant:.3e})")]
    NoNematicMinimum { discriminant: f64 },
    #[error("equilibrium order parameter failed the self-consistency check (g'(S_eq) = {residual:.3e})")]
    Inconsistent { residual: f64 },
    #[error("viscosity must be positive (nu = {0})")]
    NonPositiveViscosity(f64),
}

/// SI material profile with derived equilibrium data.
#[derive(Debug, Clone)]
pub struct MaterialParams {
    /// Thermotropic coefficients, J/m^3.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// One-constant elastic coefficient, J/m.
    pub l_elastic: f64,
    /// Mean and anisotropic relative permittivities (dimensionless).
    pub eps_bar: f64,
    pub eps_a: f64,
    /// Flexoelectric coefficient, C/m.
    pub e_flexo: f64,
    /// Rotational viscosity, Pa s.
    pub nu: f64,
    /// Equilibrium order parameter (minimiser of the scalar potential).
    pub s_eq: f64,
    /// Nematic coherence length, m.
    pub zeta: f64,
}

/// Conversion factors between SI and solver-internal nondimensional units.
#[derive(Debug, Clone, Copy)]
pub struct Scales {
    /// Length scale: the coherence length zeta, m.
    pub length: f64,
    /// Time scale `nu / (C S_eq^2)`, s.
    pub time: f64,
    /// Energy density scale `C S_eq^4`, J/m^3.
    pub energy_density: f64,
    /// Electric field scale `sqrt(energy_density / eps0)`, V/m.
    pub e_field: f64,
    /// Potential scale `e_field * length`, V.
    pub potential: f64,
}

/// Nondimensional working parameter set used by the assembly kernels.
#[derive(Debug, Clone, Copy)]
pub struct BulkParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Elastic coefficient.
    pub l: f64,
    /// Nondimensional vacuum permittivity (1 by the choice of field scale).
    pub eps0: f64,
    pub eps_bar: f64,
    pub eps_a: f64,
    pub e_flexo: f64,
    /// Nondimensional viscosity (`1 / S_eq^2` under the standard scaling).
    pub nu: f64,
    pub s_eq: f64,
}

impl MaterialParams {
    pub fn new(
        a: f64,
        b: f64,
        c: f64,
        l_elastic: f64,
        eps_bar: f64,
        eps_a: f64,
        e_flexo: f64,
        nu: f64,
    ) -> Result<Self, MaterialError> {
        if nu <= 0.0 {
            return Err(MaterialError::NonPositiveViscosity(nu));
        }
        if c <= 0.0 {
            return Err(MaterialError::InvalidConstant(format!("C must be positive (C = {c})")));
        }
        if l_elastic <= 0.0 {
            return Err(MaterialError::InvalidConstant(format!(
                "L must be positive (L = {l_elastic})"
            )));
        }
        let disc = b * b - 4.0 * a * c;
        if disc <= 0.0 {
            return Err(MaterialError::NoNematicMinimum { discriminant: disc });
        }
        let s_eq = (b + disc.sqrt()) / (2.0 * c);
        if s_eq <= 0.0 {
            return Err(MaterialError::NoNematicMinimum { discriminant: disc });
        }
        // Self-consistency: S_eq must be a stationary point of g.
        let scale = a.abs() + b.abs() + c;
        let residual = (a * s_eq - b * s_eq * s_eq + c * s_eq.powi(3)) / scale;
        if residual.abs() > 1e-10 {
            return Err(MaterialError::Inconsistent { residual });
        }
        let denom = a + b * s_eq + c * s_eq * s_eq;
        if denom <= 0.0 {
            return Err(MaterialError::InvalidConstant(format!(
                "coherence length undefined (A + B S_eq + C S_eq^2 = {denom})"
            )));
        }
        let zeta = (l_elastic / denom).sqrt();
        Ok(MaterialParams { a, b, c, l_elastic, eps_bar, eps_a, e_flexo, nu, s_eq, zeta })
    }

    /// Shipped 5CB-like profile, calibrated (not literature data) so that
    /// S_eq = 0.65 and zeta ~= 4.06 nm. See `examples/calibrate.rs` in the
    /// CLI crate for the derivation of each number.
    pub fn lc_5cb_like() -> Self {
        MaterialParams::new(
            -1.72e5,           // A
            8.59884615384615e5, // B, fixes S_eq = 0.65
            1.73e6,            // C
            1.84262e-11,       // L, fixes zeta ~= 4.06 nm
            8.0,               // eps_bar
            3.77,              // eps_a
            1.5e-11,           // e_flexo
            0.0777,            // nu
        )
        .expect("shipped profile must be consistent")
    }

    /// Scalar thermotropic potential restricted to uniaxial states.
    pub fn scalar_potential(&self, s: f64) -> f64 {
        0.5 * self.a * s * s - self.b / 3.0 * s.powi(3) + 0.25 * self.c * s.powi(4)
    }

    pub fn scales(&self) -> Scales {
        let energy_density = self.c * self.s_eq.powi(4);
        let time = self.nu / (self.c * self.s_eq * self.s_eq);
        let e_field = (energy_density / EPS0_SI).sqrt();
        Scales {
            length: self.zeta,
            time,
            energy_density,
            e_field,
            potential: e_field * self.zeta,
        }
    }

    /// Nondimensional working set. The equilibrium order parameter and the
    /// coherence length are invariant under the scaling (S_eq stays 0.65 and
    /// the nondimensional coherence length is 1).
    pub fn nondimensional(&self) -> BulkParams {
        let sc = self.scales();
        let f = sc.energy_density;
        BulkParams {
            a: self.a / f,
            b: self.b / f,
            c: self.c / f,
            l: self.l_elastic / (f * self.zeta * self.zeta),
            eps0: 1.0,
            eps_bar: self.eps_bar,
            eps_a: self.eps_a,
            e_flexo: self.e_flexo * sc.e_field / (self.zeta * f),
            nu: 1.0 / (self.s_eq * self.s_eq),
            s_eq: self.s_eq,
        }
    }
}

impl BulkParams {
    /// Parameter set with only the elastic term active; used by tests and
    /// manufactured problems.
    pub fn elastic_only(l: f64, nu: f64) -> Self {
        BulkParams {
            a: 0.0,
            b: 0.0,
            c: 0.0,
            l,
            eps0: 0.0,
            eps_bar: 0.0,
            eps_a: 0.0,
            e_flexo: 0.0,
            nu,
            s_eq: 1.0,
        }
    }
}

/// Thermotropic density `(A/2) t2 - (B/3) sqrt(6) t3 + (C/4) t2^2`.
pub fn thermotropic_density(q: &QTensor, p: &BulkParams) -> f64 {
    let t2 = q.trace_q2();
    let t3 = q.trace_q3();
    0.5 * p.a * t2 - p.b / 3.0 * SQRT6 * t3 + 0.25 * p.c * t2 * t2
}

/// One-constant elastic density expressed in the five free components.
pub fn elastic_density(grad: &GradQ, p: &BulkParams) -> f64 {
    let d = |i: usize, j: usize| grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1];
    p.l * (d(0, 0) + d(3, 3) + d(0, 3) + d(1, 1) + d(2, 2) + d(4, 4))
}

/// In-plane divergence of Q: component i of `sum_j dQ_ij/dx_j` restricted to
/// the simulation-plane axes (tensor axes 1 and 3).
pub fn div_q(grad: &GradQ) -> [f64; 2] {
    [
        grad[0][0] + grad[2][1],
        grad[2][0] - grad[0][1] - grad[3][1],
    ]
}

/// `E . Q E` for an in-plane field.
fn e_q_e(q: &QTensor, e: [f64; 2]) -> f64 {
    e[0] * e[0] * q.q1 + 2.0 * e[0] * e[1] * q.q3 + e[1] * e[1] * (-q.q1 - q.q4)
}

/// Electrostatic density including the flexoelectric coupling.
pub fn electrostatic_density(q: &QTensor, grad: &GradQ, e: [f64; 2], p: &BulkParams) -> f64 {
    let e2 = e[0] * e[0] + e[1] * e[1];
    let dq = div_q(grad);
    -0.5 * p.eps0 * (p.eps_bar * e2 + p.eps_a * e_q_e(q, e))
        - p.e_flexo * (dq[0] * e[0] + dq[1] * e[1])
}

/// Full bulk density.
pub fn bulk_density(q: &QTensor, grad: &GradQ, e: [f64; 2], p: &BulkParams) -> f64 {
    thermotropic_density(q, p) + elastic_density(grad, p) + electrostatic_density(q, grad, e, p)
}

/// Exact partial derivatives of the bulk density: `fhat[i] = dF_b/dq_i` and
/// `ghat[i] = dF_b/d(grad q_i)`.
pub fn bulk_derivatives(
    q: &QTensor,
    grad: &GradQ,
    e: [f64; 2],
    p: &BulkParams,
) -> ([f64; 5], GradQ) {
    let t2 = q.trace_q2();
    let dt2 = trace_q2_gradient(q);
    let dt3 = trace_q3_gradient(q);

    let mut fhat = [0.0; 5];
    let thermo_scale = 0.5 * p.a + 0.5 * p.c * t2;
    for i in 0..5 {
        fhat[i] = thermo_scale * dt2[i] - p.b / 3.0 * SQRT6 * dt3[i];
    }
    // Dielectric coupling (linear in Q).
    let k = -0.5 * p.eps0 * p.eps_a;
    fhat[0] += k * (e[0] * e[0] - e[1] * e[1]);
    fhat[2] += k * 2.0 * e[0] * e[1];
    fhat[3] += -k * e[1] * e[1];

    let mut ghat = [[0.0; 2]; 5];
    // Elastic part.
    for k in 0..2 {
        ghat[0][k] = p.l * (2.0 * grad[0][k] + grad[3][k]);
        ghat[3][k] = p.l * (2.0 * grad[3][k] + grad[0][k]);
        ghat[1][k] = 2.0 * p.l * grad[1][k];
        ghat[2][k] = 2.0 * p.l * grad[2][k];
        ghat[4][k] = 2.0 * p.l * grad[4][k];
    }
    // Flexoelectric part (independent of grad Q).
    let ef = p.e_flexo;
    ghat[0][0] += -ef * e[0];
    ghat[0][1] += ef * e[1];
    ghat[2][0] += -ef * e[1];
    ghat[2][1] += -ef * e[0];
    ghat[3][1] += ef * e[1];

    (fhat, ghat)
}

/// Gradient of `tr(Q^2)` with respect to the five components.
pub fn trace_q2_gradient(q: &QTensor) -> [f64; 5] {
    [
        2.0 * (2.0 * q.q1 + q.q4),
        4.0 * q.q2,
        4.0 * q.q3,
        2.0 * (2.0 * q.q4 + q.q1),
        4.0 * q.q5,
    ]
}

/// Gradient of `tr(Q^3)` with respect to the five components, via
/// `d t3 = 3 (Q^2)_ij dQ_ij` with the trace constraint folded in.
pub fn trace_q3_gradient(q: &QTensor) -> [f64; 5] {
    let q6 = -q.q1 - q.q4;
    let m11 = q.q1 * q.q1 + q.q2 * q.q2 + q.q3 * q.q3;
    let m22 = q.q2 * q.q2 + q.q4 * q.q4 + q.q5 * q.q5;
    let m33 = q.q3 * q.q3 + q.q5 * q.q5 + q6 * q6;
    let m12 = q.q1 * q.q2 + q.q2 * q.q4 + q.q3 * q.q5;
    let m13 = q.q1 * q.q3 + q.q2 * q.q5 + q.q3 * q6;
    let m23 = q.q2 * q.q3 + q.q4 * q.q5 + q.q5 * q6;
    [
        3.0 * (m11 - m33),
        6.0 * m12,
        6.0 * m13,
        3.0 * (m22 - m33),
        6.0 * m23,
    ]
}

/// Hessian of the thermotropic density with respect to the five components.
/// The dielectric term is linear in Q and the flexoelectric term does not
/// depend on Q, so this is the full local Hessian of `F_b` at frozen E.
pub fn thermotropic_hessian(q: &QTensor, p: &BulkParams) -> [[f64; 5]; 5] {
    let t2 = q.trace_q2();
    let dt2 = trace_q2_gradient(q);
    // Constant Hessian of t2.
    const H2: [[f64; 5]; 5] = [
        [4.0, 0.0, 0.0, 2.0, 0.0],
        [0.0, 4.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 4.0, 0.0, 0.0],
        [2.0, 0.0, 0.0, 4.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 4.0],
    ];
    // Hessian of t3 (linear in q).
    let (q1, q2, q3, q4, q5) = (q.q1, q.q2, q.q3, q.q4, q.q5);
    let h3 = [
        [-6.0 * q4, 6.0 * q2, 0.0, -6.0 * (q1 + q4), -6.0 * q5],
        [6.0 * q2, 6.0 * (q1 + q4), 6.0 * q5, 6.0 * q2, 6.0 * q3],
        [0.0, 6.0 * q5, -6.0 * q4, -6.0 * q3, 6.0 * q2],
        [-6.0 * (q1 + q4), 6.0 * q2, -6.0 * q3, -6.0 * q1, 0.0],
        [-6.0 * q5, 6.0 * q3, 6.0 * q2, 0.0, -6.0 * q1],
    ];
    let mut h = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in 0..5 {
            h[i][j] = 0.5 * (p.a + p.c * t2) * H2[i][j] + 0.5 * p.c * dt2[i] * dt2[j]
                - p.b / 3.0 * SQRT6 * h3[i][j];
        }
    }
    h
}

/// Rescale the raw derivatives into the right-hand-side quantities entering
/// the evolution equations: the (1,4) pair mixes through the inverse of the
/// dissipation quadratic form, the off-diagonal components carry 1/(2 nu).
pub fn scaled_rhs(
    fhat: &[f64; 5],
    ghat: &GradQ,
    nu: f64,
) -> Result<([f64; 5], GradQ), MaterialError> {
    if nu <= 0.0 {
        return Err(MaterialError::NonPositiveViscosity(nu));
    }
    let c14 = 1.0 / (3.0 * nu);
    let cd = 1.0 / (2.0 * nu);
    let f = [
        c14 * (2.0 * fhat[0] - fhat[3]),
        cd * fhat[1],
        cd * fhat[2],
        c14 * (2.0 * fhat[3] - fhat[0]),
        cd * fhat[4],
    ];
    let mut g = [[0.0; 2]; 5];
    for k in 0..2 {
        g[0][k] = c14 * (2.0 * ghat[0][k] - ghat[3][k]);
        g[1][k] = cd * ghat[1][k];
        g[2][k] = cd * ghat[2][k];
        g[3][k] = c14 * (2.0 * ghat[3][k] - ghat[0][k]);
        g[4][k] = cd * ghat[4][k];
    }
    Ok((f, g))
}

/// Apply the same (1,4) mixing to a 5x5 local Hessian, producing the
/// Jacobian of the scaled f with respect to q.
pub fn scale_hessian_rows(h: &[[f64; 5]; 5], nu: f64) -> [[f64; 5]; 5] {
    let c14 = 1.0 / (3.0 * nu);
    let cd = 1.0 / (2.0 * nu);
    let mut out = [[0.0; 5]; 5];
    for j in 0..5 {
        out[0][j] = c14 * (2.0 * h[0][j] - h[3][j]);
        out[1][j] = cd * h[1][j];
        out[2][j] = cd * h[2][j];
        out[3][j] = c14 * (2.0 * h[3][j] - h[0][j]);
        out[4][j] = cd * h[4][j];
    }
    out
}

/// Electric displacement `D = eps0 (eps_bar E + eps_a Q E) + e_flexo div Q`,
/// the exact negative E-derivative of the electrostatic density.
pub fn displacement(q: &QTensor, grad: &GradQ, e: [f64; 2], p: &BulkParams) -> [f64; 2] {
    let dq = div_q(grad);
    let qe = [
        q.q1 * e[0] + q.q3 * e[1],
        q.q3 * e[0] + (-q.q1 - q.q4) * e[1],
    ];
    [
        p.eps0 * (p.eps_bar * e[0] + p.eps_a * qe[0]) + p.e_flexo * dq[0],
        p.eps0 * (p.eps_bar * e[1] + p.eps_a * qe[1]) + p.e_flexo * dq[1],
    ]
}
