//! Pointwise algebra of the symmetric traceless order tensor.
//!
//! The five degrees of freedom pack the 3x3 matrix
//!
//! ```text
//!     [ q1  q2  q3       ]
//! Q = [ q2  q4  q5       ]
//!     [ q3  q5  -q1 - q4 ]
//! ```
//!
//! so the trace vanishes by construction. All invariants and the eigen
//! decomposition are evaluated in closed form (no iterative eigensolver);
//! every operation is a pure function and safe to call from any thread.

use thiserror::Error;

/// Guard below which a tensor is treated as isotropic when forming the
/// biaxiality ratio.
pub const EPS_ISO: f64 = 1e-14;

const SQRT_3_2: f64 = 1.224744871391589; // sqrt(3/2)

#[derive(Debug, Error)]
pub enum QTensorError {
    #[error("director is not a unit vector (|n| = {norm})")]
    NonUnitDirector { norm: f64 },
    #[error("tensor is isotropic (tr(Q^2) = {trace_q2:.3e}); biaxiality undefined")]
    IsotropicState { trace_q2: f64 },
}

/// Symmetric traceless order tensor stored by its five free components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QTensor {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
    pub q5: f64,
}

/// Orthonormal eigenvector triple with the scalar order parameters of the
/// `S (n x n - I/3) * sqrt(3/2) + T (m x m - l x l)` representation.
#[derive(Debug, Clone, Copy)]
pub struct DirectorFrame {
    pub l: [f64; 3],
    pub m: [f64; 3],
    pub n: [f64; 3],
    pub s: f64,
    pub t: f64,
}

impl QTensor {
    pub const ZERO: QTensor = QTensor { q1: 0.0, q2: 0.0, q3: 0.0, q4: 0.0, q5: 0.0 };

    pub fn from_components(q: [f64; 5]) -> Self {
        QTensor { q1: q[0], q2: q[1], q3: q[2], q4: q[3], q5: q[4] }
    }

    pub fn components(&self) -> [f64; 5] {
        [self.q1, self.q2, self.q3, self.q4, self.q5]
    }

    /// Expand into the explicit 3x3 matrix (row major).
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let q6 = -self.q1 - self.q4;
        [
            [self.q1, self.q2, self.q3],
            [self.q2, self.q4, self.q5],
            [self.q3, self.q5, q6],
        ]
    }

    /// Uniaxial tensor `sqrt(3/2) * S * (n x n - I/3)`, normalised so that
    /// `tr(Q^2) = S^2`.
    pub fn uniaxial_from_director(n: [f64; 3], s: f64) -> Result<Self, QTensorError> {
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(QTensorError::NonUnitDirector { norm });
        }
        let k = SQRT_3_2 * s;
        Ok(QTensor {
            q1: k * (n[0] * n[0] - 1.0 / 3.0),
            q2: k * (n[0] * n[1]),
            q3: k * (n[0] * n[2]),
            q4: k * (n[1] * n[1] - 1.0 / 3.0),
            q5: k * (n[1] * n[2]),
        })
    }

    /// `tr(Q^2)` in closed form; non-negative.
    pub fn trace_q2(&self) -> f64 {
        2.0 * (self.q1 * self.q1 + self.q1 * self.q4 + self.q4 * self.q4)
            + 2.0 * (self.q2 * self.q2 + self.q3 * self.q3 + self.q5 * self.q5)
    }

    /// `tr(Q^3)`; equals `3 det(Q)` for a traceless tensor.
    pub fn trace_q3(&self) -> f64 {
        let q6 = -self.q1 - self.q4;
        let det = self.q1 * (self.q4 * q6 - self.q5 * self.q5)
            - self.q2 * (self.q2 * q6 - self.q5 * self.q3)
            + self.q3 * (self.q2 * self.q5 - self.q4 * self.q3);
        3.0 * det
    }

    /// Scalar order parameter `S = tr(Q^2)^(1/2)`.
    pub fn order_parameter(&self) -> f64 {
        self.trace_q2().sqrt()
    }

    /// Invariant biaxiality measure `[1 - 6 tr(Q^3)^2 / tr(Q^2)^3]^(1/2)`,
    /// clamped into [0, 1] before the root to absorb rounding.
    ///
    /// The numerator `tr(Q^2)^3 - 6 tr(Q^3)^2` cancels catastrophically near
    /// uniaxial states (and the square root doubles the damage), so it is
    /// evaluated in compensated double-double arithmetic.
    ///
    /// Returns an error at (near-)isotropic points where the ratio is
    /// undefined; field-level evaluators substitute 0 there.
    pub fn biaxiality(&self) -> Result<f64, QTensorError> {
        let t2 = self.trace_q2();
        if t2 <= EPS_ISO {
            return Err(QTensorError::IsotropicState { trace_q2: t2 });
        }
        let (t2d, det) = self.invariants_dd();
        // tr(Q^3) = 3 det, so 6 tr(Q^3)^2 = 54 det^2.
        let num = t2d
            .mul(t2d)
            .mul(t2d)
            .sub(det.mul(det).scale(54.0))
            .to_f64();
        let arg = (num / (t2 * t2 * t2)).clamp(0.0, 1.0);
        Ok(arg.sqrt())
    }

    /// tr(Q^2) and det(Q) in double-double precision.
    fn invariants_dd(&self) -> (Dd, Dd) {
        let q1 = Dd::from(self.q1);
        let q2 = Dd::from(self.q2);
        let q3 = Dd::from(self.q3);
        let q4 = Dd::from(self.q4);
        let q5 = Dd::from(self.q5);
        let q6 = q1.add(q4).neg();
        let t2 = q1
            .mul(q1)
            .add(q1.mul(q4))
            .add(q4.mul(q4))
            .add(q2.mul(q2))
            .add(q3.mul(q3))
            .add(q5.mul(q5))
            .scale(2.0);
        let det = q1
            .mul(q4.mul(q6).sub(q5.mul(q5)))
            .sub(q2.mul(q2.mul(q6).sub(q5.mul(q3))))
            .add(q3.mul(q2.mul(q5).sub(q4.mul(q3))));
        (t2, det)
    }

    /// Biaxiality with the isotropic state mapped to 0 (the uniaxial base
    /// value) instead of an error.
    pub fn biaxiality_or_zero(&self) -> f64 {
        self.biaxiality().unwrap_or(0.0)
    }

    /// Eigen decomposition into an orthonormal director frame.
    ///
    /// Eigenvalues are found from the characteristic polynomial of the
    /// traceless tensor by the trigonometric method, sorted so `n` carries
    /// the largest eigenvalue and `l` the smallest. The order parameters are
    /// recovered as `S = sqrt(3/2) * mu_n` and `T = (mu_m - mu_l) / 2`, which
    /// makes the reconstruction
    /// `sqrt(3/2) S (n x n - I/3) + T (m x m - l x l)` exact.
    ///
    /// Ties closer than 1e-12 are broken by lexicographic comparison of the
    /// sign-fixed eigenvectors; every director is sign-fixed so that its
    /// largest-magnitude component is positive. The zero tensor maps to the
    /// canonical axes with `n = e_x`.
    pub fn eigen_frame(&self) -> DirectorFrame {
        let t2 = self.trace_q2();
        if t2 <= EPS_ISO {
            return DirectorFrame {
                n: [1.0, 0.0, 0.0],
                m: [0.0, 1.0, 0.0],
                l: [0.0, 0.0, 1.0],
                s: 0.0,
                t: 0.0,
            };
        }
        // Characteristic polynomial: lambda^3 = (t2/2) lambda + det.
        let p = 0.5 * t2;
        let det = self.trace_q3() / 3.0;
        let amp = 2.0 * (p / 3.0).sqrt();
        let h = (det / (2.0 * (p / 3.0).powf(1.5))).clamp(-1.0, 1.0);
        let phi = h.acos();
        let mut eigs = [
            amp * (phi / 3.0).cos(),
            amp * ((phi + 2.0 * std::f64::consts::PI) / 3.0).cos(),
            amp * ((phi + 4.0 * std::f64::consts::PI) / 3.0).cos(),
        ];
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());

        let mat = self.to_matrix();
        // Most separated eigenvalue first for a stable eigenvector, then the
        // remaining pair from the deflated 2x2 problem in the orthogonal plane.
        let (first, others) = if eigs[0] - eigs[1] >= eigs[1] - eigs[2] {
            (0usize, [1usize, 2usize])
        } else {
            (2usize, [0usize, 1usize])
        };

        // Near-degenerate pairs lose their splitting to rounding in the
        // trigonometric formula, which would pollute T and the
        // reconstruction. Refine the isolated root in double-double
        // arithmetic and recover the pair from the deflated quadratic, whose
        // discriminant is the squared splitting.
        {
            let (t2d, detd) = self.invariants_dd();
            let pd = t2d.scale(0.5);
            let mut r = Dd::from(eigs[first]);
            for _ in 0..2 {
                let pr = r.mul(r).mul(r).sub(pd.mul(r)).sub(detd);
                let dpr = 3.0 * r.hi * r.hi - p;
                if dpr.abs() < 1e-300 {
                    break;
                }
                r = r.sub(pr.scale(1.0 / dpr));
            }
            let c = detd.div(r);
            let disc = r.mul(r).sub(c.scale(4.0)).to_f64().max(0.0);
            let split = disc.sqrt();
            eigs[first] = r.to_f64();
            eigs[others[0]] = 0.5 * (-r.to_f64() + split);
            eigs[others[1]] = 0.5 * (-r.to_f64() - split);
        }
        let v_first = eigenvector_for(&mat, eigs[first]);
        let (u, v) = orthonormal_complement(v_first);
        // 2x2 restriction of Q to span{u, v}.
        let qu = mat_vec(&mat, u);
        let qv = mat_vec(&mat, v);
        let p11 = dot(u, qu);
        let p12 = dot(u, qv);
        let p22 = dot(v, qv);
        // Analytic symmetric 2x2 eigenvectors.
        let tr_half = 0.5 * (p11 + p22);
        let delta = 0.5 * (p11 - p22);
        let rad = (delta * delta + p12 * p12).sqrt();
        let lam_hi = tr_half + rad;
        let (c, s2) = if rad < 1e-300 {
            (1.0, 0.0)
        } else {
            // Eigenvector of [p11 p12; p12 p22] for lam_hi.
            let (a, b) = if delta >= 0.0 { (lam_hi - p22, p12) } else { (p12, lam_hi - p11) };
            let n = (a * a + b * b).sqrt();
            if n < 1e-300 { (1.0, 0.0) } else { (a / n, b / n) }
        };
        let w_hi = [c * u[0] + s2 * v[0], c * u[1] + s2 * v[1], c * u[2] + s2 * v[2]];
        let w_lo = [-s2 * u[0] + c * v[0], -s2 * u[1] + c * v[1], -s2 * u[2] + c * v[2]];

        // Assign eigenvectors to sorted eigenvalues.
        let mut pairs: [(f64, [f64; 3]); 3] = [(0.0, [0.0; 3]); 3];
        pairs[first] = (eigs[first], sign_fix(v_first));
        let (hi_slot, lo_slot) = (others[0], others[1]);
        // lam_hi is the larger of the deflated pair by construction.
        let _ = lam_hi;
        pairs[hi_slot] = (eigs[hi_slot], sign_fix(w_hi));
        pairs[lo_slot] = (eigs[lo_slot], sign_fix(w_lo));

        // Deterministic tie-break for (near-)degenerate eigenvalues.
        for k in 0..2 {
            if (pairs[k].0 - pairs[k + 1].0).abs() < 1e-12
                && lex_less(&pairs[k].1, &pairs[k + 1].1)
            {
                pairs.swap(k, k + 1);
            }
        }

        let (mu_n, n) = pairs[0];
        let (mu_m, m) = pairs[1];
        let (mu_l, l) = pairs[2];
        DirectorFrame { l, m, n, s: SQRT_3_2 * mu_n, t: 0.5 * (mu_m - mu_l) }
    }
}

impl DirectorFrame {
    /// Rebuild the tensor from the frame parameters.
    pub fn reconstruct(&self) -> QTensor {
        let k = SQRT_3_2 * self.s;
        let mut m = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = k * (self.n[i] * self.n[j] - if i == j { 1.0 / 3.0 } else { 0.0 })
                    + self.t * (self.m[i] * self.m[j] - self.l[i] * self.l[j]);
            }
        }
        QTensor { q1: m[0][0], q2: m[0][1], q3: m[0][2], q4: m[1][1], q5: m[1][2] }
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Eigenvector of a symmetric 3x3 matrix for an isolated eigenvalue, from the
/// largest cross product of rows of `M - lambda I`.
fn eigenvector_for(m: &[[f64; 3]; 3], lambda: f64) -> [f64; 3] {
    let r0 = [m[0][0] - lambda, m[0][1], m[0][2]];
    let r1 = [m[1][0], m[1][1] - lambda, m[1][2]];
    let r2 = [m[2][0], m[2][1], m[2][2] - lambda];
    let c01 = cross(r0, r1);
    let c02 = cross(r0, r2);
    let c12 = cross(r1, r2);
    let n01 = dot(c01, c01);
    let n02 = dot(c02, c02);
    let n12 = dot(c12, c12);
    let (best, norm2) = if n01 >= n02 && n01 >= n12 {
        (c01, n01)
    } else if n02 >= n12 {
        (c02, n02)
    } else {
        (c12, n12)
    };
    if norm2 < 1e-280 {
        // Degenerate beyond resolution; any unit vector is an eigenvector.
        return [1.0, 0.0, 0.0];
    }
    let inv = norm2.sqrt().recip();
    [best[0] * inv, best[1] * inv, best[2] * inv]
}

/// Two unit vectors spanning the plane orthogonal to `w`.
fn orthonormal_complement(w: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let pick = if w[0].abs() <= w[1].abs() && w[0].abs() <= w[2].abs() {
        [1.0, 0.0, 0.0]
    } else if w[1].abs() <= w[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let mut u = cross(w, pick);
    let inv = dot(u, u).sqrt().recip();
    u = [u[0] * inv, u[1] * inv, u[2] * inv];
    let v = cross(w, u);
    (u, v)
}

/// Flip sign so the largest-magnitude component is positive (first such
/// component on exact magnitude ties).
fn sign_fix(v: [f64; 3]) -> [f64; 3] {
    let mut idx = 0;
    for k in 1..3 {
        if v[k].abs() > v[idx].abs() {
            idx = k;
        }
    }
    if v[idx] < 0.0 {
        [-v[0], -v[1], -v[2]]
    } else {
        v
    }
}

fn lex_less(a: &[f64; 3], b: &[f64; 3]) -> bool {
    for k in 0..3 {
        if a[k] < b[k] {
            return true;
        }
        if a[k] > b[k] {
            return false;
        }
    }
    false
}

/// Minimal double-double arithmetic for the cancellation-prone invariant
/// combinations; roughly 31 significant digits.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        quick_renorm(s, e + self.lo + o.lo)
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        quick_renorm(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    fn scale(self, s: f64) -> Dd {
        let (p, e) = two_prod(self.hi, s);
        quick_renorm(p, e + self.lo * s)
    }

    fn div(self, o: Dd) -> Dd {
        let q0 = self.hi / o.hi;
        // One Newton correction of the quotient.
        let r = self.sub(o.scale(q0));
        let q1 = r.to_f64() / o.hi;
        quick_renorm(q0, q1)
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, f64::mul_add(a, b, -p))
}

fn quick_renorm(hi: f64, lo: f64) -> Dd {
    let (s, e) = two_sum(hi, lo);
    Dd { hi: s, lo: e }
}
