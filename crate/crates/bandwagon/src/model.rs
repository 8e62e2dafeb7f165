//! Model parameters and the phase-plane vector field.
//!
//! The macroscopic state is a pair `(z, m)` where `m` is the mean opinion and
//! `z` the value-function increment of the plus state. With the mobility
//! decomposition `mu(sigma, m) = sigma a(m) + b(m)` the dynamics are
//!
//! ```text
//! dz/dt = b(m)/2 z|z| + a(m)/2 z^2 + lambda z + 2m
//! dm/dt = -(m b(m) + a(m)) |z| - (m a(m) + b(m)) z
//! ```
//!
//! The field is continuous everywhere but not differentiable on the line
//! `z = 0`; all derivative-based operations work on the smooth branches
//! `z > 0` / `z < 0` selected by [`Branch`].

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues_2x2, solve_2x2, Mat2};

/// Number of grid points used to certify nonnegativity of a mobility spec.
const MOBILITY_GRID: usize = 1001;

/// Binary agent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    Plus,
    Minus,
}

impl Spin {
    pub const BOTH: [Spin; 2] = [Spin::Plus, Spin::Minus];

    pub fn value(self) -> f64 {
        match self {
            Spin::Plus => 1.0,
            Spin::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Plus => Spin::Minus,
            Spin::Minus => Spin::Plus,
        }
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spin::Plus => write!(f, "+1"),
            Spin::Minus => write!(f, "-1"),
        }
    }
}

/// Scalar coefficient function of `m`, used by generic mobility specs.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Mobility `mu(sigma, m) = sigma a(m) + b(m)`, nonnegative on
/// `{-1, 1} x [-1, 1]` (certified on a grid at construction).
#[derive(Clone)]
pub enum MobilitySpec {
    /// `mu(sigma, m) = mu`: `a = 0`, `b = mu`.
    Constant { mu: f64 },
    /// Crowding form `mu(sigma, m) = mu (1 + epsilon sigma m)`:
    /// `a(m) = mu epsilon m`, `b = mu`. Joining a large majority is costly.
    Crowding { mu: f64, epsilon: f64 },
    /// Arbitrary coefficient pair `a(m)`, `b(m)`.
    Generic { a: ScalarFn, b: ScalarFn },
}

impl fmt::Debug for MobilitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MobilitySpec::Constant { mu } => write!(f, "Constant {{ mu: {mu} }}"),
            MobilitySpec::Crowding { mu, epsilon } => {
                write!(f, "Crowding {{ mu: {mu}, epsilon: {epsilon} }}")
            }
            MobilitySpec::Generic { .. } => write!(f, "Generic {{ .. }}"),
        }
    }
}

impl MobilitySpec {
    pub fn constant(mu: f64) -> Result<Self> {
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::InvalidMobility(format!(
                "constant mobility requires mu >= 0, got {mu}"
            )));
        }
        Ok(MobilitySpec::Constant { mu })
    }

    pub fn crowding(mu: f64, epsilon: f64) -> Result<Self> {
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::InvalidMobility(format!(
                "crowding mobility requires mu >= 0, got {mu}"
            )));
        }
        if !epsilon.is_finite() || !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidMobility(format!(
                "crowding mobility requires epsilon in [0, 1], got {epsilon}"
            )));
        }
        Ok(MobilitySpec::Crowding { mu, epsilon })
    }

    pub fn generic(a: ScalarFn, b: ScalarFn) -> Result<Self> {
        let spec = MobilitySpec::Generic { a, b };
        spec.check_nonnegative()?;
        Ok(spec)
    }

    /// Odd coefficient `a(m)` of the decomposition.
    pub fn a(&self, m: f64) -> f64 {
        match self {
            MobilitySpec::Constant { .. } => 0.0,
            MobilitySpec::Crowding { mu, epsilon } => mu * epsilon * m,
            MobilitySpec::Generic { a, .. } => a(m),
        }
    }

    /// Even coefficient `b(m)` of the decomposition.
    pub fn b(&self, m: f64) -> f64 {
        match self {
            MobilitySpec::Constant { mu } => *mu,
            MobilitySpec::Crowding { mu, .. } => *mu,
            MobilitySpec::Generic { .., b } => b(m),
        }
    }

    /// `da/dm`; analytic for the closed forms, central difference otherwise.
    pub fn a_prime(&self, m: f64) -> f64 {
        match self {
            MobilitySpec::Constant { .. } => 0.0,
            MobilitySpec::Crowding { mu, epsilon } => mu * epsilon,
            MobilitySpec::Generic { a, .. } => {
                let h = 1e-6;
                (a(m + h) - a(m - h)) / (2.0 * h)
            }
        }
    }

    /// `db/dm`; analytic for the closed forms, central difference otherwise.
    pub fn b_prime(&self, m: f64) -> f64 {
        match self {
            MobilitySpec::Constant { .. } | MobilitySpec::Crowding { .. } => 0.0,
            MobilitySpec::Generic { b, .. } => {
                let h = 1e-6;
                (b(m + h) - b(m - h)) / (2.0 * h)
            }
        }
    }

    /// Evaluates `mu(sigma, m) = sigma a(m) + b(m)`.
    ///
    /// Requires `m` in `[-1, 1]` (a small integration-tolerance overshoot is
    /// accepted); a negative value means the spec violates nonnegativity.
    pub fn eval(&self, sigma: Spin, m: f64) -> Result<f64> {
        if !(m.abs() <= 1.0 + 1e-6) {
            return Err(Error::OutOfRange(format!(
                "mobility evaluated at m = {m} outside [-1, 1]"
            )));
        }
        let value = sigma.value() * self.a(m) + self.b(m);
        if value < 0.0 {
            return Err(Error::InvalidMobility(format!(
                "mu({sigma}, {m}) = {value} < 0"
            )));
        }
        Ok(value)
    }

    fn check_nonnegative(&self) -> Result<()> {
        for i in 0..MOBILITY_GRID {
            let m = -1.0 + 2.0 * i as f64 / (MOBILITY_GRID - 1) as f64;
            for sigma in Spin::BOTH {
                let value = sigma.value() * self.a(m) + self.b(m);
                if !(value >= -1e-12) {
                    return Err(Error::InvalidMobility(format!(
                        "mu({sigma}, {m}) = {value} < 0"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Evaluates the mobility at a given spin and mean opinion.
pub fn mobility_eval(spec: &MobilitySpec, sigma: Spin, m: f64) -> Result<f64> {
    spec.eval(sigma, m)
}

/// Discount rate plus mobility specification.
#[derive(Debug, Clone)]
pub struct ModelParams {
    lambda: f64,
    mobility: MobilitySpec,
}

impl ModelParams {
    pub fn new(lambda: f64, mobility: MobilitySpec) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "discount rate must be positive, got {lambda}"
            )));
        }
        mobility.check_nonnegative()?;
        Ok(ModelParams { lambda, mobility })
    }

    pub fn constant(lambda: f64, mu: f64) -> Result<Self> {
        Self::new(lambda, MobilitySpec::constant(mu)?)
    }

    pub fn crowding(lambda: f64, mu: f64, epsilon: f64) -> Result<Self> {
        Self::new(lambda, MobilitySpec::crowding(mu, epsilon)?)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mobility(&self) -> &MobilitySpec {
        &self.mobility
    }

    /// Origin classification boundary `lambda^2 / 8` for `b(0)`.
    pub fn low_mobility_threshold(&self) -> f64 {
        self.lambda * self.lambda / 8.0
    }
}

/// A point of the phase plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    /// Value-function increment of the plus state.
    pub z: f64,
    /// Mean opinion, physically in `[-1, 1]`.
    pub m: f64,
}

impl PhasePoint {
    pub fn new(z: f64, m: f64) -> Self {
        PhasePoint { z, m }
    }

    pub const ORIGIN: PhasePoint = PhasePoint { z: 0.0, m: 0.0 };

    pub fn dist(&self, other: &PhasePoint) -> f64 {
        (self.z - other.z).hypot(self.m - other.m)
    }

    pub fn norm(&self) -> f64 {
        self.z.hypot(self.m)
    }

    /// Reflection through the origin; the field is odd under it.
    pub fn reflected(&self) -> PhasePoint {
        PhasePoint { z: -self.z, m: -self.m }
    }
}

impl fmt::Display for PhasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.z, self.m)
    }
}

/// Smooth branch of the field: sign assumed for `z`, so `|z| = sign * z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Pos,
    Neg,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Pos => 1.0,
            Branch::Neg => -1.0,
        }
    }

    /// Branch containing `p`: by the sign of `z`, falling back to the sign of
    /// `dz = 2m` on the `z = 0` line (the direction the orbit is heading).
    pub fn at(p: &PhasePoint) -> Branch {
        if p.z > 0.0 || (p.z == 0.0 && p.m >= 0.0) {
            Branch::Pos
        } else {
            Branch::Neg
        }
    }
}

/// Right-hand side `(dz, dm)` of the coupled system at `p`.
pub fn vector_field(params: &ModelParams, p: &PhasePoint) -> (f64, f64) {
    vector_field_on(params, p, Branch::at(p))
}

/// Right-hand side on a fixed smooth branch (`|z|` replaced by `sign * z`).
pub fn vector_field_on(params: &ModelParams, p: &PhasePoint, branch: Branch) -> (f64, f64) {
    let a = params.mobility.a(p.m);
    let b = params.mobility.b(p.m);
    let s = branch.sign();
    let abs_z = s * p.z;
    let dz = 0.5 * b * p.z * abs_z + 0.5 * a * p.z * p.z + params.lambda * p.z + 2.0 * p.m;
    let dm = -(p.m * b + a) * abs_z - (p.m * a + b) * p.z;
    (dz, dm)
}

/// Euclidean norm of the field at `p`.
pub fn field_norm(params: &ModelParams, p: &PhasePoint) -> f64 {
    let (dz, dm) = vector_field(params, p);
    dz.hypot(dm)
}

/// Analytic Jacobian of the field on the smooth branch containing `p`.
///
/// Fails on the `z = 0` line; the origin has [`origin_linearization`].
pub fn jacobian(params: &ModelParams, p: &PhasePoint) -> Result<Mat2> {
    if p.z == 0.0 {
        return Err(Error::NonsmoothPoint { z: p.z, m: p.m });
    }
    Ok(jacobian_on(params, p, Branch::at(p)))
}

/// Analytic Jacobian on an explicitly chosen branch.
pub fn jacobian_on(params: &ModelParams, p: &PhasePoint, branch: Branch) -> Mat2 {
    let a = params.mobility.a(p.m);
    let b = params.mobility.b(p.m);
    let ap = params.mobility.a_prime(p.m);
    let bp = params.mobility.b_prime(p.m);
    let s = branch.sign();
    let z = p.z;
    let m = p.m;
    // On the branch: dz = ((s b + a)/2) z^2 + lambda z + 2m,
    //                dm = -(s (m b + a) + (m a + b)) z.
    let dz_dz = (s * b + a) * z + params.lambda;
    let dz_dm = 0.5 * (s * bp + ap) * z * z + 2.0;
    let dm_dz = -(s * (m * b + a) + (m * a + b));
    let dm_dm = -(s * (b + m * bp + ap) + (a + m * ap + bp)) * z;
    [[dz_dz, dz_dm], [dm_dz, dm_dm]]
}

/// Divergence of the field on the branch containing `p` (limit along the
/// branch on `z = 0`). Identically `lambda` for constant mobility.
pub fn divergence(params: &ModelParams, p: &PhasePoint) -> f64 {
    let j = jacobian_on(params, p, Branch::at(p));
    j[0][0] + j[1][1]
}

/// Linearization of the field at the origin, valid when `a(0) = 0`:
/// `[[lambda, 2], [-b(0), 0]]` with eigenvalues
/// `(lambda +- sqrt(lambda^2 - 8 b(0))) / 2`.
pub fn origin_linearization(params: &ModelParams) -> Result<Mat2> {
    let a0 = params.mobility.a(0.0);
    if a0.abs() > 1e-12 {
        // With a(0) != 0 the |z| term is first order and the origin has no
        // two-sided linearization; classification is refused.
        return Err(Error::UnsupportedLinearization { a0 });
    }
    Ok([[params.lambda, 2.0], [-params.mobility.b(0.0), 0.0]])
}

/// Linear stability class of a fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityClass {
    /// Real eigenvalues of opposite sign.
    Saddle,
    /// Real eigenvalues, both positive.
    UnstableNode,
    /// Complex pair with positive real part.
    UnstableSpiral,
    /// An eigenvalue at (numerical) zero or an unexpected sign pattern.
    Degenerate,
}

impl fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StabilityClass::Saddle => "saddle",
            StabilityClass::UnstableNode => "unstable_node",
            StabilityClass::UnstableSpiral => "unstable_spiral",
            StabilityClass::Degenerate => "degenerate",
        };
        write!(f, "{s}")
    }
}

/// Identity of one of the three equilibria of the phase plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FixedPointId {
    Origin,
    /// Boundary equilibrium on `m = -1` (`z >= 0`).
    SaddleMinus,
    /// Boundary equilibrium on `m = +1` (`z <= 0`).
    SaddlePlus,
}

impl fmt::Display for FixedPointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FixedPointId::Origin => "origin",
            FixedPointId::SaddleMinus => "saddle_minus",
            FixedPointId::SaddlePlus => "saddle_plus",
        };
        write!(f, "{s}")
    }
}

/// A classified equilibrium of the field.
#[derive(Debug, Clone)]
pub struct FixedPointInfo {
    pub id: FixedPointId,
    pub location: PhasePoint,
    /// Jacobian on the smooth branch at the point (origin linearization for
    /// the origin).
    pub jacobian: Mat2,
    pub eigenvalues: [Complex64; 2],
    pub class: StabilityClass,
}

impl FixedPointInfo {
    /// Real eigenvalues sorted ascending, when the pair is real.
    pub fn real_eigenvalues(&self) -> Option<(f64, f64)> {
        if self.eigenvalues.iter().all(|e| e.im == 0.0) {
            let (a, b) = (self.eigenvalues[0].re, self.eigenvalues[1].re);
            Some((a.min(b), a.max(b)))
        } else {
            None
        }
    }

    /// Unit eigenvector for a real eigenvalue of the stored Jacobian.
    pub fn eigenvector(&self, eigenvalue: f64) -> [f64; 2] {
        let j = self.jacobian;
        // (J - e I) v = 0; pick the better-conditioned row.
        let r0 = [j[0][0] - eigenvalue, j[0][1]];
        let r1 = [j[1][0], j[1][1] - eigenvalue];
        let row = if r0[0].hypot(r0[1]) >= r1[0].hypot(r1[1]) { r0 } else { r1 };
        let v = [-row[1], row[0]];
        let n = v[0].hypot(v[1]);
        if n == 0.0 {
            [1.0, 0.0]
        } else {
            [v[0] / n, v[1] / n]
        }
    }
}

fn classify_matrix(mat: &Mat2) -> (StabilityClass, [Complex64; 2]) {
    let eigs = eigenvalues_2x2(mat);
    let trace = mat[0][0] + mat[1][1];
    let det = mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0];
    let scale = trace.abs().max(det.abs().sqrt()).max(1e-30);
    let tol = 1e-9 * scale;
    let class = if eigs[0].im.abs() > tol {
        if trace > tol {
            StabilityClass::UnstableSpiral
        } else {
            StabilityClass::Degenerate
        }
    } else if det < -tol * tol {
        StabilityClass::Saddle
    } else if det > tol * tol && trace > tol {
        StabilityClass::UnstableNode
    } else {
        StabilityClass::Degenerate
    };
    (class, eigs)
}

/// Stationary value of `z` on the invariant boundary line `m = -1`
/// (`z >= 0` there, so the `Pos` branch applies):
/// root of `(mu(+1,-1)/2) z^2 + lambda z - 2 = 0` in the cancellation-free
/// form `z = 4 / (lambda + sqrt(lambda^2 + 4 mu(+1,-1)))`.
pub fn saddle_minus_z(params: &ModelParams) -> f64 {
    let mu_eff = params.mobility.b(-1.0) + params.mobility.a(-1.0);
    let lambda = params.lambda;
    4.0 / (lambda + (lambda * lambda + 4.0 * mu_eff).sqrt())
}

/// Newton polish of a boundary equilibrium on its smooth branch. The `m`
/// component of the Newton step vanishes identically on `m = +-1`, so the
/// iteration reduces to the 1-d stationary equation in `z`.
fn newton_polish(params: &ModelParams, start: PhasePoint, branch: Branch) -> Result<PhasePoint> {
    let mut p = start;
    for _ in 0..30 {
        let (fz, fm) = vector_field_on(params, &p, branch);
        let res = fz.hypot(fm);
        if res < 1e-14 * (1.0 + p.norm()) {
            return Ok(p);
        }
        let j = jacobian_on(params, &p, branch);
        let step = solve_2x2(&j, &[-fz, -fm]).ok_or(Error::NewtonDiverged {
            z: p.z,
            m: p.m,
            residual: res,
        })?;
        p = PhasePoint::new(p.z + step[0], p.m + step[1]);
    }
    let res = field_norm(params, &p);
    if res <= 1e-9 {
        Ok(p)
    } else {
        Err(Error::NewtonDiverged { z: p.z, m: p.m, residual: res })
    }
}

/// All equilibria with classification: the origin plus the two boundary
/// saddles, ordered `[Origin, SaddleMinus, SaddlePlus]`.
///
/// For constant and crowding mobility the saddle pair is an exact reflection;
/// generic specs (not necessarily odd-symmetric) get an independent solve on
/// each boundary.
pub fn fixed_points(params: &ModelParams) -> Result<Vec<FixedPointInfo>> {
    let origin_jac = origin_linearization(params)?;
    let (origin_class, origin_eigs) = classify_matrix(&origin_jac);
    let origin = FixedPointInfo {
        id: FixedPointId::Origin,
        location: PhasePoint::ORIGIN,
        jacobian: origin_jac,
        eigenvalues: origin_eigs,
        class: origin_class,
    };

    let seed_minus = PhasePoint::new(saddle_minus_z(params), -1.0);
    let loc_minus = newton_polish(params, seed_minus, Branch::Pos)?;
    let loc_plus = match params.mobility {
        MobilitySpec::Generic { .. } => {
            let mu_eff = params.mobility.b(1.0) - params.mobility.a(1.0);
            let lambda = params.lambda;
            let z = -4.0 / (lambda + (lambda * lambda + 4.0 * mu_eff).sqrt());
            newton_polish(params, PhasePoint::new(z, 1.0), Branch::Neg)?
        }
        // Odd-symmetric closed forms: the saddle pair is an exact reflection.
        _ => loc_minus.reflected(),
    };

    let mut points = vec![origin];
    for (id, loc, branch) in [
        (FixedPointId::SaddleMinus, loc_minus, Branch::Pos),
        (FixedPointId::SaddlePlus, loc_plus, Branch::Neg),
    ] {
        let jac = jacobian_on(params, &loc, branch);
        let (class, eigs) = classify_matrix(&jac);
        points.push(FixedPointInfo { id, location: loc, jacobian: jac, eigenvalues: eigs, class });
    }
    Ok(points)
}

/// Looks up one fixed point by id.
pub fn fixed_point(params: &ModelParams, id: FixedPointId) -> Result<FixedPointInfo> {
    fixed_points(params)?
        .into_iter()
        .find(|fp| fp.id == id)
        .ok_or_else(|| Error::Internal("fixed point list incomplete".into()))
}

/// Mobility regime of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Low,
    Moderate,
    High,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::Low => "low",
            Regime::Moderate => "moderate",
            Regime::High => "high",
        };
        write!(f, "{s}")
    }
}

/// Classifies the mobility regime.
///
/// Constant mobility: `Low` iff `mu <= lambda^2 / 8`, else `High`. Crowding
/// adds a `Moderate` band between `lambda^2 / 8` and the critical mobility
/// `mu_hat`, which must be supplied by the caller (the phase layer computes
/// it from the stable-manifold crossing).
pub fn classify_regime(params: &ModelParams, mu_hat: Option<f64>) -> Result<Regime> {
    let threshold = params.low_mobility_threshold();
    match params.mobility {
        MobilitySpec::Constant { mu } => {
            Ok(if mu <= threshold { Regime::Low } else { Regime::High })
        }
        MobilitySpec::Crowding { mu, .. } => {
            if mu <= threshold {
                Ok(Regime::Low)
            } else {
                let mu_hat = mu_hat.ok_or_else(|| {
                    Error::InvalidParams(
                        "crowding regime above lambda^2/8 requires a mu_hat value".into(),
                    )
                })?;
                Ok(if mu <= mu_hat { Regime::Moderate } else { Regime::High })
            }
        }
        MobilitySpec::Generic { .. } => Err(Error::InvalidParams(
            "regime classification is defined for constant and crowding mobility".into(),
        )),
    }
}

/// The `dz = 0` nullcline of the constant-mobility model:
/// `m = -((mu/2) z|z| + lambda z) / 2`.
pub fn nullcline_m(params: &ModelParams, z: f64) -> Result<f64> {
    match params.mobility {
        MobilitySpec::Constant { mu } => {
            Ok(-(0.5 * mu * z * z.abs() + params.lambda * z) / 2.0)
        }
        _ => Err(Error::InvalidParams(
            "closed-form nullcline is defined for constant mobility; use nullcline_m_roots".into(),
        )),
    }
}

/// Solves `dz = 0` for `m` at a given `z` for any mobility spec. The crowding
/// form is linear in `m` (one root); generic specs are scanned and bisected
/// on `m_range`, possibly yielding several roots.
pub fn nullcline_m_roots(params: &ModelParams, z: f64, m_range: (f64, f64)) -> Vec<f64> {
    match params.mobility {
        MobilitySpec::Constant { .. } => vec![nullcline_m(params, z).expect("constant spec")],
        MobilitySpec::Crowding { mu, epsilon } => {
            // (mu/2) z|z| + lambda z + m (mu eps z^2 / 2 + 2) = 0
            let coeff = 0.5 * mu * epsilon * z * z + 2.0;
            vec![-(0.5 * mu * z * z.abs() + params.lambda * z) / coeff]
        }
        MobilitySpec::Generic { .. } => {
            let g = |m: f64| {
                let p = PhasePoint::new(z, m);
                vector_field(params, &p).0
            };
            let n = 400;
            let (lo, hi) = m_range;
            let mut roots = Vec::new();
            let mut prev_m = lo;
            let mut prev_g = g(lo);
            for i in 1..=n {
                let m = lo + (hi - lo) * i as f64 / n as f64;
                let gm = g(m);
                if prev_g == 0.0 {
                    roots.push(prev_m);
                } else if prev_g * gm < 0.0 {
                    let (mut x0, mut x1) = (prev_m, m);
                    let mut g0 = prev_g;
                    for _ in 0..80 {
                        let mid = 0.5 * (x0 + x1);
                        let gmid = g(mid);
                        if g0 * gmid <= 0.0 {
                            x1 = mid;
                        } else {
                            x0 = mid;
                            g0 = gmid;
                        }
                    }
                    roots.push(0.5 * (x0 + x1));
                }
                prev_m = m;
                prev_g = gm;
            }
            roots
        }
    }
}

/// Branch selector for the convexity curves `phi^+` / `phi^-`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiBranch {
    Plus,
    Minus,
}

/// Convexity curve `phi^{+-}(z) = -(z/4) [lambda -+ sqrt(lambda^2 - 8 mu +
/// 6 lambda mu z + 4 mu^2 z^2)]` of the constant-mobility model on `z >= 0`;
/// `None` where the discriminant is negative. Values for `z < 0` follow by
/// reflection through the origin.
pub fn phi_pm(params: &ModelParams, z: f64, branch: PhiBranch) -> Result<Option<f64>> {
    let mu = match params.mobility {
        MobilitySpec::Constant { mu } => mu,
        _ => {
            return Err(Error::InvalidParams(
                "convexity curves are defined for constant mobility only".into(),
            ))
        }
    };
    if z < 0.0 {
        return Err(Error::OutOfRange(format!(
            "phi is defined for z >= 0 (got {z}); reflect through the origin for z < 0"
        )));
    }
    let lambda = params.lambda;
    let disc = lambda * lambda - 8.0 * mu + 6.0 * lambda * mu * z + 4.0 * mu * mu * z * z;
    if disc < 0.0 {
        return Ok(None);
    }
    let sqrt_disc = disc.sqrt();
    let bracket = match branch {
        PhiBranch::Plus => lambda - sqrt_disc,
        PhiBranch::Minus => lambda + sqrt_disc,
    };
    Ok(Some(-(z / 4.0) * bracket))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant(lambda: f64, mu: f64) -> ModelParams {
        ModelParams::constant(lambda, mu).unwrap()
    }

    fn crowding(lambda: f64, mu: f64, epsilon: f64) -> ModelParams {
        ModelParams::crowding(lambda, mu, epsilon).unwrap()
    }

    #[test]
    fn mobility_eval_closed_forms() {
        let c = MobilitySpec::constant(0.1).unwrap();
        assert_eq!(c.eval(Spin::Plus, 0.7).unwrap(), 0.1);
        let k = MobilitySpec::crowding(4.6, 0.5).unwrap();
        assert_relative_eq!(k.eval(Spin::Plus, 1.0).unwrap(), 6.9, max_relative = 1e-14);
        assert_relative_eq!(k.eval(Spin::Minus, 1.0).unwrap(), 2.3, max_relative = 1e-14);
    }

    #[test]
    fn mobility_rejects_negative_spec() {
        // sigma a + b dips below zero: a = 2, b = 1 gives mu(-1, m) = -1.
        let a: ScalarFn = Arc::new(|_| 2.0);
        let b: ScalarFn = Arc::new(|_| 1.0);
        assert!(matches!(MobilitySpec::generic(a, b), Err(Error::InvalidMobility(_))));
        assert!(MobilitySpec::crowding(1.0, 1.5).is_err());
        assert!(MobilitySpec::constant(-0.5).is_err());
    }

    #[test]
    fn field_vanishes_at_origin_and_saddles() {
        let params = constant(1.0, 0.1);
        assert_eq!(vector_field(&params, &PhasePoint::ORIGIN), (0.0, 0.0));

        // Root of (mu/2) z^2 + lambda z - 2 = 0 on z > 0, m = -1.
        let z_star = ((1.0f64 + 0.4).sqrt() - 1.0) / 0.1;
        let p = PhasePoint::new(1.832159566, -1.0);
        assert_relative_eq!(z_star, p.z, epsilon = 1e-9);
        let (dz, dm) = vector_field(&params, &p);
        assert!(dz.hypot(dm) <= 1e-9, "field norm {}", dz.hypot(dm));
    }

    #[test]
    fn crowding_saddle_example() {
        let params = crowding(0.5, 4.6, 0.5);
        // z* = (lambda - sqrt(lambda^2 + 4 mu (1 - eps))) / (mu (1 - eps)) at m = 1.
        let z_star = (0.5 - 9.45f64.sqrt()) / 2.3;
        assert_relative_eq!(z_star, -1.1191675, epsilon = 1e-7);
        let p = PhasePoint::new(-1.1191675, 1.0);
        let (dz, dm) = vector_field(&params, &p);
        assert!(dz.hypot(dm) <= 1e-6);
    }

    #[test]
    fn jacobian_entry_example() {
        let params = constant(1.0, 1.0);
        let j = jacobian(&params, &PhasePoint::new(1.0, 0.0)).unwrap();
        assert_relative_eq!(j[0][0], 2.0, epsilon = 1e-14); // mu|z| + lambda
    }

    #[test]
    fn jacobian_rejects_nonsmooth_point() {
        let params = constant(1.0, 1.0);
        assert!(matches!(
            jacobian(&params, &PhasePoint::new(0.0, 0.5)),
            Err(Error::NonsmoothPoint { .. })
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let params = crowding(0.7, 2.3, 0.4);
        let h = 1e-6;
        for &(z, m) in &[(0.8, 0.3), (-1.2, -0.6), (0.05, 0.9), (-0.4, 0.0)] {
            let p = PhasePoint::new(z, m);
            let j = jacobian(&params, &p).unwrap();
            let fd = |dz: f64, dm: f64| {
                let hi = vector_field(&params, &PhasePoint::new(z + dz, m + dm));
                let lo = vector_field(&params, &PhasePoint::new(z - dz, m - dm));
                [(hi.0 - lo.0) / (2.0 * (dz + dm)), (hi.1 - lo.1) / (2.0 * (dz + dm))]
            };
            let col_z = fd(h, 0.0);
            let col_m = fd(0.0, h);
            let scale = j.iter().flatten().fold(1.0f64, |acc, v| acc.max(v.abs()));
            assert!((j[0][0] - col_z[0]).abs() <= 1e-5 * scale);
            assert!((j[1][0] - col_z[1]).abs() <= 1e-5 * scale);
            assert!((j[0][1] - col_m[0]).abs() <= 1e-5 * scale);
            assert!((j[1][1] - col_m[1]).abs() <= 1e-5 * scale);
        }
    }

    #[test]
    fn origin_linearization_eigenvalues() {
        let eig = |lambda: f64, mu: f64| {
            let params = constant(lambda, mu);
            let m = origin_linearization(&params).unwrap();
            eigenvalues_2x2(&m)
        };

        let e = eig(1.0, 0.1);
        let mut re: Vec<f64> = e.iter().map(|c| c.re).collect();
        re.sort_by(f64::total_cmp);
        assert_relative_eq!(re[0], 0.2763932, epsilon = 1e-7);
        assert_relative_eq!(re[1], 0.7236068, epsilon = 1e-7);
        assert!(e.iter().all(|c| c.im == 0.0));

        let e = eig(1.0, 1.0);
        assert_relative_eq!(e[0].re, 0.5, epsilon = 1e-12);
        assert_relative_eq!(e[0].im.abs(), 1.3228757, epsilon = 1e-7);

        let e = eig(1.0, 0.125);
        assert_relative_eq!(e[0].re, 0.5, epsilon = 1e-12);
        assert_relative_eq!(e[1].re, 0.5, epsilon = 1e-12);
        assert_eq!(e[0].im, 0.0);
    }

    #[test]
    fn origin_linearization_requires_odd_a() {
        let a: ScalarFn = Arc::new(|_| 0.5);
        let b: ScalarFn = Arc::new(|_| 2.0);
        let params = ModelParams::new(1.0, MobilitySpec::generic(a, b).unwrap()).unwrap();
        assert!(matches!(
            origin_linearization(&params),
            Err(Error::UnsupportedLinearization { .. })
        ));
    }

    #[test]
    fn divergence_examples() {
        let params = constant(1.0, 0.1);
        assert_relative_eq!(divergence(&params, &PhasePoint::new(0.3, 0.2)), 1.0, epsilon = 1e-12);

        let params = crowding(0.5, 4.6, 0.5);
        // lambda - eps mu (|z| + m z) at (1, 0.5).
        assert_relative_eq!(divergence(&params, &PhasePoint::new(1.0, 0.5)), -2.95, epsilon = 1e-12);
        // The |z|, z -> 0 limit leaves lambda.
        assert_relative_eq!(divergence(&params, &PhasePoint::new(1e-13, 0.0)), 0.5, epsilon = 1e-10);
    }

    #[test]
    fn constant_divergence_is_lambda_everywhere() {
        let params = constant(1.3, 0.7);
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            // xorshift64*; plenty for a grid check
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            (state.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..10_000 {
            let z = 100.0 * next() - 50.0;
            let m = 2.1 * next() - 1.05;
            let div = divergence(&params, &PhasePoint::new(z, m));
            assert!((div - 1.3).abs() <= 1e-10, "divergence {div} at ({z}, {m})");
        }
    }

    #[test]
    fn odd_symmetry_on_grid() {
        for params in [constant(1.0, 0.6), crowding(0.5, 4.6, 0.5)] {
            for i in 0..40 {
                for j in 0..40 {
                    let z = -4.0 + 8.0 * i as f64 / 39.0;
                    let m = -1.0 + 2.0 * j as f64 / 39.0;
                    let (dz, dm) = vector_field(&params, &PhasePoint::new(z, m));
                    let (rz, rm) = vector_field(&params, &PhasePoint::new(-z, -m));
                    assert!((dz + rz).abs() <= 1e-12 * (1.0 + dz.abs()));
                    assert!((dm + rm).abs() <= 1e-12 * (1.0 + dm.abs()));
                }
            }
        }
    }

    #[test]
    fn nullcline_examples() {
        let params = constant(1.0, 0.1);
        assert_eq!(nullcline_m(&params, 0.0).unwrap(), 0.0);
        assert_relative_eq!(nullcline_m(&params, 1.0).unwrap(), -0.525, epsilon = 1e-14);
        assert_relative_eq!(nullcline_m(&params, -1.0).unwrap(), 0.525, epsilon = 1e-14);

        // Root-finder variant agrees with the closed form for crowding.
        let params = crowding(0.5, 4.6, 0.5);
        for z in [-1.0, -0.2, 0.4, 1.3] {
            let roots = nullcline_m_roots(&params, z, (-2.0, 2.0));
            assert_eq!(roots.len(), 1);
            let p = PhasePoint::new(z, roots[0]);
            assert!(vector_field(&params, &p).0.abs() <= 1e-10);
        }
    }

    #[test]
    fn phi_examples() {
        let params = constant(1.0, 0.125);
        assert_eq!(phi_pm(&params, 0.0, PhiBranch::Plus).unwrap(), Some(0.0));
        assert_eq!(phi_pm(&params, 0.0, PhiBranch::Minus).unwrap(), Some(0.0));

        let params = constant(1.0, 1.0);
        assert_eq!(phi_pm(&params, 0.0, PhiBranch::Plus).unwrap(), None);

        let params = constant(1.0, 0.1);
        assert_eq!(phi_pm(&params, 0.0, PhiBranch::Plus).unwrap(), Some(0.0));
        assert_eq!(phi_pm(&params, 0.0, PhiBranch::Minus).unwrap(), Some(0.0));
    }

    #[test]
    fn fixed_points_constant_low() {
        let params = constant(1.0, 0.1);
        let fps = fixed_points(&params).unwrap();
        assert_eq!(fps.len(), 3);
        assert_eq!(fps[0].id, FixedPointId::Origin);
        assert_eq!(fps[0].class, StabilityClass::UnstableNode);

        let q = &fps[1];
        assert_eq!(q.class, StabilityClass::Saddle);
        assert_relative_eq!(q.location.z, 1.832159566, epsilon = 1e-9);
        assert_eq!(q.location.m, -1.0);

        let p = &fps[2];
        assert_eq!(p.class, StabilityClass::Saddle);
        // Exact reflection.
        assert_eq!(p.location.z, -q.location.z);
        assert_eq!(p.location.m, 1.0);

        for fp in &fps {
            assert!(field_norm(&params, &fp.location) <= 1e-9);
        }
    }

    #[test]
    fn fixed_points_constant_high_origin_spirals() {
        let fps = fixed_points(&constant(1.0, 1.0)).unwrap();
        assert_eq!(fps[0].class, StabilityClass::UnstableSpiral);
        assert_eq!(fps[1].class, StabilityClass::Saddle);
    }

    #[test]
    fn fixed_points_crowding() {
        let params = crowding(0.5, 4.6, 0.5);
        let fps = fixed_points(&params).unwrap();
        let p = fps.iter().find(|f| f.id == FixedPointId::SaddlePlus).unwrap();
        assert_relative_eq!(p.location.z, -1.1191675, epsilon = 1e-6);
        assert_eq!(p.location.m, 1.0);
        assert_eq!(p.class, StabilityClass::Saddle);
        assert!(field_norm(&params, &p.location) <= 1e-9);
    }

    #[test]
    fn crowding_saddle_at_full_crowding_is_minus_two_over_lambda() {
        for lambda in [0.5, 1.0, 2.0] {
            let params = crowding(lambda, 3.0, 1.0);
            let fps = fixed_points(&params).unwrap();
            let p = fps.iter().find(|f| f.id == FixedPointId::SaddlePlus).unwrap();
            assert_relative_eq!(p.location.z, -2.0 / lambda, epsilon = 1e-9);
        }
    }

    #[test]
    fn regime_classification() {
        assert_eq!(classify_regime(&constant(1.0, 0.1), None).unwrap(), Regime::Low);
        assert_eq!(classify_regime(&constant(1.0, 0.125), None).unwrap(), Regime::Low);
        assert_eq!(classify_regime(&constant(1.0, 1.0), None).unwrap(), Regime::High);
        let mu_hat = Some(4.558);
        assert_eq!(classify_regime(&crowding(0.5, 4.6, 0.5), mu_hat).unwrap(), Regime::High);
        assert_eq!(classify_regime(&crowding(0.5, 2.0, 0.5), mu_hat).unwrap(), Regime::Moderate);
        assert_eq!(classify_regime(&crowding(0.5, 0.01, 0.5), None).unwrap(), Regime::Low);
        assert!(classify_regime(&crowding(0.5, 2.0, 0.5), None).is_err());
    }

    #[test]
    fn origin_eigenvalue_type_flips_at_threshold() {
        // Bisection on mu recovers lambda^2/8 to 1e-9.
        for lambda in [0.5, 1.0, 2.0] {
            let is_complex = |mu: f64| {
                let params = constant(lambda, mu);
                let m = origin_linearization(&params).unwrap();
                eigenvalues_2x2(&m)[0].im != 0.0
            };
            let (mut lo, mut hi) = (1e-6, lambda * lambda);
            assert!(!is_complex(lo) && is_complex(hi));
            while hi - lo > 1e-12 {
                let mid = 0.5 * (lo + hi);
                if is_complex(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert!((0.5 * (lo + hi) - lambda * lambda / 8.0).abs() <= 1e-9);
        }
    }
}
