//! Dormand-Prince 5(4) embedded pair with a free 4th-order interpolant,
//! specialised to the two-dimensional phase plane.

pub type V2 = [f64; 2];

#[inline]
fn axpy(y: &V2, h: f64, k: &V2) -> V2 {
    [y[0] + h * k[0], y[1] + h * k[1]]
}

// Butcher tableau of DOPRI5.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Error weights b5 - b4.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense-output weights (Hairer's rcont5 stage).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

pub const STEP_SAFETY: f64 = 0.9;
pub const STEP_SHRINK_MIN: f64 = 0.2;
pub const STEP_GROW_MAX: f64 = 5.0;

/// Result of one attempted step of size `h` from `(t, y)`.
pub struct StepResult {
    /// 5th-order solution at `t + h`.
    pub y_new: V2,
    /// Derivative at `t + h` (FSAL stage, reusable as the next `k1`).
    pub k_new: V2,
    /// Scaled error-norm estimate; accept when `<= 1`.
    pub error: f64,
    /// Interpolant coefficients in monomial form: `y(theta) = sum c[i] theta^i`
    /// with `theta = (s - t) / h`, 4th order accurate on the step.
    pub dense: [[f64; 5]; 2],
}

/// Takes one DOPRI5 step; `f` is the RHS, `k1 = f(t, y)` is supplied by the
/// caller (FSAL chaining).
pub fn step<F: Fn(f64, &V2) -> V2>(
    f: &F,
    t: f64,
    y: &V2,
    k1: &V2,
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> StepResult {
    let k2 = f(t + h / 5.0, &axpy(y, h * A21, k1));
    let y3 = [
        y[0] + h * (A31 * k1[0] + A32 * k2[0]),
        y[1] + h * (A31 * k1[1] + A32 * k2[1]),
    ];
    let k3 = f(t + h * 3.0 / 10.0, &y3);
    let y4 = [
        y[0] + h * (A41 * k1[0] + A42 * k2[0] + A43 * k3[0]),
        y[1] + h * (A41 * k1[1] + A42 * k2[1] + A43 * k3[1]),
    ];
    let k4 = f(t + h * 4.0 / 5.0, &y4);
    let y5 = [
        y[0] + h * (A51 * k1[0] + A52 * k2[0] + A53 * k3[0] + A54 * k4[0]),
        y[1] + h * (A51 * k1[1] + A52 * k2[1] + A53 * k3[1] + A54 * k4[1]),
    ];
    let k5 = f(t + h * 8.0 / 9.0, &y5);
    let y6 = [
        y[0] + h * (A61 * k1[0] + A62 * k2[0] + A63 * k3[0] + A64 * k4[0] + A65 * k5[0]),
        y[1] + h * (A61 * k1[1] + A62 * k2[1] + A63 * k3[1] + A64 * k4[1] + A65 * k5[1]),
    ];
    let k6 = f(t + h, &y6);
    let y_new = [
        y[0] + h * (B1 * k1[0] + B3 * k3[0] + B4 * k4[0] + B5 * k5[0] + B6 * k6[0]),
        y[1] + h * (B1 * k1[1] + B3 * k3[1] + B4 * k4[1] + B5 * k5[1] + B6 * k6[1]),
    ];
    let k7 = f(t + h, &y_new);

    let mut err_sq = 0.0;
    let mut dense = [[0.0; 5]; 2];
    for i in 0..2 {
        let e = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
        err_sq += (e / sc) * (e / sc);

        let ydiff = y_new[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        let r1 = y[i];
        let r2 = ydiff;
        let r3 = bspl;
        let r4 = ydiff - h * k7[i] - bspl;
        let r5 = h
            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        // Nested form r1 + th(r2 + (1-th)(r3 + th(r4 + (1-th) r5))) expanded
        // into monomials of theta.
        dense[i] = [
            r1,
            r2 + r3,
            r4 + r5 - r3,
            -(r4 + 2.0 * r5),
            r5,
        ];
    }
    StepResult { y_new, k_new: k7, error: (err_sq / 2.0).sqrt(), dense }
}

/// Evaluates a monomial quartic at `theta`.
#[inline]
pub fn eval_poly(c: &[f64; 5], theta: f64) -> f64 {
    (((c[4] * theta + c[3]) * theta + c[2]) * theta + c[1]) * theta + c[0]
}

/// Re-parameterizes `p` so that `q(u) = p(t0 + s u)`.
pub fn poly_affine(p: &[f64; 5], t0: f64, s: f64) -> [f64; 5] {
    let mut c = [0.0; 5];
    for i in (0..5).rev() {
        // c <- c * (t0 + s u) + p[i]
        let mut nc = [0.0; 5];
        for j in 0..4 {
            nc[j + 1] += c[j] * s;
        }
        for j in 0..5 {
            nc[j] += c[j] * t0;
        }
        nc[0] += p[i];
        c = nc;
    }
    c
}

/// Initial step-size guess from the field magnitude at the start point.
pub fn initial_step(y: &V2, k: &V2, rel_tol: f64, abs_tol: f64, max_step: f64) -> f64 {
    let sc0 = abs_tol + rel_tol * y[0].abs();
    let sc1 = abs_tol + rel_tol * y[1].abs();
    let d0 = ((y[0] / sc0).powi(2) + (y[1] / sc1).powi(2)).sqrt() / 2f64.sqrt();
    let d1 = ((k[0] / sc0).powi(2) + (k[1] / sc1).powi(2)).sqrt() / 2f64.sqrt();
    let h = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * (d0 / d1) };
    h.min(max_step).max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_affine_matches_direct_evaluation() {
        let p = [1.0, -2.0, 0.5, 3.0, -0.25];
        let q = poly_affine(&p, 0.3, 0.45);
        for i in 0..=10 {
            let u = i as f64 / 10.0;
            let direct = eval_poly(&p, 0.3 + 0.45 * u);
            assert!((eval_poly(&q, u) - direct).abs() <= 1e-14);
        }
    }

    #[test]
    fn dense_output_is_accurate_on_a_smooth_problem() {
        // y' = (y1, -y0), the circle; exact solution known.
        let f = |_t: f64, y: &V2| [y[1], -y[0]];
        let y0 = [1.0, 0.0];
        let k1 = f(0.0, &y0);
        let h = 0.2;
        let r = step(&f, 0.0, &y0, &k1, h, 1e-12, 1e-12);
        for i in 0..=20 {
            let theta = i as f64 / 20.0;
            let t = theta * h;
            let exact = [t.cos(), -t.sin()];
            for d in 0..2 {
                assert!(
                    (eval_poly(&r.dense[d], theta) - exact[d]).abs() < 1e-9,
                    "dense output error at theta {theta}"
                );
            }
        }
        assert!((r.y_new[0] - h.cos()).abs() < 1e-12);
    }
}
