//! Minimal 2x2 linear algebra for Jacobians and eigen decompositions.

use num_complex::Complex64;

/// Row-major 2x2 real matrix.
pub type Mat2 = [[f64; 2]; 2];

/// Eigenvalue pair of a real 2x2 matrix.
pub fn eigenvalues_2x2(m: &Mat2) -> [Complex64; 2] {
    let trace = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = trace * trace - 4.0 * det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [
            Complex64::new(0.5 * (trace + s), 0.0),
            Complex64::new(0.5 * (trace - s), 0.0),
        ]
    } else {
        let s = (-disc).sqrt();
        [
            Complex64::new(0.5 * trace, 0.5 * s),
            Complex64::new(0.5 * trace, -0.5 * s),
        ]
    }
}

/// Solves `m x = rhs`; `None` when the matrix is numerically singular.
pub fn solve_2x2(m: &Mat2, rhs: &[f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if det.abs() <= 1e-300 || det.abs() < 1e-14 * scale * scale {
        return None;
    }
    Some([
        (rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det,
        (rhs[1] * m[0][0] - rhs[0] * m[1][0]) / det,
    ])
}
