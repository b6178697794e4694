//! Small 2×2 helpers on top of `nalgebra`.

use nalgebra::{Matrix2, Vector2};

pub type Mat2 = Matrix2<f64>;
pub type Vec2 = Vector2<f64>;

pub fn rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// Optimal rotation `R` minimizing `|F - R U|_F` together with the minimum.
///
/// With `M = F Uᵀ`, `tr(Rᵀ M)` is maximized by the rotation aligned with
/// `(m11 + m22, m21 - m12)`.
pub fn best_rotation(f: &Mat2, u: &Mat2) -> (Mat2, f64) {
    let m = f * u.transpose();
    let p = m[(0, 0)] + m[(1, 1)];
    let q = m[(1, 0)] - m[(0, 1)];
    let r = p.hypot(q);
    let rot = if r > 0.0 {
        Mat2::new(p / r, -q / r, q / r, p / r)
    } else {
        Mat2::identity()
    };
    // evaluated directly rather than as |F|² + |U|² - 2r, which cancels near the well
    let d2 = (f - rot * u).norm_squared();
    (rot, d2)
}

/// `dist(F, SO(2) U)` in the Frobenius norm.
pub fn dist_to_well(f: &Mat2, u: &Mat2) -> f64 {
    best_rotation(f, u).1.sqrt()
}

/// `dist(F, SO(2))` from signed singular values:
/// `(σ₁-1)² + (σ₂∓1)²` with the sign of `det F`.
pub fn dist_to_so2(f: &Mat2) -> f64 {
    let svd = f.svd(false, false);
    let (s1, s2) = (svd.singular_values[0], svd.singular_values[1]);
    let (hi, lo) = if s1 >= s2 { (s1, s2) } else { (s2, s1) };
    let d2 = if f.determinant() >= 0.0 {
        (hi - 1.0).powi(2) + (lo - 1.0).powi(2)
    } else {
        (hi - 1.0).powi(2) + (lo + 1.0).powi(2)
    };
    d2.sqrt()
}

/// Matrix with columns `c1`, `c2`.
pub fn from_columns(c1: &Vec2, c2: &Vec2) -> Mat2 {
    Mat2::new(c1.x, c2.x, c1.y, c2.y)
}

pub fn det_columns(e1: &Vec2, e2: &Vec2) -> f64 {
    e1.x * e2.y - e1.y * e2.x
}

/// Smallest singular value of a 2×2 matrix.
pub fn smallest_singular_value(m: &Mat2) -> f64 {
    let sv = m.svd(false, false).singular_values;
    sv[0].min(sv[1])
}
