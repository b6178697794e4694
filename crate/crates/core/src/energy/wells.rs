use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat2, Vec2};

/// The two martensitic wells `SO(2)U0 ∪ SO(2)U1` with `U0 = diag(a, b)`,
/// `U1 = diag(b, a)` and `ab = 1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WellSystem {
    pub a: f64,
    pub b: f64,
    pub u0: Mat2,
    pub u1: Mat2,
    /// Rotation with `U0 - Q U1` rank one, normal `(1,1)/√2`.
    pub q: Mat2,
    /// Rotation with `U0 - Q̃ U1` rank one, normal `(1,-1)/√2`.
    pub q_tilde: Mat2,
    /// `dist(SO(2)U0, SO(2)U1)`.
    pub cbar: f64,
}

/// Labels for the well matrices that appear in laminates and profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WellLabel {
    U0,
    QU1,
    QtU1,
}

impl WellLabel {
    pub fn name(self) -> &'static str {
        match self {
            WellLabel::U0 => "U0",
            WellLabel::QU1 => "QU1",
            WellLabel::QtU1 => "QtU1",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "U0" | "u0" => Some(WellLabel::U0),
            "QU1" | "qu1" => Some(WellLabel::QU1),
            "QtU1" | "qtu1" => Some(WellLabel::QtU1),
            _ => None,
        }
    }
}

/// Orientation of a diagonal interface or parallelogram family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    /// `(±1, 1)`, the interface normal used by the profiles `v^±`.
    pub fn normal(self) -> Vec2 {
        match self {
            Sign::Plus => Vec2::new(1.0, 1.0),
            Sign::Minus => Vec2::new(-1.0, 1.0),
        }
    }

    pub fn unit_normal(self) -> Vec2 {
        self.normal() / 2f64.sqrt()
    }

    pub fn as_char(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "+" | "plus" | "Plus" => Some(Sign::Plus),
            "-" | "minus" | "Minus" => Some(Sign::Minus),
            _ => None,
        }
    }
}

impl WellSystem {
    /// Builds the wells for stretch `a` (with `b = 1/a`).
    pub fn new(a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Domain(format!("stretch a must be positive, got {a}")));
        }
        let b = 1.0 / a;
        if (a - b).abs() < 1e-9 {
            return Err(Error::Domain("a = 1 gives coinciding wells".into()));
        }
        let u0 = Mat2::new(a, 0.0, 0.0, b);
        let u1 = Mat2::new(b, 0.0, 0.0, a);
        let k = (a * a - b * b) / (a * a + b * b);
        let ones = Vec2::new(1.0, 1.0);
        let alt = Vec2::new(1.0, -1.0);
        // U0 - Q U1 = k (a,-b) ⊗ (1,1) and U0 - Q̃ U1 = k (a,b) ⊗ (1,-1)
        let qu1 = u0 - k * Vec2::new(a, -b) * ones.transpose();
        let qtu1 = u0 - k * Vec2::new(a, b) * alt.transpose();
        let u1_inv = Mat2::new(1.0 / b, 0.0, 0.0, 1.0 / a);
        let q = qu1 * u1_inv;
        let q_tilde = qtu1 * u1_inv;
        for (name, r) in [("Q", &q), ("Q~", &q_tilde)] {
            let orth = (r.transpose() * r - Mat2::identity()).norm();
            if orth > 1e-12 || (r.determinant() - 1.0).abs() > 1e-12 {
                return Err(Error::Structural(format!(
                    "{name} recovered from the rank-one relation is not a rotation (defect {orth:e})"
                )));
            }
        }
        let cbar = 2f64.sqrt() * (a - b).abs();
        Ok(WellSystem { a, b, u0, u1, q, q_tilde, cbar })
    }

    /// `F_λ = λ U0 + (1-λ) Q U1`.
    pub fn f_lambda(&self, lambda: f64) -> Mat2 {
        lambda * self.u0 + (1.0 - lambda) * self.q * self.u1
    }

    pub fn matrix(&self, label: WellLabel) -> Mat2 {
        match label {
            WellLabel::U0 => self.u0,
            WellLabel::QU1 => self.q * self.u1,
            WellLabel::QtU1 => self.q_tilde * self.u1,
        }
    }

    pub fn dist_u0(&self, f: &Mat2) -> f64 {
        linalg::dist_to_well(f, &self.u0)
    }

    pub fn dist_u1(&self, f: &Mat2) -> f64 {
        linalg::dist_to_well(f, &self.u1)
    }

    /// `dist(F, K)` with `K = SO(2)U0 ∪ SO(2)U1`.
    pub fn dist_to_k(&self, f: &Mat2) -> f64 {
        self.dist_u0(f).min(self.dist_u1(f))
    }

    /// Rank-one defect of `V1 - V2` against the interface normal of `sign`:
    /// `|(V1 - V2) t|` with `t` the unit tangent of the interface line.
    /// Zero means the piecewise-affine profile is continuous.
    pub fn rank_one_defect(&self, v1: &Mat2, v2: &Mat2, sign: Sign) -> f64 {
        let n = sign.unit_normal();
        let t = Vec2::new(-n.y, n.x);
        ((v1 - v2) * t).norm()
    }
}
