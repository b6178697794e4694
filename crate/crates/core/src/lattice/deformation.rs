use std::sync::Arc;

use crate::energy::WellSystem;
use crate::error::{Error, Result};
use crate::lattice::domain::{LatticeDomain, Role, TriangleKind, NONE};
use crate::linalg::{Mat2, Vec2};

/// How a node may move during minimization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    Free,
    /// Position equals its anchor.
    Fixed,
    /// Position equals its anchor plus the shared translation `c`.
    Translated,
}

/// Node positions on a lattice domain, with the shared translation and per-node constraints.
#[derive(Clone, Debug)]
pub struct Deformation {
    domain: Arc<LatticeDomain>,
    positions: Vec<Vec2>,
    translation: Vec2,
    lambda: f64,
    constraints: Vec<Constraint>,
    anchors: Vec<Vec2>,
}

#[derive(Clone, Debug, Default)]
pub struct AdmissibilityReport {
    /// Indices into `LatticeDomain::triangles` with non-positive determinant.
    pub violations: Vec<usize>,
    pub min_det: f64,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Deformation {
    /// All nodes free, positions `f(x)`.
    pub fn from_fn(domain: Arc<LatticeDomain>, mut f: impl FnMut(Vec2) -> Vec2) -> Self {
        let m = domain.num_nodes();
        let positions = (0..m).map(|k| f(domain.point(k))).collect();
        Deformation {
            domain,
            positions,
            translation: Vec2::zeros(),
            lambda: 0.0,
            constraints: vec![Constraint::Free; m],
            anchors: vec![Vec2::zeros(); m],
        }
    }

    pub fn affine(domain: Arc<LatticeDomain>, f: Mat2, b: Vec2) -> Self {
        Deformation::from_fn(domain, |x| f * x + b)
    }

    pub fn from_positions(domain: Arc<LatticeDomain>, positions: Vec<Vec2>) -> Result<Self> {
        if positions.len() != domain.num_nodes() {
            return Err(Error::Structural(format!(
                "expected {} node positions, got {}",
                domain.num_nodes(),
                positions.len()
            )));
        }
        let m = positions.len();
        Ok(Deformation {
            domain,
            positions,
            translation: Vec2::zeros(),
            lambda: 0.0,
            constraints: vec![Constraint::Free; m],
            anchors: vec![Vec2::zeros(); m],
        })
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn position(&self, k: usize) -> Vec2 {
        self.positions[k]
    }

    pub fn translation(&self) -> Vec2 {
        self.translation
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn anchors(&self) -> &[Vec2] {
        &self.anchors
    }

    /// Clamp the boundary layers to `F_λ x` (left) and `F_λ x + c` (right), ghosts included.
    /// Free-ended domains only record `λ` and `c`.
    pub fn apply_boundary(&mut self, wells: &WellSystem, lambda: f64, c: Vec2) -> Result<()> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda = {lambda} outside [0, 1]")));
        }
        let f = wells.f_lambda(lambda);
        self.lambda = lambda;
        self.translation = c;
        for k in 0..self.domain.num_nodes() {
            let x = self.domain.point(k);
            match self.domain.role(k) {
                Role::LeftBc | Role::LeftGhost => self.pin(k, Constraint::Fixed, f * x),
                Role::RightBc | Role::RightGhost => self.pin(k, Constraint::Translated, f * x),
                _ => {}
            }
        }
        Ok(())
    }

    /// Constrain node `k` to `anchor` (plus `c` if translated) and move it there.
    pub fn pin(&mut self, k: usize, constraint: Constraint, anchor: Vec2) {
        self.constraints[k] = constraint;
        self.anchors[k] = anchor;
        self.positions[k] = match constraint {
            Constraint::Free => self.positions[k],
            Constraint::Fixed => anchor,
            Constraint::Translated => anchor + self.translation,
        };
    }

    pub fn set_lambda(&mut self, lambda: f64) {
        self.lambda = lambda;
    }

    /// Update `c` and move every translated node with it.
    pub fn set_translation(&mut self, c: Vec2) {
        self.translation = c;
        for k in 0..self.positions.len() {
            if self.constraints[k] == Constraint::Translated {
                self.positions[k] = self.anchors[k] + c;
            }
        }
    }

    /// Overwrite the position of a free node; constrained nodes are left untouched.
    pub fn set_free_position(&mut self, k: usize, p: Vec2) {
        if self.constraints[k] == Constraint::Free {
            self.positions[k] = p;
        }
    }

    /// Flat vector of free coordinates followed by `c` when any node is translated.
    pub fn free_dofs(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (k, p) in self.positions.iter().enumerate() {
            if self.constraints[k] == Constraint::Free {
                out.push(p.x);
                out.push(p.y);
            }
        }
        if self.has_translated() {
            out.push(self.translation.x);
            out.push(self.translation.y);
        }
        out
    }

    pub fn set_free_dofs(&mut self, x: &[f64]) {
        let mut it = 0;
        for k in 0..self.positions.len() {
            if self.constraints[k] == Constraint::Free {
                self.positions[k] = Vec2::new(x[it], x[it + 1]);
                it += 2;
            }
        }
        if self.has_translated() {
            self.set_translation(Vec2::new(x[it], x[it + 1]));
        }
    }

    pub fn has_translated(&self) -> bool {
        self.constraints.contains(&Constraint::Translated)
    }

    /// Rigid motion `y ↦ R y + b` of the image; anchors and `c` move consistently.
    pub fn map_image(&mut self, r: &Mat2, b: Vec2) {
        for p in &mut self.positions {
            *p = r * *p + b;
        }
        for (k, a) in self.anchors.iter_mut().enumerate() {
            match self.constraints[k] {
                Constraint::Free => {}
                _ => *a = r * *a + b,
            }
        }
        self.translation = r * self.translation;
        for k in 0..self.positions.len() {
            match self.constraints[k] {
                Constraint::Fixed => self.positions[k] = self.anchors[k],
                Constraint::Translated => self.positions[k] = self.anchors[k] + self.translation,
                Constraint::Free => {}
            }
        }
    }

    /// Constraint consistency and finiteness of every position.
    pub fn validate(&self) -> Result<()> {
        if self.positions.len() != self.domain.num_nodes() {
            return Err(Error::Structural("position count does not match domain".into()));
        }
        for (k, p) in self.positions.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::Structural(format!("node {:?} has non-finite position", self.domain.nodes()[k])));
            }
            let ok = match self.constraints[k] {
                Constraint::Free => true,
                Constraint::Fixed => *p == self.anchors[k],
                Constraint::Translated => *p == self.anchors[k] + self.translation,
            };
            if !ok {
                return Err(Error::Structural(format!(
                    "node {:?} violates its {:?} constraint",
                    self.domain.nodes()[k],
                    self.constraints[k]
                )));
            }
        }
        Ok(())
    }

    /// Signed area determinant of triangle `t` in canonical vertex order.
    pub fn triangle_det(&self, t: usize) -> f64 {
        let [p, q, r] = self.domain.triangles()[t].vertices.map(|v| self.positions[v as usize]);
        let e = q - p;
        let f = r - p;
        e.x * f.y - e.y * f.x
    }

    /// Constant gradient of triangle `t` (columns `∂₁`, `∂₂`).
    pub fn triangle_gradient(&self, t: usize) -> Mat2 {
        let tri = &self.domain.triangles()[t];
        let n = self.domain.nf();
        let [p, q, r] = tri.vertices.map(|v| self.positions[v as usize]);
        match tri.kind {
            TriangleKind::Up => Mat2::from_columns(&[(q - p) * n, (r - p) * n]),
            TriangleKind::Down => Mat2::from_columns(&[(p - q) * n, (p - r) * n]),
        }
    }

    pub fn admissibility(&self) -> AdmissibilityReport {
        let mut rep = AdmissibilityReport { violations: Vec::new(), min_det: f64::INFINITY };
        for t in 0..self.domain.triangles().len() {
            let d = self.triangle_det(t);
            rep.min_det = rep.min_det.min(d);
            if !(d > 0.0) {
                rep.violations.push(t);
            }
        }
        rep
    }

    pub fn is_admissible(&self) -> bool {
        (0..self.domain.triangles().len()).all(|t| self.triangle_det(t) > 0.0)
    }

    /// Node gradient `∇u^{ij}` (from `Δ⁺_{ij}`, or the first incident triangle).
    pub fn node_gradient(&self, k: usize) -> Option<Mat2> {
        let legs = self.domain.node_legs(k)?;
        let n = self.domain.nf();
        let h = self.positions[legs.horizontal[1] as usize] - self.positions[legs.horizontal[0] as usize];
        let v = self.positions[legs.vertical[1] as usize] - self.positions[legs.vertical[0] as usize];
        Some(Mat2::from_columns(&[h * n, v * n]))
    }

    /// Piecewise-affine interpolant on the real triangles.
    pub fn interpolate(&self, x: Vec2) -> Result<Vec2> {
        let dom = &self.domain;
        let n = dom.nf();
        let (gx, gy) = (x.x * n, x.y * n);
        let (i0, j0) = (gx.floor() as i32, gy.floor() as i32);
        let tol = 1e-9;
        for di in [0, -1, 1] {
            for dj in [0, -1, 1] {
                let (ci, cj) = (i0 + di, j0 + dj);
                let (fx, fy) = (gx - ci as f64, gy - cj as f64);
                // lower-left triangle Δ⁺_{ci,cj}
                let lower = [dom.index_of(ci, cj), dom.index_of(ci + 1, cj), dom.index_of(ci, cj + 1)];
                if fx >= -tol && fy >= -tol && fx + fy <= 1.0 + tol && lower.iter().all(|&v| dom.is_real(v)) {
                    let [p, q, r] = lower.map(|v| self.positions[v as usize]);
                    return Ok(p + (q - p) * fx + (r - p) * fy);
                }
                // upper-right triangle Δ⁻_{ci+1,cj+1}
                let upper = [dom.index_of(ci + 1, cj + 1), dom.index_of(ci, cj + 1), dom.index_of(ci + 1, cj)];
                let (gx1, gy1) = (1.0 - fx, 1.0 - fy);
                if gx1 >= -tol && gy1 >= -tol && gx1 + gy1 <= 1.0 + tol && upper.iter().all(|&v| v != NONE && dom.is_real(v)) {
                    let [p, q, r] = upper.map(|v| self.positions[v as usize]);
                    return Ok(p + (q - p) * gx1 + (r - p) * gy1);
                }
            }
        }
        Err(Error::Domain(format!("point ({}, {}) lies outside the triangulated domain", x.x, x.y)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::domain::Shape;
    use crate::linalg::rotation;
    use proptest::prelude::*;

    fn standard(n: u32) -> Arc<LatticeDomain> {
        Arc::new(LatticeDomain::standard(n).unwrap())
    }

    #[test]
    fn affine_gradient_is_exact() {
        let f = Mat2::new(1.3, -0.2, 0.4, 0.9);
        let u = Deformation::affine(standard(4), f, Vec2::new(0.1, 2.0));
        for t in 0..u.domain().triangles().len() {
            assert!((u.triangle_gradient(t) - f).norm() < 1e-12);
        }
        for k in 0..u.domain().num_real() {
            assert!((u.node_gradient(k).unwrap() - f).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_is_admissible_and_reflection_is_not() {
        let dom = standard(4);
        let id = Deformation::affine(dom.clone(), Mat2::identity(), Vec2::zeros());
        let rep = id.admissibility();
        assert!(rep.is_admissible());
        assert!((rep.min_det - 1.0 / 16.0).abs() < 1e-15);
        let refl = Deformation::affine(dom, Mat2::new(-1.0, 0.0, 0.0, 1.0), Vec2::zeros());
        assert_eq!(refl.admissibility().violations.len(), refl.domain().triangles().len());
    }

    #[test]
    fn boundary_clamps_and_translation_moves_right_end() {
        let w = WellSystem::new(2f64.sqrt()).unwrap();
        let dom = standard(4);
        let mut u = Deformation::affine(dom.clone(), Mat2::identity(), Vec2::zeros());
        let c = Vec2::new(0.25, -0.5);
        u.apply_boundary(&w, 0.5, c).unwrap();
        u.validate().unwrap();
        let f = w.f_lambda(0.5);
        for k in 0..dom.num_nodes() {
            let x = dom.point(k);
            match dom.role(k) {
                Role::LeftBc | Role::LeftGhost => assert_eq!(u.position(k), f * x),
                Role::RightBc | Role::RightGhost => assert_eq!(u.position(k), f * x + c),
                _ => assert_eq!(u.position(k), x),
            }
        }
        u.set_translation(Vec2::new(1.0, 1.0));
        u.validate().unwrap();
        assert!(u.apply_boundary(&w, 1.5, c).is_err());
    }

    #[test]
    fn dofs_round_trip() {
        let w = WellSystem::new(2f64.sqrt()).unwrap();
        let mut u = Deformation::affine(standard(4), Mat2::identity(), Vec2::zeros());
        u.apply_boundary(&w, 0.3, Vec2::new(0.1, 0.2)).unwrap();
        let x = u.free_dofs();
        let mut v = u.clone();
        v.set_free_dofs(&x);
        assert_eq!(u.positions(), v.positions());
        assert_eq!(u.translation(), v.translation());
    }

    #[test]
    fn interpolation_reproduces_affine_maps() {
        let f = Mat2::new(0.7, 0.1, -0.3, 1.2);
        let b = Vec2::new(0.5, 0.0);
        let u = Deformation::affine(standard(8), f, b);
        for x in [Vec2::new(0.0, 0.0), Vec2::new(-4.9, 0.95), Vec2::new(4.9, -0.99), Vec2::new(3.0, 1.0), Vec2::new(0.013, 0.377)] {
            let y = u.interpolate(x).unwrap();
            assert!((y - (f * x + b)).norm() < 1e-12, "{x:?}");
        }
        assert!(u.interpolate(Vec2::new(5.0, 1.0)).is_err());
        assert!(u.interpolate(Vec2::new(0.0, 1.5)).is_err());
    }

    #[test]
    fn missing_positions_are_structural_errors() {
        let dom = standard(4);
        let r = Deformation::from_positions(dom, vec![Vec2::zeros(); 3]);
        assert!(matches!(r, Err(Error::Structural(_))));
    }

    #[test]
    fn minus_domain_has_positive_triangles_under_identity() {
        let dom = Arc::new(LatticeDomain::new(Shape::new(1.0, 1.0, crate::energy::Sign::Minus), 6).unwrap());
        assert!(Deformation::affine(dom, Mat2::identity(), Vec2::zeros()).is_admissible());
    }

    proptest! {
        #[test]
        fn determinants_invariant_under_rigid_motion(theta in -3.2f64..3.2, bx in -5.0f64..5.0, by in -5.0f64..5.0, seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let dom = standard(2);
            let mut u = Deformation::from_fn(dom, |x| x + Vec2::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)));
            let before: Vec<f64> = (0..u.domain().triangles().len()).map(|t| u.triangle_det(t)).collect();
            u.map_image(&rotation(theta), Vec2::new(bx, by));
            for (t, d) in before.iter().enumerate() {
                prop_assert!((u.triangle_det(t) - d).abs() <= 1e-12 * (1.0 + d.abs()));
            }
        }
    }
}
