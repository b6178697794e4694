use serde::{Deserialize, Serialize};

use crate::energy::Sign;
use crate::error::{Error, Result};
use crate::linalg::Vec2;

pub const NONE: u32 = u32::MAX;

/// What happens at the two slanted ends of a parallelogram.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ends {
    /// Boundary layers carry data and a ghost diagonal is attached beyond each end.
    Clamped,
    /// No data and no ghosts; stencil terms past the end are dropped.
    Free,
}

/// Translated parallelogram `Ω^±_{d,l}(center)`.
///
/// `Ω⁺ = {|(x₁-c₁)+(x₂-c₂)| ≤ d, |x₂-c₂| ≤ l}` and
/// `Ω⁻ = {|(x₁-c₁)-(x₂-c₂)| ≤ d, |x₂-c₂| ≤ l}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    pub d: f64,
    pub l: f64,
    pub sign: Sign,
    pub center: [f64; 2],
    pub ends: Ends,
}

impl Shape {
    pub fn new(d: f64, l: f64, sign: Sign) -> Self {
        Shape { d, l, sign, center: [0.0, 0.0], ends: Ends::Clamped }
    }

    /// The reference domain `Ω = Ω⁺_{4,1}`.
    pub fn standard() -> Self {
        Shape::new(4.0, 1.0, Sign::Plus)
    }

    pub fn with_center(mut self, center: [f64; 2]) -> Self {
        self.center = center;
        self
    }

    pub fn with_ends(mut self, ends: Ends) -> Self {
        self.ends = ends;
        self
    }

    /// Corner points in counter-clockwise order.
    pub fn vertices(&self) -> [Vec2; 4] {
        let (d, l) = (self.d, self.l);
        let c = Vec2::new(self.center[0], self.center[1]);
        let v = match self.sign {
            Sign::Plus => [(-d - l, l), (l - d, -l), (d + l, -l), (d - l, l)],
            Sign::Minus => [(-l - d, -l), (d - l, -l), (l + d, l), (l - d, l)],
        };
        v.map(|(x, y)| Vec2::new(x, y) + c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Interior,
    LeftBc,
    RightBc,
    /// Free boundary node (lateral sides, or ends of a free-ended domain).
    FreeBoundary,
    LeftGhost,
    RightGhost,
}

impl Role {
    pub fn is_ghost(self) -> bool {
        matches!(self, Role::LeftGhost | Role::RightGhost)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriangleKind {
    /// `Δ⁺_{ij}` with vertices `(i,j), (i+1,j), (i,j+1)`.
    Up,
    /// `Δ⁻_{ij}` with vertices `(i,j), (i-1,j), (i,j-1)`.
    Down,
}

#[derive(Clone, Copy, Debug)]
pub struct Triangle {
    pub kind: TriangleKind,
    pub anchor: (i32, i32),
    /// Node indices in canonical order.
    pub vertices: [u32; 3],
}

/// Node pairs defining the constant gradient of a lattice triangle:
/// `∂₁ = n(u[h.1] - u[h.0])`, `∂₂ = n(u[v.1] - u[v.0])`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradientLegs {
    pub horizontal: [u32; 2],
    pub vertical: [u32; 2],
}

/// Neighbor slots: `(i+1,j)`, `(i-1,j)`, `(i,j+1)`, `(i,j-1)`.
pub const EAST: usize = 0;
pub const WEST: usize = 1;
pub const NORTH: usize = 2;
pub const SOUTH: usize = 3;

/// Triangulated lattice `nΩ^±_{d,l}` with roles, neighbors and ghosts.
#[derive(Clone, Debug)]
pub struct LatticeDomain {
    n: u32,
    shape: Shape,
    half_d: i64,
    half_l: i64,
    center: (i64, i64),
    nodes: Vec<(i32, i32)>,
    roles: Vec<Role>,
    num_real: usize,
    bbox: (i32, i32, i32, i32),
    lookup: Vec<u32>,
    neighbors: Vec<[u32; 4]>,
    triangles: Vec<Triangle>,
    node_legs: Vec<Option<GradientLegs>>,
}

fn integral(x: f64, what: &str) -> Result<i64> {
    let r = x.round();
    if (x - r).abs() > 1e-9 * x.abs().max(1.0) {
        return Err(Error::Config(format!("{what} = {x} is not an integer")));
    }
    Ok(r as i64)
}

impl LatticeDomain {
    pub fn new(shape: Shape, n: u32) -> Result<Self> {
        if !(shape.d > 0.0 && shape.l > 0.0) {
            return Err(Error::Domain(format!(
                "degenerate parallelogram d={} l={}",
                shape.d, shape.l
            )));
        }
        if n < 2 {
            return Err(Error::Config(format!("resolution n must be at least 2, got {n}")));
        }
        let nf = n as f64;
        let half_d = integral(nf * shape.d, "n·d")?;
        let half_l = integral(nf * shape.l, "n·l")?;
        let center = (
            integral(nf * shape.center[0], "n·center.x")?,
            integral(nf * shape.center[1], "n·center.y")?,
        );
        let sigma: i64 = match shape.sign {
            Sign::Plus => 1,
            Sign::Minus => -1,
        };
        let ghosts = shape.ends == Ends::Clamped;

        // Enumerate in (j, s) order so indices are reproducible.
        let mut nodes = Vec::new();
        let mut roles = Vec::new();
        let mut ghost_nodes = Vec::new();
        let mut ghost_roles = Vec::new();
        let smax = half_d + i64::from(ghosts);
        for jj in -half_l..=half_l {
            for s in -smax..=smax {
                let ii = s - sigma * jj;
                let node = ((ii + center.0) as i32, (jj + center.1) as i32);
                if s.abs() > half_d {
                    ghost_nodes.push(node);
                    ghost_roles.push(if s < 0 { Role::LeftGhost } else { Role::RightGhost });
                    continue;
                }
                let role = if ghosts && s == -half_d {
                    Role::LeftBc
                } else if ghosts && s == half_d {
                    Role::RightBc
                } else if jj.abs() == half_l || s.abs() == half_d {
                    Role::FreeBoundary
                } else {
                    Role::Interior
                };
                nodes.push(node);
                roles.push(role);
            }
        }
        let num_real = nodes.len();
        nodes.extend(ghost_nodes);
        roles.extend(ghost_roles);

        let (mut imin, mut imax, mut jmin, mut jmax) = (i32::MAX, i32::MIN, i32::MAX, i32::MIN);
        for &(i, j) in &nodes {
            imin = imin.min(i);
            imax = imax.max(i);
            jmin = jmin.min(j);
            jmax = jmax.max(j);
        }
        let width = (imax - imin + 1) as usize;
        let height = (jmax - jmin + 1) as usize;
        let mut lookup = vec![NONE; width * height];
        for (k, &(i, j)) in nodes.iter().enumerate() {
            lookup[(j - jmin) as usize * width + (i - imin) as usize] = k as u32;
        }

        let mut dom = LatticeDomain {
            n,
            shape,
            half_d,
            half_l,
            center,
            nodes,
            roles,
            num_real,
            bbox: (imin, imax, jmin, jmax),
            lookup,
            neighbors: Vec::new(),
            triangles: Vec::new(),
            node_legs: Vec::new(),
        };

        let mut neighbors = Vec::with_capacity(num_real);
        for k in 0..num_real {
            let (i, j) = dom.nodes[k];
            neighbors.push([
                dom.index_of(i + 1, j),
                dom.index_of(i - 1, j),
                dom.index_of(i, j + 1),
                dom.index_of(i, j - 1),
            ]);
        }
        dom.neighbors = neighbors;

        let mut triangles = Vec::new();
        for k in 0..num_real {
            let (i, j) = dom.nodes[k];
            let [e, w, nn, s] = dom.neighbors[k];
            if dom.is_real(e) && dom.is_real(nn) {
                triangles.push(Triangle { kind: TriangleKind::Up, anchor: (i, j), vertices: [k as u32, e, nn] });
            }
            if dom.is_real(w) && dom.is_real(s) {
                triangles.push(Triangle { kind: TriangleKind::Down, anchor: (i, j), vertices: [k as u32, w, s] });
            }
        }
        dom.triangles = triangles;
        dom.node_legs = (0..num_real).map(|k| dom.find_legs(k)).collect();
        Ok(dom)
    }

    /// Standard domain `Ω⁺_{4,1}` with clamped ends.
    pub fn standard(n: u32) -> Result<Self> {
        LatticeDomain::new(Shape::standard(), n)
    }

    fn find_legs(&self, k: usize) -> Option<GradientLegs> {
        let (i, j) = self.nodes[k];
        let p = |di: i32, dj: i32| self.index_of(i + di, j + dj);
        let me = k as u32;
        // Δ⁺_{ij} first, then Δ⁻_{ij}, then the remaining incident triangles.
        let candidates = [
            ([me, p(1, 0)], [me, p(0, 1)]),
            ([p(-1, 0), me], [p(0, -1), me]),
            ([p(-1, 0), me], [p(-1, 0), p(-1, 1)]),
            ([p(0, -1), p(1, -1)], [p(0, -1), me]),
            ([me, p(1, 0)], [p(1, -1), p(1, 0)]),
            ([p(-1, 1), p(0, 1)], [me, p(0, 1)]),
        ];
        candidates
            .into_iter()
            .find(|(h, v)| h.iter().chain(v.iter()).all(|&x| x != NONE))
            .map(|(horizontal, vertical)| GradientLegs { horizontal, vertical })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// `n·d` and `n·l`.
    pub fn half_extents(&self) -> (i64, i64) {
        (self.half_d, self.half_l)
    }

    /// Lattice offset of the center, `n·center`.
    pub fn center_index(&self) -> (i64, i64) {
        self.center
    }

    /// All nodes including ghosts; real nodes come first.
    pub fn nodes(&self) -> &[(i32, i32)] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_real(&self) -> usize {
        self.num_real
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn role(&self, k: usize) -> Role {
        self.roles[k]
    }

    pub fn is_real(&self, k: u32) -> bool {
        k != NONE && (k as usize) < self.num_real
    }

    /// Neighbor table of real nodes (ghosts may appear as neighbors).
    pub fn neighbors(&self) -> &[[u32; 4]] {
        &self.neighbors
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    /// Legs of the triangle carrying the node gradient `∇u^{ij}`
    /// (`Δ⁺_{ij}` when available, otherwise the first incident triangle).
    pub fn node_legs(&self, k: usize) -> Option<GradientLegs> {
        self.node_legs[k]
    }

    pub fn index_of(&self, i: i32, j: i32) -> u32 {
        let (imin, imax, jmin, jmax) = self.bbox;
        if i < imin || i > imax || j < jmin || j > jmax {
            return NONE;
        }
        let width = (imax - imin + 1) as usize;
        self.lookup[(j - jmin) as usize * width + (i - imin) as usize]
    }

    pub fn point(&self, k: usize) -> Vec2 {
        let (i, j) = self.nodes[k];
        Vec2::new(i as f64, j as f64) / self.nf()
    }

    /// Diagonal coordinate `s = I ± J` relative to the center.
    pub fn diagonal_coord(&self, k: usize) -> i64 {
        let (i, j) = self.nodes[k];
        let ii = i as i64 - self.center.0;
        let jj = j as i64 - self.center.1;
        match self.shape.sign {
            Sign::Plus => ii + jj,
            Sign::Minus => ii - jj,
        }
    }

    /// Whether `x` lies in the closed parallelogram (with a small slack).
    pub fn contains_point(&self, x: &Vec2) -> bool {
        let c = Vec2::new(self.shape.center[0], self.shape.center[1]);
        let r = x - c;
        let s = match self.shape.sign {
            Sign::Plus => r.x + r.y,
            Sign::Minus => r.x - r.y,
        };
        let eps = 1e-12;
        s.abs() <= self.shape.d + eps && r.y.abs() <= self.shape.l + eps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive point-in-convex-polygon oracle from the corner list.
    fn scan_nodes(shape: &Shape, n: u32, radius: i32) -> usize {
        let v = shape.vertices();
        let inside = |x: Vec2| {
            (0..4).all(|k| {
                let a = v[k];
                let b = v[(k + 1) % 4];
                let e = b - a;
                let w = x - a;
                e.x * w.y - e.y * w.x >= -1e-12
            })
        };
        let mut count = 0;
        for i in -radius..=radius {
            for j in -radius..=radius {
                if inside(Vec2::new(i as f64, j as f64) / n as f64) {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn unit_resolution_standard_vertices() {
        let v = Shape::standard().vertices();
        let mut pts: Vec<(i64, i64)> = v.iter().map(|p| (p.x as i64, p.y as i64)).collect();
        pts.sort();
        let mut expect = vec![(-5, 1), (3, 1), (5, -1), (-3, -1)];
        expect.sort();
        assert_eq!(pts, expect);
    }

    #[test]
    fn standard_nodes_satisfy_linear_constraints() {
        let dom = LatticeDomain::standard(4).unwrap();
        for k in 0..dom.num_real() {
            let (i, j) = dom.nodes()[k];
            assert!((i + j).abs() <= 16 && j.abs() <= 4);
        }
        for k in dom.num_real()..dom.num_nodes() {
            let (i, j) = dom.nodes()[k];
            assert_eq!((i + j).abs(), 17);
        }
    }

    #[test]
    fn node_counts_match_polygon_scan() {
        for sign in [Sign::Plus, Sign::Minus] {
            for n in 2..=16u32 {
                for (d, l) in [(1.0, 1.0), (4.0, 1.0), (1.5, 0.5), (2.0, 1.0)] {
                    let shape = Shape::new(d, l, sign).with_ends(Ends::Free);
                    if ((n as f64 * d).fract() != 0.0) || ((n as f64 * l).fract() != 0.0) {
                        continue;
                    }
                    let dom = LatticeDomain::new(shape, n).unwrap();
                    let radius = (n as f64 * (d + l)) as i32 + 2;
                    assert_eq!(dom.num_real(), scan_nodes(&shape, n, radius), "{sign:?} n={n} d={d} l={l}");
                }
            }
        }
    }

    #[test]
    fn triangle_counts_match_scan() {
        for n in [2u32, 5, 8] {
            let shape = Shape::new(1.0, 1.0, Sign::Minus);
            let dom = LatticeDomain::new(shape, n).unwrap();
            let v = shape.vertices();
            let inside = |x: Vec2| {
                (0..4).all(|k| {
                    let e = v[(k + 1) % 4] - v[k];
                    let w = x - v[k];
                    e.x * w.y - e.y * w.x >= -1e-12
                })
            };
            let nf = n as f64;
            let r = 3 * n as i32;
            let mut count = 0;
            for i in -r..=r {
                for j in -r..=r {
                    let p = |a: i32, b: i32| inside(Vec2::new(a as f64 / nf, b as f64 / nf));
                    if p(i, j) && p(i + 1, j) && p(i, j + 1) {
                        count += 1;
                    }
                    if p(i, j) && p(i - 1, j) && p(i, j - 1) {
                        count += 1;
                    }
                }
            }
            assert_eq!(dom.triangles().len(), count);
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(matches!(
            LatticeDomain::new(Shape::new(1.3, 1.0, Sign::Plus), 4),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            LatticeDomain::new(Shape::new(0.0, 1.0, Sign::Plus), 4),
            Err(Error::Domain(_))
        ));
        assert!(LatticeDomain::new(Shape::new(1.0, -1.0, Sign::Plus), 4).is_err());
        assert!(LatticeDomain::new(Shape::standard(), 1).is_err());
    }

    #[test]
    fn roles_on_standard_domain() {
        let dom = LatticeDomain::standard(4).unwrap();
        for k in 0..dom.num_real() {
            let (i, j) = dom.nodes()[k];
            let expect = if i + j == -16 {
                Role::LeftBc
            } else if i + j == 16 {
                Role::RightBc
            } else if j.abs() == 4 {
                Role::FreeBoundary
            } else {
                Role::Interior
            };
            assert_eq!(dom.role(k), expect);
        }
    }

    #[test]
    fn every_real_node_has_a_gradient_triangle() {
        for ends in [Ends::Clamped, Ends::Free] {
            for sign in [Sign::Plus, Sign::Minus] {
                let dom = LatticeDomain::new(Shape::new(1.0, 0.5, sign).with_ends(ends), 8).unwrap();
                for k in 0..dom.num_real() {
                    // acute corners of Ω⁻ touch no lattice triangle
                    let touches = dom.triangles().iter().any(|t| t.vertices.contains(&(k as u32)));
                    if touches || ends == Ends::Clamped {
                        assert!(dom.node_legs(k).is_some(), "node {:?}", dom.nodes()[k]);
                    }
                }
            }
        }
    }
}
