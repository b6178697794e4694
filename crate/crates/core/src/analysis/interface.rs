use std::collections::HashMap;

use serde::Serialize;

use crate::energy::WellSystem;
use crate::lattice::{Deformation, Ends};
use crate::linalg::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Phase {
    U0,
    U1,
}

#[derive(Clone, Debug, Serialize)]
pub struct InterfaceSegment {
    /// Midpoints of the boundary edges, ordered along the fitted line.
    pub points: Vec<[f64; 2]>,
    pub normal: [f64; 2],
    /// Angles (degrees) between the fitted line normal and `(1,1)/√2`, `(1,-1)/√2`.
    pub angle_plus: f64,
    pub angle_minus: f64,
}

impl InterfaceSegment {
    pub fn min_angle(&self) -> f64 {
        self.angle_plus.min(self.angle_minus)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum InterfaceStatus {
    Ok,
    /// More than half of the triangles are far from both wells.
    Unclassifiable,
}

#[derive(Clone, Debug, Serialize)]
pub struct InterfaceSummary {
    pub status: InterfaceStatus,
    pub segments: Vec<InterfaceSegment>,
    /// Nearest well per triangle.
    #[serde(skip)]
    pub labels: Vec<Phase>,
    #[serde(skip)]
    pub distances: Vec<f64>,
    pub classified_fraction: f64,
    /// Midpoints of all phase-boundary edges, short components included.
    #[serde(skip)]
    pub boundary_points: Vec<Vec2>,
}

impl InterfaceSummary {
    pub fn max_angle_deviation(&self) -> f64 {
        self.segments.iter().map(InterfaceSegment::min_angle).fold(0.0, f64::max)
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn angle_deg(n: Vec2, m: Vec2) -> f64 {
    n.dot(&m).abs().min(1.0).acos().to_degrees()
}

/// Labels triangles by nearest well, traces phase boundaries and fits a line to each
/// boundary component. Components with fewer than 3 edges are treated as noise.
pub fn interface_extract(u: &Deformation, w: &WellSystem, tol: f64) -> InterfaceSummary {
    let dom = u.domain();
    let tris = dom.triangles();
    let mut labels = Vec::with_capacity(tris.len());
    let mut distances = Vec::with_capacity(tris.len());
    let mut classified = 0usize;
    for t in 0..tris.len() {
        let f = u.triangle_gradient(t);
        let (d0, d1) = (w.dist_u0(&f), w.dist_u1(&f));
        let (lo, hi) = if d0 <= d1 { (d0, d1) } else { (d1, d0) };
        if lo < tol && hi > 2.0 * tol {
            classified += 1;
        }
        labels.push(if d0 <= d1 { Phase::U0 } else { Phase::U1 });
        distances.push(lo);
    }
    let classified_fraction = classified as f64 / tris.len().max(1) as f64;

    let mut by_edge: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    for (t, tri) in tris.iter().enumerate() {
        let v = tri.vertices;
        for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
            by_edge.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    let mut edges: Vec<(u32, u32)> = by_edge
        .iter()
        .filter(|(_, ts)| ts.len() == 2 && labels[ts[0]] != labels[ts[1]])
        .map(|(&e, _)| e)
        .collect();
    edges.sort_unstable();

    let mut parent: Vec<usize> = (0..dom.num_nodes()).collect();
    for &(a, b) in &edges {
        let (ra, rb) = (find(&mut parent, a as usize), find(&mut parent, b as usize));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: Vec<(usize, Vec<Vec2>)> = Vec::new();
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut boundary_points = Vec::with_capacity(edges.len());
    for &(a, b) in &edges {
        let root = find(&mut parent, a as usize);
        let mid = (dom.point(a as usize) + dom.point(b as usize)) / 2.0;
        boundary_points.push(mid);
        let g = *index.entry(root).or_insert_with(|| {
            groups.push((root, Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(mid);
    }

    let plus = Vec2::new(1.0, 1.0) / 2f64.sqrt();
    let minus = Vec2::new(1.0, -1.0) / 2f64.sqrt();
    let segments = groups
        .into_iter()
        .filter(|(_, pts)| pts.len() >= 3)
        .map(|(_, pts)| {
            let m = pts.len() as f64;
            let c = pts.iter().fold(Vec2::zeros(), |s, p| s + p) / m;
            let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
            for p in &pts {
                let d = p - c;
                sxx += d.x * d.x;
                sxy += d.x * d.y;
                syy += d.y * d.y;
            }
            // principal direction of the scatter matrix
            let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
            let dir = Vec2::new(theta.cos(), theta.sin());
            let mut normal = Vec2::new(-dir.y, dir.x);
            if normal.x + normal.y < 0.0 || (normal.x + normal.y == 0.0 && normal.y < 0.0) {
                normal = -normal;
            }
            let mut ordered = pts.clone();
            ordered.sort_by(|p, q| (p - c).dot(&dir).total_cmp(&(q - c).dot(&dir)));
            InterfaceSegment {
                points: ordered.iter().map(|p| [p.x, p.y]).collect(),
                normal: [normal.x, normal.y],
                angle_plus: angle_deg(normal, plus),
                angle_minus: angle_deg(normal, minus),
            }
        })
        .collect();

    InterfaceSummary {
        status: if classified_fraction < 0.5 { InterfaceStatus::Unclassifiable } else { InterfaceStatus::Ok },
        segments,
        labels,
        distances,
        classified_fraction,
        boundary_points,
    }
}

/// Mean `dist(∇u, K)` over bulk triangles: centroids at least `margin` away from every
/// phase-boundary edge and from the clamped boundary layers.
pub fn bulk_mean_distance(u: &Deformation, summary: &InterfaceSummary, margin: f64) -> Option<f64> {
    let dom = u.domain();
    let shape = dom.shape();
    let c = Vec2::new(shape.center[0], shape.center[1]);
    let nu = shape.sign.normal();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (t, tri) in dom.triangles().iter().enumerate() {
        let x = tri.vertices.iter().fold(Vec2::zeros(), |s, &v| s + dom.point(v as usize)) / 3.0;
        if shape.ends == Ends::Clamped {
            let s = (x - c).dot(&nu);
            if (shape.d - s.abs()) / 2f64.sqrt() < margin {
                continue;
            }
        }
        if summary.boundary_points.iter().any(|p| (p - x).norm() < margin) {
            continue;
        }
        sum += summary.distances[t];
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeDomain;
    use std::sync::Arc;

    #[test]
    fn affine_well_has_no_interfaces() {
        let w = WellSystem::new(2f64.sqrt()).unwrap();
        let dom = Arc::new(LatticeDomain::standard(4).unwrap());
        let u = Deformation::affine(dom, w.u0, Vec2::zeros());
        let s = interface_extract(&u, &w, 0.1);
        assert!(s.segments.is_empty());
        assert_eq!(s.status, InterfaceStatus::Ok);
        assert!(bulk_mean_distance(&u, &s, 0.1).unwrap() < 1e-12);
    }

    #[test]
    fn laminate_interface_has_the_constructed_normal() {
        let w = WellSystem::new(2f64.sqrt()).unwrap();
        let dom = Arc::new(LatticeDomain::standard(8).unwrap());
        let a = w.u0 - w.q * w.u1;
        let u = Deformation::from_fn(dom, |x| if x.x + x.y <= 0.0 { w.u0 * x } else { w.u0 * x - a * x });
        let s = interface_extract(&u, &w, 0.1);
        assert_eq!(s.segments.len(), 1);
        assert!(s.segments[0].angle_plus < 1e-6);
    }

    #[test]
    fn far_from_wells_is_unclassifiable() {
        let w = WellSystem::new(2f64.sqrt()).unwrap();
        let dom = Arc::new(LatticeDomain::standard(4).unwrap());
        let u = Deformation::affine(dom, crate::linalg::Mat2::identity() * 3.0, Vec2::zeros());
        assert_eq!(interface_extract(&u, &w, 0.1).status, InterfaceStatus::Unclassifiable);
    }
}
