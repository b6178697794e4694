use serde::Serialize;

use crate::energy::density::{bracket_u0, bracket_u1, Density, Stencil};
use crate::energy::WellSystem;
use crate::error::{Error, Result};
use crate::lattice::{Constraint, Deformation, EAST, NORTH, SOUTH, WEST};
use crate::linalg::Vec2;

/// Stencil of real node `k`; entries involving nodes outside the lattice are absent.
pub fn node_stencil(u: &Deformation, k: usize) -> Stencil {
    let dom = u.domain();
    let n = dom.nf();
    let nb = dom.neighbors()[k];
    let p = u.position(k);
    let at = |slot: usize| (nb[slot] != crate::lattice::NONE).then(|| u.position(nb[slot] as usize));
    let mut s = Stencil { entries: [Vec2::zeros(); 4], present: [false; 4] };
    let parts = [
        at(EAST).map(|q| (q - p) * n),
        at(WEST).map(|q| (p - q) * n),
        at(NORTH).map(|q| (q - p) * n),
        at(SOUTH).map(|q| (p - q) * n),
    ];
    for (slot, e) in parts.into_iter().enumerate() {
        if let Some(e) = e {
            s.entries[slot] = e;
            s.present[slot] = true;
        }
    }
    s
}

/// Energy of a deformation with per-node breakdown.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    pub density: String,
    pub n: u32,
    /// `H_n = Σ n⁻² h` over real nodes.
    pub total: f64,
    /// `n · H_n`.
    pub rescaled: f64,
    pub site_density: Vec<f64>,
    pub bracket_u0: Vec<f64>,
    pub bracket_u1: Vec<f64>,
    /// `dist(∇u^{ij}, K)` where a node gradient exists.
    pub dist_to_wells: Vec<Option<f64>>,
}

fn check_value(v: f64, node: (i32, i32), density: &Density) -> Result<f64> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::Contract(format!(
            "density `{}` returned {v} at node {node:?}; densities must be finite and non-negative",
            density.name()
        )));
    }
    Ok(v)
}

/// Total energy only.
pub fn energy(u: &Deformation, w: &WellSystem, density: &Density) -> Result<f64> {
    let dom = u.domain();
    let inv = 1.0 / (dom.nf() * dom.nf());
    let mut total = 0.0;
    for k in 0..dom.num_real() {
        let v = check_value(density.value(&node_stencil(u, k), w), dom.nodes()[k], density)?;
        total += v * inv;
    }
    Ok(total)
}

/// Rescaled energy `n · H_n`.
pub fn rescaled_energy(u: &Deformation, w: &WellSystem, density: &Density) -> Result<f64> {
    Ok(u.domain().nf() * energy(u, w, density)?)
}

pub fn energy_report(u: &Deformation, w: &WellSystem, density: &Density) -> Result<EnergyReport> {
    let dom = u.domain();
    let m = dom.num_real();
    let inv = 1.0 / (dom.nf() * dom.nf());
    let mut rep = EnergyReport {
        density: density.name().to_string(),
        n: dom.n(),
        total: 0.0,
        rescaled: 0.0,
        site_density: Vec::with_capacity(m),
        bracket_u0: Vec::with_capacity(m),
        bracket_u1: Vec::with_capacity(m),
        dist_to_wells: Vec::with_capacity(m),
    };
    for k in 0..m {
        let s = node_stencil(u, k);
        let v = check_value(density.value(&s, w), dom.nodes()[k], density)?;
        rep.total += v * inv;
        rep.site_density.push(v);
        rep.bracket_u0.push(bracket_u0(&s, w));
        rep.bracket_u1.push(bracket_u1(&s, w));
        rep.dist_to_wells.push(u.node_gradient(k).map(|f| w.dist_to_k(&f)));
    }
    rep.rescaled = dom.nf() * rep.total;
    Ok(rep)
}

/// Gradient of `H_n` with respect to free node positions and the translation `c`.
#[derive(Clone, Debug)]
pub struct EnergyGradient {
    pub total: f64,
    /// One entry per node (ghosts included); zero on constrained nodes.
    pub nodes: Vec<Vec2>,
    pub translation: Vec2,
}

impl EnergyGradient {
    /// Flattened in the order of `Deformation::free_dofs`.
    pub fn free_vector(&self, u: &Deformation) -> Vec<f64> {
        let mut out = Vec::new();
        for (k, g) in self.nodes.iter().enumerate() {
            if u.constraints()[k] == Constraint::Free {
                out.push(g.x);
                out.push(g.y);
            }
        }
        if u.has_translated() {
            out.push(self.translation.x);
            out.push(self.translation.y);
        }
        out
    }
}

pub fn energy_gradient(u: &Deformation, w: &WellSystem, density: &Density) -> Result<EnergyGradient> {
    if !density.has_gradient() {
        return Err(Error::Contract(format!("density `{}` provides no gradient", density.name())));
    }
    let dom = u.domain();
    let nf = dom.nf();
    let inv = 1.0 / (nf * nf);
    let mut g = vec![Vec2::zeros(); dom.num_nodes()];
    let mut total = 0.0;
    for k in 0..dom.num_real() {
        let s = node_stencil(u, k);
        let (v, ge) = density.value_and_grad(&s, w);
        total += check_value(v, dom.nodes()[k], density)? * inv;
        let nb = dom.neighbors()[k];
        // each entry is n·(difference), weighted by n⁻²
        let scale = inv * nf;
        if s.present[EAST] {
            g[nb[EAST] as usize] += scale * ge[EAST];
            g[k] -= scale * ge[EAST];
        }
        if s.present[WEST] {
            g[k] += scale * ge[WEST];
            g[nb[WEST] as usize] -= scale * ge[WEST];
        }
        if s.present[NORTH] {
            g[nb[NORTH] as usize] += scale * ge[NORTH];
            g[k] -= scale * ge[NORTH];
        }
        if s.present[SOUTH] {
            g[k] += scale * ge[SOUTH];
            g[nb[SOUTH] as usize] -= scale * ge[SOUTH];
        }
    }
    let mut dc = Vec2::zeros();
    for (k, gk) in g.iter_mut().enumerate() {
        match u.constraints()[k] {
            Constraint::Free => {}
            Constraint::Fixed => *gk = Vec2::zeros(),
            Constraint::Translated => {
                dc += *gk;
                *gk = Vec2::zeros();
            }
        }
    }
    Ok(EnergyGradient { total, nodes: g, translation: dc })
}
