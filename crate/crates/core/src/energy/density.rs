//! Lattice energy densities evaluated on a node stencil.

use std::fmt;
use std::sync::Arc;

use crate::energy::WellSystem;
use crate::linalg::{best_rotation, Mat2, Vec2};

/// Slots of the four difference quotients around a node.
pub const D1_FWD: usize = 0;
pub const D1_BWD: usize = 1;
pub const D2_FWD: usize = 2;
pub const D2_BWD: usize = 3;

/// Difference quotients `∂₁u^{ij}, ∂₁u^{i-1,j}, ∂₂u^{ij}, ∂₂u^{i,j-1}` with a presence mask.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil {
    pub entries: [Vec2; 4],
    pub present: [bool; 4],
}

impl Stencil {
    pub fn full(entries: [Vec2; 4]) -> Self {
        Stencil { entries, present: [true; 4] }
    }

    /// Stencil of the affine map `x ↦ F x`.
    pub fn affine(f: &Mat2) -> Self {
        let (c1, c2) = (f.column(0).into_owned(), f.column(1).into_owned());
        Stencil::full([c1, c1, c2, c2])
    }

    /// `|s|²`, the sum of squared present entries.
    pub fn norm_squared(&self) -> f64 {
        (0..4).filter(|&k| self.present[k]).map(|k| self.entries[k].norm_squared()).sum()
    }

    /// Node gradient from the forward quotients, falling back to backward ones.
    pub fn gradient(&self) -> Option<(Mat2, usize, usize)> {
        let c1 = [D1_FWD, D1_BWD].into_iter().find(|&k| self.present[k])?;
        let c2 = [D2_FWD, D2_BWD].into_iter().find(|&k| self.present[k])?;
        Some((Mat2::from_columns(&[self.entries[c1], self.entries[c2]]), c1, c2))
    }
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `Σ(|∂₁|² - l1²)² + Σ(|∂₂|² - l2²)² + Σ|(∂₁, ∂₂)|` over present entries,
/// with its gradient with respect to the four entries.
pub fn bracket_with_grad(s: &Stencil, l1: f64, l2: f64) -> (f64, [Vec2; 4]) {
    smoothed_bracket_with_grad(s, l1, l2, 0.0)
}

/// `bracket_with_grad` with `|t|` replaced by `√(t² + ε²) - ε` (exact for `ε = 0`).
pub fn smoothed_bracket_with_grad(s: &Stencil, l1: f64, l2: f64, eps: f64) -> (f64, [Vec2; 4]) {
    let mut val = 0.0;
    let mut g = [Vec2::zeros(); 4];
    for (k, len) in [(D1_FWD, l1), (D1_BWD, l1), (D2_FWD, l2), (D2_BWD, l2)] {
        if s.present[k] {
            let e = s.entries[k];
            let r = e.norm_squared() - len * len;
            val += r * r;
            g[k] += 4.0 * r * e;
        }
    }
    for p in [D1_FWD, D1_BWD] {
        for q in [D2_FWD, D2_BWD] {
            if s.present[p] && s.present[q] {
                let ip = s.entries[p].dot(&s.entries[q]);
                let sg = if eps > 0.0 {
                    let r = ip.hypot(eps);
                    val += r - eps;
                    ip / r
                } else {
                    val += ip.abs();
                    sgn(ip)
                };
                g[p] += sg * s.entries[q];
                g[q] += sg * s.entries[p];
            }
        }
    }
    (val, g)
}

pub fn bracket(s: &Stencil, l1: f64, l2: f64) -> f64 {
    bracket_with_grad(s, l1, l2).0
}

/// `h̄_{U0}`: lengths `a` along `∂₁`, `b` along `∂₂`.
pub fn bracket_u0(s: &Stencil, w: &WellSystem) -> f64 {
    bracket(s, w.a, w.b)
}

/// `h̄_{U1}`: lengths swapped.
pub fn bracket_u1(s: &Stencil, w: &WellSystem) -> f64 {
    bracket(s, w.b, w.a)
}

/// Quintic smoothstep cutoff: 1 below `lo`, 0 above `hi`, `C²` in between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff {
    pub lo: f64,
    pub hi: f64,
}

impl Cutoff {
    pub fn value(&self, t: f64) -> f64 {
        if t <= self.lo {
            1.0
        } else if t >= self.hi {
            0.0
        } else {
            let x = (t - self.lo) / (self.hi - self.lo);
            1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        if t <= self.lo || t >= self.hi {
            0.0
        } else {
            let w = self.hi - self.lo;
            let x = (t - self.lo) / w;
            -30.0 * x * x * (1.0 - x) * (1.0 - x) / w
        }
    }
}

/// Cutoff in `|s|²` for the truncated two-well density.
pub fn truncation_cutoff(w: &WellSystem) -> Cutoff {
    Cutoff { lo: 10.0 * (w.cbar + 1.0), hi: 20.0 * (w.cbar + 1.0) }
}

/// Cutoff in `|s|²` for the one-well density.
pub fn one_well_cutoff(w: &WellSystem) -> Cutoff {
    let m = (10.0 * w.cbar).max(100.0);
    Cutoff { lo: 10.0 * m, hi: 20.0 * m }
}

/// User-supplied density. Must be non-negative.
pub trait PluginDensity: Send + Sync {
    fn name(&self) -> &str;
    fn value(&self, s: &Stencil, w: &WellSystem) -> f64;
    /// Whether the plugin claims `h ≥ c · dist²(∇u, K)`; drives the lower-bound gate.
    fn claims_lower_bound(&self) -> bool {
        false
    }
}

#[derive(Clone)]
pub enum Density {
    /// `h̃ = h̄_{U0} · h̄_{U1}`.
    Tilde,
    /// `γ(|s|²) h̃ + (1-γ(|s|²)) |s|²`.
    Truncated,
    /// `γ₁ min{h̄_{U0}, c̄/10} + (1-γ₁) dist²(∇u, SO(2)U0)`.
    OneWell,
    Plugin(Arc<dyn PluginDensity>),
    /// A built-in density with every `|(∂₁, ∂₂)|` replaced by `√(t² + ε²) - ε`.
    /// Used as a smooth surrogate ahead of minimizing the exact energy.
    Smoothed { base: Box<Density>, eps: f64 },
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Density {
    pub fn name(&self) -> &str {
        match self {
            Density::Tilde => "tilde",
            Density::Truncated => "truncated",
            Density::OneWell => "one_well",
            Density::Plugin(p) => p.name(),
            Density::Smoothed { .. } => "smoothed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tilde" => Some(Density::Tilde),
            "truncated" => Some(Density::Truncated),
            "one_well" | "one-well" => Some(Density::OneWell),
            _ => None,
        }
    }

    pub fn has_gradient(&self) -> bool {
        match self {
            Density::Plugin(_) => false,
            Density::Smoothed { base, .. } => base.has_gradient(),
            _ => true,
        }
    }

    /// Smooth surrogate of a built-in density; `eps = 0` returns the density itself.
    pub fn smoothed(&self, eps: f64) -> Density {
        match self {
            Density::Smoothed { base, .. } => base.smoothed(eps),
            d if eps <= 0.0 => d.clone(),
            d => Density::Smoothed { base: Box::new(d.clone()), eps },
        }
    }

    pub fn value(&self, s: &Stencil, w: &WellSystem) -> f64 {
        match self {
            Density::Plugin(p) => p.value(s, w),
            _ => self.value_and_grad(s, w).0,
        }
    }

    /// Value and entry gradient. Plugins report a zero gradient.
    pub fn value_and_grad(&self, s: &Stencil, w: &WellSystem) -> (f64, [Vec2; 4]) {
        self.value_and_grad_eps(s, w, 0.0)
    }

    fn value_and_grad_eps(&self, s: &Stencil, w: &WellSystem, eps: f64) -> (f64, [Vec2; 4]) {
        match self {
            Density::Tilde => tilde_with_grad(s, w, eps),
            Density::Truncated => {
                let (ht, gt) = tilde_with_grad(s, w, eps);
                let cut = truncation_cutoff(w);
                let ns = s.norm_squared();
                let (gam, dgam) = (cut.value(ns), cut.derivative(ns));
                let val = gam * ht + (1.0 - gam) * ns;
                let mut g = [Vec2::zeros(); 4];
                for k in 0..4 {
                    if s.present[k] {
                        let e = s.entries[k];
                        g[k] = gam * gt[k] + (1.0 - gam) * 2.0 * e + dgam * (ht - ns) * 2.0 * e;
                    }
                }
                (val, g)
            }
            Density::OneWell => one_well_with_grad(s, w, eps),
            Density::Plugin(p) => (p.value(s, w), [Vec2::zeros(); 4]),
            Density::Smoothed { base, eps } => base.value_and_grad_eps(s, w, *eps),
        }
    }
}

fn tilde_with_grad(s: &Stencil, w: &WellSystem, eps: f64) -> (f64, [Vec2; 4]) {
    let (h0, g0) = smoothed_bracket_with_grad(s, w.a, w.b, eps);
    let (h1, g1) = smoothed_bracket_with_grad(s, w.b, w.a, eps);
    let mut g = [Vec2::zeros(); 4];
    for k in 0..4 {
        g[k] = h1 * g0[k] + h0 * g1[k];
    }
    (h0 * h1, g)
}

fn one_well_with_grad(s: &Stencil, w: &WellSystem, eps: f64) -> (f64, [Vec2; 4]) {
    let cut = one_well_cutoff(w);
    let ns = s.norm_squared();
    let (gam, dgam) = (cut.value(ns), cut.derivative(ns));
    let cap = w.cbar / 10.0;
    let (hb, gb) = smoothed_bracket_with_grad(s, w.a, w.b, eps);
    // Ties take the bracket branch.
    let (m, gm) = if hb <= cap { (hb, gb) } else { (cap, [Vec2::zeros(); 4]) };

    let mut gk = [Vec2::zeros(); 4];
    let k1 = match s.gradient() {
        Some((f, c1, c2)) => {
            let (r, d2) = best_rotation(&f, &w.u0);
            let diff = 2.0 * (f - r * w.u0);
            gk[c1] = diff.column(0).into_owned();
            gk[c2] = diff.column(1).into_owned();
            d2
        }
        None => {
            for k in 0..4 {
                if s.present[k] {
                    gk[k] = 2.0 * s.entries[k];
                }
            }
            ns
        }
    };

    let val = gam * m + (1.0 - gam) * k1;
    let mut g = [Vec2::zeros(); 4];
    for k in 0..4 {
        if s.present[k] {
            g[k] = gam * gm[k] + (1.0 - gam) * gk[k] + dgam * (m - k1) * 2.0 * s.entries[k];
        }
    }
    (val, g)
}
