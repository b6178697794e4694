use serde::Serialize;

use crate::energy::EnergyReport;
use crate::error::{Error, Result};
use crate::lattice::{Deformation, EAST, NONE, NORTH, SOUTH, WEST};

/// The three second differences at a node, each `None` when a needed node is missing.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SecondDifferences {
    /// `n²|u^{i+1,j} + u^{i-1,j} - 2u^{ij}|`
    pub d11: Option<f64>,
    /// `n²|u^{i,j+1} + u^{i,j-1} - 2u^{ij}|`
    pub d22: Option<f64>,
    /// `n²|u^{i+1,j+1} - u^{i,j+1} - u^{i+1,j} + u^{ij}|`
    pub d12: Option<f64>,
}

pub fn second_differences(u: &Deformation, k: usize) -> SecondDifferences {
    let dom = u.domain();
    let n2 = dom.nf() * dom.nf();
    let nb = dom.neighbors()[k];
    let p = u.position(k);
    let at = |q: u32| (q != NONE).then(|| u.position(q as usize));
    let (i, j) = dom.nodes()[k];
    let d11 = at(nb[EAST]).zip(at(nb[WEST])).map(|(e, w)| n2 * (e + w - 2.0 * p).norm());
    let d22 = at(nb[NORTH]).zip(at(nb[SOUTH])).map(|(a, b)| n2 * (a + b - 2.0 * p).norm());
    let d12 = match (at(nb[EAST]), at(nb[NORTH]), at(dom.index_of(i + 1, j + 1))) {
        (Some(e), Some(no), Some(ne)) => Some(n2 * (ne - no - e + p).norm()),
        _ => None,
    };
    SecondDifferences { d11, d22, d12 }
}

#[derive(Clone, Debug, Serialize)]
pub struct SecondDiffRecord {
    pub max_ratio: f64,
    /// Node where the maximum is attained.
    pub argmax: Option<(i32, i32)>,
    pub sites: usize,
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Maximum over real nodes of the second differences divided by `n√h` (the mixed one by
/// `n(√h^{ij} + √h^{i+1,j} + √h^{i,j+1})`). `report` must be the truncated-density report of `u`.
pub fn second_diff_check(u: &Deformation, report: &EnergyReport) -> Result<SecondDiffRecord> {
    let dom = u.domain();
    if report.site_density.len() != dom.num_real() {
        return Err(Error::Structural("energy report does not belong to this deformation".into()));
    }
    let n = dom.nf();
    let sq = |q: u32| dom.is_real(q).then(|| report.site_density[q as usize].sqrt());
    let mut rec = SecondDiffRecord { max_ratio: 0.0, argmax: None, sites: 0 };
    for k in 0..dom.num_real() {
        let s = second_differences(u, k);
        let h = report.site_density[k].sqrt();
        let (i, j) = dom.nodes()[k];
        let mut local: f64 = 0.0;
        for q in [s.d11, s.d22].into_iter().flatten() {
            local = local.max(ratio(q, n * h));
        }
        if let Some(q) = s.d12 {
            let nb = dom.neighbors()[k];
            // ghost neighbors carry no density
            let den = h + sq(nb[EAST]).unwrap_or(0.0) + sq(nb[NORTH]).unwrap_or(0.0);
            local = local.max(ratio(q, n * den));
        }
        rec.sites += 1;
        if rec.argmax.is_none() || local > rec.max_ratio {
            rec.max_ratio = local;
            rec.argmax = Some((i, j));
        }
    }
    Ok(rec)
}

/// `Σ n⁻² |∇²_n u|²` over real nodes, with the three second differences as the Hessian entries.
pub fn second_gradient_budget(u: &Deformation) -> f64 {
    let dom = u.domain();
    let inv = 1.0 / (dom.nf() * dom.nf());
    (0..dom.num_real())
        .map(|k| {
            let s = second_differences(u, k);
            let sq = |x: Option<f64>| x.map_or(0.0, |v| v * v);
            inv * (sq(s.d11) + sq(s.d22) + 2.0 * sq(s.d12))
        })
        .sum()
}
