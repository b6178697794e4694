use std::sync::Arc;

use crate::lattice::{LatticeDomain, EAST, NORTH};

/// Real-valued field on the real nodes of a lattice.
#[derive(Clone, Debug)]
pub struct ScalarLatticeField {
    pub domain: Arc<LatticeDomain>,
    pub values: Vec<f64>,
}

/// Forward-difference gradient; a component is `None` where the forward neighbor is missing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscreteGradient {
    pub d1: Option<f64>,
    pub d2: Option<f64>,
}

impl DiscreteGradient {
    /// Euclidean norm over the present components.
    pub fn norm(&self) -> f64 {
        let a = self.d1.unwrap_or(0.0);
        let b = self.d2.unwrap_or(0.0);
        a.hypot(b)
    }
}

impl ScalarLatticeField {
    pub fn new(domain: Arc<LatticeDomain>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), domain.num_real(), "one value per real node");
        ScalarLatticeField { domain, values }
    }

    pub fn from_fn(domain: Arc<LatticeDomain>, mut f: impl FnMut(i32, i32) -> f64) -> Self {
        let values = domain.nodes()[..domain.num_real()].iter().map(|&(i, j)| f(i, j)).collect();
        ScalarLatticeField { domain, values }
    }

    /// `∇_n f^{ij} = (n(f^{i+1,j} - f^{ij}), n(f^{i,j+1} - f^{ij}))`.
    pub fn discrete_gradient(&self) -> Vec<DiscreteGradient> {
        let n = self.domain.nf();
        (0..self.values.len())
            .map(|k| {
                let nb = self.domain.neighbors()[k];
                let diff = |slot: usize| {
                    let q = nb[slot];
                    self.domain.is_real(q).then(|| n * (self.values[q as usize] - self.values[k]))
                };
                DiscreteGradient { d1: diff(EAST), d2: diff(NORTH) }
            })
            .collect()
    }
}
