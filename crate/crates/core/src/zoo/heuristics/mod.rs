//! Classical construction and improvement heuristics backing the built-in zoo.

pub mod cvrp;
pub mod tsp;

use crate::instance::RoutingInstance;

/// Dense symmetric distance matrix over normalized coordinates.
#[derive(Clone, Debug)]
pub struct Dist {
    pub n: usize,
    d: Vec<f64>,
}

impl Dist {
    pub fn new(inst: &RoutingInstance) -> Self {
        Self {
            n: inst.scale(),
            d: inst.distance_matrix(),
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}
