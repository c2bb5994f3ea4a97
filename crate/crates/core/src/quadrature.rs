//! Exact quadrature for the energy integrands.
//!
//! Applied to piecewise-linear functions, the first-order operator of the
//! system is piecewise linear in time with kinks only where the delayed
//! argument crosses a mesh node. Subdividing every mesh cell at those points
//! (preimages of own-edge and parent-edge nodes under the delay map, plus the
//! images for good measure) makes products of operator values polynomial of
//! degree at most two per subcell, so two-point Gauss quadrature integrates
//! them exactly.

use crate::scalar::{real, Real};
use crate::space::Mesh;
use crate::tree::TemporalTree;

/// A quadrature subcell inside mesh cell `cell` of some edge.
#[derive(Debug, Clone, Copy)]
pub struct Subcell<F> {
    pub cell: usize,
    pub a: F,
    pub b: F,
}

/// Per-edge subcell decomposition.
#[derive(Debug, Clone)]
pub struct QuadratureGrid<F> {
    pub edges: Vec<Vec<Subcell<F>>>,
}

impl<F: Real> QuadratureGrid<F> {
    pub fn build(tree: &TemporalTree<F>, mesh: &Mesh<F>) -> Self {
        let edges = (0..tree.edge_count())
            .map(|j| {
                let em = mesh.edge(j);
                let len = tree.length(j);
                let tol = len.max(F::one()) * F::epsilon() * real(64.0);

                let mut cuts: Vec<F> = Vec::new();
                for &s in &em.nodes {
                    let image = (s - tree.crossing_point(j)) / tree.q();
                    if image > F::zero() && image < len {
                        cuts.push(image);
                    }
                    let pre = tree.inverse_delay(j, s);
                    if pre > F::zero() && pre < len {
                        cuts.push(pre);
                    }
                }
                if let Some(p) = tree.parent(j) {
                    let plen = tree.length(p);
                    for &sp in &mesh.edge(p).nodes {
                        let pre = tree.inverse_delay(j, sp - plen);
                        if pre > F::zero() && pre < len {
                            cuts.push(pre);
                        }
                    }
                }
                cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite cuts"));

                let mut subcells = Vec::new();
                let mut k = 0;
                for cell in 0..em.cell_count() {
                    let (a, b) = (em.nodes[cell], em.nodes[cell + 1]);
                    let mut left = a;
                    while k < cuts.len() && cuts[k] < b - tol {
                        let c = cuts[k];
                        k += 1;
                        if c > left + tol {
                            subcells.push(Subcell { cell, a: left, b: c });
                            left = c;
                        }
                    }
                    subcells.push(Subcell { cell, a: left, b });
                }
                subcells
            })
            .collect();
        Self { edges }
    }
}

/// Two-point Gauss rule on `[a, b]`: exact for cubic polynomials.
pub fn gauss2<F: Real>(a: F, b: F) -> [(F, F); 2] {
    let half = (b - a) / real(2.0);
    let mid = (a + b) / real(2.0);
    let off = half / real::<F>(3.0).sqrt();
    [(mid - off, half), (mid + off, half)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subcells_partition_each_edge() {
        let tree = TemporalTree::build(&[0, 1, 1], &[1.0f64, 3.0, 3.0], 2.0).unwrap();
        let mesh = Mesh::build(&tree, 0.3);
        let grid = QuadratureGrid::build(&tree, &mesh);
        for j in 0..3 {
            let subs = &grid.edges[j];
            assert_eq!(subs.first().unwrap().a, 0.0);
            assert!((subs.last().unwrap().b - tree.length(j)).abs() < 1e-14);
            for w in subs.windows(2) {
                assert_eq!(w[0].b, w[1].a);
                assert!(w[0].b > w[0].a);
            }
        }
    }

    #[test]
    fn gauss2_integrates_cubics_exactly() {
        let (a, b) = (0.3f64, 1.7);
        let num: f64 = gauss2(a, b)
            .iter()
            .map(|&(x, w)| w * (x * x * x - 2.0 * x + 1.0))
            .sum();
        let exact = |t: f64| t * t * t * t / 4.0 - t * t + t;
        assert!((num - (exact(b) - exact(a))).abs() < 1e-14);
    }
}
