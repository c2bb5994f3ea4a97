//! Meshes and piecewise-linear functions on the tree.
//!
//! Each edge carries a quasi-uniform node grid that always contains the two
//! timing breakpoints of the edge: the delay-crossing point and the start of
//! the equilibrium target interval. Functions are stored as nodal values and
//! interpolated linearly; delayed evaluation routes through
//! [`TemporalTree::delay_map`] so that reads below the crossing point pick up
//! the parent-edge history.

use thiserror::Error;

use crate::scalar::{real, Real};
use crate::tree::{TemporalTree, TreeError};

/// Evaluation errors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("edge {edge}: time {t} outside [0, {length}]")]
    OutOfRange { edge: usize, t: f64, length: f64 },
}

impl From<TreeError> for SpaceError {
    fn from(err: TreeError) -> Self {
        match err {
            TreeError::OutOfRange { edge, t, length } => SpaceError::OutOfRange { edge, t, length },
            other => unreachable!("delay map cannot fail otherwise here: {other}"),
        }
    }
}

/// Node grid of a single edge.
#[derive(Debug, Clone)]
pub struct EdgeMesh<F> {
    /// Strictly increasing nodes from `0` to the edge length.
    pub nodes: Vec<F>,
    /// Index of the node at (or within merge tolerance of) the delay-crossing point.
    pub crossing_index: usize,
    /// Index of the node at the start of the target interval.
    pub target_index: usize,
}

impl<F: Real> EdgeMesh<F> {
    /// Number of cells (`nodes.len() - 1`).
    pub fn cell_count(&self) -> usize {
        self.nodes.len() - 1
    }
}

fn merge_tol<F: Real>(len: F) -> F {
    len.max(F::one()) * F::epsilon() * real(64.0)
}

/// Per-edge node grids with the mandatory timing breakpoints.
#[derive(Debug, Clone)]
pub struct Mesh<F> {
    edges: Vec<EdgeMesh<F>>,
}

impl<F: Real> Mesh<F> {
    /// Builds quasi-uniform grids with spacing at most `h`, inserting the
    /// delay-crossing point and the target start of every edge as exact nodes.
    pub fn build(tree: &TemporalTree<F>, h: F) -> Self {
        Self::build_with_extra(tree, h, None)
    }

    /// Like [`build`](Self::build), but merging additional per-edge nodes
    /// (used to match meshes across equivalent problems).
    pub fn build_with_extra(tree: &TemporalTree<F>, h: F, extra: Option<&[Vec<F>]>) -> Self {
        assert!(h > F::zero(), "mesh spacing must be positive");
        let edges = (0..tree.edge_count())
            .map(|j| {
                let len = tree.length(j);
                let tol = merge_tol(len);
                let mut brk = vec![F::zero(), len];
                for p in [tree.crossing_point(j), tree.target_start(j)] {
                    if p > tol && p < len - tol {
                        brk.push(p);
                    }
                }
                if let Some(extra) = extra {
                    for &p in &extra[j] {
                        if p > tol && p < len - tol {
                            brk.push(p);
                        }
                    }
                }
                brk.sort_by(|a, b| a.partial_cmp(b).expect("finite nodes"));
                brk.dedup_by(|a, b| *a - *b < tol);

                let mut nodes = Vec::new();
                for w in brk.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let seg = b - a;
                    let ratio = seg / h;
                    let n = (ratio - ratio.max(F::one()) * real(1e-9))
                        .ceil()
                        .to_usize()
                        .unwrap_or(1)
                        .max(1);
                    for k in 0..n {
                        nodes.push(a + seg * real(k as f64) / real(n as f64));
                    }
                }
                nodes.push(len);
                let crossing_index = nearest_index(&nodes, tree.crossing_point(j));
                let target_index = nearest_index(&nodes, tree.target_start(j));
                EdgeMesh {
                    nodes,
                    crossing_index,
                    target_index,
                }
            })
            .collect();
        Self { edges }
    }

    /// Splits every cell in half; mandatory nodes are preserved.
    pub fn refine(&self) -> Self {
        let edges = self
            .edges
            .iter()
            .map(|em| {
                let mut nodes = Vec::with_capacity(2 * em.nodes.len());
                let two = real::<F>(2.0);
                for w in em.nodes.windows(2) {
                    nodes.push(w[0]);
                    nodes.push((w[0] + w[1]) / two);
                }
                nodes.push(*em.nodes.last().expect("nonempty"));
                EdgeMesh {
                    nodes,
                    crossing_index: 2 * em.crossing_index,
                    target_index: 2 * em.target_index,
                }
            })
            .collect();
        Self { edges }
    }

    /// Number of edges.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Grid of edge `j`.
    pub fn edge(&self, j: usize) -> &EdgeMesh<F> {
        &self.edges[j]
    }

    /// Index of the cell containing `t` (clamped to the valid range).
    pub fn locate(&self, j: usize, t: F) -> usize {
        let nodes = &self.edges[j].nodes;
        let hi = nodes.partition_point(|&x| x <= t);
        hi.saturating_sub(1).min(nodes.len() - 2)
    }

    /// Linear interpolation of `f` on edge `j`; exact at nodes.
    pub fn eval(&self, f: &TreeFunction<F>, j: usize, t: F) -> Result<F, SpaceError> {
        let em = &self.edges[j];
        let len = *em.nodes.last().expect("nonempty");
        if !(t >= F::zero() && t <= len) {
            return Err(SpaceError::OutOfRange {
                edge: j + 1,
                t: t.to_f64().unwrap_or(f64::NAN),
                length: len.to_f64().unwrap_or(f64::NAN),
            });
        }
        let i = self.locate(j, t);
        let (a, b) = (em.nodes[i], em.nodes[i + 1]);
        let lam = (t - a) / (b - a);
        let (va, vb) = (f.values[j][i], f.values[j][i + 1]);
        Ok(va + lam * (vb - va))
    }

    /// Evaluates `f` at the delayed argument of `(j, t)`, reading parent-edge
    /// history when the contracted time falls before the initial vertex.
    pub fn eval_delayed(
        &self,
        tree: &TemporalTree<F>,
        f: &TreeFunction<F>,
        j: usize,
        t: F,
    ) -> Result<F, SpaceError> {
        let (jd, td) = tree.delay_map(j, t)?;
        self.eval(f, jd, td)
    }
}

fn nearest_index<F: Real>(nodes: &[F], p: F) -> usize {
    let hi = nodes.partition_point(|&x| x <= p).min(nodes.len() - 1);
    let lo = hi.saturating_sub(1);
    if (nodes[hi] - p).abs() < (p - nodes[lo]).abs() {
        hi
    } else {
        lo
    }
}

/// Per-edge nodal values of a piecewise-linear function on the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeFunction<F> {
    /// Values aligned with the mesh nodes of each edge.
    pub values: Vec<Vec<F>>,
}

impl<F: Real> TreeFunction<F> {
    /// All-zero function on `mesh`.
    pub fn zeros(mesh: &Mesh<F>) -> Self {
        Self {
            values: (0..mesh.edge_count())
                .map(|j| vec![F::zero(); mesh.edge(j).nodes.len()])
                .collect(),
        }
    }

    /// Samples `f(edge, t)` at every node.
    pub fn from_fn(mesh: &Mesh<F>, f: impl Fn(usize, F) -> F) -> Self {
        Self {
            values: (0..mesh.edge_count())
                .map(|j| mesh.edge(j).nodes.iter().map(|&t| f(j, t)).collect())
                .collect(),
        }
    }

    /// `self += s * other`, node-wise.
    pub fn axpy(&mut self, s: F, other: &Self) {
        for (mine, theirs) in self.values.iter_mut().zip(&other.values) {
            for (v, w) in mine.iter_mut().zip(theirs) {
                *v = *v + s * *w;
            }
        }
    }

    /// Multiplies all nodal values by `s`.
    pub fn scale(&mut self, s: F) {
        for edge in &mut self.values {
            for v in edge {
                *v = *v * s;
            }
        }
    }

    /// Largest node-wise absolute difference to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> F {
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (*x - *y).abs()))
            .fold(F::zero(), F::max)
    }

    /// Whether the matching conditions hold at every internal vertex:
    /// the first value of each non-root edge equals the last value of its parent.
    pub fn is_conforming(&self, tree: &TemporalTree<F>, tol: F) -> bool {
        (1..tree.edge_count()).all(|j| {
            let p = tree.parent(j).expect("non-root edge");
            let parent_end = *self.values[p].last().expect("nonempty");
            (self.values[j][0] - parent_end).abs() <= tol
        })
    }
}

/// Squared Sobolev norm of a piecewise-linear function: sum over edges of the
/// integrals of `f^2 + f'^2`. With `trimmed` the boundary edges are integrated
/// only over their active part `[0, q_j(T_j)]`.
pub fn w21_norm_sq<F: Real>(
    tree: &TemporalTree<F>,
    mesh: &Mesh<F>,
    f: &TreeFunction<F>,
    trimmed: bool,
) -> F {
    let third = F::one() / real(3.0);
    let mut acc = F::zero();
    for j in 0..tree.edge_count() {
        let em = mesh.edge(j);
        let limit = if trimmed && tree.is_boundary(j) {
            em.target_index
        } else {
            em.cell_count()
        };
        for i in 0..limit {
            let dt = em.nodes[i + 1] - em.nodes[i];
            let (a, b) = (f.values[j][i], f.values[j][i + 1]);
            acc = acc + dt * (a * a + a * b + b * b) * third + (b - a) * (b - a) / dt;
        }
    }
    acc
}

/// Values attached to mesh cells rather than nodes (piecewise-constant data,
/// e.g. extracted controls sampled at cell midpoints).
#[derive(Debug, Clone, PartialEq)]
pub struct CellField<F> {
    /// One value per mesh cell of each edge.
    pub values: Vec<Vec<F>>,
}

impl<F: Real> CellField<F> {
    /// All-zero field on `mesh`.
    pub fn zeros(mesh: &Mesh<F>) -> Self {
        Self {
            values: (0..mesh.edge_count())
                .map(|j| vec![F::zero(); mesh.edge(j).cell_count()])
                .collect(),
        }
    }
}

/// Whether a degree-of-freedom layout represents the affine trial family
/// (root value fixed to the initial state) or the homogeneous test space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayoutMode<F> {
    /// Root node fixed to the given initial value.
    Trial(F),
    /// Root node fixed to zero.
    Test,
}

/// Disposition of a mesh node in the constrained space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DofEntry<F> {
    /// Free unknown with its global index.
    Free(usize),
    /// Node pinned to a value (zero on target intervals, the root datum at the root).
    Fixed(F),
}

/// Map from mesh nodes to global degrees of freedom.
///
/// Vertex-shared nodes (first node of a non-root edge, last node of its
/// parent) map to a single index, so functions built through the layout
/// satisfy the matching conditions by construction. Nodes on the target
/// interval of boundary edges and the root node are fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct DofLayout<F> {
    entries: Vec<Vec<DofEntry<F>>>,
    free_count: usize,
}

impl<F: Real> DofLayout<F> {
    /// Builds the layout for `mesh` in the given mode.
    pub fn build(tree: &TemporalTree<F>, mesh: &Mesh<F>, mode: LayoutMode<F>) -> Self {
        let root_value = match mode {
            LayoutMode::Trial(y0) => y0,
            LayoutMode::Test => F::zero(),
        };
        let mut entries: Vec<Vec<DofEntry<F>>> = Vec::with_capacity(tree.edge_count());
        let mut free_count = 0;
        for j in 0..tree.edge_count() {
            let em = mesh.edge(j);
            let boundary = tree.is_boundary(j);
            let mut edge_entries = Vec::with_capacity(em.nodes.len());
            for i in 0..em.nodes.len() {
                let entry = if i == 0 {
                    match tree.parent(j) {
                        None => DofEntry::Fixed(root_value),
                        Some(p) => *entries[p].last().expect("parent already numbered"),
                    }
                } else if boundary && i >= em.target_index {
                    DofEntry::Fixed(F::zero())
                } else {
                    let e = DofEntry::Free(free_count);
                    free_count += 1;
                    e
                };
                edge_entries.push(entry);
            }
            entries.push(edge_entries);
        }
        Self {
            entries,
            free_count,
        }
    }

    /// Number of free degrees of freedom.
    pub fn free_count(&self) -> usize {
        self.free_count
    }

    /// Disposition of node `i` on edge `j`.
    pub fn entry(&self, j: usize, i: usize) -> DofEntry<F> {
        self.entries[j][i]
    }

    /// Builds the tree function with free values taken from `x` and fixed
    /// nodes at their pinned values. The result is conforming by construction.
    pub fn apply(&self, x: &[F]) -> TreeFunction<F> {
        assert_eq!(x.len(), self.free_count, "dof vector length");
        TreeFunction {
            values: self
                .entries
                .iter()
                .map(|edge| {
                    edge.iter()
                        .map(|e| match e {
                            DofEntry::Free(p) => x[*p],
                            DofEntry::Fixed(v) => *v,
                        })
                        .collect()
                })
                .collect(),
        }
    }
}
