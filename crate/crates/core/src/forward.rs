//! Forward solution of the Cauchy problem for given controls.
//!
//! On each edge the trajectory obeys `y' + b y + c y(delayed) = u` with the
//! delayed argument supplied by the global contraction map. Edges are
//! integrated in canonical (causal) order with an implicit trapezoidal
//! one-step scheme; the delayed value is interpolated from already-computed
//! history, which is always available because the contracted time lies
//! strictly in the past. When the delayed point of the step endpoint falls
//! inside the current step, the unknown enters the update linearly and the
//! step is still solved in closed form.

use thiserror::Error;

use crate::scalar::{real, Real};
use crate::space::{CellField, Mesh, TreeFunction};
use crate::tree::TemporalTree;

/// Per-edge coefficients and weights of the control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec<F> {
    /// Instantaneous feedback coefficients `b_j` (1/time).
    pub b: Vec<F>,
    /// Delayed feedback coefficients `c_j` (1/time).
    pub c: Vec<F>,
    /// Positive energy weights `alpha_j`.
    pub alpha: Vec<F>,
    /// Initial state at the root vertex.
    pub y0: F,
}

impl<F: Real> ProblemSpec<F> {
    /// Uniform coefficients on every edge.
    pub fn uniform(m: usize, b: F, c: F, alpha: F, y0: F) -> Self {
        Self {
            b: vec![b; m],
            c: vec![c; m],
            alpha: vec![alpha; m],
            y0,
        }
    }

    /// Checks finiteness, positive weights, and the edge count.
    pub fn validate(&self, tree: &TemporalTree<F>) -> Result<(), String> {
        let m = tree.edge_count();
        if self.b.len() != m || self.c.len() != m || self.alpha.len() != m {
            return Err(format!("coefficient arrays must have {m} entries"));
        }
        for j in 0..m {
            if !(self.alpha[j] > F::zero()) {
                return Err(format!("alpha[{}] must be positive", j + 1));
            }
            if !self.b[j].is_finite() || !self.c[j].is_finite() || !self.alpha[j].is_finite() {
                return Err(format!("coefficients of edge {} must be finite", j + 1));
            }
        }
        if !self.y0.is_finite() {
            return Err("initial value must be finite".into());
        }
        Ok(())
    }
}

/// Errors from the forward integrator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForwardError {
    #[error("control data does not match the mesh")]
    MeshMismatch,
    #[error("edge {edge}, step {step}: trapezoidal update is not contractive (h x coefficients too large)")]
    StepRejected { edge: usize, step: usize },
}

/// Control data the forward solver can consume: per-cell integrals and
/// midpoint samples of the control signal.
pub trait ControlInput<F: Real> {
    /// Whether the data is aligned with `mesh`.
    fn shape_matches(&self, mesh: &Mesh<F>) -> bool;
    /// Exact integral of the control over cell `cell` of edge `j`.
    fn cell_integral(&self, mesh: &Mesh<F>, j: usize, cell: usize) -> F;
    /// Control value at the cell midpoint.
    fn midpoint_value(&self, mesh: &Mesh<F>, j: usize, cell: usize) -> F;
}

/// Piecewise-linear control given by nodal values.
impl<F: Real> ControlInput<F> for TreeFunction<F> {
    fn shape_matches(&self, mesh: &Mesh<F>) -> bool {
        self.values.len() == mesh.edge_count()
            && (0..mesh.edge_count()).all(|j| self.values[j].len() == mesh.edge(j).nodes.len())
    }

    fn cell_integral(&self, mesh: &Mesh<F>, j: usize, cell: usize) -> F {
        let em = mesh.edge(j);
        let dt = em.nodes[cell + 1] - em.nodes[cell];
        dt * (self.values[j][cell] + self.values[j][cell + 1]) / real(2.0)
    }

    fn midpoint_value(&self, _mesh: &Mesh<F>, j: usize, cell: usize) -> F {
        (self.values[j][cell] + self.values[j][cell + 1]) / real(2.0)
    }
}

/// Piecewise-constant control given per cell.
impl<F: Real> ControlInput<F> for CellField<F> {
    fn shape_matches(&self, mesh: &Mesh<F>) -> bool {
        self.values.len() == mesh.edge_count()
            && (0..mesh.edge_count()).all(|j| self.values[j].len() == mesh.edge(j).cell_count())
    }

    fn cell_integral(&self, mesh: &Mesh<F>, j: usize, cell: usize) -> F {
        let em = mesh.edge(j);
        (em.nodes[cell + 1] - em.nodes[cell]) * self.values[j][cell]
    }

    fn midpoint_value(&self, _mesh: &Mesh<F>, j: usize, cell: usize) -> F {
        self.values[j][cell]
    }
}

/// Applies the first-order operator of the control system to a piecewise-linear
/// function: `y' + b y + c y(delayed)` at local time `t` on edge `j`.
///
/// The derivative is the slope of the mesh cell containing `t`, so the value
/// is one-sided at nodes.
pub fn operator_value<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    f: &TreeFunction<F>,
    j: usize,
    t: F,
) -> F {
    let em = mesh.edge(j);
    let cell = mesh.locate(j, t);
    let dt = em.nodes[cell + 1] - em.nodes[cell];
    let (va, vb) = (f.values[j][cell], f.values[j][cell + 1]);
    let slope = (vb - va) / dt;
    let lam = (t - em.nodes[cell]) / dt;
    let value = va + lam * (vb - va);
    let delayed = mesh
        .eval_delayed(tree, f, j, t)
        .expect("operator argument within the edge");
    slope + spec.b[j] * value + spec.c[j] * delayed
}

/// Kernel of the second-kind Volterra reformulation on the root edge:
/// `-(b + q c)` for `s <= t / q` and `-b` otherwise.
pub fn volterra_kernel<F: Real>(b: F, c: F, q: F, t: F, s: F) -> F {
    if s <= t / q {
        -(b + q * c)
    } else {
        -b
    }
}

/// Integrates the Cauchy problem edge by edge in causal order.
///
/// Returns the trajectory sampled at the mesh nodes. The root node carries the
/// initial value and the matching conditions hold exactly at the vertices.
pub fn solve_forward<F: Real, C: ControlInput<F> + ?Sized>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    control: &C,
) -> Result<TreeFunction<F>, ForwardError> {
    if !control.shape_matches(mesh) {
        return Err(ForwardError::MeshMismatch);
    }
    let half = real::<F>(0.5);
    let mut y = TreeFunction::zeros(mesh);
    for j in 0..tree.edge_count() {
        y.values[j][0] = match tree.parent(j) {
            None => spec.y0,
            Some(p) => *y.values[p].last().expect("parent computed"),
        };
        let (b, c) = (spec.b[j], spec.c[j]);
        for cell in 0..mesh.edge(j).cell_count() {
            let t0 = mesh.edge(j).nodes[cell];
            let t1 = mesh.edge(j).nodes[cell + 1];
            let dt = t1 - t0;
            let yi = y.values[j][cell];
            let u_int = control.cell_integral(mesh, j, cell);
            let z0 = mesh
                .eval_delayed(tree, &y, j, t0)
                .expect("delayed point in computed history");
            let (jd, td) = tree.delay_map(j, t1).expect("step endpoint within edge");
            // Delayed endpoint inside the current step: its value is a linear
            // blend of the known left node and the unknown right node.
            let theta = if jd == j && td > t0 {
                (td - t0) / dt
            } else {
                F::zero()
            };
            let (z1_known, implicit_weight) = if theta > F::zero() {
                (yi * (F::one() - theta), theta)
            } else {
                let z1 = mesh
                    .eval_delayed(tree, &y, j, t1)
                    .expect("delayed point in computed history");
                (z1, F::zero())
            };
            let denom = F::one() + half * dt * (b + c * implicit_weight);
            if !(denom > real(0.05)) {
                return Err(ForwardError::StepRejected {
                    edge: j + 1,
                    step: cell,
                });
            }
            let rhs = yi + u_int - half * dt * (b * yi + c * (z0 + z1_known));
            y.values[j][cell + 1] = rhs / denom;
        }
    }
    Ok(y)
}

/// Discrete residual of the control system: per-edge `L2` norms of
/// `y' + b y + c y(delayed) - u` sampled at cell midpoints with
/// finite-difference derivatives.
pub fn residual_forward<F: Real, C: ControlInput<F> + ?Sized>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    y: &TreeFunction<F>,
    control: &C,
) -> Vec<F> {
    let half = real::<F>(0.5);
    (0..tree.edge_count())
        .map(|j| {
            let em = mesh.edge(j);
            let mut acc = F::zero();
            for cell in 0..em.cell_count() {
                let (t0, t1) = (em.nodes[cell], em.nodes[cell + 1]);
                let dt = t1 - t0;
                let mid = half * (t0 + t1);
                let r = operator_value(tree, spec, mesh, y, j, mid)
                    - control.midpoint_value(mesh, j, cell);
                acc = acc + dt * r * r;
            }
            acc.sqrt()
        })
        .collect()
}
