//! Assembly and solution of the discretised energy-minimisation problem.
//!
//! The energy is `J(y) = sum_j alpha_j int (y_j' + b_j y_j + c_j y_j(delayed))^2`,
//! minimised over conforming piecewise-linear functions that carry the initial
//! value at the root and vanish on the target intervals of the boundary edges.
//! The discrete problem is posed in weak form: with the explicit lift of the
//! root datum, the correction solves a symmetric positive-definite system over
//! the free degrees of freedom. Quadrature is exact (see [`crate::quadrature`]),
//! so the matrix is the Gram matrix of the operator images without any
//! integration error.

use thiserror::Error;

use crate::forward::{operator_value, ProblemSpec};
use crate::linalg::{
    cholesky, conjugate_gradient, smallest_eigenvalue, CholeskyFactor, SymmetricMatrix,
};
use crate::quadrature::{gauss2, QuadratureGrid};
use crate::scalar::{real, Real};
use crate::space::{CellField, DofEntry, DofLayout, LayoutMode, Mesh, TreeFunction};
use crate::tree::TemporalTree;

/// Errors from the discrete solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GalerkinError {
    #[error("stiffness matrix is not positive definite (pivot {0}); the configuration is inconsistent")]
    NotPositiveDefinite(usize),
    #[error("conjugate-gradient iteration did not reach the requested tolerance")]
    IterationStalled,
}

/// Discrete system for the correction on top of the lift: symmetric matrix of
/// operator-image inner products over free degrees of freedom, load vector
/// from the lift, and the lift itself.
#[derive(Debug, Clone)]
pub struct GalerkinSystem<F> {
    /// Gram matrix of the free basis functions under the energy inner product.
    pub matrix: SymmetricMatrix<F>,
    /// Load vector: minus the energy pairing of the lift with each basis function.
    pub load: Vec<F>,
    /// Energy of the lift.
    pub lift_energy: F,
    /// The lift function carrying the root datum.
    pub lift: TreeFunction<F>,
    /// Test-space layout describing the free degrees of freedom.
    pub layout: DofLayout<F>,
}

/// Explicit lift of the root datum: a ramp from `y0` to zero over the first
/// contracted interval of the root edge, zero elsewhere. Exactly representable
/// on any mesh because the ramp's knee is a mandatory node.
pub fn lift_phi<F: Real>(tree: &TemporalTree<F>, mesh: &Mesh<F>, y0: F) -> TreeFunction<F> {
    let knee = tree.target_start(0);
    TreeFunction::from_fn(mesh, |j, t| {
        if j == 0 && t < knee {
            y0 * (F::one() - t / knee)
        } else {
            F::zero()
        }
    })
}

/// Closed-form squared Sobolev norm of the lift: `(T1^2 + 3 q^2) / (3 q T1) * y0^2`.
pub fn lift_norm_sq<F: Real>(q: F, root_length: F, y0: F) -> F {
    let three = real::<F>(3.0);
    (root_length * root_length + three * q * q) / (three * q * root_length) * y0 * y0
}

fn energy_with_grid<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    grid: &QuadratureGrid<F>,
    y: &TreeFunction<F>,
    trimmed: bool,
) -> F {
    let mut acc = F::zero();
    for j in 0..tree.edge_count() {
        let limit = if trimmed && tree.is_boundary(j) {
            mesh.edge(j).target_index
        } else {
            usize::MAX
        };
        let mut edge_acc = F::zero();
        for sub in &grid.edges[j] {
            if sub.cell >= limit {
                break;
            }
            for (x, w) in gauss2(sub.a, sub.b) {
                let s = operator_value(tree, spec, mesh, y, j, x);
                edge_acc = edge_acc + w * s * s;
            }
        }
        acc = acc + spec.alpha[j] * edge_acc;
    }
    acc
}

/// Weighted energy `J(y)`, integrated over the full tree.
pub fn energy<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    y: &TreeFunction<F>,
) -> F {
    let grid = QuadratureGrid::build(tree, mesh);
    energy_with_grid(tree, spec, mesh, &grid, y, false)
}

/// Energy restricted to the active parts `[0, q_j(T_j)]` of the boundary
/// edges. Differs from [`energy`] whenever some `c_j` is nonzero, because the
/// delayed term keeps the integrand alive on the target intervals.
pub fn energy_trimmed<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    y: &TreeFunction<F>,
) -> F {
    let grid = QuadratureGrid::build(tree, mesh);
    energy_with_grid(tree, spec, mesh, &grid, y, true)
}

/// Energy pairing `B(y, w)` of two conforming functions.
pub fn bilinear<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    y: &TreeFunction<F>,
    w: &TreeFunction<F>,
) -> F {
    let grid = QuadratureGrid::build(tree, mesh);
    let mut acc = F::zero();
    for j in 0..tree.edge_count() {
        let mut edge_acc = F::zero();
        for sub in &grid.edges[j] {
            for (x, wt) in gauss2(sub.a, sub.b) {
                let sy = operator_value(tree, spec, mesh, y, j, x);
                let sw = operator_value(tree, spec, mesh, w, j, x);
                edge_acc = edge_acc + wt * sy * sw;
            }
        }
        acc = acc + spec.alpha[j] * edge_acc;
    }
    acc
}

fn push_coeff<F: Real>(out: &mut Vec<(usize, usize, F)>, edge: usize, node: usize, v: F) {
    for entry in out.iter_mut() {
        if entry.0 == edge && entry.1 == node {
            entry.2 = entry.2 + v;
            return;
        }
    }
    out.push((edge, node, v));
}

/// Nodal coefficients of the operator value at `(j, t)`: the operator applied
/// to a piecewise-linear function is this linear combination of nodal values.
fn operator_coeffs<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    j: usize,
    cell: usize,
    t: F,
    out: &mut Vec<(usize, usize, F)>,
) {
    out.clear();
    let em = mesh.edge(j);
    let dt = em.nodes[cell + 1] - em.nodes[cell];
    let inv = F::one() / dt;
    let lam = (t - em.nodes[cell]) * inv;
    push_coeff(out, j, cell, -inv + spec.b[j] * (F::one() - lam));
    push_coeff(out, j, cell + 1, inv + spec.b[j] * lam);
    if spec.c[j] != F::zero() {
        let (jd, td) = tree.delay_map(j, t).expect("quadrature point within edge");
        let dm = mesh.edge(jd);
        let dc = mesh.locate(jd, td);
        let dl = (td - dm.nodes[dc]) / (dm.nodes[dc + 1] - dm.nodes[dc]);
        push_coeff(out, jd, dc, spec.c[j] * (F::one() - dl));
        push_coeff(out, jd, dc + 1, spec.c[j] * dl);
    }
}

/// Assembles the discrete system: Gram matrix over free degrees of freedom,
/// load vector from the lift, and the lift energy.
pub fn assemble<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
) -> GalerkinSystem<F> {
    let layout = DofLayout::build(tree, mesh, LayoutMode::Test);
    let lift = lift_phi(tree, mesh, spec.y0);
    let grid = QuadratureGrid::build(tree, mesh);
    let n = layout.free_count();
    let mut matrix = SymmetricMatrix::zeros(n);
    let mut load = vec![F::zero(); n];
    let mut lift_energy = F::zero();
    let mut coeffs = Vec::with_capacity(8);
    let mut dofs: Vec<(usize, F)> = Vec::with_capacity(8);

    for j in 0..tree.edge_count() {
        let alpha = spec.alpha[j];
        for sub in &grid.edges[j] {
            for (x, w) in gauss2(sub.a, sub.b) {
                operator_coeffs(tree, spec, mesh, j, sub.cell, x, &mut coeffs);
                dofs.clear();
                for &(e, i, v) in coeffs.iter() {
                    if let DofEntry::Free(p) = layout.entry(e, i) {
                        dofs.push((p, v));
                    }
                }
                let s = operator_value(tree, spec, mesh, &lift, j, x);
                let aw = alpha * w;
                lift_energy = lift_energy + aw * s * s;
                for &(p, vp) in &dofs {
                    load[p] = load[p] - aw * s * vp;
                    for &(r, vr) in &dofs {
                        matrix.add(p, r, aw * vp * vr);
                    }
                }
            }
        }
    }
    GalerkinSystem {
        matrix,
        load,
        lift_energy,
        lift,
        layout,
    }
}

fn correction_to_solution<F: Real>(sys: &GalerkinSystem<F>, x: &[F]) -> TreeFunction<F> {
    let mut y = sys.lift.clone();
    y.axpy(F::one(), &sys.layout.apply(x));
    y
}

/// Solves the discrete problem by Cholesky factorisation and returns the
/// optimal trajectory (lift plus correction).
pub fn solve<F: Real>(sys: &GalerkinSystem<F>) -> Result<TreeFunction<F>, GalerkinError> {
    let factor = cholesky(&sys.matrix).map_err(GalerkinError::NotPositiveDefinite)?;
    Ok(correction_to_solution(sys, &factor.solve(&sys.load)))
}

/// Solves the discrete problem by conjugate gradients; the independent second
/// route used to cross-check the factorisation.
pub fn solve_iterative<F: Real>(
    sys: &GalerkinSystem<F>,
    tol: F,
) -> Result<TreeFunction<F>, GalerkinError> {
    let n = sys.matrix.dim();
    let x = conjugate_gradient(&sys.matrix, &sys.load, tol, 40 * n.max(8))
        .ok_or(GalerkinError::IterationStalled)?;
    Ok(correction_to_solution(sys, &x))
}

/// Cholesky factor of the system matrix.
pub fn factorize<F: Real>(sys: &GalerkinSystem<F>) -> Result<CholeskyFactor<F>, GalerkinError> {
    cholesky(&sys.matrix).map_err(GalerkinError::NotPositiveDefinite)
}

/// Inverse-iteration estimate of the smallest eigenvalue of the system matrix.
pub fn smallest_ritz_eigenvalue<F: Real>(
    sys: &GalerkinSystem<F>,
    iterations: usize,
) -> Result<F, GalerkinError> {
    let factor = factorize(sys)?;
    Ok(smallest_eigenvalue(&sys.matrix, &factor, iterations))
}

/// Energy pairing of `y` with every free basis function, evaluated through the
/// quadrature path (not through the assembled matrix). For the discrete
/// optimum this is the Galerkin orthogonality residual.
pub fn weak_residual<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    layout: &DofLayout<F>,
    y: &TreeFunction<F>,
) -> Vec<F> {
    let grid = QuadratureGrid::build(tree, mesh);
    let mut r = vec![F::zero(); layout.free_count()];
    let mut coeffs = Vec::with_capacity(8);
    for j in 0..tree.edge_count() {
        let alpha = spec.alpha[j];
        for sub in &grid.edges[j] {
            for (x, w) in gauss2(sub.a, sub.b) {
                let s = operator_value(tree, spec, mesh, y, j, x);
                operator_coeffs(tree, spec, mesh, j, sub.cell, x, &mut coeffs);
                for &(e, i, v) in coeffs.iter() {
                    if let DofEntry::Free(p) = layout.entry(e, i) {
                        r[p] = r[p] + alpha * w * s * v;
                    }
                }
            }
        }
    }
    r
}

/// Optimal control recovered from a trajectory: the operator value sampled at
/// cell midpoints, kept piecewise constant per cell. On the target intervals
/// of boundary edges only the delayed term survives.
pub fn extract_control<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    y: &TreeFunction<F>,
) -> CellField<F> {
    let half = real::<F>(0.5);
    CellField {
        values: (0..tree.edge_count())
            .map(|j| {
                let em = mesh.edge(j);
                (0..em.cell_count())
                    .map(|cell| {
                        let mid = half * (em.nodes[cell] + em.nodes[cell + 1]);
                        operator_value(tree, spec, mesh, y, j, mid)
                    })
                    .collect()
            })
            .collect(),
    }
}
