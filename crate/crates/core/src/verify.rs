//! Numerical certification of the discrete optimum.
//!
//! The optimal trajectory is characterised by a boundary value problem:
//! second-order equations with global contractions and extensions on the
//! active part of every edge, plus Kirchhoff-type balance conditions at the
//! internal vertices. This module evaluates those conditions on solver
//! output, probes minimality directly with random test directions, checks the
//! chain-equals-interval special case, and runs refinement studies.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::forward::{operator_value, solve_forward, ForwardError, ProblemSpec};
use crate::galerkin::{
    assemble, energy, extract_control, lift_norm_sq, solve, GalerkinError, GalerkinSystem,
};
use crate::quadrature::{gauss2, QuadratureGrid};
use crate::scalar::{real, Real};
use crate::space::{w21_norm_sq, DofLayout, LayoutMode, Mesh, TreeFunction};
use crate::tree::TemporalTree;

/// Errors from the verification routines.
#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("not a chain problem: {0}")]
    NotAChain(String),
    #[error("convergence study needs at least 3 levels, got {got}")]
    TooFewLevels { got: usize },
    #[error(transparent)]
    Solver(#[from] GalerkinError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
}

/// Weight imbalances entering the vertex balance condition at the terminal
/// vertex of internal edge `j`: the coefficient of the vertex value and of the
/// delayed vertex value.
pub fn kirchhoff_coefficients<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    j: usize,
) -> (F, F) {
    let mut beta = spec.alpha[j] * spec.b[j];
    let mut gamma = spec.alpha[j] * spec.c[j];
    for &nu in tree.children(j) {
        beta = beta - spec.alpha[nu] * spec.b[nu];
        gamma = gamma - spec.alpha[nu] * spec.c[nu];
    }
    (beta, gamma)
}

fn lagrange_derivative<F: Real>(x: [F; 3], f: [F; 3], at: F) -> F {
    let two = real::<F>(2.0);
    let d0 = (two * at - x[1] - x[2]) / ((x[0] - x[1]) * (x[0] - x[2]));
    let d1 = (two * at - x[0] - x[2]) / ((x[1] - x[0]) * (x[1] - x[2]));
    let d2 = (two * at - x[0] - x[1]) / ((x[2] - x[0]) * (x[2] - x[1]));
    f[0] * d0 + f[1] * d1 + f[2] * d2
}

fn derivative_at_end<F: Real>(nodes: &[F], vals: &[F]) -> F {
    let n = nodes.len();
    if n < 3 {
        return (vals[n - 1] - vals[n - 2]) / (nodes[n - 1] - nodes[n - 2]);
    }
    lagrange_derivative(
        [nodes[n - 3], nodes[n - 2], nodes[n - 1]],
        [vals[n - 3], vals[n - 2], vals[n - 1]],
        nodes[n - 1],
    )
}

fn derivative_at_start<F: Real>(nodes: &[F], vals: &[F]) -> F {
    if nodes.len() < 3 {
        return (vals[1] - vals[0]) / (nodes[1] - nodes[0]);
    }
    lagrange_derivative(
        [nodes[0], nodes[1], nodes[2]],
        [vals[0], vals[1], vals[2]],
        nodes[0],
    )
}

/// Vertex balance residuals at the internal vertices, with one-sided
/// derivatives recovered by second-order finite differences on the mesh.
pub fn kirchhoff_residual<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    y: &TreeFunction<F>,
) -> Vec<F> {
    (0..tree.internal_count())
        .map(|j| {
            let em = mesh.edge(j);
            let dy_end = derivative_at_end(&em.nodes, &y.values[j]);
            let v_end = *y.values[j].last().expect("nonempty");
            let v_delayed = y.values[j][em.target_index];
            let (beta, gamma) = kirchhoff_coefficients(tree, spec, j);
            let mut flux = F::zero();
            for &nu in tree.children(j) {
                flux = flux
                    + spec.alpha[nu]
                        * derivative_at_start(&mesh.edge(nu).nodes, &y.values[nu]);
            }
            (spec.alpha[j] * dy_end + beta * v_end + gamma * v_delayed - flux).abs()
        })
        .collect()
}

/// One maximal smooth piece of the operator image on an edge: the operator
/// applied to a piecewise-linear function is linear between breakpoints.
#[derive(Debug, Clone, Copy)]
pub struct Segment<F> {
    pub a: F,
    pub b: F,
    pub va: F,
    pub vb: F,
}

/// Exact piecewise-linear representation of the operator image
/// `y' + b y + c y(delayed)` on every edge.
#[derive(Debug, Clone)]
pub struct EllField<F> {
    segments: Vec<Vec<Segment<F>>>,
}

impl<F: Real> EllField<F> {
    /// Samples the operator on a fine per-segment grid and stores one linear
    /// piece per smooth subinterval.
    pub fn build(
        tree: &TemporalTree<F>,
        spec: &ProblemSpec<F>,
        mesh: &Mesh<F>,
        y: &TreeFunction<F>,
    ) -> Self {
        let grid = QuadratureGrid::build(tree, mesh);
        let third = F::one() / real(3.0);
        let segments = (0..tree.edge_count())
            .map(|j| {
                grid.edges[j]
                    .iter()
                    .map(|sub| {
                        let len = sub.b - sub.a;
                        let p1 = sub.a + len * third;
                        let p2 = sub.b - len * third;
                        let v1 = operator_value(tree, spec, mesh, y, j, p1);
                        let v2 = operator_value(tree, spec, mesh, y, j, p2);
                        let slope = (v2 - v1) / (p2 - p1);
                        Segment {
                            a: sub.a,
                            b: sub.b,
                            va: v1 - slope * (p1 - sub.a),
                            vb: v1 + slope * (sub.b - p1),
                        }
                    })
                    .collect()
            })
            .collect();
        Self { segments }
    }

    /// Smooth pieces of edge `j`.
    pub fn segments(&self, j: usize) -> &[Segment<F>] {
        &self.segments[j]
    }

    fn segment_index(&self, j: usize, t: F) -> usize {
        let segs = &self.segments[j];
        let hi = segs.partition_point(|s| s.a <= t);
        hi.saturating_sub(1).min(segs.len() - 1)
    }

    /// Operator value at `(j, t)`; one-sided at breakpoints.
    pub fn eval(&self, j: usize, t: F) -> F {
        let s = &self.segments[j][self.segment_index(j, t)];
        let lam = (t - s.a) / (s.b - s.a);
        s.va + lam * (s.vb - s.va)
    }

    /// Slope of the smooth piece containing `t`.
    pub fn slope(&self, j: usize, t: F) -> F {
        let s = &self.segments[j][self.segment_index(j, t)];
        (s.vb - s.va) / (s.b - s.a)
    }
}

/// Coupling term of the second-order equation at `(j, t)`: the contracted
/// image of the operator on the same edge before the target start and, on
/// internal edges beyond it, the extensions from the child edges. Zero on the
/// tails of boundary edges.
fn coupling_term<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    field: &EllField<F>,
    j: usize,
    t: F,
) -> F {
    let q = tree.q();
    if t < tree.target_start(j) {
        q * spec.alpha[j] * spec.c[j] * field.eval(j, tree.inverse_delay(j, t))
    } else if !tree.is_boundary(j) {
        let mut acc = F::zero();
        for &nu in tree.children(j) {
            acc = acc
                + q * spec.alpha[nu]
                    * spec.c[nu]
                    * field.eval(nu, tree.inverse_delay(nu, t - tree.length(j)));
        }
        acc
    } else {
        F::zero()
    }
}

/// Pointwise residual of the second-order equation at `(j, t)`:
/// `-alpha_j (op y)'(t) + alpha_j b_j (op y)(t) + coupling(t)`, with the
/// derivative taken inside the smooth piece containing `t`.
pub fn strong_residual_at<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    field: &EllField<F>,
    j: usize,
    t: F,
) -> F {
    -spec.alpha[j] * field.slope(j, t) + spec.alpha[j] * spec.b[j] * field.eval(j, t)
        + coupling_term(tree, spec, field, j, t)
}

/// Mesh-weighted discrete `L2` norms of the second-order residual over the
/// active part `(0, l_j)` of every edge.
///
/// The operator image of the discrete solution carries its curvature in jumps
/// at the nodes, so the derivative is estimated by differencing across a
/// stencil of width `sqrt(h l)`; this smooths the jumps and turns the check
/// into a negative-norm proxy that decreases under refinement. A refinement
/// diagnostic, not an absolute gate.
pub fn strong_residual<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    y: &TreeFunction<F>,
) -> Vec<F> {
    let field = EllField::build(tree, spec, mesh, y);
    let quarter = real::<F>(0.25);
    (0..tree.edge_count())
        .map(|j| {
            let limit = tree.active_length(j);
            let em = mesh.edge(j);
            let h_bar = em
                .nodes
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(F::zero(), F::max);
            let delta = (h_bar * limit).sqrt().max(h_bar).min(limit * quarter);
            let guard = limit * real(1e-9);
            let samples = (2 * em.cell_count()).max(8);
            let width = limit / real(samples as f64);
            let mut acc = F::zero();
            for k in 0..samples {
                let t = width * (real::<F>(k as f64) + real(0.5));
                let a = (t - delta).max(guard);
                let b = (t + delta).min(limit - guard);
                let slope_est = (field.eval(j, b) - field.eval(j, a)) / (b - a);
                let r = -spec.alpha[j] * slope_est
                    + spec.alpha[j] * spec.b[j] * field.eval(j, t)
                    + coupling_term(tree, spec, &field, j, t);
                acc = acc + width * r * r;
            }
            acc.sqrt()
        })
        .collect()
}

fn standard_normals<F: Real>(rng: &mut ChaCha8Rng, n: usize) -> Vec<F> {
    let scale = 1.0 / 9007199254740992.0; // 2^-53
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let u1 = ((rng.next_u64() >> 11) as f64 + 1.0) * scale;
        let u2 = ((rng.next_u64() >> 11) as f64) * scale;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        out.push(real(r * c));
        out.push(real(r * s));
    }
    out.truncate(n);
    out
}

/// Draws `n` random unit-norm test directions and returns the worst observed
/// energy increment `J(y + s w) - J(y)` over the step sizes
/// `s in {+-0.01, +-0.1, +-1}`. `None` when `n = 0` (probe not run).
pub fn optimality_probe<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    y: &TreeFunction<F>,
    n: usize,
    seed: u64,
) -> Option<F> {
    if n == 0 {
        return None;
    }
    let layout = DofLayout::build(tree, mesh, LayoutMode::Test);
    let grid = QuadratureGrid::build(tree, mesh);
    let base = super::galerkin::energy(tree, spec, mesh, y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps: [F; 6] = [
        real(-1.0),
        real(-0.1),
        real(-0.01),
        real(0.01),
        real(0.1),
        real(1.0),
    ];
    let mut worst = F::infinity();
    for _ in 0..n {
        let x = standard_normals(&mut rng, layout.free_count());
        let mut w = layout.apply(&x);
        let norm = w21_norm_sq(tree, mesh, &w, false).sqrt();
        if !(norm > F::zero()) {
            continue;
        }
        w.scale(F::one() / norm);
        for &s in &steps {
            let mut cand = y.clone();
            cand.axpy(s, &w);
            let margin = energy_cached(tree, spec, mesh, &grid, &cand) - base;
            worst = worst.min(margin);
        }
    }
    Some(worst)
}

fn energy_cached<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    grid: &QuadratureGrid<F>,
    y: &TreeFunction<F>,
) -> F {
    let mut acc = F::zero();
    for j in 0..tree.edge_count() {
        let mut edge_acc = F::zero();
        for sub in &grid.edges[j] {
            for (x, w) in gauss2(sub.a, sub.b) {
                let s = operator_value(tree, spec, mesh, y, j, x);
                edge_acc = edge_acc + w * s * s;
            }
        }
        acc = acc + spec.alpha[j] * edge_acc;
    }
    acc
}

/// Solves a chain problem and the merged single-interval problem on matched
/// meshes and returns the largest node-wise deviation after mapping the
/// interval solution back onto the chain.
pub fn chain_equals_interval<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    h: F,
) -> Result<F, VerifyError> {
    let m = tree.edge_count();
    if tree.internal_count() != m - 1 {
        return Err(VerifyError::NotAChain(
            "an internal vertex branches into more than one edge".into(),
        ));
    }
    for j in 1..m {
        if spec.b[j] != spec.b[0] || spec.c[j] != spec.c[0] {
            return Err(VerifyError::NotAChain(
                "coefficients must be common across edges".into(),
            ));
        }
        if spec.alpha[j] != spec.alpha[0] {
            return Err(VerifyError::NotAChain(
                "weights must be equal across edges".into(),
            ));
        }
    }

    let chain_mesh = Mesh::build(tree, h);
    let chain_sys = assemble(tree, spec, &chain_mesh);
    let chain_y = solve(&chain_sys)?;

    let total: F = (0..m).map(|j| tree.length(j)).sum();
    let interval_tree = TemporalTree::build(&[0], &[total], tree.q())
        .expect("merged interval problem is feasible");
    let interval_spec = ProblemSpec {
        b: vec![spec.b[0]],
        c: vec![spec.c[0]],
        alpha: vec![spec.alpha[0]],
        y0: spec.y0,
    };
    let mapped: Vec<F> = (0..m)
        .flat_map(|j| {
            let entry = tree.entry_time(j);
            chain_mesh.edge(j).nodes.iter().map(move |&t| entry + t)
        })
        .collect();
    let interval_mesh = Mesh::build_with_extra(&interval_tree, total, Some(&[mapped]));
    let interval_sys = assemble(&interval_tree, &interval_spec, &interval_mesh);
    let interval_y = solve(&interval_sys)?;

    let mut dev = F::zero();
    for j in 0..m {
        for (i, &t) in chain_mesh.edge(j).nodes.iter().enumerate() {
            let global = (tree.entry_time(j) + t).min(total);
            let vi = interval_mesh
                .eval(&interval_y, 0, global)
                .expect("mapped node within the interval");
            dev = dev.max((vi - chain_y.values[j][i]).abs());
        }
    }
    Ok(dev)
}

/// Convergence order read off a refinement sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderEstimate {
    /// All values at the roundoff floor; the quantity is exact on this family.
    Exact,
    /// Mean dyadic decay rate across the levels.
    Observed(f64),
}

impl OrderEstimate {
    fn from_decay<F: Real>(values: &[F], floor: F) -> Self {
        let ten = real::<F>(10.0);
        // A sequence that already starts at the roundoff floor has nothing
        // left to converge; refinement only accumulates solver roundoff.
        if values.iter().all(|&v| v.abs() <= floor) || values[0].abs() <= ten * floor {
            return OrderEstimate::Exact;
        }
        let first = values[0].abs().to_f64().unwrap_or(f64::NAN);
        let last = values[values.len() - 1]
            .abs()
            .max(floor)
            .to_f64()
            .unwrap_or(f64::NAN);
        OrderEstimate::Observed((first / last).log2() / (values.len() - 1) as f64)
    }

    /// Observed order, treating exact decay as infinitely fast.
    pub fn order_at_least(&self, p: f64) -> bool {
        match self {
            OrderEstimate::Exact => true,
            OrderEstimate::Observed(o) => *o >= p,
        }
    }
}

/// Quantities tracked across a dyadic refinement sequence.
#[derive(Debug, Clone)]
pub struct ConvergenceStudy<F> {
    /// Nominal spacing per level.
    pub h: Vec<F>,
    /// Max node-wise deviation of the forward re-run with the extracted control.
    pub round_trip: Vec<F>,
    /// Max vertex balance residual.
    pub kirchhoff: Vec<F>,
    /// Discrete minimal energy.
    pub energy: Vec<F>,
    pub round_trip_order: OrderEstimate,
    pub kirchhoff_order: OrderEstimate,
    pub energy_order: OrderEstimate,
}

/// Solves the problem on `levels` nested meshes (each refining the previous
/// by 2 from spacing `h0`) and reports Richardson-style observed orders for
/// the round trip, the vertex balance residual, and the energy decrements.
pub fn convergence_study<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    h0: F,
    levels: usize,
) -> Result<ConvergenceStudy<F>, VerifyError> {
    if levels < 3 {
        return Err(VerifyError::TooFewLevels { got: levels });
    }
    let mut mesh = Mesh::build(tree, h0);
    let mut h = Vec::with_capacity(levels);
    let mut round_trip = Vec::with_capacity(levels);
    let mut kirchhoff = Vec::with_capacity(levels);
    let mut energies = Vec::with_capacity(levels);
    let two = real::<F>(2.0);
    let mut h_level = h0;
    for level in 0..levels {
        let sys = assemble(tree, spec, &mesh);
        let y = solve(&sys)?;
        let u = extract_control(tree, spec, &mesh, &y);
        let y_forward = solve_forward(tree, spec, &mesh, &u)?;
        round_trip.push(y_forward.max_abs_diff(&y));
        kirchhoff.push(
            kirchhoff_residual(tree, spec, &mesh, &y)
                .into_iter()
                .fold(F::zero(), F::max),
        );
        energies.push(energy(tree, spec, &mesh, &y));
        h.push(h_level);
        if level + 1 < levels {
            mesh = mesh.refine();
            h_level = h_level / two;
        }
    }
    let scale = F::one() + energies[0].abs();
    let floor = real::<F>(1e-12) * scale;
    let decrements: Vec<F> = energies.windows(2).map(|w| w[0] - w[1]).collect();
    Ok(ConvergenceStudy {
        round_trip_order: OrderEstimate::from_decay(&round_trip, floor),
        kirchhoff_order: OrderEstimate::from_decay(&kirchhoff, floor),
        energy_order: OrderEstimate::from_decay(&decrements, real::<F>(1e-14) * scale),
        h,
        round_trip,
        kirchhoff,
        energy: energies,
    })
}

/// One named pass/fail check.
#[derive(Debug, Clone)]
pub struct GateResult<F> {
    pub name: &'static str,
    pub value: F,
    pub threshold: F,
    pub passed: bool,
}

/// Options for [`run_verification`].
#[derive(Debug, Clone)]
pub struct VerifyOptions<F> {
    /// Number of random optimality probes (0 disables the probe).
    pub probes: usize,
    /// Seed for the probe directions.
    pub seed: u64,
    /// Relative tolerance for the exact-identity gates.
    pub tol: F,
}

impl<F: Real> Default for VerifyOptions<F> {
    fn default() -> Self {
        Self {
            probes: 200,
            seed: 0,
            tol: real(1e-10),
        }
    }
}

/// Verification results for one solve.
#[derive(Debug, Clone)]
pub struct VerificationReport<F> {
    /// Vertex balance residual per internal vertex.
    pub kirchhoff: Vec<F>,
    /// Second-order residual norm per edge (refinement diagnostic).
    pub strong: Vec<F>,
    /// Worst energy increment over the random probes; `None` when not run.
    pub optimality_margin: Option<F>,
    /// Max node-wise deviation of the forward re-run with the extracted control.
    pub round_trip_deviation: F,
    /// Scaled Galerkin orthogonality residual.
    pub weak_residual_scaled: F,
    /// Relative deviation of the lift norm from its closed form.
    pub lift_norm_rel_err: F,
    /// Discrete energy of the verified trajectory.
    pub energy: F,
    /// Refinement orders, present only when a study with >= 3 levels was run.
    pub orders: Option<ConvergenceStudy<F>>,
    /// Pass/fail checks against the configured tolerance.
    pub gates: Vec<GateResult<F>>,
    /// Seed used for the probes.
    pub seed: u64,
    /// Conjunction of all gates.
    pub passed: bool,
}

/// Runs the full battery of checks on a solved system.
pub fn run_verification<F: Real>(
    tree: &TemporalTree<F>,
    spec: &ProblemSpec<F>,
    mesh: &Mesh<F>,
    sys: &GalerkinSystem<F>,
    y: &TreeFunction<F>,
    opts: &VerifyOptions<F>,
) -> Result<VerificationReport<F>, VerifyError> {
    let kirchhoff = kirchhoff_residual(tree, spec, mesh, y);
    let strong = strong_residual(tree, spec, mesh, y);
    let j_energy = energy(tree, spec, mesh, y);

    let u = extract_control(tree, spec, mesh, y);
    let y_forward = solve_forward(tree, spec, mesh, &u)?;
    let round_trip_deviation = y_forward.max_abs_diff(y);

    let residual = crate::galerkin::weak_residual(tree, spec, mesh, &sys.layout, y);
    let max_diag = (0..sys.matrix.dim())
        .map(|p| sys.matrix.get(p, p))
        .fold(F::zero(), F::max);
    let scale = (F::one() + max_diag) * (F::one() + j_energy.abs());
    let weak_residual_scaled = residual.iter().fold(F::zero(), |m, &r| m.max(r.abs())) / scale;

    let computed_norm = w21_norm_sq(tree, mesh, &sys.lift, false);
    let reference_norm = lift_norm_sq(tree.q(), tree.length(0), spec.y0);
    let lift_norm_rel_err =
        (computed_norm - reference_norm).abs() / (reference_norm.abs() + F::epsilon());

    let optimality_margin = optimality_probe(tree, spec, mesh, y, opts.probes, opts.seed);

    let mut gates = vec![
        GateResult {
            name: "galerkin_orthogonality",
            value: weak_residual_scaled,
            threshold: opts.tol,
            passed: weak_residual_scaled <= opts.tol,
        },
        GateResult {
            name: "lift_norm_formula",
            value: lift_norm_rel_err,
            threshold: opts.tol,
            passed: lift_norm_rel_err <= opts.tol,
        },
        GateResult {
            name: "matrix_symmetry",
            value: sys.matrix.asymmetry(),
            threshold: opts.tol,
            passed: sys.matrix.asymmetry() <= opts.tol,
        },
    ];
    if let Some(margin) = optimality_margin {
        let threshold = -(opts.tol * j_energy.max(F::epsilon()));
        gates.push(GateResult {
            name: "optimality_margin",
            value: margin,
            threshold,
            passed: margin >= threshold,
        });
    }
    let passed = gates.iter().all(|g| g.passed);
    Ok(VerificationReport {
        kirchhoff,
        strong,
        optimality_margin,
        round_trip_deviation,
        weak_residual_scaled,
        lift_norm_rel_err,
        energy: j_energy,
        orders: None,
        gates,
        seed: opts.seed,
        passed,
    })
}
