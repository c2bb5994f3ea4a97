//! Optimal damping of retarded control systems with a global time-proportional
//! delay on a temporal tree.
//!
//! The crate models a rooted tree whose edges are parameterised by time
//! intervals laid end to end. A first-order control system with a
//! pantograph-type delay evolves along the tree: the delayed argument is the
//! global (root-to-point) time contracted by a fixed factor `q > 1`, and the
//! delay propagates through the internal vertices via initial-function
//! conditions. The solver
//!
//! * integrates the forward (Cauchy) problem for given controls
//!   ([`forward::solve_forward`]),
//! * minimises the weighted quadratic control energy over all trajectories
//!   that reach equilibrium on the boundary edges, via a Galerkin method on
//!   constrained piecewise-linear spaces with exact subdivided quadrature
//!   ([`galerkin`]),
//! * extracts the optimal control ([`galerkin::extract_control`]), and
//! * numerically certifies the optimality conditions: Kirchhoff-type balance
//!   relations at internal vertices and the second-order equations with
//!   global contractions and extensions ([`verify`]).
//!
//! All numeric kernels are generic over the scalar type (see [`Real`]);
//! `f64` aliases for the main types are exported at the crate root.

// `!(x > y)` guards reject NaN together with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod forward;
pub mod galerkin;
pub mod linalg;
pub(crate) mod quadrature;
pub mod scalar;
pub mod space;
pub mod tree;
pub mod verify;

pub use forward::{residual_forward, solve_forward, ControlInput, ForwardError, ProblemSpec};
pub use galerkin::{
    assemble, bilinear, energy, extract_control, lift_phi, solve, GalerkinError, GalerkinSystem,
};
pub use scalar::{real, Real};
pub use space::{CellField, DofEntry, DofLayout, LayoutMode, Mesh, SpaceError, TreeFunction};
pub use tree::{TemporalTree, TreeError};
pub use verify::{VerificationReport, VerifyError, VerifyOptions};

/// `f64` instantiation of [`tree::TemporalTree`].
pub type TemporalTree64 = tree::TemporalTree<f64>;
/// `f64` instantiation of [`space::Mesh`].
pub type Mesh64 = space::Mesh<f64>;
/// `f64` instantiation of [`space::TreeFunction`].
pub type TreeFunction64 = space::TreeFunction<f64>;
/// `f64` instantiation of [`space::CellField`].
pub type CellField64 = space::CellField<f64>;
/// `f64` instantiation of [`space::DofLayout`].
pub type DofLayout64 = space::DofLayout<f64>;
/// `f64` instantiation of [`forward::ProblemSpec`].
pub type ProblemSpec64 = forward::ProblemSpec<f64>;
/// `f64` instantiation of [`galerkin::GalerkinSystem`].
pub type GalerkinSystem64 = galerkin::GalerkinSystem<f64>;
/// `f64` instantiation of [`verify::VerificationReport`].
pub type VerificationReport64 = verify::VerificationReport<f64>;
