//! Quasi-Trefftz discontinuous Galerkin method for the homogeneous
//! diffusion-advection-reaction equation
//!
//! ```text
//!     div(-K grad u + beta u) + sigma u = f
//! ```
//!
//! on meshes of intervals (1D) or triangles (2D), with the machinery written
//! for general dimension where it costs nothing.
//!
//! The distinguishing ingredient is the local basis: on each element `T` a
//! quasi-Trefftz space
//!
//! ```text
//!     QT^p(T) = { v polynomial of degree <= p :
//!                 D^i(Lv)(x_T) = 0 for all |i| <= p-2 }
//! ```
//!
//! is constructed by a coefficient recurrence driven by derivatives of the
//! PDE coefficients at the element centre `x_T`. Its dimension grows like
//! the dimension of polynomials of one variable fewer, so for a given mesh
//! and degree the global system is substantially smaller than with full
//! polynomial spaces while keeping the same convergence rates on
//! homogeneous problems.
//!
//! Pipeline: [`mesh`] builds or imports a triangulation, [`problem`]
//! describes coefficients with exact derivative oracles, [`basis`] builds
//! per-element bases, [`assembly`] produces the interior-penalty + upwind
//! DG system, [`solve`] factors it and measures errors against a
//! manufactured solution.

pub mod assembly;
pub mod basis;
pub mod linalg;
pub mod mesh;
pub mod multiindex;
pub mod problem;
pub mod quadrature;
pub mod scalar;
pub mod solve;

pub use scalar::Real;

pub use assembly::{assemble, recommend_gamma, upwind_identity_check};
pub use basis::{build_bases, qt_basis, qt_dimension, taylor_of, SpaceKind};
pub use problem::{builtin, validate_problem};
pub use solve::{compute_errors, convergence_rates, solve};

/// Concrete f64 aliases for the common case; the generic types live in the
/// individual modules.
pub type Mesh64 = mesh::Mesh<f64>;
pub type Element64 = mesh::Element<f64>;
pub type Facet64 = mesh::Facet<f64>;
pub type ProblemSpec64 = problem::ProblemSpec<f64>;
pub type Coefficient64 = problem::Coefficient<f64>;
pub type CoefficientField64 = problem::CoefficientField<f64>;
pub type LocalBasis64 = basis::LocalBasis<f64>;
pub type LocalPolynomial64 = basis::LocalPolynomial<f64>;
pub type DgParameters64 = assembly::DgParameters<f64>;
pub type DgSystem64 = assembly::DgSystem<f64>;
pub type DiscreteSolution64<'a> = solve::DiscreteSolution<'a, f64>;
pub type ErrorReport64 = solve::ErrorReport<f64>;

