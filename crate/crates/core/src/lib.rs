//! Normalizing flows onto unit p-norm spheres.
//!
//! Besides the usual standard Gaussian base distribution, a flow can end in
//! a von Mises-Fisher distribution on the unit hypersphere (reached through a
//! stereographic projection) or a Dirichlet distribution on the probability
//! simplex (reached through a stick-breaking map). Fixed-norm latent spaces
//! admit interpolation rules that stay on the support of the base
//! distribution, which is what the [`interpolation`] and [`evaluation`]
//! modules are built to exercise.

// `!(x > 0.0)` is used on purpose so NaN fails parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod base;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod flow;
pub mod interpolation;
pub mod maps;
pub mod special;
pub mod training;

pub use base::{BaseDistribution, DirichletBase, GaussianBase, Temperature, VmfBase};
pub use error::{Error, Result};
pub use flow::{FlowModel, Layer, ManifoldKind};
