//! Curvature of Riemannian almost product manifolds given by closed-form charts.
//!
//! A chart supplies the metric `g` and the product structure `P` as
//! coordinate expressions ([`expr`]). From them [`geometry`] computes the
//! Levi-Civita connection, the structure tensor `F`, the curvature `R` and the
//! derived tensors at any point, [`classify`] places the chart in the classes
//! `W0`, `W3bar`, `W6bar` and `W1`, and [`verify`] checks the curvature
//! identities those classes satisfy.

pub mod catalog;
pub mod classify;
pub mod curvature;
pub mod expr;
pub mod geometry;
pub mod spec_file;
pub mod tensor;
pub mod verify;



pub use catalog::{Alignment, CatalogEntry};
pub use classify::{ClassLabel, ClassResidualRecord};
pub use curvature::PointStructure;
pub use expr::{Expr, ScalarField};
pub use geometry::{GeometryAtPoint, ManifoldChart};
pub use tensor::{MetricAtPoint, PointTensor, ProductStructureAtPoint};

pub use verify::{Suite, VerificationReport, VerifyConfig};
