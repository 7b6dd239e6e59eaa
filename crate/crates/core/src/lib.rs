//! Exact and numerically solved blow-up families for the singular Liouville
//! equation `-Δξ = W e^ξ` with collapsing poles, and the diagnostics that
//! measure mass quantization, Pohozaev relations, profiles and scale cascades.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod calculus;
pub mod error;
pub mod families;
pub mod field;
pub mod grid;
pub mod poly;
pub mod quadrature;
pub mod solver;
pub mod weight;

pub use error::{Error, Result};
pub use families::{
    developing_map_field, make_family, polynomial_primitive, radial_bubble, rescale,
    singular_part_reconstruct, Centering, CollapsingFamily, DevelopingMap, FamilyRule,
    LambdaSchedule, RadialBubble,
};
pub use field::{Analytic, ClosedForm, Constant, ScalarField};
pub use grid::{AnnulusSpec, DiskGrid, NodeKind, Point};
pub use weight::{PoleConfig, SmoothFactor, WeightSpec};
