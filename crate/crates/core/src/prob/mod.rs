//! Exact probability algebra on finite feature × label spaces.

mod conditional;
mod density;
mod joint;
mod space;

pub use conditional::{ConditionalKind, ConditionalTable, Direction};
pub use density::{
    dependence_density, kl_divergence, marginal_density, relative_density,
    reweighted_conditional_expectation, DensityAxis, MarginalAxis, RelativeDensity,
};
pub(crate) use density::kl_values;
pub use joint::JointTable;
pub use space::SpaceSpec;

/// Tolerance for table construction (total mass, row sums).
pub const CONSTRUCTION_TOL: f64 = 1e-12;

/// Tolerance for derived identities (normalization of densities, Fubini).
pub const IDENTITY_TOL: f64 = 1e-10;
