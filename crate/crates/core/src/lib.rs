//! Principal eigenvalues and dynamics of a phenotype-structured population
//! spread over several migration-coupled hosts with quadratic fitness.

pub mod analytics;
pub mod domain;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod linalg;
pub mod sweep;

pub use analytics::{FitnessLandscape, InteractionMatrix, ModelParams, RegionMembership};
pub use domain::{build_domain, DiscreteDomain, Field};
pub use eigen::{Coupling, CoupledOperator, EigenResult};
pub use error::{Error, Result};
