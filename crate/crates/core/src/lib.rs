//! Numerical verification of conservation laws for polyharmonic maps.

pub mod builtins;
pub mod chart;
pub mod conservation;
pub mod error;
pub mod field;
pub mod flow;
pub mod grid;
pub mod hypersurface;
pub mod map;
pub mod report;
pub mod sphere;
pub mod suite;

pub use error::{Error, Result};
pub use field::Field;
pub use grid::{AxisSpec, Backend, DomainGrid};
pub use map::{GridMap, Target};
