//! Decohered ZX diagrams over the nonnegative reals: construction,
//! evaluation, affine-support normal forms and local rewriting.

pub mod diagram;
pub mod f2linalg;
pub mod format;
pub mod fourier;
pub mod fuzz;
pub mod normalform;
pub mod random;
pub mod rewrite;
pub mod semantics;

pub use diagram::{Diagram, DiagramError, EdgeId, Endpoint, NodeId, NodeKind};
pub use f2linalg::{F2Matrix, F2Vector};
pub use fourier::FourierData;
pub use normalform::NormalFormData;
pub use semantics::{evaluate, NonNegMatrix};
