//! Green kernels of the p-Laplacian on Riemannian manifolds, fake distances and the
//! p → 1 limit towards the weak inverse mean curvature flow.

pub mod audit;
pub mod cli;
pub mod error;
pub mod fake;
pub mod geom;
pub mod imcf;
pub mod model;
pub mod psolve;
pub mod quad;
pub mod verify;

pub use error::{Error, Result};
