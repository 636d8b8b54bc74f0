pub mod error;
pub mod field;
pub mod guidance_client;
pub mod metrics;
pub mod mesh;
pub mod objectives;
pub mod optimizer;
pub mod raster;
pub mod sparse;

pub use error::{Error, Result};
pub use field::{FieldGradient, JacobianField, PoissonSystem};
pub use mesh::{Mat3, TriMesh, Vec3};
