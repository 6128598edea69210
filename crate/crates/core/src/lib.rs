//! Multivariate geometric energies on spheres.
//!
//! Volume kernels (parallelepiped `V`, simplex `A`, frame potential), Gegenbauer
//! expansions, k-point semidefinite kernels and the polynomial identities they
//! satisfy, probability measures on `S^{d-1}`, energy evaluation and
//! Riemannian gradient ascent over discrete configurations.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix `f64`.

pub mod energy;
pub mod error;
pub mod gegenbauer;
pub mod geom;
pub mod kernel_spec;
pub mod kernels;
pub mod linalg;
pub mod manifest;
pub mod measures;
pub mod optimizer;
pub mod sampling;
pub mod scalar;
pub mod sdp;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Point = geom::Point<f64>;
pub type PointConfig = geom::PointConfig<f64>;
pub type GramBundle = geom::GramBundle<f64>;
pub type GegenbauerSeries = gegenbauer::GegenbauerSeries<f64>;
pub type MultiKernel = kernels::MultiKernel<f64>;
pub type DiscreteMeasure = measures::DiscreteMeasure<f64>;
pub type MeasureSpec = measures::MeasureSpec<f64>;
pub type PsdCoefficientMatrix = sdp::PsdCoefficientMatrix<f64>;
pub type AscentResult = optimizer::AscentResult<f64>;
pub use kernel_spec::KernelSpec;
pub use optimizer::AscentConfig;
