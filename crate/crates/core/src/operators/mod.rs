//! Covariance operators and quadratic-form observables.

pub mod covariance;
pub mod form;
pub mod kernel;

pub use covariance::{Covariance, CovarianceOperator, KernelCovariance, SqrtCovariance, MU_CUTOFF};
pub use form::{curl_at_origin, curl_functionals, CurlStencil, FormRepr, Functional, QuadraticForm};
pub use kernel::{FlowProfile, IsotropicFlowKernel, Kernel, ScalarKernel};
