//! Indoor optical wireless downlink simulation: Lambertian ray tracing,
//! channel metrics, SINR link budgets and exact WDMA channel allocation.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`). Scenario
//! files, the channel cache and the CLI work in `f64`; the aliases below name
//! the common concrete types.

pub mod allocate;
pub mod cache;
pub mod linkbudget;
pub mod metrics;
pub mod raytrace;
pub mod real;
pub mod scene;

pub use real::Real;

pub type Vec3 = scene::Vec3<f64>;
pub type Room = scene::Room<f64>;
pub type Scenario = scene::Scenario<f64>;
pub type ScenarioF32 = scene::Scenario<f32>;
pub type BounceConfig = raytrace::BounceConfig<f64>;
pub type ImpulseResponse = raytrace::ImpulseResponse<f64>;
pub type ImpulseResponseF32 = raytrace::ImpulseResponse<f32>;
pub type ChannelMatrix = metrics::ChannelMatrix<f64>;
pub type ChannelMatrixF32 = metrics::ChannelMatrix<f32>;
pub type NoiseModel = linkbudget::NoiseModel<f64>;
pub type AllocationProblem = allocate::AllocationProblem<f64>;
pub type Assignment = allocate::Assignment<f64>;
