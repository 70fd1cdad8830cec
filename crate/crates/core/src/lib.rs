//! Design and verification toolkit for optimal output synchronization of
//! heterogeneous leader-follower linear multi-agent systems.
//!
//! The pipeline is:
//!
//! 1. [`plant`] and [`topology`] describe the leader, the followers and the
//!    directed communication graph, and check the standing assumptions.
//! 2. [`regulator`] solves the per-agent output-regulator equations.
//! 3. [`protocol`] builds the distributed compensator, the local `zeta`
//!    generator, the coordinate transform and the augmented plants, and
//!    produces initial stabilizing gains.
//! 4. [`policy_iteration`] learns the optimal gains (Kleinman-type iteration
//!    on the Riccati equation with a cross term).
//! 5. [`simulator`] integrates the closed-loop network and the augmented
//!    per-agent systems and reports tracking and cost metrics.
//!
//! All numerical code is generic over a [`Real`] scalar (`f32` or `f64`).
//! The scenario loader and the [`pipeline`] orchestration work in `f64`; the
//! aliases at the crate root name the `f64` instances.

pub mod error;
pub mod numkernel;
pub mod pipeline;
pub mod plant;
pub mod policy_iteration;
pub mod protocol;
pub mod regulator;
pub mod scalar;
pub mod scenario;
pub mod simulator;
pub mod topology;

pub use error::{Error, ErrorCategory, Result};
pub use scalar::Real;

pub use plant::{AgentDynamics, AssumptionReport, LeaderModel};
pub use policy_iteration::PiTrace;
pub use protocol::{AugmentedPlant, CompensatorDesign, GainSet, TransformU};
pub use regulator::RegulatorSolution;
pub use scenario::Scenario;
pub use simulator::{CostReport, Trajectory};
pub use topology::Topology;

/// Dense `f64` matrix.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense `f64` column vector.
pub type Vector = nalgebra::DVector<f64>;

pub type Agent64 = AgentDynamics<f64>;
pub type Leader64 = LeaderModel<f64>;
pub type Regulator64 = RegulatorSolution<f64>;
pub type Compensator64 = CompensatorDesign<f64>;
pub type Transform64 = TransformU<f64>;
pub type Augmented64 = AugmentedPlant<f64>;
pub type Gains64 = GainSet<f64>;
pub type PiTrace64 = PiTrace<f64>;
pub type Trajectory64 = Trajectory<f64>;

pub type Agent32 = AgentDynamics<f32>;
pub type Augmented32 = AugmentedPlant<f32>;
