//! Heading-dependent energy models for legged robots on sloped terrain.
//!
//! The crate covers the whole loop: SE(2) kinematics, terrain slope queries,
//! a basis-function wrench model, telemetry cleaning, calibration by least
//! squares, path energy integration, an energy-optimal lattice planner and a
//! synthetic telemetry generator used as ground truth.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod path;
pub mod planner;
pub mod se2;
pub mod synth;
pub mod telemetry;
pub mod terrain;
pub mod wrench;

pub use error::{Error, Result};
pub use path::{energy_of_path, superposition_check, BodyAxis, EnergyReport, PathSpec, Primitive};
pub use planner::{plan, Lattice, LatticeConfig, Node, Plan, Planner};
pub use se2::{body_velocity, exp, log, Pose, Twist};
pub use synth::{generate_telemetry, oracle_power, Scenario};
pub use telemetry::{parse_log, preprocess, PreprocessConfig, TelemetrySample};
pub use terrain::{slope_from_gravity, SlopeFrame, Terrain};
pub use wrench::{Component, EvalMode, MotionAxis, Wrench, WrenchModel};
