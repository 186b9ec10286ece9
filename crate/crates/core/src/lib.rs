//! Arm-mounting co-design for modular mobile manipulators.
//!
//! The crate searches the six mounting parameters of an arm on a mobile base
//! ([`design`]) with a BOHB optimizer ([`bohb`]). Each candidate is scored
//! either by task success in a kinematic simulator ([`sim`], [`controller`])
//! or by global manipulability over a workspace grid ([`manipulability`]),
//! and checked for tipover ([`feasibility`]). [`experiment`] wires the pieces
//! together and [`report`] turns results into tables.

pub mod bohb;
pub mod controller;
pub mod design;
pub mod experiment;
pub mod feasibility;
pub mod kinematics;
pub mod manipulability;
pub mod report;
pub mod robot;
pub mod sim;
pub mod units;

pub use design::{DesignParams, DesignSpace};
pub use kinematics::{JointConfig, Pose, Twist};
pub use robot::{apply_design, load_robot, RobotDescription};
