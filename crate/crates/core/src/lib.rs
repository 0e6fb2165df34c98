//! Equivariant reinforcement learning for quadrotor low-level control.
//!
//! The crate is layered bottom-up:
//!
//! - [`so3`]: hat/vee maps, rotations about the vertical axis, projection onto SO(3).
//! - [`dynamics`]: thrust mixer, rigid-body equations of motion, RK4 stepping.
//! - [`symmetry`]: the S¹ group action and the 17-entry orbit representative.
//! - [`env`]: the episodic control task (reset, reward, termination).
//! - [`nn`]: dense networks with hand-written backprop and Adam.
//! - [`rl`]: replay buffer, TD3, SAC, training and evaluation loops.
//! - [`bench`]: run configuration, multi-seed orchestration, comparison, and
//!   the property-check battery behind `quadrl verify`.

pub mod bench;
pub mod dynamics;
pub mod env;
pub mod nn;
pub mod rl;
pub mod so3;
pub mod symmetry;

pub use dynamics::{Action, QuadrotorParams, State};
pub use env::{EnvConfig, QuadEnv};
pub use rl::{AgentMode, Algorithm};
