//! Deterministic spatial-reasoning environment: scenes, geometric ground
//! truth, question verification, rewards and a task curriculum.

pub mod geometry;
pub mod question;
pub mod scene;
pub mod tasks;
pub mod text;
pub mod pipeline;
pub mod solvers;
pub mod rewards;
pub mod scheduler;
pub mod wire;
pub mod harness;
pub mod protocol;
