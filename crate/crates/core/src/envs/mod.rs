//! Concrete tasks.

pub mod cartpole;
pub mod cube;
pub mod tmaze;
pub mod xormaze;

pub use cartpole::{make_velocity_cartpole, CartPoleConfig, VelocityCartPole};
pub use cube::{make_pocket_cube, CubeConfig, PocketCube};
pub use tmaze::{make_active_tmaze, make_passive_tmaze, TMaze, TMazeConfig, Variant};
pub use xormaze::{make_xormaze, XorMaze};
