//! Staggered-grid immersed boundary solver for rigid bodies in Stokes and
//! low-Reynolds-number flow.
//!
//! The crate is organized around the saddle-point system coupling fluid
//! velocity, pressure, and Lagrangian constraint forces on body markers:
//! [`grid`] provides the MAC discretization, [`kernels`] the regularized
//! delta interaction, [`multigrid`] and [`krylov`] the linear-solver
//! machinery, [`stokes`] the unconstrained fluid solver, [`mobility`] the
//! analytic/empirical approximations to the marker mobility matrix, and
//! [`constrained`] the monolithic rigid-body solver built on top of them.

pub mod constrained;
pub mod geometry;
pub mod grid;
pub mod kernels;
pub mod krylov;
pub mod mobility;
pub mod multigrid;
pub mod stokes;
