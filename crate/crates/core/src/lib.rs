//! Quasi-static simulator and planning library for picking, toppling, pushing
//! and packing uniform cuboid objects from a cluttered bin into a grid.

pub mod geom;
pub mod harness;
pub mod perception;
pub mod pipeline;
pub mod primitives;
pub mod world;

