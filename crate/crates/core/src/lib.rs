//! Work-minimizing control protocols for open two-level systems.
//!
//! The crate propagates a driven or tunable two-level system coupled to a
//! Drude bath with three solvers (hierarchical equations of motion, a
//! second-order time-convolutionless equation and an adiabatic Lindblad
//! equation), evaluates the work done by a control protocol, and minimizes it
//! over impulse, polynomial and piecewise-linear ansaetze. The [`brownian`]
//! module solves the classical moving-trap problem that motivates the impulse
//! ansatz.

pub mod bath;
pub mod brownian;
pub mod dynamics;
pub mod op2;
pub mod optimize;
pub mod protocol;
pub mod quad;
pub mod system;
pub mod thermo;
