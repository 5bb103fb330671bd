//! Structure-preserving finite element solver for the non-isothermal
//! Cahn-Hilliard-Navier-Stokes system on the periodic unit square.

pub mod diagnostics;
pub mod fespace;
pub mod harness;
pub mod la;
pub mod mesh;
pub mod physics;
pub mod scalar;
pub mod scheme;
