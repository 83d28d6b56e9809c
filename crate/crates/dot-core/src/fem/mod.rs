//! Finite element machinery: P1/P2 triangle bases, quadrature, assembly of
//! the diffusion-reaction operator with Robin/Dirichlet boundaries, and the
//! linear solvers (banded Cholesky by default, preconditioned CG fallback).

pub mod assemble;
pub mod basis;
pub mod quad;
pub mod sparse;

pub use assemble::{
    assemble_gaussian_load, assemble_operator, assemble_point_load, assemble_robin_load,
    assemble_volume_load, AssembledSystem,
};
pub use sparse::{BandCholesky, Csr};
