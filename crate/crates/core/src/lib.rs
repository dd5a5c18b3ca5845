#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dual_mpc;
pub mod lp_backend;
pub mod polytope;
pub mod rng;
pub mod robust_tube;
pub mod set_membership;
pub mod system_model;
