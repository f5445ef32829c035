//! Robust unit commitment for island power systems with a learned
//! frequency-security constraint.

pub mod experiment;
pub mod grid;
pub mod lp;
pub mod lr;
pub mod robust;
pub mod sfr;
pub mod solver;
pub mod uc;
