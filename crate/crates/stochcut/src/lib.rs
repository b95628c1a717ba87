//! Cutting-plane dynamic programming (SDDP, EDDP, dual SDDP, risk-averse and
//! infinite-horizon variants) and dynamic stochastic approximation for
//! multistage stochastic linear programs.

pub mod cuts;
pub mod dsa;
pub mod dualsddp;
pub mod eddp;
pub mod fixtures;
pub mod horizon;
pub mod io;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod risk;
pub mod rng;
pub mod scen;
pub mod sddp;
pub mod soc;
