pub mod asymptotics;
pub mod classify;
pub mod error;
pub mod estimating;
pub mod quadrature;
pub mod simulate;
pub mod solver;
pub mod specfns;
pub mod truncnorm;
