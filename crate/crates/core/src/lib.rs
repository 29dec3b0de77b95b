//! Moment-SOS relaxations for entropy measure-valued solutions of parametric
//! scalar conservation laws.

pub mod bench;
pub mod gmp;
pub mod harness;
pub mod moments;
pub mod poly;
pub mod postproc;
pub mod problem;
pub mod sdp;
