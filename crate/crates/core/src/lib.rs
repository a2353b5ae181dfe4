//! List-decodable subspace recovery through sum-of-squares relaxations, sized
//! for exact experiments on small instances.

pub mod anticonc;
pub mod error;
pub mod exec;
pub mod gauss;
pub mod linalg;
pub mod oracle;
pub mod poly;
pub mod prooflab;
pub mod rounding;
pub mod sample;
pub mod sos;

pub use error::{Error, Result};
