pub mod bootalg;
pub mod diagnostics;
pub mod empq;
pub mod eqd;
pub mod error;
pub mod fit;
pub mod gpd;
pub mod optim;
pub mod rng;
pub mod simcases;
pub mod study;

pub use error::{Error, Result};
