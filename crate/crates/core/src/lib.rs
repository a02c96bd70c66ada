pub mod acceptance;
pub mod error;
pub mod invariants;
pub mod linalg;
mod parallel;
pub mod phases;
pub mod propagator;
pub mod scenario;
pub mod spin;

pub use error::{Error, Result};
pub use parallel::init_thread_pool_from_env;
