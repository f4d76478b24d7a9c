//! Streaming concept-drift analytics.
//!
//! The crate is organised around a [`StreamSession`]: a training set, a
//! sliding window over the stream, an incremental Gaussian mixture that
//! clusters both, and the drift series computed from them. The remaining
//! modules are the analysis and adaptation tools that operate on a session:
//! a constrained 2-D projection, density-diff grids, and a dynamically
//! weighted ensemble of base learners.

pub mod dataset;
pub mod density;
pub mod energy;
pub mod ensemble;
pub mod error;
pub mod gmm;
mod ids;
pub mod linalg;
pub mod projection;
pub mod session;
pub mod window;

pub use dataset::{CsvSchema, Dataset, Row};
pub use energy::{DriftPoint, EnergyResult};
pub use error::{CoreError, Result};
pub use gmm::{GaussianComponent, GmmConfig, GmmState};
pub use ids::{ComponentId, LearnerId, SampleId, Tick};
pub use session::{Selection, SessionConfig, StreamSession};
pub use window::SlidingWindow;
