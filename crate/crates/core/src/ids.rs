use std::fmt;

use serde::{Deserialize, Serialize};

/// Opaque integer time step. Calendar handling happens before ingestion.
pub type Tick = i64;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident($inner:ty)) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl From<$inner> for $name {
            fn from(v: $inner) -> Self {
                Self(v)
            }
        }
    };
}

id_type!(
    /// Stable identifier of a sample in a [`Dataset`](crate::Dataset).
    SampleId(u64)
);
id_type!(
    /// Identifier of a Gaussian component. Never reused within a session.
    ComponentId(u32)
);
id_type!(
    /// Identifier of a base learner.
    LearnerId(u32)
);
