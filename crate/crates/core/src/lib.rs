//! Location-privacy evaluation toolkit: planar Laplace obfuscation of
//! mobility traces, POI extraction, attacker-side metrics and a seeded
//! experiment pipeline.
//!
//! ```
//! use geopriv::geo::{self, GeoPoint};
//! use geopriv::mechanism::{NoiseMechanism, PrivacyLevel, RandomSource};
//!
//! let level = PrivacyLevel::new(0.00358).unwrap();
//! let mut rng = RandomSource::from_seed(7);
//! let home = GeoPoint::new(37.7749, -122.4194).unwrap();
//! let reported = NoiseMechanism::PlanarLaplace(level).obfuscate_point(home, &mut rng).unwrap();
//! assert!(geo::distance(home, reported) < 20_000.0);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod features;
pub mod geo;
pub mod ingestion;
pub mod mechanism;
pub mod metrics;
pub mod model;
pub mod poi;
pub mod synthetic;

pub use error::{Error, Result};
pub use geo::GeoPoint;
pub use mechanism::{NoiseMechanism, PrivacyLevel, RandomSource};
pub use model::{Dataset, MobilityTrace, Poi, PoiSet, TimestampedLocation, UserId};
