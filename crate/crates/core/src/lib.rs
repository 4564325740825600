//! Location privacy-preserving mechanisms: construction, Bayesian
//! remapping and evaluation under quality-loss and privacy metrics.
//!
//! ```
//! use std::sync::Arc;
//! use lppm::mechanisms::{build_ba, BaOptions, BaParams};
//! use lppm::metrics::{evaluate, EvalSettings};
//! use lppm::{DistanceFn, PlanePoint, PoiSet, Prior};
//!
//! let poi = Arc::new(PoiSet::new(vec![PlanePoint::new(0.0, 0.0), PlanePoint::new(1.0, 0.5)])?);
//! let prior = Prior::from_weights(poi.clone(), &[3.0, 1.0])?;
//! let ba = build_ba(&prior, poi.points(), &DistanceFn::Euclidean, &BaParams::new(2.0), &BaOptions::default())?;
//! let report = evaluate(&ba.remapped, &prior, &EvalSettings::default())?;
//! assert!(report.p_ae <= report.q_avg + 1e-9);
//! # Ok::<(), lppm::LppmError>(())
//! ```

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod geo;
pub mod ingest;
pub mod lpopt;
pub mod mechanisms;
pub mod metrics;
pub mod model;
pub mod remap;

pub use error::{LppmError, Result};
pub use geo::{DistanceFn, GeoPoint, PlanePoint};
pub use metrics::{MetricReport, Provenance};
pub use model::{DiscreteMechanism, NoiseSampler, PoiSet, Posterior, Prior};
pub use remap::{SearchSpace, WeiszfeldConfig};
