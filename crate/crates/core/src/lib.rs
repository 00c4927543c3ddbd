//! Sleep-period inference from passively observed WiFi access-point
//! association events.
//!
//! A phone's AP association/disassociation stream is a coarse activity
//! signal: event rates drop when the user falls asleep and rise when they
//! wake. This crate turns raw AP logs into per-device, per-day slot series
//! and detects the two rate change points with an ensemble of Bayesian
//! change-point models (a location-informed uniform prior, a normal prior
//! and a hierarchical prior), sampled by Metropolis-Hastings and combined by
//! WAIC-weighted model averaging.
//!
//! Pipeline stages, each usable on its own:
//!
//! - [`ingest`]: raw log lines to canonical anonymized events, AP map
//! - [`preprocess`]: primary-device selection, ping-pong filtering, binning
//! - [`inference`]: likelihoods, priors, the MH sampler, MAP extraction
//! - [`ensemble`]: WAIC weights, model averaging, per-day estimates
//! - [`oracle`]: exact enumeration posterior for sampler verification
//! - [`synth`]: synthetic traces with ground truth and noise injection
//! - [`evaluate`]: confusion metrics and time-difference statistics
//! - [`analytics`]: consistency scores and population aggregates
//! - [`runner`]: deterministic parallel batch execution

pub mod analytics;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod evaluate;
pub mod inference;
pub mod ingest;
pub mod oracle;
pub mod preprocess;
pub mod runner;
pub mod synth;
pub mod timegrid;

pub use error::{Error, Result};
