//! Multimodal misinformation classification over heterogeneous social graphs,
//! with per-prediction explanations.
//!
//! The pipeline ingests a typed social graph ([`graph`]), builds a
//! homogeneous tweet interaction graph, encodes engagement counts and text
//! embeddings ([`features`]), classifies tweets with a two-layer graph
//! attention network ([`gat`]) trained by [`train`], and explains predictions
//! with a local HSIC-Lasso surrogate ([`graphlime`]) and integrated gradients
//! over token embeddings ([`attribution`]). [`synth`] generates planted-signal
//! benchmark bundles and [`report`] renders static HTML.

pub mod attribution;
pub mod compute;
pub mod config;
pub mod error;
pub mod features;
pub mod gat;
pub mod graph;
pub mod graphlime;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
