//! Topology synthesis for dense wireless testbeds.
//!
//! The pipeline starts from pairwise loss measurements ([`ingest`]), derives the
//! family of neighborhood graphs induced by a link-budget bound ([`graph`]), and
//! then selects either constant-degree induced subgraphs ([`degree`]) or layered
//! trees with a prescribed per-level breadth ([`tree`]). [`radio`] maps a bound
//! back to transceiver power/sensitivity pairs, and [`synth`] produces loss
//! matrices from a log-distance model for desk-scale experiments.

pub mod degree;
pub mod graph;
pub mod ilp;
pub mod ingest;
pub mod radio;
pub mod synth;
pub mod tree;

mod error;
mod node;

pub use error::Error;
pub use node::NodeId;

pub use degree::{largest_component_selection, select_constant_degree, DegreeSelection};
pub use graph::{BetaGrid, BoundedGraph, GraphFamily};
pub use ingest::{build_loss_matrix, parse_campaign_log, Aggregator, LossMatrix, LossSample};
pub use radio::{RadioSetting, TransceiverProfile};
pub use tree::{monitored_bfs, reduce_tree, revalidate, sweep_trees, KappaSpec, LayeredTree};
