use thiserror::Error;

use crate::degree::DegreeError;
use crate::graph::GraphError;
use crate::ilp::IlpError;
use crate::ingest::IngestError;
use crate::radio::RadioError;
use crate::synth::SynthError;
use crate::tree::TreeError;

/// Any error raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Ilp(#[from] IlpError),
    #[error(transparent)]
    Degree(#[from] DegreeError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}
