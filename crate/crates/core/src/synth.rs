//! Synthetic loss matrices.
//!
//! The channel model is log-distance path loss with per-pair symmetric
//! shadowing and per-direction asymmetry:
//!
//! ```text
//! loss(a, b) = reference + 10 * exponent * log10(d(a, b)) + shadow({a, b}) + asym(a -> b)
//! ```
//!
//! Draws come from ChaCha8 seeded with the scenario seed, with one stream per
//! unordered pair (pair index in ascending node order), so results do not
//! depend on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{LossMatrix, NodePositions};
use crate::NodeId;

/// Recorded in the matrix header so fixtures can be regenerated elsewhere.
pub const GENERATOR_ID: &str = "chacha8-stream-per-pair/standard-normal";

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("nodes {0} and {1} share a position")]
    CoincidentPositions(NodeId, NodeId),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// Channel model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Loss at 1 m, dB.
    pub reference_loss: f64,
    pub path_loss_exponent: f64,
    /// dB, shared by both directions of a pair.
    pub shadowing_sigma: f64,
    /// dB, drawn independently per direction.
    pub asymmetry_sigma: f64,
    pub seed: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            reference_loss: 40.0,
            path_loss_exponent: 2.0,
            shadowing_sigma: 0.0,
            asymmetry_sigma: 0.0,
            seed: 0,
        }
    }
}

impl ModelParams {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidScenario(m.to_string()));
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent > 0.0) {
            return bad("path_loss_exponent must be positive");
        }
        if !(self.shadowing_sigma >= 0.0 && self.asymmetry_sigma >= 0.0) {
            return bad("sigmas must be non-negative");
        }
        if !(self.reference_loss.is_finite()
            && self.shadowing_sigma.is_finite()
            && self.asymmetry_sigma.is_finite())
        {
            return bad("parameters must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScenario {
    pub positions: NodePositions,
    pub params: ModelParams,
}

/// Draws a loss matrix for the scenario. Negative draws clamp to 0 dB.
pub fn generate(scenario: &SynthScenario) -> Result<LossMatrix, SynthError> {
    let params = &scenario.params;
    params.validate()?;
    let nodes: Vec<(NodeId, [f64; 3])> = scenario.positions.iter().collect();
    if nodes.len() < 2 {
        return Err(SynthError::InvalidScenario(
            "need at least two positioned nodes".into(),
        ));
    }
    let mut matrix = LossMatrix::new(None);
    matrix.set_source(format!(
        "synth generator={GENERATOR_ID} seed={} reference_loss={} exponent={} shadowing_sigma={} asymmetry_sigma={}",
        params.seed,
        params.reference_loss,
        params.path_loss_exponent,
        params.shadowing_sigma,
        params.asymmetry_sigma
    ));
    let mut pair_index: u64 = 0;
    for (i, &(a, pa)) in nodes.iter().enumerate() {
        for &(b, pb) in &nodes[i + 1..] {
            let d = pa
                .iter()
                .zip(pb.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            if d == 0.0 {
                return Err(SynthError::CoincidentPositions(a, b));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(pair_index);
            pair_index += 1;
            let shadow: f64 = params.shadowing_sigma * rng.sample::<f64, _>(StandardNormal);
            let asym_ab: f64 = params.asymmetry_sigma * rng.sample::<f64, _>(StandardNormal);
            let asym_ba: f64 = params.asymmetry_sigma * rng.sample::<f64, _>(StandardNormal);
            let base =
                params.reference_loss + 10.0 * params.path_loss_exponent * d.log10() + shadow;
            matrix
                .insert_loss(a, b, (base + asym_ab).max(0.0))
                .expect("valid synthetic entry");
            matrix
                .insert_loss(b, a, (base + asym_ba).max(0.0))
                .expect("valid synthetic entry");
        }
    }
    Ok(matrix)
}

/// Nodes `1..=n` in a row where neighbors see `on_loss` and every other pair
/// `off_loss`, both directions.
pub fn chain_scenario(n: u32, on_loss: f64, off_loss: f64) -> Result<LossMatrix, SynthError> {
    if n < 2 {
        return Err(SynthError::InvalidScenario("chain needs n >= 2".into()));
    }
    if !(on_loss >= 0.0 && on_loss < off_loss && off_loss.is_finite()) {
        return Err(SynthError::InvalidScenario(
            "chain needs 0 <= on_loss < off_loss".into(),
        ));
    }
    let mut m = LossMatrix::new(None);
    m.set_source(format!(
        "synth chain n={n} on_loss={on_loss} off_loss={off_loss}"
    ));
    for a in 1..=n {
        for b in 1..=n {
            if a != b {
                let loss = if a.abs_diff(b) == 1 {
                    on_loss
                } else {
                    off_loss
                };
                m.insert_loss(NodeId(a), NodeId(b), loss)
                    .expect("valid chain entry");
            }
        }
    }
    Ok(m)
}

/// Row-major grid positions, node ids from 1, in the z = 0 plane.
pub fn grid_positions(rows: u32, cols: u32, spacing: f64) -> NodePositions {
    let mut p = NodePositions::new();
    for r in 0..rows {
        for c in 0..cols {
            p.insert(
                NodeId(r * cols + c + 1),
                [c as f64 * spacing, r as f64 * spacing, 0.0],
            );
        }
    }
    p
}

pub fn grid_scenario(
    rows: u32,
    cols: u32,
    spacing: f64,
    params: ModelParams,
) -> Result<LossMatrix, SynthError> {
    if rows * cols < 2 {
        return Err(SynthError::InvalidScenario(
            "grid needs at least two nodes".into(),
        ));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(SynthError::InvalidScenario(
            "spacing must be positive".into(),
        ));
    }
    generate(&SynthScenario {
        positions: grid_positions(rows, cols, spacing),
        params,
    })
}

/// `n` nodes uniformly placed in a `width x depth` rectangle, drawn from the
/// scenario seed on a stream distinct from the pair streams.
pub fn random_positions(n: u32, width: f64, depth: f64, seed: u64) -> NodePositions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut p = NodePositions::new();
    for id in 1..=n {
        let x = rng.gen::<f64>() * width;
        let y = rng.gen::<f64>() * depth;
        p.insert(NodeId(id), [x, y, 0.0]);
    }
    p
}

/// Scenario file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub layout: Layout,
    #[serde(default)]
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Grid { rows: u32, cols: u32, spacing: f64 },
    Random { n: u32, width: f64, depth: f64 },
    Positions(Vec<PositionEntry>),
    Chain { n: u32, on_loss: f64, off_loss: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionEntry {
    pub node: NodeId,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub z: f64,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        serde_json::from_str(text).map_err(|e| SynthError::InvalidScenario(e.to_string()))
    }

    /// The matrix, plus positions for every layout except `chain`.
    pub fn realize(&self) -> Result<(LossMatrix, Option<NodePositions>), SynthError> {
        let positions = match &self.layout {
            Layout::Chain {
                n,
                on_loss,
                off_loss,
            } => return Ok((chain_scenario(*n, *on_loss, *off_loss)?, None)),
            Layout::Grid {
                rows,
                cols,
                spacing,
            } => {
                let m = grid_scenario(*rows, *cols, *spacing, self.params)?;
                return Ok((m, Some(grid_positions(*rows, *cols, *spacing))));
            }
            Layout::Random { n, width, depth } => {
                random_positions(*n, *width, *depth, self.params.seed)
            }
            Layout::Positions(entries) => {
                let mut p = NodePositions::new();
                for e in entries {
                    p.insert(e.node, [e.x, e.y, e.z]);
                }
                p
            }
        };
        let m = generate(&SynthScenario {
            positions: positions.clone(),
            params: self.params,
        })?;
        Ok((m, Some(positions)))
    }
}
