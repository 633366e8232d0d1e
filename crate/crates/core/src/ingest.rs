//! Campaign log ingestion and directed loss estimation.
//!
//! A campaign log holds one received packet per line:
//!
//! ```text
//! # tx rx tx_power_dBm rssi_dBm channel seq
//! 3 7 3.0 -60.0 17 42
//! ```
//!
//! The loss of a sample is `tx_power - rssi`. Samples are grouped per directed
//! pair and reduced into a [`LossMatrix`], which is the interchange format for
//! every downstream stage.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::NodeId;

/// Lowest IEEE 802.15.4 channel in the 2.4 GHz band.
pub const MIN_CHANNEL: u8 = 11;
/// Highest IEEE 802.15.4 channel in the 2.4 GHz band.
pub const MAX_CHANNEL: u8 = 26;

const MATRIX_FORMAT: &str = "multihop-topo/loss-matrix";
const POSITIONS_FORMAT: &str = "multihop-topo/positions";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("samples mix channels {first} and {second}")]
    MixedChannels { first: u8, second: u8 },
    #[error("invalid entry {tx}->{rx}: {reason}")]
    InvalidEntry {
        tx: NodeId,
        rx: NodeId,
        reason: String,
    },
    #[error("node {0} has no position")]
    MissingPosition(NodeId),
    #[error("insufficient data: {0} entries, need at least 2")]
    InsufficientData(usize),
    #[error("degenerate: zero variance in distance or loss")]
    Degenerate,
    #[error("invalid aggregator {0:?} (expected mean, median or pNN)")]
    InvalidAggregator(String),
    #[error("malformed document: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One received packet of a measurement campaign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSample {
    pub tx: NodeId,
    pub rx: NodeId,
    /// dBm
    pub tx_power: f64,
    /// dBm
    pub rssi: f64,
    pub channel: u8,
    pub seq: u64,
}

impl LossSample {
    /// Attenuation in dB.
    pub fn loss(&self) -> f64 {
        self.tx_power - self.rssi
    }

    /// Formats the sample as a campaign log record. Parsing the line yields the
    /// same sample bit for bit.
    pub fn to_log_line(&self) -> String {
        format!(
            "{} {} {} {} {} {}",
            self.tx, self.rx, self.tx_power, self.rssi, self.channel, self.seq
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    FieldCount(usize),
    BadField { field: &'static str, value: String },
    NonFinite(&'static str),
    SelfLink,
    NegativeLoss,
    ChannelOutOfRange(u8),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::FieldCount(n) => write!(f, "expected 6 fields, found {n}"),
            RejectReason::BadField { field, value } => write!(f, "bad {field} {value:?}"),
            RejectReason::NonFinite(field) => write!(f, "non-finite {field}"),
            RejectReason::SelfLink => f.write_str("tx equals rx"),
            RejectReason::NegativeLoss => f.write_str("negative loss"),
            RejectReason::ChannelOutOfRange(c) => {
                write!(f, "channel {c} outside {MIN_CHANNEL}..={MAX_CHANNEL}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    /// 1-based line number.
    pub line: usize,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedLog {
    pub samples: Vec<LossSample>,
    pub rejections: Vec<Rejection>,
}

/// Parses campaign log text. Malformed records are collected as rejections and
/// never abort the parse.
pub fn parse_campaign_log(text: &str) -> ParsedLog {
    let mut out = ParsedLog::default();
    for (idx, line) in text.lines().enumerate() {
        push_line(&mut out, idx + 1, line);
    }
    out
}

/// Streaming variant of [`parse_campaign_log`].
pub fn parse_campaign_reader<R: BufRead>(reader: R) -> std::io::Result<ParsedLog> {
    let mut out = ParsedLog::default();
    for (idx, line) in reader.lines().enumerate() {
        push_line(&mut out, idx + 1, &line?);
    }
    Ok(out)
}

fn push_line(out: &mut ParsedLog, line_no: usize, line: &str) {
    let body = match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    };
    if body.trim().is_empty() {
        return;
    }
    match parse_record(body) {
        Ok(sample) => out.samples.push(sample),
        Err(reason) => out.rejections.push(Rejection {
            line: line_no,
            reason,
        }),
    }
}

fn parse_record(body: &str) -> Result<LossSample, RejectReason> {
    let fields: Vec<&str> = body.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(RejectReason::FieldCount(fields.len()));
    }
    let tx: NodeId = field(fields[0], "tx")?;
    let rx: NodeId = field(fields[1], "rx")?;
    let tx_power: f64 = field(fields[2], "tx_power")?;
    let rssi: f64 = field(fields[3], "rssi")?;
    let channel: u8 = field(fields[4], "channel")?;
    let seq: u64 = field(fields[5], "seq")?;

    if !tx_power.is_finite() {
        return Err(RejectReason::NonFinite("tx_power"));
    }
    if !rssi.is_finite() {
        return Err(RejectReason::NonFinite("rssi"));
    }
    if tx == rx {
        return Err(RejectReason::SelfLink);
    }
    if !(MIN_CHANNEL..=MAX_CHANNEL).contains(&channel) {
        return Err(RejectReason::ChannelOutOfRange(channel));
    }
    if rssi > tx_power {
        return Err(RejectReason::NegativeLoss);
    }
    Ok(LossSample {
        tx,
        rx,
        tx_power,
        rssi,
        channel,
        seq,
    })
}

fn field<T: FromStr>(raw: &str, name: &'static str) -> Result<T, RejectReason> {
    raw.parse().map_err(|_| RejectReason::BadField {
        field: name,
        value: raw.to_string(),
    })
}

/// How the per-sample losses of one directed pair collapse into a single estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Aggregator {
    #[default]
    Mean,
    Median,
    /// Percentile in `[0, 100]`, linearly interpolated between order statistics.
    Percentile(f64),
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregator::Mean => f.write_str("mean"),
            Aggregator::Median => f.write_str("median"),
            Aggregator::Percentile(p) => write!(f, "p{p}"),
        }
    }
}

impl FromStr for Aggregator {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "median" => Ok(Aggregator::Median),
            _ => {
                let p = s
                    .strip_prefix("percentile:")
                    .or_else(|| s.strip_prefix('p'))
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|p| (0.0..=100.0).contains(p))
                    .ok_or_else(|| IngestError::InvalidAggregator(s.to_string()))?;
                Ok(Aggregator::Percentile(p))
            }
        }
    }
}

/// Aggregated estimate for one directed pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkEstimate {
    /// dB, per the matrix's aggregator.
    pub mean_loss: f64,
    /// Sample standard deviation in dB.
    pub stddev: f64,
    pub count: u32,
}

/// Directed pairwise loss estimates for one channel.
///
/// A missing entry means the receiver never heard the transmitter; it compares
/// above every bound.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossMatrix {
    nodes: BTreeSet<NodeId>,
    entries: BTreeMap<(NodeId, NodeId), LinkEstimate>,
    channel: Option<u8>,
    source: Option<String>,
}

impl LossMatrix {
    pub fn new(channel: Option<u8>) -> Self {
        LossMatrix {
            channel,
            ..Default::default()
        }
    }

    pub fn channel(&self) -> Option<u8> {
        self.channel
    }

    /// Free-form provenance note carried in the file header.
    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    pub fn set_source(&mut self, source: impl Into<String>) {
        self.source = Some(source.into());
    }

    pub fn add_node(&mut self, node: NodeId) {
        self.nodes.insert(node);
    }

    /// Inserts (or replaces) a directed entry. Both endpoints become matrix nodes.
    pub fn insert(
        &mut self,
        tx: NodeId,
        rx: NodeId,
        estimate: LinkEstimate,
    ) -> Result<(), IngestError> {
        let invalid = |reason: &str| IngestError::InvalidEntry {
            tx,
            rx,
            reason: reason.to_string(),
        };
        if tx == rx {
            return Err(invalid("self entry"));
        }
        if estimate.count == 0 {
            return Err(invalid("count must be at least 1"));
        }
        if !estimate.mean_loss.is_finite() || estimate.mean_loss < 0.0 {
            return Err(invalid("mean_loss must be finite and non-negative"));
        }
        if !estimate.stddev.is_finite() || estimate.stddev < 0.0 {
            return Err(invalid("stddev must be finite and non-negative"));
        }
        self.nodes.insert(tx);
        self.nodes.insert(rx);
        self.entries.insert((tx, rx), estimate);
        Ok(())
    }

    /// Shorthand for an entry with a single observation.
    pub fn insert_loss(&mut self, tx: NodeId, rx: NodeId, loss: f64) -> Result<(), IngestError> {
        self.insert(
            tx,
            rx,
            LinkEstimate {
                mean_loss: loss,
                stddev: 0.0,
                count: 1,
            },
        )
    }

    pub fn remove(&mut self, tx: NodeId, rx: NodeId) -> Option<LinkEstimate> {
        self.entries.remove(&(tx, rx))
    }

    pub fn get(&self, tx: NodeId, rx: NodeId) -> Option<&LinkEstimate> {
        self.entries.get(&(tx, rx))
    }

    pub fn loss(&self, tx: NodeId, rx: NodeId) -> Option<f64> {
        self.get(tx, rx).map(|e| e.mean_loss)
    }

    /// The worse of the two directions, or `None` if either is missing. An
    /// undirected edge exists exactly when this is at most the bound.
    pub fn symmetric_loss(&self, a: NodeId, b: NodeId) -> Option<f64> {
        Some(self.loss(a, b)?.max(self.loss(b, a)?))
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn contains_node(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    pub fn entries(&self) -> impl Iterator<Item = (NodeId, NodeId, &LinkEstimate)> + '_ {
        self.entries.iter().map(|(&(tx, rx), e)| (tx, rx, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        let doc = MatrixDocument {
            format: MATRIX_FORMAT.to_string(),
            version: FORMAT_VERSION,
            channel: self.channel,
            source: self.source.clone(),
            nodes: self.nodes.iter().copied().collect(),
            entries: self
                .entries()
                .map(|(tx, rx, e)| EntryRecord {
                    tx,
                    rx,
                    mean_loss: e.mean_loss,
                    stddev: e.stddev,
                    count: e.count,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("matrix serializes");
        s.push('\n');
        s
    }

    /// Parses and validates a matrix document.
    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let doc: MatrixDocument =
            serde_json::from_str(text).map_err(|e| IngestError::Format(e.to_string()))?;
        if doc.format != MATRIX_FORMAT {
            return Err(IngestError::Format(format!(
                "expected format {MATRIX_FORMAT:?}, found {:?}",
                doc.format
            )));
        }
        if doc.version != FORMAT_VERSION {
            return Err(IngestError::Format(format!(
                "unsupported version {}",
                doc.version
            )));
        }
        let mut m = LossMatrix::new(doc.channel);
        m.source = doc.source;
        for n in doc.nodes {
            m.add_node(n);
        }
        for e in doc.entries {
            m.insert(
                e.tx,
                e.rx,
                LinkEstimate {
                    mean_loss: e.mean_loss,
                    stddev: e.stddev,
                    count: e.count,
                },
            )?;
        }
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixDocument {
    format: String,
    version: u32,
    channel: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    nodes: Vec<NodeId>,
    entries: Vec<EntryRecord>,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    tx: NodeId,
    rx: NodeId,
    mean_loss: f64,
    stddev: f64,
    count: u32,
}

/// Reduces samples into a directed loss matrix.
///
/// Losses of each pair are sorted before reduction, so the result does not
/// depend on sample order.
pub fn build_loss_matrix(
    samples: &[LossSample],
    aggregator: Aggregator,
) -> Result<LossMatrix, IngestError> {
    let channel = match samples.first() {
        Some(first) => {
            if let Some(other) = samples.iter().find(|s| s.channel != first.channel) {
                return Err(IngestError::MixedChannels {
                    first: first.channel,
                    second: other.channel,
                });
            }
            Some(first.channel)
        }
        None => None,
    };

    let mut per_pair: BTreeMap<(NodeId, NodeId), Vec<f64>> = BTreeMap::new();
    for s in samples {
        per_pair.entry((s.tx, s.rx)).or_default().push(s.loss());
    }

    let mut matrix = LossMatrix::new(channel);
    matrix.set_source(format!("campaign aggregator={aggregator}"));
    for ((tx, rx), mut losses) in per_pair {
        losses.sort_by(f64::total_cmp);
        let estimate = LinkEstimate {
            mean_loss: aggregate(&losses, aggregator),
            stddev: sample_stddev(&losses),
            count: u32::try_from(losses.len()).unwrap_or(u32::MAX),
        };
        matrix.insert(tx, rx, estimate)?;
    }
    Ok(matrix)
}

fn mean(sorted: &[f64]) -> f64 {
    let m = sorted.iter().sum::<f64>() / sorted.len() as f64;
    m.clamp(sorted[0], sorted[sorted.len() - 1])
}

fn aggregate(sorted: &[f64], aggregator: Aggregator) -> f64 {
    match aggregator {
        Aggregator::Mean => mean(sorted),
        Aggregator::Median => percentile(sorted, 50.0),
        Aggregator::Percentile(p) => percentile(sorted, p),
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

fn sample_stddev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LowCount {
    pub tx: NodeId,
    pub rx: NodeId,
    pub count: u32,
}

/// Directed entries backed by fewer than `min_count` samples, fewest first.
pub fn warn_low_counts(matrix: &LossMatrix, min_count: u32) -> Vec<LowCount> {
    let mut low: Vec<LowCount> = matrix
        .entries()
        .filter(|(_, _, e)| e.count < min_count)
        .map(|(tx, rx, e)| LowCount {
            tx,
            rx,
            count: e.count,
        })
        .collect();
    low.sort_by_key(|l| (l.count, l.tx, l.rx));
    low
}

/// Node coordinates in meters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodePositions(BTreeMap<NodeId, [f64; 3]>);

impl NodePositions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, node: NodeId, xyz: [f64; 3]) {
        self.0.insert(node, xyz);
    }

    pub fn get(&self, node: NodeId) -> Option<[f64; 3]> {
        self.0.get(&node).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, [f64; 3])> + '_ {
        self.0.iter().map(|(&n, &p)| (n, p))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> Option<f64> {
        let (pa, pb) = (self.get(a)?, self.get(b)?);
        Some(
            pa.iter()
                .zip(pb.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        )
    }

    pub fn to_json(&self) -> String {
        let doc = PositionsDocument {
            format: POSITIONS_FORMAT.to_string(),
            version: FORMAT_VERSION,
            positions: self
                .iter()
                .map(|(node, [x, y, z])| PositionRecord { node, x, y, z })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("positions serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let doc: PositionsDocument =
            serde_json::from_str(text).map_err(|e| IngestError::Format(e.to_string()))?;
        if doc.format != POSITIONS_FORMAT {
            return Err(IngestError::Format(format!(
                "expected format {POSITIONS_FORMAT:?}, found {:?}",
                doc.format
            )));
        }
        let mut p = NodePositions::new();
        for r in doc.positions {
            if ![r.x, r.y, r.z].iter().all(|v| v.is_finite()) {
                return Err(IngestError::Format(format!(
                    "non-finite position for node {}",
                    r.node
                )));
            }
            p.insert(r.node, [r.x, r.y, r.z]);
        }
        Ok(p)
    }
}

#[derive(Serialize, Deserialize)]
struct PositionsDocument {
    format: String,
    version: u32,
    positions: Vec<PositionRecord>,
}

#[derive(Serialize, Deserialize)]
struct PositionRecord {
    node: NodeId,
    x: f64,
    y: f64,
    z: f64,
}

/// Pearson correlation between euclidean distance and loss over all directed
/// entries.
pub fn distance_loss_correlation(
    matrix: &LossMatrix,
    positions: &NodePositions,
) -> Result<f64, IngestError> {
    if let Some(&missing) = matrix.nodes().iter().find(|n| positions.get(**n).is_none()) {
        return Err(IngestError::MissingPosition(missing));
    }
    if matrix.len() < 2 {
        return Err(IngestError::InsufficientData(matrix.len()));
    }
    let pairs: Vec<(f64, f64)> = matrix
        .entries()
        .map(|(tx, rx, e)| {
            let d = positions.distance(tx, rx).expect("positions checked");
            (d, e.mean_loss)
        })
        .collect();
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(IngestError::Degenerate);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
