//! CPPN genomes and image rendering.
//!
//! A genome maps `(x, y, r, bias)` to brightness, hue and saturation. Every
//! connection and hidden node is tagged as belonging to the *structure* or the
//! *color* subnetwork; color-tagged genes can never reach the brightness
//! output, so color-only edits leave the grayscale image untouched.

mod eval;
mod render;
mod text;

pub use eval::CompiledCppn;
pub use render::{
    clamp_unit, decode_png, encode_png, hsv_to_rgb, pixel_coordinate, render, to_rgb, wrap_hue, ImageBuffer,
    ImageError, Pixel,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::{combine, label, Rng};

/// Node identifier. Ids below [`FIRST_DYNAMIC_ID`] are reserved for the seven
/// fixed input/output nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

/// Historical marking of a connection gene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Innovation(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Innovation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const INPUT_X: NodeId = NodeId(0);
pub const INPUT_Y: NodeId = NodeId(1);
pub const INPUT_R: NodeId = NodeId(2);
pub const INPUT_BIAS: NodeId = NodeId(3);
pub const OUTPUT_BRIGHTNESS: NodeId = NodeId(4);
pub const OUTPUT_HUE: NodeId = NodeId(5);
pub const OUTPUT_SATURATION: NodeId = NodeId(6);

pub const FIRST_DYNAMIC_ID: u64 = 1 << 10;

const ID_MASK: u64 = (1 << 62) - 1;

/// Innovation number of the connection `from -> to`. Derived from the
/// endpoints alone, so the same structural change made anywhere in an
/// experiment gets the same number regardless of scheduling.
pub fn connection_innovation(from: NodeId, to: NodeId) -> Innovation {
    Innovation(dynamic_id(&[label("conn"), from.0, to.0]))
}

/// Id of the hidden node created by the `occurrence`-th split of `conn`.
pub fn split_node_id(conn: Innovation, occurrence: u64) -> NodeId {
    NodeId(dynamic_id(&[label("split"), conn.0, occurrence]))
}

fn dynamic_id(words: &[u64]) -> u64 {
    FIRST_DYNAMIC_ID + (combine(words) & ID_MASK)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Sigmoid,
    Sine,
    Cosine,
    Identity,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [
        ActivationKind::Sigmoid,
        ActivationKind::Sine,
        ActivationKind::Cosine,
        ActivationKind::Identity,
    ];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => sigmoid(x),
            ActivationKind::Sine => x.sin(),
            ActivationKind::Cosine => x.cos(),
            ActivationKind::Identity => x,
        }
    }

    pub fn random(rng: &mut Rng) -> Self {
        Self::ALL[rng.random_range(0..Self::ALL.len())]
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Sine => "sine",
            ActivationKind::Cosine => "cosine",
            ActivationKind::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subnet {
    Structure,
    Color,
}

impl Subnet {
    pub fn name(self) -> &'static str {
        match self {
            Subnet::Structure => "structure",
            Subnet::Color => "color",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "structure" => Some(Subnet::Structure),
            "color" => Some(Subnet::Color),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeRole {
    InputX,
    InputY,
    InputR,
    InputBias,
    Hidden,
    OutputBrightness,
    OutputHue,
    OutputSaturation,
}

impl NodeRole {
    pub fn is_input(self) -> bool {
        matches!(
            self,
            NodeRole::InputX | NodeRole::InputY | NodeRole::InputR | NodeRole::InputBias
        )
    }

    pub fn is_output(self) -> bool {
        matches!(
            self,
            NodeRole::OutputBrightness | NodeRole::OutputHue | NodeRole::OutputSaturation
        )
    }

    /// Activation fixed by role, `None` for inputs and hidden nodes.
    pub fn fixed_activation(self) -> Option<ActivationKind> {
        match self {
            NodeRole::OutputBrightness => Some(ActivationKind::Sigmoid),
            NodeRole::OutputHue | NodeRole::OutputSaturation => Some(ActivationKind::Identity),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeRole::InputX => "input-x",
            NodeRole::InputY => "input-y",
            NodeRole::InputR => "input-r",
            NodeRole::InputBias => "input-bias",
            NodeRole::Hidden => "hidden",
            NodeRole::OutputBrightness => "output-brightness",
            NodeRole::OutputHue => "output-hue",
            NodeRole::OutputSaturation => "output-saturation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        FIXED_NODES
            .iter()
            .map(|(_, r, _)| *r)
            .chain(std::iter::once(NodeRole::Hidden))
            .find(|r| r.name() == s)
    }
}

/// The seven nodes every genome carries, with their fixed ids and subnets.
pub const FIXED_NODES: [(NodeId, NodeRole, Subnet); 7] = [
    (INPUT_X, NodeRole::InputX, Subnet::Structure),
    (INPUT_Y, NodeRole::InputY, Subnet::Structure),
    (INPUT_R, NodeRole::InputR, Subnet::Structure),
    (INPUT_BIAS, NodeRole::InputBias, Subnet::Structure),
    (OUTPUT_BRIGHTNESS, NodeRole::OutputBrightness, Subnet::Structure),
    (OUTPUT_HUE, NodeRole::OutputHue, Subnet::Color),
    (OUTPUT_SATURATION, NodeRole::OutputSaturation, Subnet::Color),
];

pub const INPUT_IDS: [NodeId; 4] = [INPUT_X, INPUT_Y, INPUT_R, INPUT_BIAS];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGene {
    pub id: NodeId,
    pub role: NodeRole,
    /// `None` only for inputs.
    pub activation: Option<ActivationKind>,
    pub subnet: Subnet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionGene {
    pub innovation: Innovation,
    pub from: NodeId,
    pub to: NodeId,
    pub weight: f64,
    pub enabled: bool,
    pub subnet: Subnet,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CppnError {
    #[error("genome contains a cycle through node {0}")]
    Cycle(NodeId),
    #[error("structural integrity violated: {0}")]
    Integrity(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A CPPN genome. Genes are kept sorted by id / innovation so iteration order
/// (and therefore evaluation and serialization) is canonical.
#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    nodes: BTreeMap<NodeId, NodeGene>,
    connections: BTreeMap<Innovation, ConnectionGene>,
}

/// Initial weights are drawn uniformly from this symmetric range.
pub const INITIAL_WEIGHT_RANGE: f64 = 1.0;

pub fn initial_weight(rng: &mut Rng) -> f64 {
    rng.random_range(-INITIAL_WEIGHT_RANGE..=INITIAL_WEIGHT_RANGE)
}

impl Genome {
    /// The minimal topology: every input wired to brightness, and brightness
    /// wired to hue and saturation through color-tagged seed connections.
    pub fn init(rng: &mut Rng) -> Genome {
        let mut genome = Genome::fixed_nodes_only();
        for input in INPUT_IDS {
            let weight = initial_weight(rng);
            genome.insert_connection(input, OUTPUT_BRIGHTNESS, weight, Subnet::Structure);
        }
        let hue_weight = initial_weight(rng);
        let sat_weight = initial_weight(rng);
        genome.insert_connection(OUTPUT_BRIGHTNESS, OUTPUT_HUE, hue_weight, Subnet::Color);
        genome.insert_connection(OUTPUT_BRIGHTNESS, OUTPUT_SATURATION, sat_weight, Subnet::Color);
        genome
    }

    /// The seven fixed nodes and no connections.
    pub fn fixed_nodes_only() -> Genome {
        let nodes = FIXED_NODES
            .iter()
            .map(|&(id, role, subnet)| {
                (
                    id,
                    NodeGene {
                        id,
                        role,
                        activation: role.fixed_activation(),
                        subnet,
                    },
                )
            })
            .collect();
        Genome {
            nodes,
            connections: BTreeMap::new(),
        }
    }

    fn insert_connection(&mut self, from: NodeId, to: NodeId, weight: f64, subnet: Subnet) {
        let innovation = connection_innovation(from, to);
        self.connections.insert(
            innovation,
            ConnectionGene {
                innovation,
                from,
                to,
                weight,
                enabled: true,
                subnet,
            },
        );
    }

    /// Builds a genome from raw genes and validates it.
    pub fn from_genes(
        nodes: impl IntoIterator<Item = NodeGene>,
        connections: impl IntoIterator<Item = ConnectionGene>,
    ) -> Result<Genome, CppnError> {
        let genome = Genome {
            nodes: nodes.into_iter().map(|n| (n.id, n)).collect(),
            connections: connections.into_iter().map(|c| (c.innovation, c)).collect(),
        };
        genome.validate()?;
        Ok(genome)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeGene> {
        self.nodes.values()
    }

    pub fn connections(&self) -> impl Iterator<Item = &ConnectionGene> {
        self.connections.values()
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeGene> {
        self.nodes.get(&id)
    }

    pub fn connection(&self, innovation: Innovation) -> Option<&ConnectionGene> {
        self.connections.get(&innovation)
    }

    pub fn connection_mut(&mut self, innovation: Innovation) -> Option<&mut ConnectionGene> {
        self.connections.get_mut(&innovation)
    }

    pub fn connections_mut(&mut self) -> impl Iterator<Item = &mut ConnectionGene> {
        self.connections.values_mut()
    }

    pub fn hidden_nodes_mut(&mut self) -> impl Iterator<Item = &mut NodeGene> {
        self.nodes
            .values_mut()
            .filter(|n| n.role == NodeRole::Hidden)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn hidden_count(&self) -> usize {
        self.nodes.values().filter(|n| n.role == NodeRole::Hidden).count()
    }

    pub fn connection_count(&self) -> usize {
        self.connections.len()
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.connections
            .contains_key(&connection_innovation(from, to))
            || self.connections.values().any(|c| c.from == from && c.to == to)
    }

    pub fn innovations(&self) -> BTreeSet<Innovation> {
        self.connections.keys().copied().collect()
    }

    /// Inserts a gene; callers are responsible for keeping the genome valid.
    pub(crate) fn put_connection(&mut self, conn: ConnectionGene) {
        self.connections.insert(conn.innovation, conn);
    }

    pub(crate) fn put_node(&mut self, node: NodeGene) {
        self.nodes.insert(node.id, node);
    }

    /// Subnet a connection into `to` must carry.
    pub fn subnet_for_target(&self, to: NodeId) -> Option<Subnet> {
        self.nodes.get(&to).map(|n| n.subnet)
    }

    /// True if `to` can reach `from` through existing connections, i.e. adding
    /// `from -> to` would close a cycle.
    pub fn creates_cycle(&self, from: NodeId, to: NodeId) -> bool {
        if from == to {
            return true;
        }
        let mut stack = vec![to];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if n == from {
                return true;
            }
            if !seen.insert(n) {
                continue;
            }
            stack.extend(self.connections.values().filter(|c| c.from == n).map(|c| c.to));
        }
        false
    }

    /// Checks every structural invariant of the representation.
    pub fn validate(&self) -> Result<(), CppnError> {
        let integrity = |m: String| Err(CppnError::Integrity(m));
        for &(id, role, subnet) in &FIXED_NODES {
            match self.nodes.get(&id) {
                Some(n) if n.role == role && n.subnet == subnet => {
                    if n.activation != role.fixed_activation() {
                        return integrity(format!("node {id} has a non-fixed activation"));
                    }
                }
                _ => return integrity(format!("missing or altered fixed node {}", role.name())),
            }
        }
        for (id, n) in &self.nodes {
            if *id != n.id {
                return integrity(format!("node keyed {id} carries id {}", n.id));
            }
            if n.role == NodeRole::Hidden {
                if id.0 < FIRST_DYNAMIC_ID {
                    return integrity(format!("hidden node {id} uses a reserved id"));
                }
                if n.activation.is_none() {
                    return integrity(format!("hidden node {id} has no activation"));
                }
            } else if id.0 >= FIRST_DYNAMIC_ID {
                return integrity(format!("duplicate {} node {id}", n.role.name()));
            }
        }
        for (innov, c) in &self.connections {
            if *innov != c.innovation {
                return integrity(format!("connection keyed {innov} carries {}", c.innovation));
            }
            let (Some(src), Some(dst)) = (self.nodes.get(&c.from), self.nodes.get(&c.to)) else {
                return integrity(format!("connection {innov} references a missing node"));
            };
            if dst.role.is_input() {
                return integrity(format!("connection {innov} targets an input"));
            }
            if c.from == c.to {
                return integrity(format!("connection {innov} is a self loop"));
            }
            if c.subnet != dst.subnet {
                return integrity(format!("connection {innov} subnet differs from its target"));
            }
            if src.subnet == Subnet::Color && dst.subnet == Subnet::Structure {
                return integrity(format!("connection {innov} leaks color into structure"));
            }
            if !c.weight.is_finite() {
                return integrity(format!("connection {innov} has a non-finite weight"));
            }
        }
        for target in [OUTPUT_HUE, OUTPUT_SATURATION] {
            if !self
                .connections
                .contains_key(&connection_innovation(OUTPUT_BRIGHTNESS, target))
            {
                return integrity("missing seed color connection".to_string());
            }
        }
        self.topological_order().map(|_| ())
    }

    /// Non-input nodes in a deterministic topological order.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, CppnError> {
        let mut indegree: BTreeMap<NodeId, usize> = self.nodes.keys().map(|&k| (k, 0)).collect();
        let mut outgoing: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for c in self.connections.values() {
            *indegree.entry(c.to).or_default() += 1;
            outgoing.entry(c.from).or_default().push(c.to);
        }
        let mut ready: BTreeSet<NodeId> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&k, _)| k)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n);
            for &m in outgoing.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
                let d = indegree.get_mut(&m).expect("edge endpoint exists");
                *d -= 1;
                if *d == 0 {
                    ready.insert(m);
                }
            }
        }
        if order.len() != indegree.len() {
            let stuck = indegree
                .iter()
                .find(|(_, &d)| d > 0)
                .map(|(&k, _)| k)
                .unwrap_or(NodeId(0));
            return Err(CppnError::Cycle(stuck));
        }
        order.retain(|id| self.nodes.get(id).is_some_and(|n| !n.role.is_input()));
        Ok(order)
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_text().as_bytes()))
    }

    /// Feed-forward evaluation at one coordinate. Returns post-activation
    /// `(brightness, hue, saturation)`.
    pub fn eval(&self, x: f64, y: f64, r: f64) -> Result<(f64, f64, f64), CppnError> {
        let compiled = CompiledCppn::compile(self)?;
        Ok(compiled.eval(x, y, r))
    }
}
