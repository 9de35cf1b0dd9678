//! Genetic operators: weight perturbation scaled by mutation strength,
//! subnet-respecting structural mutations, fitness-free NEAT crossover and
//! construction of the 15-slot offspring population.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cppn::{
    connection_innovation, initial_weight, split_node_id, ActivationKind, ConnectionGene, Genome,
    Innovation, NodeGene, NodeId, NodeRole, Subnet,
};
use crate::rng::Rng;

pub const MIN_STRENGTH: f64 = 0.01;
pub const MAX_STRENGTH: f64 = 1.0;
pub const DEFAULT_STRENGTH: f64 = 0.5;

/// Placement attempts before `add_connection` gives up.
pub const ADD_CONNECTION_ATTEMPTS: usize = 20;
/// Crossover retries before falling back to a copy of the first parent.
pub const CROSSOVER_RETRIES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationMode {
    StructureOnly,
    ColorOnly,
    Both,
}

impl MutationMode {
    pub const ALL: [MutationMode; 3] = [
        MutationMode::StructureOnly,
        MutationMode::ColorOnly,
        MutationMode::Both,
    ];

    pub fn permits(self, subnet: Subnet) -> bool {
        match self {
            MutationMode::Both => true,
            MutationMode::StructureOnly => subnet == Subnet::Structure,
            MutationMode::ColorOnly => subnet == Subnet::Color,
        }
    }

    /// Whether this mode is allowed while color mode has the given state.
    pub fn legal_with_color(self, color_mode: bool) -> bool {
        color_mode || self == MutationMode::StructureOnly
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeatError {
    #[error("mutation strength {0} outside [0.01, 1]")]
    StrengthOutOfRange(f64),
    #[error("rate {name} = {value} outside [0, 1]")]
    RateOutOfRange { name: &'static str, value: f64 },
    #[error("offspring need at least one parent")]
    NoParents,
    #[error("{parents} parents do not fit a population of {pop_size}")]
    TooManyParents { parents: usize, pop_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationParams {
    pub strength: f64,
    pub mode: MutationMode,
    /// Per-connection probability of a weight perturbation.
    pub weight_rate: f64,
    pub add_node_rate: f64,
    pub add_connection_rate: f64,
    /// Per-hidden-node probability of resampling the activation.
    pub activation_rate: f64,
}

impl Default for MutationParams {
    fn default() -> Self {
        MutationParams {
            strength: DEFAULT_STRENGTH,
            mode: MutationMode::StructureOnly,
            weight_rate: 0.8,
            add_node_rate: 0.08,
            add_connection_rate: 0.15,
            activation_rate: 0.1,
        }
    }
}

pub fn check_strength(strength: f64) -> Result<f64, NeatError> {
    if (MIN_STRENGTH..=MAX_STRENGTH).contains(&strength) {
        Ok(strength)
    } else {
        Err(NeatError::StrengthOutOfRange(strength))
    }
}

impl MutationParams {
    pub fn validate(&self) -> Result<(), NeatError> {
        check_strength(self.strength)?;
        for (name, value) in [
            ("weight_rate", self.weight_rate),
            ("add_node_rate", self.add_node_rate),
            ("add_connection_rate", self.add_connection_rate),
            ("activation_rate", self.activation_rate),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(NeatError::RateOutOfRange { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Signature {
    Connection { from: NodeId, to: NodeId },
    Split { connection: Innovation, occurrence: u64 },
}

/// Experiment-wide memo of structural innovations.
///
/// Ids are derived from the mutation signature, so equal signatures always map
/// to equal ids no matter which parallel session discovers them first. The
/// registry records every id it hands out and re-salts on the (astronomically
/// unlikely) event of two signatures colliding.
#[derive(Debug, Default)]
pub struct InnovationRegistry {
    state: Mutex<RegistryState>,
}

#[derive(Debug, Default)]
struct RegistryState {
    by_signature: HashMap<Signature, u64>,
    owner: HashMap<u64, Signature>,
}

impl InnovationRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    fn lookup(&self, sig: Signature, derive: impl Fn(u64) -> u64) -> u64 {
        let mut state = self.state.lock().expect("registry lock poisoned");
        if let Some(&id) = state.by_signature.get(&sig) {
            return id;
        }
        let mut salt = 0;
        let id = loop {
            let candidate = derive(salt);
            match state.owner.get(&candidate) {
                Some(existing) if *existing != sig => salt += 1,
                _ => break candidate,
            }
        };
        state.by_signature.insert(sig, id);
        state.owner.insert(id, sig);
        id
    }

    pub fn connection(&self, from: NodeId, to: NodeId) -> Innovation {
        let sig = Signature::Connection { from, to };
        Innovation(self.lookup(sig, |salt| {
            let base = connection_innovation(from, to).0;
            if salt == 0 {
                base
            } else {
                crate::cppn::FIRST_DYNAMIC_ID + (crate::rng::combine(&[base, salt]) >> 2)
            }
        }))
    }

    pub fn split_node(&self, connection: Innovation, occurrence: u64) -> NodeId {
        let sig = Signature::Split {
            connection,
            occurrence,
        };
        NodeId(self.lookup(sig, |salt| {
            let base = split_node_id(connection, occurrence).0;
            if salt == 0 {
                base
            } else {
                crate::cppn::FIRST_DYNAMIC_ID + (crate::rng::combine(&[base, salt, 1]) >> 2)
            }
        }))
    }

    /// Number of distinct signatures seen.
    pub fn len(&self) -> usize {
        self.state.lock().expect("registry lock poisoned").by_signature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Perturbs every permitted weight with probability `weight_rate` by
/// `N(0, strength^2)`. Returns how many weights changed.
pub fn mutate_weights(
    genome: &mut Genome,
    params: &MutationParams,
    rng: &mut Rng,
) -> Result<usize, NeatError> {
    params.validate()?;
    let normal = Normal::new(0.0, params.strength).expect("strength validated");
    let mut changed = 0;
    for c in genome.connections_mut() {
        if params.mode.permits(c.subnet) && rng.random_bool(params.weight_rate) {
            c.weight += normal.sample(rng);
            changed += 1;
        }
    }
    Ok(changed)
}

/// Splits a random enabled connection of a permitted subnet. Returns `false`
/// when no such connection exists.
pub fn add_node(
    genome: &mut Genome,
    mode: MutationMode,
    registry: &InnovationRegistry,
    rng: &mut Rng,
) -> bool {
    let candidates: Vec<Innovation> = genome
        .connections()
        .filter(|c| c.enabled && mode.permits(c.subnet))
        .map(|c| c.innovation)
        .collect();
    if candidates.is_empty() {
        return false;
    }
    let pick = candidates[rng.random_range(0..candidates.len())];
    let old = genome.connection(pick).expect("candidate exists").clone();
    let node_id = (0..)
        .map(|occurrence| registry.split_node(old.innovation, occurrence))
        .find(|id| genome.node(*id).is_none())
        .expect("unbounded search");
    let activation = ActivationKind::random(rng);
    let subnet = old.subnet;
    genome.connection_mut(pick).expect("candidate exists").enabled = false;
    genome.put_node(NodeGene {
        id: node_id,
        role: NodeRole::Hidden,
        activation: Some(activation),
        subnet,
    });
    for (from, to, weight) in [(old.from, node_id, 1.0), (node_id, old.to, old.weight)] {
        genome.put_connection(ConnectionGene {
            innovation: registry.connection(from, to),
            from,
            to,
            weight,
            enabled: true,
            subnet,
        });
    }
    true
}

/// Whether `from -> to` may be added under `mode`: not a duplicate, no cycle,
/// no color-to-structure leak, target not an input, subnet permitted.
pub fn connection_is_legal(genome: &Genome, from: NodeId, to: NodeId, mode: MutationMode) -> bool {
    let (Some(src), Some(dst)) = (genome.node(from), genome.node(to)) else {
        return false;
    };
    if dst.role.is_input() || !is_source_role(src.role) || from == to {
        return false;
    }
    if src.subnet == Subnet::Color && dst.subnet == Subnet::Structure {
        return false;
    }
    if !mode.permits(dst.subnet) {
        return false;
    }
    !genome.has_edge(from, to) && !genome.creates_cycle(from, to)
}

/// Hue and saturation are terminal; everything else may feed forward.
fn is_source_role(role: NodeRole) -> bool {
    !matches!(role, NodeRole::OutputHue | NodeRole::OutputSaturation)
}

/// Adds a random legal connection with an initial-distribution weight.
/// Returns `false` after [`ADD_CONNECTION_ATTEMPTS`] failed placements.
pub fn add_connection(
    genome: &mut Genome,
    mode: MutationMode,
    registry: &InnovationRegistry,
    rng: &mut Rng,
) -> bool {
    let sources: Vec<NodeId> = genome
        .nodes()
        .filter(|n| is_source_role(n.role))
        .map(|n| n.id)
        .collect();
    let targets: Vec<NodeId> = genome
        .nodes()
        .filter(|n| !n.role.is_input() && mode.permits(n.subnet))
        .map(|n| n.id)
        .collect();
    if targets.is_empty() {
        return false;
    }
    for _ in 0..ADD_CONNECTION_ATTEMPTS {
        let from = sources[rng.random_range(0..sources.len())];
        let to = targets[rng.random_range(0..targets.len())];
        if connection_is_legal(genome, from, to, mode) {
            let subnet = genome.subnet_for_target(to).expect("target exists");
            let weight = initial_weight(rng);
            genome.put_connection(ConnectionGene {
                innovation: registry.connection(from, to),
                from,
                to,
                weight,
                enabled: true,
                subnet,
            });
            return true;
        }
    }
    false
}

/// Resamples each permitted hidden node's activation with probability `rate`.
/// Inputs and outputs are never touched.
pub fn mutate_activation(genome: &mut Genome, mode: MutationMode, rate: f64, rng: &mut Rng) -> usize {
    let mut changed = 0;
    for node in genome.hidden_nodes_mut() {
        if mode.permits(node.subnet) && rng.random_bool(rate) {
            node.activation = Some(ActivationKind::random(rng));
            changed += 1;
        }
    }
    changed
}

#[derive(Debug, Clone)]
pub struct CrossoverOutcome {
    pub child: Genome,
    /// True when every attempt failed validation and the child is a copy of
    /// the first parent.
    pub fallback: bool,
}

/// Fitness-free NEAT crossover. Genes are aligned by innovation; matching
/// genes come from either parent with equal probability, disjoint and excess
/// genes from a uniformly chosen leading parent.
pub fn crossover(a: &Genome, b: &Genome, rng: &mut Rng) -> CrossoverOutcome {
    for _ in 0..=CROSSOVER_RETRIES {
        let (lead, other) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
        let nodes: Vec<NodeGene> = lead
            .nodes()
            .map(|n| match other.node(n.id) {
                Some(m) if n.role == NodeRole::Hidden => {
                    if rng.random_bool(0.5) { n.clone() } else { m.clone() }
                }
                _ => n.clone(),
            })
            .collect();
        let conns: Vec<ConnectionGene> = lead
            .connections()
            .map(|c| match other.connection(c.innovation) {
                Some(d) => {
                    if rng.random_bool(0.5) { c.clone() } else { d.clone() }
                }
                None => c.clone(),
            })
            .collect();
        if let Ok(child) = Genome::from_genes(nodes, conns) {
            return CrossoverOutcome {
                child,
                fallback: false,
            };
        }
    }
    CrossoverOutcome {
        child: a.clone(),
        fallback: true,
    }
}

/// One full mutation pass: weights always, then the structural operators at
/// their configured rates.
pub fn mutate(
    genome: &mut Genome,
    params: &MutationParams,
    registry: &InnovationRegistry,
    rng: &mut Rng,
) -> Result<(), NeatError> {
    mutate_weights(genome, params, rng)?;
    if rng.random_bool(params.add_node_rate) {
        add_node(genome, params.mode, registry, rng);
    }
    if rng.random_bool(params.add_connection_rate) {
        add_connection(genome, params.mode, registry, rng);
    }
    mutate_activation(genome, params.mode, params.activation_rate, rng);
    Ok(())
}

/// Builds the next population: exact parent copies first, in selection order,
/// then children (crossover of two distinct parents when several exist,
/// followed by mutation).
pub fn make_offspring(
    parents: &[Genome],
    params: &MutationParams,
    registry: &InnovationRegistry,
    rng: &mut Rng,
    pop_size: usize,
) -> Result<Vec<Genome>, NeatError> {
    params.validate()?;
    if parents.is_empty() {
        return Err(NeatError::NoParents);
    }
    if parents.len() > pop_size {
        return Err(NeatError::TooManyParents {
            parents: parents.len(),
            pop_size,
        });
    }
    let mut population: Vec<Genome> = parents.to_vec();
    while population.len() < pop_size {
        let mut child = if parents.len() >= 2 {
            let i = rng.random_range(0..parents.len());
            let mut j = rng.random_range(0..parents.len() - 1);
            if j >= i {
                j += 1;
            }
            crossover(&parents[i], &parents[j], rng).child
        } else {
            parents[0].clone()
        };
        mutate(&mut child, params, registry, rng)?;
        population.push(child);
    }
    Ok(population)
}
