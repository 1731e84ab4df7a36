use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use super::{InnovationRegistry, NeatConfig};
use crate::rng::Rng;

/// Largest absolute connection weight.
pub const WEIGHT_MAX: f64 = 30.0;
/// Steepness of the hidden-node sigmoid.
pub const SIGMOID_SLOPE: f64 = 4.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeRole {
    Input,
    Hidden,
    Output,
}

impl NodeRole {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeRole::Input => "input",
            NodeRole::Hidden => "hidden",
            NodeRole::Output => "output",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "input" => Some(NodeRole::Input),
            "hidden" => Some(NodeRole::Hidden),
            "output" => Some(NodeRole::Output),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Sigmoid,
    Clamped,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Sigmoid => 1.0 / (1.0 + (-SIGMOID_SLOPE * x).exp()),
            Activation::Clamped => x.clamp(-1.0, 1.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Sigmoid => "sigmoid",
            Activation::Clamped => "clamped",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Activation::Identity),
            "sigmoid" => Some(Activation::Sigmoid),
            "clamped" => Some(Activation::Clamped),
            _ => None,
        }
    }

    pub fn for_role(role: NodeRole) -> Self {
        match role {
            NodeRole::Input => Activation::Identity,
            NodeRole::Hidden => Activation::Sigmoid,
            NodeRole::Output => Activation::Clamped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeGene {
    pub id: u32,
    pub role: NodeRole,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectionGene {
    pub innovation: u64,
    pub from: u32,
    pub to: u32,
    pub weight: f64,
    pub enabled: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenomeError {
    #[error("expected {expected} inputs, got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("genome has no fitness assigned")]
    MissingFitness,
    #[error("schema mismatch: genome has {got_in} inputs/{got_out} outputs, expected {want_in}/{want_out}")]
    Schema {
        got_in: usize,
        got_out: usize,
        want_in: usize,
        want_out: usize,
    },
    #[error("invalid genome: {0}")]
    Invariant(String),
}

/// Feed-forward NEAT genome. Node ids `0..n_inputs` are inputs,
/// `n_inputs..n_inputs+n_outputs` outputs, higher ids hidden nodes.
/// Nodes are kept sorted by id and connections by innovation.
#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub nodes: Vec<NodeGene>,
    pub connections: Vec<ConnectionGene>,
    pub fitness: Option<f64>,
}

impl Genome {
    /// Inputs and outputs only, no connections.
    pub fn bare(n_inputs: usize, n_outputs: usize) -> Self {
        let nodes = (0..n_inputs + n_outputs)
            .map(|i| {
                let role = if i < n_inputs {
                    NodeRole::Input
                } else {
                    NodeRole::Output
                };
                NodeGene {
                    id: i as u32,
                    role,
                    activation: Activation::for_role(role),
                }
            })
            .collect();
        Self {
            n_inputs,
            n_outputs,
            nodes,
            connections: Vec::new(),
            fitness: None,
        }
    }

    /// Every input wired to every output with the given weight source.
    pub fn fully_connected(n_inputs: usize, n_outputs: usize, mut weight: impl FnMut() -> f64) -> Self {
        let mut g = Self::bare(n_inputs, n_outputs);
        for i in 0..n_inputs {
            for o in 0..n_outputs {
                g.connections.push(ConnectionGene {
                    innovation: initial_innovation(i, o, n_outputs),
                    from: i as u32,
                    to: (n_inputs + o) as u32,
                    weight: weight(),
                    enabled: true,
                });
            }
        }
        g
    }

    pub fn output_id(&self, k: usize) -> u32 {
        (self.n_inputs + k) as u32
    }

    pub fn hidden_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.role == NodeRole::Hidden).count()
    }

    pub fn enabled_count(&self) -> usize {
        self.connections.iter().filter(|c| c.enabled).count()
    }

    fn node(&self, id: u32) -> Option<&NodeGene> {
        self.nodes
            .binary_search_by_key(&id, |n| n.id)
            .ok()
            .map(|i| &self.nodes[i])
    }

    fn has_pair(&self, from: u32, to: u32) -> bool {
        self.connections.iter().any(|c| c.from == from && c.to == to)
    }

    /// True when `target` is reachable from `start` along any stored
    /// connection (disabled ones included, since crossover may re-enable them).
    fn reaches(&self, start: u32, target: u32) -> bool {
        let mut stack = vec![start];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if n == target {
                return true;
            }
            if !seen.insert(n) {
                continue;
            }
            stack.extend(self.connections.iter().filter(|c| c.from == n).map(|c| c.to));
        }
        false
    }

    fn insert_node(&mut self, node: NodeGene) {
        let pos = self.nodes.partition_point(|n| n.id < node.id);
        self.nodes.insert(pos, node);
    }

    fn insert_connection(&mut self, c: ConnectionGene) {
        let pos = self.connections.partition_point(|x| x.innovation < c.innovation);
        self.connections.insert(pos, c);
    }

    /// Topologically ordered evaluation plan.
    pub fn compile(&self) -> CompiledNetwork {
        let index: HashMap<u32, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let n = self.nodes.len();
        let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut indegree = vec![0usize; n];
        let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); n];
        for c in self.connections.iter().filter(|c| c.enabled) {
            let (f, t) = (index[&c.from], index[&c.to]);
            incoming[t].push((f, c.weight));
            outgoing[f].push(t);
            indegree[t] += 1;
        }
        // Kahn's algorithm with a sorted ready set, so the order is canonical.
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &t in &outgoing[i] {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    ready.insert(t);
                }
            }
        }
        debug_assert_eq!(order.len(), n, "cyclic genome");
        let plan = order
            .into_iter()
            .filter(|&i| self.nodes[i].role != NodeRole::Input)
            .map(|i| (i, self.nodes[i].activation, std::mem::take(&mut incoming[i])))
            .collect();
        CompiledNetwork {
            n_inputs: self.n_inputs,
            n_nodes: n,
            outputs: (0..self.n_outputs).map(|k| index[&self.output_id(k)]).collect(),
            plan,
        }
    }

    pub fn activate(&self, inputs: &[f64]) -> Result<Vec<f64>, GenomeError> {
        self.compile().activate(inputs)
    }

    /// Checks every structural invariant; `Err` names the first violation.
    pub fn check(&self) -> Result<(), GenomeError> {
        let bad = |m: String| Err(GenomeError::Invariant(m));
        if self.nodes.windows(2).any(|w| w[0].id >= w[1].id) {
            return bad("node ids not strictly increasing".into());
        }
        for i in 0..self.n_inputs + self.n_outputs {
            let want = if i < self.n_inputs {
                NodeRole::Input
            } else {
                NodeRole::Output
            };
            match self.node(i as u32) {
                Some(n) if n.role == want => {}
                _ => return bad(format!("node {i} should be {}", want.as_str())),
            }
        }
        let io = self.nodes.iter().filter(|n| n.role != NodeRole::Hidden).count();
        if io != self.n_inputs + self.n_outputs {
            return bad("input/output node count differs from schema".into());
        }
        if self.connections.windows(2).any(|w| w[0].innovation >= w[1].innovation) {
            return bad("innovation ids not unique and sorted".into());
        }
        let mut pairs = BTreeSet::new();
        for c in &self.connections {
            let (Some(f), Some(t)) = (self.node(c.from), self.node(c.to)) else {
                return bad(format!("connection {} references a missing node", c.innovation));
            };
            if t.role == NodeRole::Input || f.role == NodeRole::Output {
                return bad(format!("connection {} enters an input or leaves an output", c.innovation));
            }
            if !c.weight.is_finite() {
                return bad(format!("connection {} has a non-finite weight", c.innovation));
            }
            if !pairs.insert((c.from, c.to)) {
                return bad(format!("duplicate connection {}->{}", c.from, c.to));
            }
        }
        // Cycle check over all stored connections.
        let mut indegree: BTreeMap<u32, usize> = self.nodes.iter().map(|n| (n.id, 0)).collect();
        for c in &self.connections {
            *indegree.get_mut(&c.to).unwrap() += 1;
        }
        let mut ready: Vec<u32> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&k, _)| k).collect();
        let mut visited = 0;
        while let Some(n) = ready.pop() {
            visited += 1;
            for c in self.connections.iter().filter(|c| c.from == n) {
                let d = indegree.get_mut(&c.to).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(c.to);
                }
            }
        }
        if visited != self.nodes.len() {
            return bad("connection graph has a cycle".into());
        }
        Ok(())
    }

    pub fn check_schema(&self, n_inputs: usize, n_outputs: usize) -> Result<(), GenomeError> {
        if self.n_inputs != n_inputs || self.n_outputs != n_outputs {
            return Err(GenomeError::Schema {
                got_in: self.n_inputs,
                got_out: self.n_outputs,
                want_in: n_inputs,
                want_out: n_outputs,
            });
        }
        Ok(())
    }

    /// Applies each mutation operator with its configured probability.
    pub fn mutate(&mut self, config: &NeatConfig, registry: &mut InnovationRegistry, rng: &mut Rng) {
        let before = self.clone();
        if rng.random::<f64>() < config.add_connection_rate {
            self.add_connection(registry, rng);
        }
        if rng.random::<f64>() < config.add_node_rate {
            self.add_node(registry, rng);
        }
        if rng.random::<f64>() < config.remove_connection_rate {
            self.remove_connection(rng);
        }
        if rng.random::<f64>() < config.remove_node_rate {
            self.remove_node(rng);
        }
        self.mutate_weights(config, rng);
        if *self != before {
            self.fitness = None;
        }
    }

    pub fn mutate_weights(&mut self, config: &NeatConfig, rng: &mut Rng) {
        if config.weight_perturb_rate == 0.0 && config.weight_replace_rate == 0.0 {
            return;
        }
        let normal = Normal::new(0.0, config.weight_perturb_sigma.max(0.0)).expect("finite sigma");
        for c in &mut self.connections {
            let roll: f64 = rng.random();
            if roll < config.weight_replace_rate {
                c.weight = rng.random_range(-1.0..=1.0);
            } else if roll < config.weight_replace_rate + config.weight_perturb_rate {
                c.weight = (c.weight + normal.sample(rng)).clamp(-WEIGHT_MAX, WEIGHT_MAX);
            }
        }
    }

    /// Perturbs every weight (topology untouched); used for seeded populations.
    pub fn jitter_weights(&mut self, sigma: f64, rng: &mut Rng) {
        if sigma <= 0.0 {
            return;
        }
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        for c in &mut self.connections {
            c.weight = (c.weight + normal.sample(rng)).clamp(-WEIGHT_MAX, WEIGHT_MAX);
        }
        self.fitness = None;
    }

    pub fn add_connection(&mut self, registry: &mut InnovationRegistry, rng: &mut Rng) -> bool {
        let sources: Vec<u32> = self
            .nodes
            .iter()
            .filter(|n| n.role != NodeRole::Output)
            .map(|n| n.id)
            .collect();
        let targets: Vec<u32> = self
            .nodes
            .iter()
            .filter(|n| n.role != NodeRole::Input)
            .map(|n| n.id)
            .collect();
        let mut candidates = Vec::new();
        for &f in &sources {
            for &t in &targets {
                if f != t && !self.has_pair(f, t) && !self.reaches(t, f) {
                    candidates.push((f, t));
                }
            }
        }
        let Some(&(from, to)) = candidates.choose(rng) else {
            return false;
        };
        let innovation = registry.connection(from, to);
        if self.connections.iter().any(|c| c.innovation == innovation) {
            return false;
        }
        let weight = rng.random_range(-1.0..=1.0);
        self.insert_connection(ConnectionGene {
            innovation,
            from,
            to,
            weight,
            enabled: true,
        });
        true
    }

    pub fn add_node(&mut self, registry: &mut InnovationRegistry, rng: &mut Rng) -> bool {
        let enabled: Vec<usize> = (0..self.connections.len())
            .filter(|&i| self.connections[i].enabled)
            .collect();
        let Some(&k) = enabled.choose(rng) else {
            return false;
        };
        let old = self.connections[k];
        let (mut node, mut in_innov, mut out_innov) = registry.split(old.innovation);
        let clash = self.node(node).is_some()
            || self
                .connections
                .iter()
                .any(|c| c.innovation == in_innov || c.innovation == out_innov);
        if clash {
            (node, in_innov, out_innov) = registry.fresh_split();
        }
        self.connections[k].enabled = false;
        self.insert_node(NodeGene {
            id: node,
            role: NodeRole::Hidden,
            activation: Activation::Sigmoid,
        });
        self.insert_connection(ConnectionGene {
            innovation: in_innov,
            from: old.from,
            to: node,
            weight: 1.0,
            enabled: true,
        });
        self.insert_connection(ConnectionGene {
            innovation: out_innov,
            from: node,
            to: old.to,
            weight: old.weight,
            enabled: true,
        });
        true
    }

    /// Deletes a random connection that is not the sole enabled input or
    /// output of a hidden node.
    pub fn remove_connection(&mut self, rng: &mut Rng) -> bool {
        let mut in_count: HashMap<u32, usize> = HashMap::new();
        let mut out_count: HashMap<u32, usize> = HashMap::new();
        for c in self.connections.iter().filter(|c| c.enabled) {
            *in_count.entry(c.to).or_default() += 1;
            *out_count.entry(c.from).or_default() += 1;
        }
        let is_hidden = |id: u32| id as usize >= self.n_inputs + self.n_outputs;
        let candidates: Vec<usize> = (0..self.connections.len())
            .filter(|&i| {
                let c = &self.connections[i];
                !c.enabled
                    || !((is_hidden(c.to) && in_count[&c.to] == 1)
                        || (is_hidden(c.from) && out_count[&c.from] == 1))
            })
            .collect();
        let Some(&k) = candidates.choose(rng) else {
            return false;
        };
        self.connections.remove(k);
        true
    }

    pub fn remove_node(&mut self, rng: &mut Rng) -> bool {
        let hidden: Vec<u32> = self
            .nodes
            .iter()
            .filter(|n| n.role == NodeRole::Hidden)
            .map(|n| n.id)
            .collect();
        let Some(&id) = hidden.choose(rng) else {
            return false;
        };
        self.nodes.retain(|n| n.id != id);
        self.connections.retain(|c| c.from != id && c.to != id);
        true
    }
}

/// Innovation ids of the initial full input→output wiring.
pub fn initial_innovation(input: usize, output: usize, n_outputs: usize) -> u64 {
    (input * n_outputs + output) as u64
}

/// Crossover aligned on innovation ids. Structure follows the fitter
/// parent (`a` on ties); matching genes draw their weight from either parent.
pub fn crossover(a: &Genome, b: &Genome, rng: &mut Rng) -> Result<Genome, GenomeError> {
    let fa = a.fitness.ok_or(GenomeError::MissingFitness)?;
    let fb = b.fitness.ok_or(GenomeError::MissingFitness)?;
    let (fit, other) = if fb < fa { (b, a) } else { (a, b) };
    let other_genes: HashMap<u64, &ConnectionGene> =
        other.connections.iter().map(|c| (c.innovation, c)).collect();
    let mut child = Genome {
        n_inputs: fit.n_inputs,
        n_outputs: fit.n_outputs,
        nodes: fit.nodes.clone(),
        connections: Vec::with_capacity(fit.connections.len()),
        fitness: None,
    };
    let mut pairs = BTreeSet::new();
    for gene in &fit.connections {
        let mut g = *gene;
        if let Some(o) = other_genes.get(&gene.innovation) {
            if o.from == gene.from && o.to == gene.to {
                if rng.random_bool(0.5) {
                    g.weight = o.weight;
                }
                if !gene.enabled || !o.enabled {
                    g.enabled = !rng.random_bool(0.75);
                }
            }
        }
        if pairs.insert((g.from, g.to)) {
            child.connections.push(g);
        }
    }
    Ok(child)
}

/// δ = c1·E/N + c2·D/N + c3·W̄.
pub fn compatibility_distance(g1: &Genome, g2: &Genome, config: &NeatConfig) -> f64 {
    let (a, b) = (&g1.connections, &g2.connections);
    let max_a = a.last().map(|c| c.innovation);
    let max_b = b.last().map(|c| c.innovation);
    let (mut i, mut j) = (0, 0);
    let (mut excess, mut disjoint, mut matching) = (0usize, 0usize, 0usize);
    let mut weight_diff = 0.0;
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x.innovation == y.innovation => {
                matching += 1;
                weight_diff += (x.weight - y.weight).abs();
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) => {
                if x.innovation < y.innovation {
                    if Some(x.innovation) > max_b {
                        excess += 1;
                    } else {
                        disjoint += 1;
                    }
                    i += 1;
                } else {
                    if Some(y.innovation) > max_a {
                        excess += 1;
                    } else {
                        disjoint += 1;
                    }
                    j += 1;
                }
            }
            (Some(_), None) => {
                excess += 1;
                i += 1;
            }
            (None, Some(_)) => {
                excess += 1;
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    let longest = a.len().max(b.len());
    let n = if longest < 20 { 1.0 } else { longest as f64 };
    let mean_w = if matching == 0 {
        0.0
    } else {
        weight_diff / matching as f64
    };
    config.c1 * excess as f64 / n + config.c2 * disjoint as f64 / n + config.c3 * mean_w
}

/// Evaluation plan produced by [`Genome::compile`].
#[derive(Debug, Clone)]
pub struct CompiledNetwork {
    n_inputs: usize,
    n_nodes: usize,
    outputs: Vec<usize>,
    /// (node slot, activation, incoming (slot, weight)) in topological order.
    plan: Vec<(usize, Activation, Vec<(usize, f64)>)>,
}

impl CompiledNetwork {
    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn activate(&self, inputs: &[f64]) -> Result<Vec<f64>, GenomeError> {
        let mut values = vec![0.0; self.n_nodes];
        let mut out = vec![0.0; self.outputs.len()];
        self.activate_into(inputs, &mut values, &mut out)?;
        Ok(out)
    }

    /// Allocation-free variant; `scratch` must hold one slot per node.
    pub fn activate_into(&self, inputs: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) -> Result<(), GenomeError> {
        if inputs.len() != self.n_inputs {
            return Err(GenomeError::InputLength {
                expected: self.n_inputs,
                got: inputs.len(),
            });
        }
        scratch.clear();
        scratch.resize(self.n_nodes, 0.0);
        // Inputs occupy the first slots: nodes are sorted by id.
        scratch[..self.n_inputs].copy_from_slice(inputs);
        for (slot, act, incoming) in &self.plan {
            let sum: f64 = incoming.iter().map(|&(f, w)| scratch[f] * w).sum();
            scratch[*slot] = act.apply(sum);
        }
        for (o, &slot) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[slot];
        }
        Ok(())
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "genome({} in, {} out, {} hidden, {}/{} connections enabled)",
            self.n_inputs,
            self.n_outputs,
            self.hidden_count(),
            self.enabled_count(),
            self.connections.len()
        )
    }
}
