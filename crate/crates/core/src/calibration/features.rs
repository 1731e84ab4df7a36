use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::network::NetworkModel;
use crate::space::{ElementKind, Group, ParameterKind, ParameterSpace, ParameterVector};

/// Names of the per-element input features plus the min/max constants
/// used to normalize them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub junction: Vec<String>,
    /// Pipes and valves share one layout.
    pub link: Vec<String>,
    /// Normalization constants by feature key (`junction.elevation`, ...).
    pub ranges: BTreeMap<String, (f64, f64)>,
}

impl FeatureSchema {
    /// Feature names only; equality of layouts decides genome compatibility.
    pub fn layout_text(&self) -> String {
        format!("junction: {}\nlink: {}\n", self.junction.join(" "), self.link.join(" "))
    }

    /// Canonical text including normalization constants (hex floats).
    pub fn canonical_text(&self) -> String {
        let mut out = self.layout_text();
        for (k, (lo, hi)) in &self.ranges {
            let _ = writeln!(out, "range {k} {} {}", crate::archive::hex_f64(*lo), crate::archive::hex_f64(*hi));
        }
        out
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Feature rows for every junction (model order) and link (pipes, then valves).
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub schema: FeatureSchema,
    pub junctions: Vec<Vec<f64>>,
    pub links: Vec<Vec<f64>>,
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Min-max scaling; a constant feature maps to 0.5.
pub fn min_max(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if !(hi > lo) {
        0.5
    } else {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

pub fn build_features(model: &NetworkModel) -> Features {
    let degrees = model.node_degrees();
    let degree = |id: &str| degrees.get(id).copied().unwrap_or(0) as f64;
    let mut ranges = BTreeMap::new();

    let zones: BTreeSet<&str> = model.junctions.iter().filter_map(|j| j.zone.as_deref()).collect();
    let mut junction_names: Vec<String> = ["const_1", "elevation_norm", "degree_norm", "base_demand_norm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    junction_names.extend(zones.iter().map(|z| format!("zone={z}")));
    let elev = range(model.junctions.iter().map(|j| j.elevation));
    let jdeg = range(model.junctions.iter().map(|j| degree(&j.id)));
    let demand = range(model.junctions.iter().map(|j| j.base_demand));
    if !model.junctions.is_empty() {
        ranges.insert("junction.elevation".to_string(), elev);
        ranges.insert("junction.degree".to_string(), jdeg);
        ranges.insert("junction.base_demand".to_string(), demand);
    }
    let junctions = model
        .junctions
        .iter()
        .map(|j| {
            let mut row = vec![1.0, min_max(j.elevation, elev), min_max(degree(&j.id), jdeg), min_max(j.base_demand, demand)];
            row.extend(zones.iter().map(|z| if j.zone.as_deref() == Some(*z) { 1.0 } else { 0.0 }));
            row
        })
        .collect();

    let materials: BTreeSet<&str> = model.pipes.iter().filter_map(|p| p.material.as_deref()).collect();
    let valve_kinds: BTreeSet<&str> = model.valves.iter().map(|v| v.kind.as_str()).collect();
    let mut link_names: Vec<String> = [
        "const_1",
        "length_norm",
        "diameter_norm",
        "degree_from_norm",
        "degree_to_norm",
        "mid_elevation_norm",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    link_names.extend(materials.iter().map(|m| format!("material={m}")));
    if !model.valves.is_empty() {
        link_names.push("is_valve".into());
        link_names.extend(valve_kinds.iter().map(|k| format!("valve_kind={k}")));
    }
    let endpoints: Vec<(&str, &str, f64)> = model
        .pipes
        .iter()
        .map(|p| (p.from.as_str(), p.to.as_str(), p.diameter))
        .chain(model.valves.iter().map(|v| (v.from.as_str(), v.to.as_str(), v.diameter)))
        .collect();
    let elevation = |id: &str| model.node_elevation(id).unwrap_or(0.0);
    let length = range(model.pipes.iter().map(|p| p.length));
    let diameter = range(endpoints.iter().map(|e| e.2));
    let ldeg = range(endpoints.iter().flat_map(|e| [degree(e.0), degree(e.1)]));
    let mid = range(endpoints.iter().map(|e| 0.5 * (elevation(e.0) + elevation(e.1))));
    if !endpoints.is_empty() {
        ranges.insert("link.diameter".to_string(), diameter);
        ranges.insert("link.degree".to_string(), ldeg);
        ranges.insert("link.mid_elevation".to_string(), mid);
    }
    if !model.pipes.is_empty() {
        ranges.insert("link.length".to_string(), length);
    }
    let n_pipes = model.pipes.len();
    let links = endpoints
        .iter()
        .enumerate()
        .map(|(k, &(from, to, d))| {
            let is_pipe = k < n_pipes;
            let mut row = vec![
                1.0,
                if is_pipe { min_max(model.pipes[k].length, length) } else { 0.0 },
                min_max(d, diameter),
                min_max(degree(from), ldeg),
                min_max(degree(to), ldeg),
                min_max(0.5 * (elevation(from) + elevation(to)), mid),
            ];
            let material = if is_pipe { model.pipes[k].material.as_deref() } else { None };
            row.extend(materials.iter().map(|m| if material == Some(*m) { 1.0 } else { 0.0 }));
            if !model.valves.is_empty() {
                row.push(if is_pipe { 0.0 } else { 1.0 });
                let kind = (!is_pipe).then(|| model.valves[k - n_pipes].kind.as_str());
                row.extend(valve_kinds.iter().map(|v| if kind == Some(*v) { 1.0 } else { 0.0 }));
            }
            row
        })
        .collect();

    Features {
        schema: FeatureSchema {
            junction: junction_names,
            link: link_names,
            ranges,
        },
        junctions,
        links,
    }
}

/// Inputs and outputs of the genome that drives one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupLayout {
    pub group: Group,
    /// One output slot per kind, in canonical order.
    pub kinds: Vec<ParameterKind>,
    pub junction_block: bool,
    pub link_block: bool,
    /// Indices into the space of the specs this group decodes.
    pub specs: Vec<usize>,
    junction_width: usize,
    link_width: usize,
}

impl GroupLayout {
    /// `None` when the group has no specs.
    pub fn new(space: &ParameterSpace, features: &Features, group: Group) -> Option<Self> {
        let specs = space.group_indices(group);
        if specs.is_empty() {
            return None;
        }
        let kinds = space.group_kinds(group);
        let junction_block = kinds.iter().any(|k| k.target() == ElementKind::Junction);
        let link_block = kinds.iter().any(|k| k.target() != ElementKind::Junction);
        Some(Self {
            group,
            kinds,
            junction_block,
            link_block,
            specs,
            junction_width: features.schema.junction.len(),
            link_width: features.schema.link.len(),
        })
    }

    pub fn n_inputs(&self) -> usize {
        usize::from(self.junction_block) * self.junction_width + usize::from(self.link_block) * self.link_width
    }

    pub fn n_outputs(&self) -> usize {
        self.kinds.len()
    }

    /// Input feature names in genome input order.
    pub fn input_names(&self, schema: &FeatureSchema) -> Vec<String> {
        let mut names = Vec::new();
        if self.junction_block {
            names.extend(schema.junction.iter().map(|n| format!("junction.{n}")));
        }
        if self.link_block {
            names.extend(schema.link.iter().map(|n| format!("link.{n}")));
        }
        names
    }
}

/// Precomputed genome inputs for one group: each distinct element once.
#[derive(Debug, Clone)]
pub struct GroupDecoder {
    pub layout: GroupLayout,
    inputs: Vec<Vec<f64>>,
    /// (space index, element slot, output slot, lo, hi)
    targets: Vec<(usize, usize, usize, f64, f64)>,
}

impl GroupDecoder {
    pub fn new(layout: GroupLayout, space: &ParameterSpace, model: &NetworkModel, features: &Features) -> Self {
        let junction_index = model.junction_index();
        let pipe_index = model.pipe_index();
        let valve_index = model.valve_index();
        let n_pipes = model.pipes.len();
        let mut slots: HashMap<(ElementKind, &str), usize> = HashMap::new();
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for &i in &layout.specs {
            let spec = &space.specs()[i];
            let key = (spec.element_kind, spec.element_id.as_str());
            let slot = *slots.entry(key).or_insert_with(|| {
                let mut row = Vec::with_capacity(layout.n_inputs());
                let (jrow, lrow) = match spec.element_kind {
                    ElementKind::Junction => (Some(&features.junctions[junction_index[spec.element_id.as_str()]]), None),
                    ElementKind::Pipe => (None, Some(&features.links[pipe_index[spec.element_id.as_str()]])),
                    ElementKind::Valve => (None, Some(&features.links[n_pipes + valve_index[spec.element_id.as_str()]])),
                };
                if layout.junction_block {
                    match jrow {
                        Some(r) => row.extend_from_slice(r),
                        None => row.resize(layout.junction_width, 0.0),
                    }
                }
                if layout.link_block {
                    match lrow {
                        Some(r) => row.extend_from_slice(r),
                        None => row.resize(row.len() + layout.link_width, 0.0),
                    }
                }
                inputs.push(row);
                inputs.len() - 1
            });
            let out = layout.kinds.iter().position(|k| *k == spec.parameter).expect("kind listed");
            targets.push((i, slot, out, spec.lo, spec.hi));
        }
        Self { layout, inputs, targets }
    }

    /// Writes this group's decoded values into `vector`.
    pub fn decode_into(&self, genome: &crate::neat::Genome, vector: &mut ParameterVector) -> Result<(), crate::neat::GenomeError> {
        genome.check_schema(self.layout.n_inputs(), self.layout.n_outputs())?;
        let net = genome.compile();
        let mut scratch = Vec::new();
        let mut outputs = vec![vec![0.0; self.layout.n_outputs()]; self.inputs.len()];
        for (x, out) in self.inputs.iter().zip(outputs.iter_mut()) {
            net.activate_into(x, &mut scratch, out)?;
        }
        for &(i, slot, o, lo, hi) in &self.targets {
            vector.values[i] = decode_value(outputs[slot][o], lo, hi);
        }
        Ok(())
    }
}

/// Maps an output in [-1, 1] affinely onto [lo, hi].
pub fn decode_value(y: f64, lo: f64, hi: f64) -> f64 {
    let y = if y.is_nan() { 0.0 } else { y.clamp(-1.0, 1.0) };
    (lo + (y + 1.0) / 2.0 * (hi - lo)).clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Junction, Pipe, Reservoir};

    fn star(lengths: &[f64]) -> NetworkModel {
        // J1 hub with leaves J2..; R1 feeds J1.
        let mut m = NetworkModel {
            reservoirs: vec![Reservoir {
                id: "R1".into(),
                head: 50.0,
                head_pattern: None,
            }],
            junctions: vec![Junction::new("J1", 10.0, 1.0)],
            pipes: vec![Pipe::new("P0", "R1", "J1", 100.0, 100.0, 0.1)],
            ..Default::default()
        };
        for (k, l) in lengths.iter().enumerate() {
            m.junctions.push(Junction::new(format!("J{}", k + 2), 5.0 + k as f64, 0.5));
            m.pipes.push(Pipe::new(format!("P{}", k + 1), "J1", format!("J{}", k + 2), *l, 100.0, 0.1));
        }
        m
    }

    #[test]
    fn constant_feature_is_half_and_extremes_are_ends() {
        let f = build_features(&star(&[100.0, 100.0]));
        assert!(f.links.iter().all(|r| r[1] == 0.5));
        let f = build_features(&star(&[50.0, 300.0, 120.0]));
        let lengths: Vec<f64> = f.links.iter().map(|r| r[1]).collect();
        assert_eq!(lengths[2], 1.0);
        assert_eq!(lengths[1], 0.0);
        for row in f.junctions.iter().chain(&f.links) {
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn degree_normalization() {
        // Hub J1 has 6 incident links, leaves have 1; add a junction of degree 3.
        let mut m = star(&[100.0; 5]);
        m.junctions.push(Junction::new("J9", 0.0, 0.0));
        m.pipes.push(Pipe::new("Pa", "J2", "J9", 10.0, 100.0, 0.1));
        m.pipes.push(Pipe::new("Pb", "J3", "J9", 10.0, 100.0, 0.1));
        m.pipes.push(Pipe::new("Pc", "J4", "J9", 10.0, 100.0, 0.1));
        let f = build_features(&m);
        let j9 = m.junction_index()["J9"];
        let j1 = m.junction_index()["J1"];
        assert_eq!(m.node_degrees()["J1"], 6);
        assert!((f.junctions[j9][2] - 0.4).abs() < 1e-15);
        assert_eq!(f.junctions[j1][2], 1.0);
    }

    #[test]
    fn decode_endpoints() {
        assert_eq!(decode_value(-1.0, 2.0, 5.0), 2.0);
        assert_eq!(decode_value(1.0, 2.0, 5.0), 5.0);
        assert_eq!(decode_value(0.0, 10.0, 30.0), 20.0);
        assert_eq!(decode_value(7.0, 10.0, 30.0), 30.0);
    }

    #[test]
    fn schema_hash_is_stable() {
        let m = star(&[50.0, 80.0]);
        let a = build_features(&m).schema;
        let b = build_features(&m.clone()).schema;
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
