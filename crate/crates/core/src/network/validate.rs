use std::collections::{HashMap, HashSet, VecDeque};

use super::{Diagnostic, LinkStatus, NetworkModel};

/// Checks element invariants and source connectivity. An empty result
/// means the model can be simulated.
pub fn validate(model: &NetworkModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut nodes: HashSet<&str> = HashSet::new();
    for id in model
        .junctions
        .iter()
        .map(|j| j.id.as_str())
        .chain(model.reservoirs.iter().map(|r| r.id.as_str()))
    {
        if !nodes.insert(id) {
            out.push(Diagnostic::error(id, "duplicate node id"));
        }
    }
    let mut links: HashSet<&str> = HashSet::new();
    for id in model
        .pipes
        .iter()
        .map(|p| p.id.as_str())
        .chain(model.valves.iter().map(|v| v.id.as_str()))
    {
        if !links.insert(id) {
            out.push(Diagnostic::error(id, "duplicate link id"));
        }
    }

    if model.reservoirs.is_empty() {
        out.push(Diagnostic::error("-", "network has no reservoir"));
    }

    let check_pattern = |out: &mut Vec<Diagnostic>, element: &str, p: &Option<String>| {
        if let Some(p) = p {
            if !model.patterns.contains_key(p) {
                out.push(Diagnostic::error(element, format!("unknown pattern `{p}`")));
            }
        }
    };

    for j in &model.junctions {
        if !j.elevation.is_finite() {
            out.push(Diagnostic::error(&j.id, "elevation is not finite"));
        }
        if !(j.base_demand >= 0.0) || !j.base_demand.is_finite() {
            out.push(Diagnostic::error(
                &j.id,
                format!("base demand {} must be nonnegative", j.base_demand),
            ));
        }
        if !(j.emitter_coeff >= 0.0) || !j.emitter_coeff.is_finite() {
            out.push(Diagnostic::error(
                &j.id,
                format!("emitter coefficient {} must be nonnegative", j.emitter_coeff),
            ));
        }
        check_pattern(&mut out, &j.id, &j.pattern_id);
    }
    for r in &model.reservoirs {
        if !r.head.is_finite() {
            out.push(Diagnostic::error(&r.id, "head is not finite"));
        }
        check_pattern(&mut out, &r.id, &r.head_pattern);
    }
    for (id, values) in &model.patterns {
        if values.is_empty() {
            out.push(Diagnostic::error(id, "pattern has no multipliers"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            out.push(Diagnostic::error(id, "pattern multipliers must be nonnegative"));
        }
    }

    let endpoint = |out: &mut Vec<Diagnostic>, link: &str, node: &str| {
        if !nodes.contains(node) {
            out.push(Diagnostic::error(link, format!("unknown endpoint `{node}`")));
        }
    };
    for p in &model.pipes {
        endpoint(&mut out, &p.id, &p.from);
        endpoint(&mut out, &p.id, &p.to);
        if !(p.length > 0.0) {
            out.push(Diagnostic::error(&p.id, "length must be positive"));
        }
        if !(p.diameter > 0.0) {
            out.push(Diagnostic::error(&p.id, "diameter must be positive"));
        }
        if !(p.roughness > 0.0) || !p.roughness.is_finite() {
            out.push(Diagnostic::error(&p.id, "roughness must be positive"));
        }
        if !(p.minor_loss_k >= 0.0) || !p.minor_loss_k.is_finite() {
            out.push(Diagnostic::error(&p.id, "minor loss must be nonnegative"));
        }
        if p.from == p.to {
            out.push(Diagnostic::error(&p.id, "link connects a node to itself"));
        }
    }
    for v in &model.valves {
        endpoint(&mut out, &v.id, &v.from);
        endpoint(&mut out, &v.id, &v.to);
        if !(v.diameter > 0.0) {
            out.push(Diagnostic::error(&v.id, "diameter must be positive"));
        }
        if !(v.loss_coeff_k >= 0.0) || !v.loss_coeff_k.is_finite() {
            out.push(Diagnostic::error(&v.id, "loss coefficient must be nonnegative"));
        }
        if v.from == v.to {
            out.push(Diagnostic::error(&v.id, "link connects a node to itself"));
        }
    }

    for id in unsupplied_junctions(model) {
        out.push(Diagnostic::error(
            id,
            "junction is not connected to any reservoir through open links",
        ));
    }
    out
}

/// Junctions with no open-link path to a reservoir, in model order.
pub(crate) fn unsupplied_junctions(model: &NetworkModel) -> Vec<&str> {
    let mut adjacency: HashMap<&str, Vec<&str>> = HashMap::new();
    let open = model
        .pipes
        .iter()
        .filter(|p| p.status == LinkStatus::Open)
        .map(|p| (p.from.as_str(), p.to.as_str()))
        .chain(
            model
                .valves
                .iter()
                .filter(|v| v.status == LinkStatus::Open)
                .map(|v| (v.from.as_str(), v.to.as_str())),
        );
    for (a, b) in open {
        adjacency.entry(a).or_default().push(b);
        adjacency.entry(b).or_default().push(a);
    }
    let mut reached: HashSet<&str> = model.reservoirs.iter().map(|r| r.id.as_str()).collect();
    let mut queue: VecDeque<&str> = reached.iter().copied().collect();
    while let Some(n) = queue.pop_front() {
        if let Some(next) = adjacency.get(n) {
            for &m in next {
                if reached.insert(m) {
                    queue.push_back(m);
                }
            }
        }
    }
    model
        .junctions
        .iter()
        .map(|j| j.id.as_str())
        .filter(|id| !reached.contains(id))
        .collect()
}
