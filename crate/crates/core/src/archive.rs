//! Run archives: a versioned, line-oriented text record of a calibration
//! (best genomes, feature schema, output kinds, history, configuration)
//! that can seed later calibrations.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calibration::{CalibrationProblem, CalibrationRun, FeatureSchema, Objective, SeedGenomes};
use crate::config::Config;
use crate::neat::{Activation, ConnectionGene, Genome, NodeGene, NodeRole};
use crate::network::{write_inp, NetworkModel};
use crate::rules::{parse_rules, write_rules};
use crate::space::{Group, ParameterKind};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "AQUACAL-ARCHIVE";

/// C99-style hexadecimal float (`0x1.8p+1`), exact for every f64.
pub fn hex_f64(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 && mantissa == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_bits == 0 { (0, -1022) } else { (1, exp_bits - 1023) };
    let mut digits = format!("{mantissa:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let frac = if digits.is_empty() { String::new() } else { format!(".{digits}") };
    let esign = if exp >= 0 { "+" } else { "-" };
    format!("{sign}0x{lead}{frac}p{esign}{}", exp.abs())
}

/// Inverse of [`hex_f64`]; also accepts plain decimal.
pub fn parse_hex_f64(s: &str) -> Option<f64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) else {
        return s.parse().ok();
    };
    let (mant, exp) = hex.split_once(['p', 'P'])?;
    let exp: i64 = exp.parse().ok()?;
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    if int.len() != 1 || frac.len() > 13 || !(int == "0" || int == "1") {
        return None;
    }
    let frac_bits = if frac.is_empty() {
        0
    } else {
        u64::from_str_radix(frac, 16).ok()? << (4 * (13 - frac.len()))
    };
    let bits = match (int, frac_bits, exp) {
        ("0", 0, _) => 0,
        ("0", f, -1022) => f,
        ("1", f, e) if (-1022..=1023).contains(&e) => (((e + 1023) as u64) << 52) | f,
        _ => return None,
    };
    let v = f64::from_bits(bits);
    Some(if neg { -v } else { v })
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the canonical INP text.
pub fn model_fingerprint(model: &NetworkModel) -> String {
    sha256_hex(&write_inp(model))
}

/// Hash of the canonical rule text; unparseable text is hashed as given.
pub fn rules_fingerprint(rules_text: &str) -> String {
    match parse_rules(rules_text) {
        Ok(rules) => sha256_hex(&write_rules(&rules)),
        Err(_) => sha256_hex(rules_text),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchivedGeneration {
    pub phase: Group,
    /// Generation index within the phase, counted across outer passes.
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArchive {
    pub format_version: u32,
    pub created_at: String,
    pub model_fingerprint: String,
    pub rules_fingerprint: String,
    pub schema_hash: String,
    pub objective: Objective,
    pub baseline_objective: f64,
    /// Combined objective of the archived solution.
    pub best_objective: f64,
    pub validation_objective: Option<f64>,
    pub simulations: usize,
    pub outer_iterations: usize,
    pub stop_reason: String,
    pub schema: FeatureSchema,
    pub flow_kinds: Vec<ParameterKind>,
    pub pressure_kinds: Vec<ParameterKind>,
    pub flow_genome: Option<Genome>,
    pub pressure_genome: Option<Genome>,
    pub history: Vec<ArchivedGeneration>,
    pub config: Config,
}

/// Inputs needed to describe a run beyond the run itself.
pub struct ArchiveContext<'a> {
    pub created_at: &'a str,
    pub model: &'a NetworkModel,
    pub rules_text: &'a str,
    pub schema: &'a FeatureSchema,
    pub config: &'a Config,
}

impl RunArchive {
    pub fn from_run(run: &CalibrationRun, ctx: &ArchiveContext<'_>) -> Self {
        let mut counters = [0usize; 2];
        let history = run
            .history
            .iter()
            .map(|h| {
                let c = &mut counters[h.phase as usize];
                *c += 1;
                ArchivedGeneration {
                    phase: h.phase,
                    generation: *c - 1,
                    best: h.best,
                    mean: h.mean,
                }
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            created_at: ctx.created_at.to_string(),
            model_fingerprint: model_fingerprint(ctx.model),
            rules_fingerprint: rules_fingerprint(ctx.rules_text),
            schema_hash: ctx.schema.hash(),
            objective: ctx.config.calibration.objective,
            baseline_objective: run.baseline_objective,
            best_objective: run.calibration_objective,
            validation_objective: run.validation_objective,
            simulations: run.simulations,
            outer_iterations: run.outer_iterations,
            stop_reason: run.stop_reason.as_str().to_string(),
            schema: ctx.schema.clone(),
            flow_kinds: run.flow_kinds.clone(),
            pressure_kinds: run.pressure_kinds.clone(),
            flow_genome: run.flow_genome.clone(),
            pressure_genome: run.pressure_genome.clone(),
            history,
            config: ctx.config.clone(),
        }
    }

    pub fn genome(&self, group: Group) -> Option<&Genome> {
        match group {
            Group::Flow => self.flow_genome.as_ref(),
            Group::Pressure => self.pressure_genome.as_ref(),
        }
    }

    pub fn kinds(&self, group: Group) -> &[ParameterKind] {
        match group {
            Group::Flow => &self.flow_kinds,
            Group::Pressure => &self.pressure_kinds,
        }
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

fn write_genome(out: &mut String, group: Group, g: &Genome) {
    let _ = writeln!(out, "[genome {group}]");
    let _ = writeln!(out, "io {} {}", g.n_inputs, g.n_outputs);
    let _ = writeln!(out, "fitness {}", opt_f64(g.fitness));
    for n in &g.nodes {
        let _ = writeln!(out, "node {} {} {}", n.id, n.role.as_str(), n.activation.as_str());
    }
    for c in &g.connections {
        let _ = writeln!(
            out,
            "conn {} {} {} {} {}",
            c.innovation,
            c.from,
            c.to,
            hex_f64(c.weight),
            if c.enabled { 1 } else { 0 }
        );
    }
}

/// Serializes an archive. Deterministic: equal archives give equal bytes.
pub fn save(a: &RunArchive) -> String {
    let mut out = format!("{MAGIC} v{}\n", a.format_version);
    out.push_str("[meta]\n");
    let meta = [
        ("created_at", a.created_at.clone()),
        ("model_fingerprint", a.model_fingerprint.clone()),
        ("rules_fingerprint", a.rules_fingerprint.clone()),
        ("schema_hash", a.schema_hash.clone()),
        ("objective", a.objective.to_string()),
        ("baseline_objective", a.baseline_objective.to_string()),
        ("best_objective", a.best_objective.to_string()),
        ("validation_objective", opt_f64(a.validation_objective)),
        ("simulations", a.simulations.to_string()),
        ("outer_iterations", a.outer_iterations.to_string()),
        ("stop_reason", a.stop_reason.clone()),
    ];
    for (k, v) in meta {
        let _ = writeln!(out, "{k}={v}");
    }
    out.push_str("[schema]\n");
    out.push_str(&a.schema.canonical_text());
    out.push_str("[groups]\n");
    for group in [Group::Flow, Group::Pressure] {
        out.push_str(group.as_str());
        for k in a.kinds(group) {
            let _ = write!(out, " {}", k.as_str());
        }
        out.push('\n');
    }
    for group in [Group::Flow, Group::Pressure] {
        if let Some(g) = a.genome(group) {
            write_genome(&mut out, group, g);
        }
    }
    out.push_str("[history]\n");
    for h in &a.history {
        let _ = writeln!(out, "{} {} {} {}", h.phase, h.generation, h.best, h.mean);
    }
    out.push_str("[config]\n");
    for (section, keys) in a.config.entries() {
        for (k, v) in keys {
            let _ = writeln!(out, "{section}.{k} = {v}");
        }
    }
    out.push_str("[end]\n");
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchiveError {
    #[error("corrupt archive at byte {offset}: {message}")]
    Corrupt { offset: usize, message: String },
    #[error("archive format version {found} is not supported (this build reads version {expected}); re-create the archive with a matching release")]
    Version { found: String, expected: String },
    #[error("archived {group} genome is invalid: {message}")]
    Genome { group: Group, message: String },
    #[error("stored schema hash {stored} does not match the inline schema ({computed})")]
    SchemaHash { stored: String, computed: String },
}

struct Line<'a> {
    offset: usize,
    text: &'a str,
}

fn lines_with_offsets(doc: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for text in doc.split_inclusive('\n') {
        out.push(Line {
            offset,
            text: text.trim_end_matches(['\n', '\r']),
        });
        offset += text.len();
    }
    out
}

fn corrupt(offset: usize, message: impl Into<String>) -> ArchiveError {
    ArchiveError::Corrupt {
        offset,
        message: message.into(),
    }
}

fn parse_genome(lines: &[Line<'_>], group: Group, at: usize) -> Result<Genome, ArchiveError> {
    let mut io = None;
    let mut fitness = None;
    let mut nodes = Vec::new();
    let mut connections = Vec::new();
    for l in lines {
        let t: Vec<&str> = l.text.split_whitespace().collect();
        let bad = || corrupt(l.offset, format!("malformed genome line `{}`", l.text));
        match t.as_slice() {
            ["io", i, o] => io = Some((i.parse().map_err(|_| bad())?, o.parse().map_err(|_| bad())?)),
            ["fitness", "none"] => fitness = None,
            ["fitness", v] => fitness = Some(v.parse().map_err(|_| bad())?),
            ["node", id, role, act] => nodes.push(NodeGene {
                id: id.parse().map_err(|_| bad())?,
                role: NodeRole::parse(role).ok_or_else(bad)?,
                activation: Activation::parse(act).ok_or_else(bad)?,
            }),
            ["conn", inn, from, to, w, en] => connections.push(ConnectionGene {
                innovation: inn.parse().map_err(|_| bad())?,
                from: from.parse().map_err(|_| bad())?,
                to: to.parse().map_err(|_| bad())?,
                weight: parse_hex_f64(w).ok_or_else(bad)?,
                enabled: match *en {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad()),
                },
            }),
            _ => return Err(bad()),
        }
    }
    let (n_inputs, n_outputs) = io.ok_or_else(|| corrupt(at, format!("{group} genome lacks an `io` line")))?;
    let g = Genome {
        n_inputs,
        n_outputs,
        nodes,
        connections,
        fitness,
    };
    g.check().map_err(|e| ArchiveError::Genome {
        group,
        message: e.to_string(),
    })?;
    Ok(g)
}

fn parse_schema(lines: &[Line<'_>], at: usize) -> Result<FeatureSchema, ArchiveError> {
    let mut junction = None;
    let mut link = None;
    let mut ranges = std::collections::BTreeMap::new();
    for l in lines {
        let bad = || corrupt(l.offset, format!("malformed schema line `{}`", l.text));
        if let Some(rest) = l.text.strip_prefix("junction:") {
            junction = Some(rest.split_whitespace().map(String::from).collect());
        } else if let Some(rest) = l.text.strip_prefix("link:") {
            link = Some(rest.split_whitespace().map(String::from).collect());
        } else if let ["range", k, lo, hi] = l.text.split_whitespace().collect::<Vec<_>>().as_slice() {
            ranges.insert(k.to_string(), (parse_hex_f64(lo).ok_or_else(bad)?, parse_hex_f64(hi).ok_or_else(bad)?));
        } else {
            return Err(bad());
        }
    }
    Ok(FeatureSchema {
        junction: junction.ok_or_else(|| corrupt(at, "schema lacks the junction line"))?,
        link: link.ok_or_else(|| corrupt(at, "schema lacks the link line"))?,
        ranges,
    })
}

/// Parses and validates an archive document.
pub fn load(doc: &str) -> Result<RunArchive, ArchiveError> {
    let lines = lines_with_offsets(doc);
    let Some(header) = lines.first() else {
        return Err(corrupt(0, "empty document"));
    };
    let version = header
        .text
        .strip_prefix(MAGIC)
        .and_then(|r| r.trim().strip_prefix('v'))
        .ok_or_else(|| corrupt(0, format!("expected `{MAGIC} v{FORMAT_VERSION}` header")))?;
    if version != FORMAT_VERSION.to_string() {
        return Err(ArchiveError::Version {
            found: version.to_string(),
            expected: FORMAT_VERSION.to_string(),
        });
    }
    if !doc.ends_with('\n') || lines.last().map(|l| l.text) != Some("[end]") {
        return Err(corrupt(doc.len(), "document is truncated (no `[end]` footer)"));
    }

    // Split into sections.
    let mut sections: Vec<(&Line<'_>, Vec<&Line<'_>>)> = Vec::new();
    for l in &lines[1..lines.len() - 1] {
        if l.text.starts_with('[') {
            sections.push((l, Vec::new()));
        } else if let Some((_, body)) = sections.last_mut() {
            body.push(l);
        } else {
            return Err(corrupt(l.offset, "content before the first section"));
        }
    }
    let names: Vec<&str> = sections.iter().map(|(h, _)| h.text).collect();
    let mut expected = vec!["[meta]", "[schema]", "[groups]"];
    for g in ["[genome flow]", "[genome pressure]"] {
        if names.contains(&g) {
            expected.push(g);
        }
    }
    expected.extend(["[history]", "[config]"]);
    if names != expected {
        let at = sections
            .iter()
            .zip(&expected)
            .find(|((h, _), e)| h.text != **e)
            .map_or(doc.len(), |((h, _), _)| h.offset);
        return Err(corrupt(at, format!("expected sections {}", expected.join(" "))));
    }
    let body = |name: &str| -> (usize, Vec<Line<'_>>) {
        let (h, b) = sections.iter().find(|(h, _)| h.text == name).expect("checked above");
        (
            h.offset,
            b.iter()
                .map(|l| Line {
                    offset: l.offset,
                    text: l.text,
                })
                .collect(),
        )
    };

    let (meta_at, meta_lines) = body("[meta]");
    let mut meta = std::collections::BTreeMap::new();
    for l in &meta_lines {
        let (k, v) = l
            .text
            .split_once('=')
            .ok_or_else(|| corrupt(l.offset, format!("expected key=value, found `{}`", l.text)))?;
        meta.insert(k, (l.offset, v));
    }
    let get = |k: &str| -> Result<(usize, &str), ArchiveError> {
        meta.get(k).copied().ok_or_else(|| corrupt(meta_at, format!("[meta] lacks `{k}`")))
    };
    fn num<T: std::str::FromStr>((at, v): (usize, &str), k: &str) -> Result<T, ArchiveError> {
        v.parse().map_err(|_| corrupt(at, format!("bad value for `{k}`: `{v}`")))
    }
    let validation_objective = match get("validation_objective")? {
        (_, "none") => None,
        x => Some(num(x, "validation_objective")?),
    };
    let objective = {
        let (at, v) = get("objective")?;
        v.parse::<Objective>().map_err(|e| corrupt(at, e))?
    };

    let (schema_at, schema_lines) = body("[schema]");
    let schema = parse_schema(&schema_lines, schema_at)?;
    let schema_hash = get("schema_hash")?.1.to_string();
    let computed = schema.hash();
    if computed != schema_hash {
        return Err(ArchiveError::SchemaHash {
            stored: schema_hash,
            computed,
        });
    }

    let (groups_at, group_lines) = body("[groups]");
    let mut flow_kinds = None;
    let mut pressure_kinds = None;
    for l in &group_lines {
        let mut t = l.text.split_whitespace();
        let group: Group = t.next().unwrap_or("").parse().map_err(|e: String| corrupt(l.offset, e))?;
        let kinds = t
            .map(|k| k.parse::<ParameterKind>().map_err(|_| corrupt(l.offset, format!("unknown parameter kind `{k}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        let slot = match group {
            Group::Flow => &mut flow_kinds,
            Group::Pressure => &mut pressure_kinds,
        };
        if slot.replace(kinds).is_some() {
            return Err(corrupt(l.offset, format!("duplicate {group} group line")));
        }
    }
    let flow_kinds = flow_kinds.ok_or_else(|| corrupt(groups_at, "[groups] lacks the flow line"))?;
    let pressure_kinds = pressure_kinds.ok_or_else(|| corrupt(groups_at, "[groups] lacks the pressure line"))?;

    let mut genomes = [None, None];
    for (i, group) in [Group::Flow, Group::Pressure].into_iter().enumerate() {
        let name = format!("[genome {group}]");
        if names.contains(&name.as_str()) {
            let (at, lines) = body(&name);
            let g = parse_genome(&lines, group, at)?;
            let kinds = if group == Group::Flow { &flow_kinds } else { &pressure_kinds };
            if g.n_outputs != kinds.len() {
                return Err(ArchiveError::Genome {
                    group,
                    message: format!("{} outputs but {} parameter kinds", g.n_outputs, kinds.len()),
                });
            }
            genomes[i] = Some(g);
        }
    }
    let [flow_genome, pressure_genome] = genomes;

    let (_, history_lines) = body("[history]");
    let mut history = Vec::with_capacity(history_lines.len());
    for l in &history_lines {
        let bad = || corrupt(l.offset, format!("malformed history row `{}`", l.text));
        let t: Vec<&str> = l.text.split_whitespace().collect();
        let [phase, generation, best, mean] = t.as_slice() else {
            return Err(bad());
        };
        history.push(ArchivedGeneration {
            phase: phase.parse().map_err(|_| bad())?,
            generation: generation.parse().map_err(|_| bad())?,
            best: best.parse().map_err(|_| bad())?,
            mean: mean.parse().map_err(|_| bad())?,
        });
    }

    let (_, config_lines) = body("[config]");
    let mut config = Config::default();
    for l in &config_lines {
        let (k, v) = l
            .text
            .split_once('=')
            .ok_or_else(|| corrupt(l.offset, format!("expected key = value, found `{}`", l.text)))?;
        config.set(k.trim(), v.trim()).map_err(|e| corrupt(l.offset, e.to_string()))?;
    }

    Ok(RunArchive {
        format_version: FORMAT_VERSION,
        created_at: get("created_at")?.1.to_string(),
        model_fingerprint: get("model_fingerprint")?.1.to_string(),
        rules_fingerprint: get("rules_fingerprint")?.1.to_string(),
        schema_hash,
        objective,
        baseline_objective: num(get("baseline_objective")?, "baseline_objective")?,
        best_objective: num(get("best_objective")?, "best_objective")?,
        validation_objective,
        simulations: num(get("simulations")?, "simulations")?,
        outer_iterations: num(get("outer_iterations")?, "outer_iterations")?,
        stop_reason: get("stop_reason")?.1.to_string(),
        schema,
        flow_kinds,
        pressure_kinds,
        flow_genome,
        pressure_genome,
        history,
        config,
    })
}

/// Result of checking an archive against a new problem.
#[derive(Debug, Clone, PartialEq)]
pub enum SeedOutcome {
    Compatible { seeds: SeedGenomes, warnings: Vec<String> },
    Refused { reasons: Vec<String> },
}

/// Returns the archived genomes when the new problem has the same feature
/// layout and the same output kinds per group. A different network alone
/// only warns.
pub fn seed_calibration(archive: &RunArchive, problem: &CalibrationProblem) -> SeedOutcome {
    let mut reasons = Vec::new();
    let mut warnings = Vec::new();
    let schema = &problem.features.schema;
    if schema.layout_text() != archive.schema.layout_text() {
        let describe = |what: &str, old: &[String], new: &[String]| {
            (old != new).then(|| format!("{what} features differ: archive [{}], problem [{}]", old.join(" "), new.join(" ")))
        };
        reasons.extend(describe("junction", &archive.schema.junction, &schema.junction));
        reasons.extend(describe("link", &archive.schema.link, &schema.link));
    }
    for group in [Group::Flow, Group::Pressure] {
        let new_kinds = problem.layout(group).map(|l| l.kinds.clone()).unwrap_or_default();
        let old = archive.kinds(group);
        if old != new_kinds.as_slice() {
            let names = |ks: &[ParameterKind]| ks.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(" ");
            reasons.push(format!(
                "{group} output count mismatch: archive has {} ([{}]), problem needs {} ([{}])",
                old.len(),
                names(old),
                new_kinds.len(),
                names(&new_kinds)
            ));
        }
    }
    if !reasons.is_empty() {
        return SeedOutcome::Refused { reasons };
    }
    let fingerprint = model_fingerprint(&problem.model);
    if fingerprint != archive.model_fingerprint {
        warnings.push(format!(
            "network differs from the archived one (fingerprint {} vs {}); seeding across revisions",
            &fingerprint[..12],
            &archive.model_fingerprint[..archive.model_fingerprint.len().min(12)]
        ));
    }
    let mut seeds = SeedGenomes::default();
    for group in [Group::Flow, Group::Pressure] {
        let Some(layout) = problem.layout(group) else { continue };
        match archive.genome(group) {
            Some(g) if g.check_schema(layout.n_inputs(), layout.n_outputs()).is_ok() => {
                let mut g = g.clone();
                g.fitness = None;
                match group {
                    Group::Flow => seeds.flow = Some(g),
                    Group::Pressure => seeds.pressure = Some(g),
                }
            }
            Some(_) => {
                return SeedOutcome::Refused {
                    reasons: vec![format!("archived {group} genome does not fit the problem's input/output counts")],
                }
            }
            None => warnings.push(format!("archive has no {group} genome; that group cold-starts")),
        }
    }
    SeedOutcome::Compatible { seeds, warnings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hex_examples() {
        assert_eq!(hex_f64(1.0), "0x1p+0");
        assert_eq!(hex_f64(3.0), "0x1.8p+1");
        assert_eq!(hex_f64(-0.5), "-0x1p-1");
        assert_eq!(hex_f64(0.1), "0x1.999999999999ap-4");
        assert_eq!(hex_f64(0.0), "0x0p+0");
        assert_eq!(hex_f64(-0.0), "-0x0p+0");
        assert_eq!(hex_f64(f64::MIN_POSITIVE / 4.0), "0x0.4p-1022");
        assert_eq!(parse_hex_f64("0x1.999999999999ap-4").unwrap().to_bits(), 0.1f64.to_bits());
        assert!(parse_hex_f64("0x2p+0").is_none());
        assert!(parse_hex_f64("0x1p+1024").is_none());
    }

    proptest! {
        #[test]
        fn hex_round_trip_is_bit_exact(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(!x.is_nan());
            prop_assert_eq!(parse_hex_f64(&hex_f64(x)).unwrap().to_bits(), bits);
        }
    }
}
