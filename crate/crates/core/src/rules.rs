//! Expert rules: a small line-oriented language that assigns calibration
//! bounds, priors and groups to network elements, and its compiler to a
//! [`ParameterSpace`].
//!
//! ```text
//! # polyethylene mains
//! rule pe_roughness
//! match pipe where material == "PE" and age_years > 10
//! param roughness
//! bounds 0.0005 0.01
//! prior triangular 0.0015
//! group pressure
//! end
//! ```

use std::fmt;

use rand::Rng as _;
use thiserror::Error;

use crate::network::{NetworkModel, Severity};
use crate::space::{ElementKind, Group, ParameterKind, ParameterSpace, ParameterSpec, Prior, SpaceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attribute {
    Material,
    AgeYears,
    Zone,
    Diameter,
    Kind,
}

impl Attribute {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "material" => Attribute::Material,
            "age_years" => Attribute::AgeYears,
            "zone" => Attribute::Zone,
            "diameter" => Attribute::Diameter,
            "kind" => Attribute::Kind,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::Material => "material",
            Attribute::AgeYears => "age_years",
            Attribute::Zone => "zone",
            Attribute::Diameter => "diameter",
            Attribute::Kind => "kind",
        }
    }

    fn is_numeric(self) -> bool {
        matches!(self, Attribute::AgeYears | Attribute::Diameter)
    }

    fn applies_to(self, kind: ElementKind) -> bool {
        matches!(
            (self, kind),
            (Attribute::Material, ElementKind::Pipe)
                | (Attribute::AgeYears, ElementKind::Pipe | ElementKind::Junction)
                | (Attribute::Zone, ElementKind::Junction)
                | (Attribute::Diameter, ElementKind::Pipe | ElementKind::Valve)
                | (Attribute::Kind, ElementKind::Valve)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Op {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "==" => Op::Eq,
            "!=" => Op::Ne,
            "<" => Op::Lt,
            "<=" => Op::Le,
            ">" => Op::Gt,
            ">=" => Op::Ge,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Op::Eq => "==",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Text(String),
    Number(f64),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Text(s) => write!(f, "\"{s}\""),
            Literal::Number(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub attribute: Attribute,
    pub op: Op,
    pub value: Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub id: String,
    /// 1-based line of the `rule` keyword.
    pub line: usize,
    pub target: ElementKind,
    pub conditions: Vec<Condition>,
    pub parameter: ParameterKind,
    pub lo: f64,
    pub hi: f64,
    pub prior: Prior,
    /// `None` falls back to the parameter's default group.
    pub group: Option<Group>,
}

impl Rule {
    pub fn specificity(&self) -> usize {
        self.conditions.len()
    }

    pub fn effective_group(&self) -> Group {
        self.group.unwrap_or_else(|| self.parameter.default_group())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown {what} `{token}`")]
    UnknownToken {
        line: usize,
        what: &'static str,
        token: String,
    },
    #[error("line {line}: rule {rule} has lower bound {lo} above upper bound {hi}")]
    InvertedBounds { line: usize, rule: String, lo: f64, hi: f64 },
    #[error("conflicting bounds for {parameter} of {element}: rules {} have an empty intersection", rules.join(", "))]
    Conflict {
        element: String,
        parameter: String,
        rules: Vec<String>,
    },
    #[error("rule {0} targets diameter, which is known and not calibrated")]
    Diameter(String),
    #[error("model is not valid: {0}")]
    InvalidModel(String),
    #[error("triangular mode {mode} outside [{lo}, {hi}] for {label}")]
    Mode { label: String, mode: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Space(#[from] SpaceError),
}

fn tokenize(line: &str, line_no: usize) -> Result<Vec<String>, RuleError> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut s = String::from("\"");
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(ch) => s.push(ch),
                    None => {
                        return Err(RuleError::Syntax {
                            line: line_no,
                            message: "unterminated string literal".into(),
                        })
                    }
                }
            }
            s.push('"');
            tokens.push(s);
        } else {
            let mut s = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || ch == '"' {
                    break;
                }
                s.push(ch);
                chars.next();
            }
            tokens.push(s);
        }
    }
    Ok(tokens)
}

fn strip_comment(line: &str) -> &str {
    let mut in_string = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_string = !in_string,
            '#' if !in_string => return &line[..i],
            _ => {}
        }
    }
    line
}

#[derive(Default)]
struct Draft {
    id: String,
    line: usize,
    target: Option<ElementKind>,
    conditions: Vec<Condition>,
    parameter: Option<ParameterKind>,
    bounds: Option<(f64, f64, usize)>,
    prior: Option<(Prior, usize)>,
    group: Option<Group>,
}

fn number(tok: &str, line: usize) -> Result<f64, RuleError> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| RuleError::Syntax {
            line,
            message: format!("expected a number, found `{tok}`"),
        })
}

fn parse_condition(tokens: &[String], target: ElementKind, line: usize) -> Result<Condition, RuleError> {
    let syntax = |message: String| RuleError::Syntax { line, message };
    if tokens.len() != 3 {
        return Err(syntax(format!(
            "condition must be `<attribute> <op> <value>`, found `{}`",
            tokens.join(" ")
        )));
    }
    let attribute = Attribute::parse(&tokens[0]).ok_or_else(|| RuleError::UnknownToken {
        line,
        what: "attribute",
        token: tokens[0].clone(),
    })?;
    if !attribute.applies_to(target) {
        return Err(syntax(format!(
            "attribute {} does not apply to {}",
            attribute.as_str(),
            target.as_str()
        )));
    }
    let op = Op::parse(&tokens[1]).ok_or_else(|| RuleError::UnknownToken {
        line,
        what: "operator",
        token: tokens[1].clone(),
    })?;
    let raw = &tokens[2];
    let value = if let Some(s) = raw.strip_prefix('"').and_then(|r| r.strip_suffix('"')) {
        if attribute.is_numeric() {
            return Err(syntax(format!("{} is numeric, found a string", attribute.as_str())));
        }
        if !matches!(op, Op::Eq | Op::Ne) {
            return Err(syntax(format!("{} supports only == and !=", attribute.as_str())));
        }
        Literal::Text(s.to_string())
    } else {
        if !attribute.is_numeric() {
            return Err(syntax(format!(
                "{} compares against a quoted string, found `{raw}`",
                attribute.as_str()
            )));
        }
        Literal::Number(number(raw, line)?)
    };
    Ok(Condition { attribute, op, value })
}

/// Parses a rule document. Rules come back in file order.
pub fn parse_rules(text: &str) -> Result<Vec<Rule>, RuleError> {
    let mut rules: Vec<Rule> = Vec::new();
    let mut draft: Option<Draft> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let tokens = tokenize(strip_comment(raw), line)?;
        let Some(head) = tokens.first() else { continue };
        let syntax = |message: String| RuleError::Syntax { line, message };
        let rest = &tokens[1..];
        match (head.as_str(), draft.as_mut()) {
            ("rule", None) => {
                if rest.len() != 1 {
                    return Err(syntax("expected `rule <id>`".into()));
                }
                if rules.iter().any(|r| r.id == rest[0]) {
                    return Err(syntax(format!("rule id `{}` used twice", rest[0])));
                }
                draft = Some(Draft {
                    id: rest[0].clone(),
                    line,
                    ..Draft::default()
                });
            }
            ("rule", Some(d)) => {
                return Err(syntax(format!("rule `{}` is missing `end`", d.id)));
            }
            (_, None) => return Err(syntax(format!("`{head}` outside a rule block"))),
            ("match", Some(d)) => {
                if d.target.is_some() {
                    return Err(syntax("duplicate `match` line".into()));
                }
                let kind_tok = rest.first().ok_or_else(|| syntax("expected `match <kind>`".into()))?;
                let target: ElementKind = kind_tok.parse().map_err(|_| RuleError::UnknownToken {
                    line,
                    what: "element kind",
                    token: kind_tok.clone(),
                })?;
                if rest.len() > 1 {
                    if rest[1] != "where" || rest.len() < 3 {
                        return Err(syntax("expected `where <condition>` after the element kind".into()));
                    }
                    for chunk in rest[2..].split(|t| t == "and") {
                        d.conditions.push(parse_condition(chunk, target, line)?);
                    }
                }
                d.target = Some(target);
            }
            ("param", Some(d)) => {
                if rest.len() != 1 {
                    return Err(syntax("expected `param <name>`".into()));
                }
                d.parameter = Some(rest[0].parse().map_err(|_| RuleError::UnknownToken {
                    line,
                    what: "parameter",
                    token: rest[0].clone(),
                })?);
            }
            ("bounds", Some(d)) => {
                if rest.len() != 2 {
                    return Err(syntax("expected `bounds <lo> <hi>`".into()));
                }
                let (lo, hi) = (number(&rest[0], line)?, number(&rest[1], line)?);
                if lo > hi {
                    return Err(RuleError::InvertedBounds {
                        line,
                        rule: d.id.clone(),
                        lo,
                        hi,
                    });
                }
                d.bounds = Some((lo, hi, line));
            }
            ("prior", Some(d)) => {
                let prior = match rest.iter().map(String::as_str).collect::<Vec<_>>()[..] {
                    ["uniform"] => Prior::Uniform,
                    ["triangular", m] => Prior::Triangular { mode: number(m, line)? },
                    _ => return Err(syntax("expected `prior uniform` or `prior triangular <mode>`".into())),
                };
                d.prior = Some((prior, line));
            }
            ("group", Some(d)) => {
                if rest.len() != 1 {
                    return Err(syntax("expected `group flow|pressure`".into()));
                }
                d.group = Some(rest[0].parse().map_err(|_| RuleError::UnknownToken {
                    line,
                    what: "group",
                    token: rest[0].clone(),
                })?);
            }
            ("end", Some(_)) => {
                let d = draft.take().unwrap();
                rules.push(finish(d, line)?);
            }
            (other, Some(_)) => {
                return Err(RuleError::UnknownToken {
                    line,
                    what: "keyword",
                    token: other.to_string(),
                })
            }
        }
    }
    if let Some(d) = draft {
        return Err(RuleError::Syntax {
            line: d.line,
            message: format!("rule `{}` is missing `end`", d.id),
        });
    }
    Ok(rules)
}

fn finish(d: Draft, end_line: usize) -> Result<Rule, RuleError> {
    let missing = |what: &str| RuleError::Syntax {
        line: end_line,
        message: format!("rule `{}` has no `{what}` line", d.id),
    };
    let target = d.target.ok_or_else(|| missing("match"))?;
    let parameter = d.parameter.ok_or_else(|| missing("param"))?;
    let (lo, hi, _) = d.bounds.ok_or_else(|| missing("bounds"))?;
    let applicable = parameter.target() == target
        || (parameter == ParameterKind::Diameter && target == ElementKind::Valve);
    if !applicable {
        return Err(RuleError::Syntax {
            line: d.line,
            message: format!("parameter {} does not apply to {}", parameter, target.as_str()),
        });
    }
    let prior = match d.prior {
        Some((Prior::Triangular { mode }, line)) if !(lo..=hi).contains(&mode) => {
            return Err(RuleError::Syntax {
                line,
                message: format!("triangular mode {mode} lies outside bounds [{lo}, {hi}]"),
            })
        }
        Some((p, _)) => p,
        None => Prior::Uniform,
    };
    Ok(Rule {
        id: d.id,
        line: d.line,
        target,
        conditions: d.conditions,
        parameter,
        lo,
        hi,
        prior,
        group: d.group,
    })
}

/// Canonical text of a rule list (parses back to the same rules).
pub fn write_rules(rules: &[Rule]) -> String {
    let mut out = String::new();
    for r in rules {
        out.push_str(&format!("rule {}\nmatch {}", r.id, r.target.as_str()));
        for (i, c) in r.conditions.iter().enumerate() {
            out.push_str(if i == 0 { " where " } else { " and " });
            out.push_str(&format!("{} {} {}", c.attribute.as_str(), c.op.as_str(), c.value));
        }
        out.push_str(&format!("\nparam {}\nbounds {} {}\n", r.parameter, r.lo, r.hi));
        if let Prior::Triangular { mode } = r.prior {
            out.push_str(&format!("prior triangular {mode}\n"));
        }
        if let Some(g) = r.group {
            out.push_str(&format!("group {g}\n"));
        }
        out.push_str("end\n\n");
    }
    out
}

enum Value<'a> {
    Text(Option<&'a str>),
    Number(Option<f64>),
}

fn attribute_value<'a>(model: &'a NetworkModel, kind: ElementKind, id: &str, attr: Attribute) -> Value<'a> {
    match (kind, attr) {
        (ElementKind::Pipe, Attribute::Material) => Value::Text(model.pipe(id).and_then(|p| p.material.as_deref())),
        (ElementKind::Pipe, Attribute::AgeYears) => Value::Number(model.pipe(id).and_then(|p| p.age_years)),
        (ElementKind::Pipe, Attribute::Diameter) => Value::Number(model.pipe(id).map(|p| p.diameter)),
        (ElementKind::Junction, Attribute::AgeYears) => Value::Number(model.junction(id).and_then(|j| j.age_years)),
        (ElementKind::Junction, Attribute::Zone) => Value::Text(model.junction(id).and_then(|j| j.zone.as_deref())),
        (ElementKind::Valve, Attribute::Diameter) => Value::Number(model.valve(id).map(|v| v.diameter)),
        (ElementKind::Valve, Attribute::Kind) => Value::Text(model.valve(id).map(|v| v.kind.as_str())),
        _ => Value::Text(None),
    }
}

/// A condition on a missing attribute is false.
fn holds(model: &NetworkModel, kind: ElementKind, id: &str, c: &Condition) -> bool {
    match (attribute_value(model, kind, id, c.attribute), &c.value) {
        (Value::Text(Some(v)), Literal::Text(want)) => match c.op {
            Op::Eq => v == want,
            Op::Ne => v != want,
            _ => false,
        },
        (Value::Number(Some(v)), Literal::Number(want)) => match c.op {
            Op::Eq => v == *want,
            Op::Ne => v != *want,
            Op::Lt => v < *want,
            Op::Le => v <= *want,
            Op::Gt => v > *want,
            Op::Ge => v >= *want,
        },
        _ => false,
    }
}

pub fn rule_matches(rule: &Rule, model: &NetworkModel, kind: ElementKind, id: &str) -> bool {
    rule.target == kind && rule.conditions.iter().all(|c| holds(model, kind, id, c))
}

fn element_ids(model: &NetworkModel, kind: ElementKind) -> Vec<&str> {
    match kind {
        ElementKind::Junction => model.junctions.iter().map(|j| j.id.as_str()).collect(),
        ElementKind::Pipe => model.pipes.iter().map(|p| p.id.as_str()).collect(),
        ElementKind::Valve => model.valves.iter().map(|v| v.id.as_str()).collect(),
    }
}

/// Compiles rules against a model. Bounds of all matching rules are
/// intersected; prior and group come from the most specific match, the
/// later rule winning ties. Elements no rule matches stay at model values.
pub fn compile_rules(rules: &[Rule], model: &NetworkModel) -> Result<ParameterSpace, RuleError> {
    if let Some(d) = crate::network::validate(model)
        .into_iter()
        .find(|d| d.severity == Severity::Error)
    {
        return Err(RuleError::InvalidModel(d.to_string()));
    }
    if let Some(r) = rules.iter().find(|r| r.parameter == ParameterKind::Diameter) {
        return Err(RuleError::Diameter(r.id.clone()));
    }
    let mut specs = Vec::new();
    for parameter in ParameterKind::CALIBRATABLE {
        let kind = parameter.target();
        let relevant: Vec<&Rule> = rules.iter().filter(|r| r.parameter == parameter).collect();
        if relevant.is_empty() {
            continue;
        }
        for id in element_ids(model, kind) {
            let matching: Vec<&Rule> = relevant
                .iter()
                .copied()
                .filter(|r| rule_matches(r, model, kind, id))
                .collect();
            if matching.is_empty() {
                continue;
            }
            let lo = matching.iter().map(|r| r.lo).fold(f64::NEG_INFINITY, f64::max);
            let hi = matching.iter().map(|r| r.hi).fold(f64::INFINITY, f64::min);
            if lo > hi {
                let raiser = matching.iter().rev().max_by(|a, b| a.lo.total_cmp(&b.lo)).unwrap();
                let lowerer = matching.iter().min_by(|a, b| a.hi.total_cmp(&b.hi)).unwrap();
                let mut ids = vec![lowerer.id.clone(), raiser.id.clone()];
                ids.dedup();
                return Err(RuleError::Conflict {
                    element: format!("{} {id}", kind.as_str()),
                    parameter: parameter.to_string(),
                    rules: ids,
                });
            }
            // max_by_key returns the last maximum: later rules win ties.
            let winner = matching.iter().max_by_key(|r| r.specificity()).unwrap();
            let prior = match winner.prior {
                Prior::Triangular { mode } => Prior::Triangular { mode: mode.clamp(lo, hi) },
                p => p,
            };
            specs.push(ParameterSpec {
                element_kind: kind,
                element_id: id.to_string(),
                parameter,
                lo,
                hi,
                prior,
                group: winner.effective_group(),
                source_rule_ids: matching.iter().map(|r| r.id.clone()).collect(),
            });
        }
    }
    Ok(ParameterSpace::new(specs)?)
}

/// Indices of the flow-group and pressure-group specs.
pub fn group_parameters(space: &ParameterSpace) -> (Vec<usize>, Vec<usize>) {
    (space.group_indices(Group::Flow), space.group_indices(Group::Pressure))
}

/// Draws a value from the spec's prior.
pub fn sample_prior(spec: &ParameterSpec, rng: &mut crate::rng::Rng) -> Result<f64, RuleError> {
    let (lo, hi) = (spec.lo, spec.hi);
    match spec.prior {
        _ if lo == hi => Ok(lo),
        Prior::Uniform => Ok(rng.random_range(lo..=hi)),
        Prior::Triangular { mode } => {
            if !(lo..=hi).contains(&mode) {
                return Err(RuleError::Mode {
                    label: spec.label(),
                    mode,
                    lo,
                    hi,
                });
            }
            let u: f64 = rng.random();
            let split = (mode - lo) / (hi - lo);
            let v = if u < split {
                lo + (u * (hi - lo) * (mode - lo)).sqrt()
            } else {
                hi - ((1.0 - u) * (hi - lo) * (hi - mode)).sqrt()
            };
            Ok(v.clamp(lo, hi))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Junction, Pipe, Reservoir};
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn model() -> NetworkModel {
        let mut m = NetworkModel {
            reservoirs: vec![Reservoir {
                id: "R1".into(),
                head: 100.0,
                head_pattern: None,
            }],
            ..Default::default()
        };
        for i in 1..=4 {
            let mut j = Junction::new(format!("J{i}"), 10.0, 1.0);
            j.zone = Some(if i <= 2 { "north".into() } else { "south".into() });
            m.junctions.push(j);
        }
        let links = [("R1", "J1"), ("J1", "J2"), ("J2", "J3"), ("J3", "J4")];
        for (k, (a, b)) in links.iter().enumerate() {
            let mut p = Pipe::new(format!("P{}", k + 1), *a, *b, 100.0, 150.0, 0.01);
            p.material = Some(if k % 2 == 0 { "PE".into() } else { "CI".into() });
            p.age_years = Some(10.0 * k as f64);
            m.pipes.push(p);
        }
        m
    }

    #[test]
    fn single_rule_example() {
        let rules = parse_rules(
            "rule r1\nmatch pipe where material == \"PE\"\nparam roughness\nbounds 0.0005 0.01\ngroup pressure\nend\n",
        )
        .unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].specificity(), 1);
        assert_eq!(rules[0].group, Some(Group::Pressure));
        assert!(parse_rules("").unwrap().is_empty());
        assert!(parse_rules("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn inverted_bounds_report_line() {
        let err = parse_rules("rule a\nmatch pipe\nparam roughness\nbounds 5 1\nend\n").unwrap_err();
        assert!(matches!(err, RuleError::InvertedBounds { line: 4, .. }), "{err}");
    }

    #[test]
    fn syntax_errors() {
        let cases = [
            ("rule a\nmatch pipe where colour == \"red\"\nparam roughness\nbounds 0 1\nend\n", 2),
            ("rule a\nmatch pipe\nparam speed\nbounds 0 1\nend\n", 3),
            ("rule a\nmatch pipe\nparam roughness\nbounds 0 1\ngroup both\nend\n", 5),
            ("rule a\nmatch junction\nparam roughness\nbounds 0 1\nend\n", 1),
            ("rule a\nmatch pipe where material < \"PE\"\nparam roughness\nbounds 0 1\nend\n", 2),
            ("rule a\nmatch pipe\nparam roughness\nbounds 0 1\n", 1),
            ("param roughness\n", 1),
        ];
        for (text, line) in cases {
            let err = parse_rules(text).unwrap_err();
            let got = match err {
                RuleError::Syntax { line, .. } | RuleError::UnknownToken { line, .. } => line,
                other => panic!("{other}"),
            };
            assert_eq!(got, line, "{text}");
        }
    }

    #[test]
    fn round_trip_through_writer() {
        let text = "rule a # c\nmatch pipe where material == \"PE\" and age_years >= 5\nparam roughness\nbounds 0.001 0.1\nprior triangular 0.01\nend\nrule b\nmatch junction where zone != \"north\"\nparam base_demand\nbounds 0 3\ngroup pressure\nend\n";
        let strip = |mut rs: Vec<Rule>| {
            rs.iter_mut().for_each(|r| r.line = 0);
            rs
        };
        let rules = parse_rules(text).unwrap();
        let again = parse_rules(&write_rules(&rules)).unwrap();
        assert_eq!(strip(again), strip(rules));
    }

    #[test]
    fn all_pipes_rule_covers_every_pipe() {
        let rules = parse_rules("rule all\nmatch pipe\nparam roughness\nbounds 0.001 0.1\nend\n").unwrap();
        let space = compile_rules(&rules, &model()).unwrap();
        assert_eq!(space.len(), 4);
        assert!(compile_rules(&[], &model()).unwrap().is_empty());
    }

    #[test]
    fn intersection_and_specificity() {
        let text = "rule wide\nmatch pipe\nparam roughness\nbounds 0 1\ngroup flow\nend\n\
                    rule pe\nmatch pipe where material == \"PE\"\nparam roughness\nbounds 0.2 2\nprior triangular 0.5\nend\n";
        let space = compile_rules(&parse_rules(text).unwrap(), &model()).unwrap();
        let p1 = space.specs().iter().find(|s| s.element_id == "P1").unwrap();
        assert_eq!((p1.lo, p1.hi), (0.2, 1.0));
        assert_eq!(p1.group, Group::Pressure);
        assert_eq!(p1.prior, Prior::Triangular { mode: 0.5 });
        assert_eq!(p1.source_rule_ids, ["wide", "pe"]);
        let p2 = space.specs().iter().find(|s| s.element_id == "P2").unwrap();
        assert_eq!((p2.lo, p2.hi, p2.group), (0.0, 1.0, Group::Flow));
    }

    #[test]
    fn ties_go_to_the_later_rule() {
        let text = "rule a\nmatch junction\nparam base_demand\nbounds 0 5\ngroup pressure\nend\n\
                    rule b\nmatch junction\nparam base_demand\nbounds 0 4\nend\n";
        let space = compile_rules(&parse_rules(text).unwrap(), &model()).unwrap();
        assert!(space.specs().iter().all(|s| s.group == Group::Flow && s.hi == 4.0));
    }

    #[test]
    fn empty_intersection_names_both_rules() {
        let text = "rule A\nmatch pipe\nparam minor_loss\nbounds 0 1\nend\n\
                    rule B\nmatch pipe where material == \"PE\"\nparam minor_loss\nbounds 2 3\nend\n";
        match compile_rules(&parse_rules(text).unwrap(), &model()).unwrap_err() {
            RuleError::Conflict { element, parameter, rules } => {
                assert_eq!(element, "pipe P1");
                assert_eq!(parameter, "minor_loss");
                assert_eq!(rules, ["A", "B"]);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn diameter_is_rejected_at_compile_time() {
        let rules = parse_rules("rule d\nmatch pipe\nparam diameter\nbounds 50 500\nend\n").unwrap();
        assert_eq!(compile_rules(&rules, &model()), Err(RuleError::Diameter("d".into())));
    }

    #[test]
    fn default_and_explicit_groups() {
        let text = "rule d\nmatch junction\nparam base_demand\nbounds 0 2\nend\n\
                    rule r\nmatch pipe where material == \"CI\"\nparam roughness\nbounds 0 2\ngroup flow\nend\n\
                    rule m\nmatch pipe\nparam minor_loss\nbounds 0 2\nend\n";
        let space = compile_rules(&parse_rules(text).unwrap(), &model()).unwrap();
        let (flow, pressure) = group_parameters(&space);
        assert_eq!((flow.len(), pressure.len()), (6, 4));
        let (f, p) = group_parameters(&ParameterSpace::empty());
        assert!(f.is_empty() && p.is_empty());
    }

    #[test]
    fn numeric_and_missing_attributes() {
        let text = "rule old\nmatch pipe where age_years > 15\nparam roughness\nbounds 0 1\nend\n";
        let mut m = model();
        m.pipes[3].age_years = None;
        let space = compile_rules(&parse_rules(text).unwrap(), &m).unwrap();
        let ids: Vec<&str> = space.specs().iter().map(|s| s.element_id.as_str()).collect();
        assert_eq!(ids, ["P3"]);
    }

    fn spec(lo: f64, hi: f64, prior: Prior) -> ParameterSpec {
        ParameterSpec {
            element_kind: ElementKind::Pipe,
            element_id: "P".into(),
            parameter: ParameterKind::Roughness,
            lo,
            hi,
            prior,
            group: Group::Pressure,
            source_rule_ids: vec![],
        }
    }

    #[test]
    fn prior_sample_means() {
        let mut rng = seeded(11);
        let n = 100_000;
        let u = spec(0.0, 1.0, Prior::Uniform);
        let mean = (0..n).map(|_| sample_prior(&u, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "{mean}");
        let t = spec(0.0, 1.0, Prior::Triangular { mode: 0.0 });
        let mean = (0..n).map(|_| sample_prior(&t, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 1.0 / 3.0).abs() < 0.01, "{mean}");
        let c = spec(2.5, 2.5, Prior::Uniform);
        assert_eq!(sample_prior(&c, &mut rng).unwrap(), 2.5);
        let bad = spec(0.0, 1.0, Prior::Triangular { mode: 3.0 });
        assert!(matches!(sample_prior(&bad, &mut rng), Err(RuleError::Mode { .. })));
    }

    proptest! {
        #[test]
        fn samples_stay_in_bounds(lo in -10.0f64..10.0, w in 0.0f64..5.0, m in 0.0f64..=1.0, seed in 0u64..1000) {
            let hi = lo + w;
            let mut rng = seeded(seed);
            for prior in [Prior::Uniform, Prior::Triangular { mode: lo + m * w }] {
                let s = spec(lo, hi, prior);
                for _ in 0..200 {
                    let v = sample_prior(&s, &mut rng).unwrap();
                    prop_assert!(v >= lo && v <= hi);
                }
            }
        }

        #[test]
        fn compiled_bounds_within_every_matching_rule(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 1.0f64..2.0, d in 1.0f64..2.0) {
            let text = format!(
                "rule x\nmatch pipe\nparam roughness\nbounds {a} {c}\nend\nrule y\nmatch pipe where material == \"PE\"\nparam roughness\nbounds {b} {d}\nend\n"
            );
            let rules = parse_rules(&text).unwrap();
            let space = compile_rules(&rules, &model()).unwrap();
            for s in space.specs() {
                for r in rules.iter().filter(|r| s.source_rule_ids.contains(&r.id)) {
                    prop_assert!(s.lo >= r.lo && s.hi <= r.hi);
                }
            }
            prop_assert_eq!(compile_rules(&rules, &model()).unwrap(), space);
        }
    }
}
