use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use super::{
    Diagnostic, HeadlossFormula, HydraulicOptions, Junction, LinkStatus, NetworkModel, Pipe,
    Reservoir, Valve,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InpError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: duplicate {kind} id `{id}`")]
    DuplicateId {
        line: usize,
        kind: &'static str,
        id: String,
    },
    #[error("line {line}: link `{link}` references unknown node `{node}`")]
    DanglingReference {
        line: usize,
        link: String,
        node: String,
    },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: pattern `{pattern}` is not defined")]
    MissingPattern { line: usize, pattern: String },
    #[error("network has no reservoir")]
    NoReservoir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Section {
    Title,
    Junctions,
    Reservoirs,
    Pipes,
    Valves,
    Demands,
    Patterns,
    Emitters,
    Options,
    Times,
    Coordinates,
    Tags,
    Status,
    End,
    Skipped,
}

const SKIPPED_SECTIONS: &[&str] = &[
    "TANKS",
    "PUMPS",
    "CONTROLS",
    "RULES",
    "QUALITY",
    "CURVES",
    "ENERGY",
    "REACTIONS",
    "SOURCES",
    "MIXING",
    "REPORT",
    "LABELS",
    "BACKDROP",
    "VERTICES",
    "ROUGHNESS",
];

fn section_of(name: &str) -> Option<Section> {
    let s = match name {
        "TITLE" => Section::Title,
        "JUNCTIONS" => Section::Junctions,
        "RESERVOIRS" => Section::Reservoirs,
        "PIPES" => Section::Pipes,
        "VALVES" => Section::Valves,
        "DEMANDS" => Section::Demands,
        "PATTERNS" => Section::Patterns,
        "EMITTERS" => Section::Emitters,
        "OPTIONS" => Section::Options,
        "TIMES" => Section::Times,
        "COORDINATES" => Section::Coordinates,
        "TAGS" => Section::Tags,
        "STATUS" => Section::Status,
        "END" => Section::End,
        other if SKIPPED_SECTIONS.contains(&other) => Section::Skipped,
        _ => return None,
    };
    Some(s)
}

#[derive(Debug, Clone)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

#[derive(Debug)]
struct Row<'a> {
    line: usize,
    tokens: Vec<Token<'a>>,
}

impl<'a> Row<'a> {
    fn err(&self, idx: usize, message: impl Into<String>) -> InpError {
        let column = self
            .tokens
            .get(idx)
            .map(|t| t.column)
            .unwrap_or_else(|| self.tokens.last().map(|t| t.column + t.text.len()).unwrap_or(1));
        InpError::Syntax {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn text(&self, idx: usize, what: &str) -> Result<&'a str, InpError> {
        self.tokens
            .get(idx)
            .map(|t| t.text)
            .ok_or_else(|| self.err(idx, format!("missing {what}")))
    }

    fn number(&self, idx: usize, what: &str) -> Result<f64, InpError> {
        let text = self.text(idx, what)?;
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(idx, format!("expected number for {what}, found `{text}`"))),
        }
    }

    fn opt_number(&self, idx: usize, what: &str) -> Result<Option<f64>, InpError> {
        if idx < self.tokens.len() {
            self.number(idx, what).map(Some)
        } else {
            Ok(None)
        }
    }
}

fn tokenize(line_no: usize, raw: &str) -> Row<'_> {
    let content = match raw.find(';') {
        Some(pos) => &raw[..pos],
        None => raw,
    };
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in content.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token {
                    text: &content[s..i],
                    column: s + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: &content[s..],
            column: s + 1,
        });
    }
    Row {
        line: line_no,
        tokens,
    }
}

/// Parses an INP document. Known EPANET sections outside the supported
/// subset are skipped and reported as warnings alongside the model.
pub fn parse_inp(text: &str) -> Result<(NetworkModel, Vec<Diagnostic>), InpError> {
    let mut rows: HashMap<Section, Vec<Row<'_>>> = HashMap::new();
    let mut title_lines = Vec::new();
    let mut diagnostics = Vec::new();
    let mut current: Option<Section> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = raw.trim();
        if trimmed.starts_with('[') {
            let close = trimmed.find(']').ok_or(InpError::Syntax {
                line: line_no,
                column: raw.find('[').unwrap_or(0) + 1,
                message: "unterminated section header".into(),
            })?;
            let name = trimmed[1..close].trim().to_ascii_uppercase();
            let section = section_of(&name).ok_or(InpError::UnknownSection {
                line: line_no,
                name: name.clone(),
            })?;
            if section == Section::Skipped {
                diagnostics.push(Diagnostic::warning(
                    format!("[{name}]"),
                    format!("unsupported section skipped (line {line_no})"),
                ));
            }
            current = Some(section);
            continue;
        }
        let row = tokenize(line_no, raw);
        if row.tokens.is_empty() {
            continue;
        }
        match current {
            None => return Err(row.err(0, "content before first section header")),
            Some(Section::Title) => title_lines.push(raw.split(';').next().unwrap_or("").trim().to_string()),
            Some(Section::Skipped) | Some(Section::End) => {}
            Some(section) => rows.entry(section).or_default().push(row),
        }
    }

    let mut model = NetworkModel {
        title: title_lines.join("\n"),
        ..Default::default()
    };
    fn take<'a>(rows: &mut HashMap<Section, Vec<Row<'a>>>, s: Section) -> Vec<Row<'a>> {
        rows.remove(&s).unwrap_or_default()
    }

    let mut seen_nodes: HashSet<String> = HashSet::new();
    for row in take(&mut rows, Section::Junctions) {
        let id = row.text(0, "junction id")?.to_string();
        if !seen_nodes.insert(id.clone()) {
            return Err(InpError::DuplicateId {
                line: row.line,
                kind: "node",
                id,
            });
        }
        let elevation = row.number(1, "elevation")?;
        let base_demand = row.opt_number(2, "demand")?.unwrap_or(0.0);
        if base_demand < 0.0 {
            return Err(row.err(2, "base demand must be nonnegative"));
        }
        let pattern_id = row.tokens.get(3).map(|t| t.text.to_string());
        let mut j = Junction::new(id, elevation, base_demand);
        j.pattern_id = pattern_id;
        model.junctions.push(j);
    }
    let mut pattern_refs: Vec<(usize, String)> = model
        .junctions
        .iter()
        .filter_map(|j| j.pattern_id.clone().map(|p| (0, p)))
        .collect();

    for row in take(&mut rows, Section::Reservoirs) {
        let id = row.text(0, "reservoir id")?.to_string();
        if !seen_nodes.insert(id.clone()) {
            return Err(InpError::DuplicateId {
                line: row.line,
                kind: "node",
                id,
            });
        }
        let head = row.number(1, "head")?;
        let head_pattern = row.tokens.get(2).map(|t| t.text.to_string());
        if let Some(p) = &head_pattern {
            pattern_refs.push((row.line, p.clone()));
        }
        model.reservoirs.push(Reservoir {
            id,
            head,
            head_pattern,
        });
    }

    let mut seen_links: HashSet<String> = HashSet::new();
    let check_node = |row: &Row<'_>, link: &str, node: &str| -> Result<(), InpError> {
        if seen_nodes.contains(node) {
            Ok(())
        } else {
            Err(InpError::DanglingReference {
                line: row.line,
                link: link.to_string(),
                node: node.to_string(),
            })
        }
    };
    for row in take(&mut rows, Section::Pipes) {
        let id = row.text(0, "pipe id")?.to_string();
        if !seen_links.insert(id.clone()) {
            return Err(InpError::DuplicateId {
                line: row.line,
                kind: "link",
                id,
            });
        }
        let from = row.text(1, "start node")?.to_string();
        let to = row.text(2, "end node")?.to_string();
        check_node(&row, &id, &from)?;
        check_node(&row, &id, &to)?;
        let length = row.number(3, "length")?;
        if length <= 0.0 {
            return Err(row.err(3, "length must be positive"));
        }
        let diameter = row.number(4, "diameter")?;
        if diameter <= 0.0 {
            return Err(row.err(4, "diameter must be positive"));
        }
        let roughness = row.number(5, "roughness")?;
        if roughness <= 0.0 {
            return Err(row.err(5, "roughness must be positive"));
        }
        let minor = row.opt_number(6, "minor loss")?.unwrap_or(0.0);
        if minor < 0.0 {
            return Err(row.err(6, "minor loss must be nonnegative"));
        }
        let status = match row.tokens.get(7).map(|t| t.text.to_ascii_uppercase()) {
            None => LinkStatus::Open,
            Some(s) if s == "OPEN" => LinkStatus::Open,
            Some(s) if s == "CLOSED" => LinkStatus::Closed,
            Some(s) if s == "CV" => return Err(row.err(7, "check valves are not supported")),
            Some(s) => return Err(row.err(7, format!("unknown pipe status `{s}`"))),
        };
        let mut pipe = Pipe::new(id, from, to, length, diameter, roughness);
        pipe.minor_loss_k = minor;
        pipe.status = status;
        model.pipes.push(pipe);
    }

    for row in take(&mut rows, Section::Valves) {
        let id = row.text(0, "valve id")?.to_string();
        if !seen_links.insert(id.clone()) {
            return Err(InpError::DuplicateId {
                line: row.line,
                kind: "link",
                id,
            });
        }
        let from = row.text(1, "start node")?.to_string();
        let to = row.text(2, "end node")?.to_string();
        check_node(&row, &id, &from)?;
        check_node(&row, &id, &to)?;
        let diameter = row.number(3, "diameter")?;
        if diameter <= 0.0 {
            return Err(row.err(3, "diameter must be positive"));
        }
        let kind = row.text(4, "valve type")?.to_ascii_uppercase();
        let setting = row.opt_number(5, "setting")?.unwrap_or(0.0);
        let minor = row.opt_number(6, "minor loss")?.unwrap_or(0.0);
        // TCV settings are loss coefficients; other types keep theirs in the minor-loss column.
        let k = if kind == "TCV" { setting } else { minor };
        if k < 0.0 {
            return Err(row.err(if kind == "TCV" { 5 } else { 6 }, "loss coefficient must be nonnegative"));
        }
        model.valves.push(Valve {
            id,
            from,
            to,
            diameter,
            kind,
            loss_coeff_k: k,
            status: LinkStatus::Open,
        });
    }

    for row in take(&mut rows, Section::Status) {
        let id = row.text(0, "link id")?;
        let status = match row.text(1, "status")?.to_ascii_uppercase().as_str() {
            "OPEN" => LinkStatus::Open,
            "CLOSED" => LinkStatus::Closed,
            other => return Err(row.err(1, format!("unsupported status `{other}`"))),
        };
        if let Some(p) = model.pipes.iter_mut().find(|p| p.id == id) {
            p.status = status;
        } else if let Some(v) = model.valves.iter_mut().find(|v| v.id == id) {
            v.status = status;
        } else {
            return Err(row.err(0, format!("status for unknown link `{id}`")));
        }
    }

    let mut demand_rows: BTreeMap<String, (f64, Option<String>)> = BTreeMap::new();
    for row in take(&mut rows, Section::Demands) {
        let id = row.text(0, "junction id")?.to_string();
        let demand = row.number(1, "demand")?;
        if demand < 0.0 {
            return Err(row.err(1, "base demand must be nonnegative"));
        }
        let pattern = row.tokens.get(2).map(|t| t.text.to_string());
        if !model.junctions.iter().any(|j| j.id == id) {
            return Err(row.err(0, format!("demand for unknown junction `{id}`")));
        }
        match demand_rows.get_mut(&id) {
            None => {
                demand_rows.insert(id, (demand, pattern));
            }
            Some(entry) if entry.1 == pattern => entry.0 += demand,
            Some(_) => {
                return Err(row.err(2, "multiple demand categories with different patterns"))
            }
        }
    }
    for (id, (demand, pattern)) in demand_rows {
        let j = model.junctions.iter_mut().find(|j| j.id == id).unwrap();
        j.base_demand = demand;
        if let Some(p) = pattern {
            pattern_refs.push((0, p.clone()));
            j.pattern_id = Some(p);
        }
    }

    for row in take(&mut rows, Section::Patterns) {
        let id = row.text(0, "pattern id")?.to_string();
        let entry = model.patterns.entry(id).or_default();
        for idx in 1..row.tokens.len() {
            let v = row.number(idx, "multiplier")?;
            if v < 0.0 {
                return Err(row.err(idx, "pattern multipliers must be nonnegative"));
            }
            entry.push(v);
        }
    }

    for row in take(&mut rows, Section::Emitters) {
        let id = row.text(0, "junction id")?;
        let coeff = row.number(1, "emitter coefficient")?;
        if coeff < 0.0 {
            return Err(row.err(1, "emitter coefficient must be nonnegative"));
        }
        let j = model
            .junctions
            .iter_mut()
            .find(|j| j.id == id)
            .ok_or_else(|| row.err(0, format!("emitter on unknown junction `{id}`")))?;
        j.emitter_coeff = coeff;
    }

    for row in take(&mut rows, Section::Options) {
        parse_option(&row, &mut model.options, &mut diagnostics)?;
    }
    for row in take(&mut rows, Section::Times) {
        parse_time_row(&row, &mut model.options)?;
    }

    for row in take(&mut rows, Section::Coordinates) {
        let id = row.text(0, "node id")?.to_string();
        if !seen_nodes.contains(&id) {
            return Err(row.err(0, format!("coordinates for unknown node `{id}`")));
        }
        let x = row.number(1, "x")?;
        let y = row.number(2, "y")?;
        model.coordinates.insert(id, (x, y));
    }

    for row in take(&mut rows, Section::Tags) {
        parse_tag(&row, &mut model)?;
    }

    for (line, pattern) in pattern_refs {
        if !model.patterns.contains_key(&pattern) {
            return Err(InpError::MissingPattern { line, pattern });
        }
    }
    if model.reservoirs.is_empty() {
        return Err(InpError::NoReservoir);
    }
    Ok((model, diagnostics))
}

fn parse_option(
    row: &Row<'_>,
    options: &mut HydraulicOptions,
    diagnostics: &mut Vec<Diagnostic>,
) -> Result<(), InpError> {
    let key = row.text(0, "option")?.to_ascii_uppercase();
    match key.as_str() {
        "UNITS" => {
            let units = row.text(1, "units")?;
            if !units.eq_ignore_ascii_case("LPS") {
                return Err(row.err(1, format!("flow units must be LPS, found `{units}`")));
            }
        }
        "HEADLOSS" => {
            let formula = row.text(1, "headloss formula")?.to_ascii_uppercase();
            options.headloss = match formula.as_str() {
                "D-W" => HeadlossFormula::DarcyWeisbach,
                "H-W" => HeadlossFormula::HazenWilliams,
                other => return Err(row.err(1, format!("unsupported headloss formula `{other}`"))),
            };
        }
        "EMITTER" => {
            let sub = row.text(1, "emitter option")?;
            if !sub.eq_ignore_ascii_case("EXPONENT") {
                return Err(row.err(1, format!("unknown emitter option `{sub}`")));
            }
            let exponent = row.number(2, "emitter exponent")?;
            if exponent <= 0.0 {
                return Err(row.err(2, "emitter exponent must be positive"));
            }
            options.emitter_exponent = exponent;
        }
        _ => diagnostics.push(Diagnostic::warning(
            "[OPTIONS]",
            format!("option `{}` ignored (line {})", key, row.line),
        )),
    }
    Ok(())
}

fn parse_time_row(row: &Row<'_>, options: &mut HydraulicOptions) -> Result<(), InpError> {
    let first = row.text(0, "time option")?.to_ascii_uppercase();
    let (target, value_idx) = match first.as_str() {
        "DURATION" => (Some(0), 1),
        "HYDRAULIC" => (Some(1), 2),
        "PATTERN" => {
            let second = row.text(1, "pattern option")?.to_ascii_uppercase();
            if second == "TIMESTEP" {
                (Some(2), 2)
            } else {
                (None, 2)
            }
        }
        _ => (None, 0),
    };
    let Some(target) = target else {
        return Ok(());
    };
    let seconds = parse_clock(row, value_idx)?;
    match target {
        0 => options.duration = seconds,
        1 => {
            if seconds == 0 {
                return Err(row.err(value_idx, "hydraulic timestep must be positive"));
            }
            options.hydraulic_step = seconds
        }
        _ => {
            if seconds == 0 {
                return Err(row.err(value_idx, "pattern timestep must be positive"));
            }
            options.pattern_step = seconds
        }
    }
    Ok(())
}

/// `h:mm[:ss]`, or a number with optional SEC/MIN/HOURS/DAYS unit (hours by default).
fn parse_clock(row: &Row<'_>, idx: usize) -> Result<u64, InpError> {
    let text = row.text(idx, "time value")?;
    let bad = || row.err(idx, format!("invalid time `{text}`"));
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() > 3 {
            return Err(bad());
        }
        let mut total = 0u64;
        let weights = [3600u64, 60, 1];
        for (i, part) in parts.iter().enumerate() {
            let v: u64 = part.parse().map_err(|_| bad())?;
            total += v * weights[i];
        }
        return Ok(total);
    }
    let value: f64 = text.parse().map_err(|_| bad())?;
    if value < 0.0 {
        return Err(bad());
    }
    let unit = row
        .tokens
        .get(idx + 1)
        .map(|t| t.text.to_ascii_uppercase())
        .unwrap_or_else(|| "HOURS".into());
    let scale = match unit.as_str() {
        u if u.starts_with("SEC") => 1.0,
        u if u.starts_with("MIN") => 60.0,
        u if u.starts_with("HOUR") => 3600.0,
        u if u.starts_with("DAY") => 86400.0,
        _ => return Err(row.err(idx + 1, format!("unknown time unit `{unit}`"))),
    };
    Ok((value * scale).round() as u64)
}

fn parse_tag(row: &Row<'_>, model: &mut NetworkModel) -> Result<(), InpError> {
    let kind = row.text(0, "element kind")?.to_ascii_uppercase();
    let id = row.text(1, "element id")?;
    if row.tokens.len() < 3 {
        return Err(row.err(2, "expected key=value"));
    }
    for idx in 2..row.tokens.len() {
        let tok = row.tokens[idx].text;
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| row.err(idx, format!("expected key=value, found `{tok}`")))?;
        let age = |v: &str| -> Result<f64, InpError> {
            v.parse::<f64>()
                .ok()
                .filter(|a| a.is_finite())
                .ok_or_else(|| row.err(idx, format!("invalid age `{v}`")))
        };
        match kind.as_str() {
            "PIPE" | "LINK" if model.pipes.iter().any(|p| p.id == id) => {
                let pipe = model.pipes.iter_mut().find(|p| p.id == id).unwrap();
                match key {
                    "material" => pipe.material = Some(value.to_string()),
                    "age" | "age_years" => pipe.age_years = Some(age(value)?),
                    _ => return Err(row.err(idx, format!("unknown pipe tag `{key}`"))),
                }
            }
            "JUNCTION" | "NODE" if model.junctions.iter().any(|j| j.id == id) => {
                let j = model.junctions.iter_mut().find(|j| j.id == id).unwrap();
                match key {
                    "zone" => j.zone = Some(value.to_string()),
                    "age" | "age_years" => j.age_years = Some(age(value)?),
                    _ => return Err(row.err(idx, format!("unknown junction tag `{key}`"))),
                }
            }
            "PIPE" | "LINK" | "JUNCTION" | "NODE" => {
                return Err(row.err(1, format!("tag for unknown element `{id}`")))
            }
            _ => return Err(row.err(0, format!("unsupported tag kind `{kind}`"))),
        }
    }
    Ok(())
}

fn clock(seconds: u64) -> String {
    format!("{}:{:02}:{:02}", seconds / 3600, (seconds / 60) % 60, seconds % 60)
}

/// Renders a model as an INP document. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_inp(model: &NetworkModel) -> String {
    let mut out = String::new();
    out.push_str("[TITLE]\n");
    for line in model.title.lines() {
        let _ = writeln!(out, "{line}");
    }

    out.push_str("\n[JUNCTIONS]\n;ID\tElev\tDemand\tPattern\n");
    for j in &model.junctions {
        let _ = write!(out, "{}\t{}\t{}", j.id, j.elevation, j.base_demand);
        if let Some(p) = &j.pattern_id {
            let _ = write!(out, "\t{p}");
        }
        out.push('\n');
    }

    out.push_str("\n[RESERVOIRS]\n;ID\tHead\tPattern\n");
    for r in &model.reservoirs {
        let _ = write!(out, "{}\t{}", r.id, r.head);
        if let Some(p) = &r.head_pattern {
            let _ = write!(out, "\t{p}");
        }
        out.push('\n');
    }

    out.push_str("\n[PIPES]\n;ID\tNode1\tNode2\tLength\tDiameter\tRoughness\tMinorLoss\tStatus\n");
    for p in &model.pipes {
        let status = match p.status {
            LinkStatus::Open => "Open",
            LinkStatus::Closed => "Closed",
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p.id, p.from, p.to, p.length, p.diameter, p.roughness, p.minor_loss_k, status
        );
    }

    out.push_str("\n[VALVES]\n;ID\tNode1\tNode2\tDiameter\tType\tSetting\tMinorLoss\n");
    for v in &model.valves {
        let (setting, minor) = if v.kind == "TCV" {
            (v.loss_coeff_k, 0.0)
        } else {
            (0.0, v.loss_coeff_k)
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            v.id, v.from, v.to, v.diameter, v.kind, setting, minor
        );
    }

    out.push_str("\n[STATUS]\n");
    for v in &model.valves {
        if v.status == LinkStatus::Closed {
            let _ = writeln!(out, "{}\tClosed", v.id);
        }
    }

    out.push_str("\n[EMITTERS]\n");
    for j in &model.junctions {
        if j.emitter_coeff != 0.0 {
            let _ = writeln!(out, "{}\t{}", j.id, j.emitter_coeff);
        }
    }

    out.push_str("\n[PATTERNS]\n");
    for (id, values) in &model.patterns {
        if values.is_empty() {
            let _ = writeln!(out, "{id}");
        }
        for chunk in values.chunks(12) {
            let _ = write!(out, "{id}");
            for v in chunk {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
    }

    out.push_str("\n[TAGS]\n");
    for j in &model.junctions {
        if let Some(z) = &j.zone {
            let _ = writeln!(out, "JUNCTION\t{}\tzone={}", j.id, z);
        }
        if let Some(a) = j.age_years {
            let _ = writeln!(out, "JUNCTION\t{}\tage_years={}", j.id, a);
        }
    }
    for p in &model.pipes {
        if let Some(m) = &p.material {
            let _ = writeln!(out, "PIPE\t{}\tmaterial={}", p.id, m);
        }
        if let Some(a) = p.age_years {
            let _ = writeln!(out, "PIPE\t{}\tage_years={}", p.id, a);
        }
    }

    let o = &model.options;
    out.push_str("\n[OPTIONS]\nUnits\tLPS\n");
    let formula = match o.headloss {
        HeadlossFormula::DarcyWeisbach => "D-W",
        HeadlossFormula::HazenWilliams => "H-W",
    };
    let _ = writeln!(out, "Headloss\t{formula}");
    let _ = writeln!(out, "Emitter Exponent\t{}", o.emitter_exponent);

    out.push_str("\n[TIMES]\n");
    let _ = writeln!(out, "Duration\t{}", clock(o.duration));
    let _ = writeln!(out, "Hydraulic Timestep\t{}", clock(o.hydraulic_step));
    let _ = writeln!(out, "Pattern Timestep\t{}", clock(o.pattern_step));

    out.push_str("\n[COORDINATES]\n");
    for (id, (x, y)) in &model.coordinates {
        let _ = writeln!(out, "{id}\t{x}\t{y}");
    }

    out.push_str("\n[END]\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
[TITLE]
small test ; comment
[JUNCTIONS]
;ID Elev Demand Pattern
J1  80  1.5  P
J2  78  2.0
[RESERVOIRS]
R1  121
[PIPES]
P1 R1 J1 100 150 0.0015 0.5 Open
P2 J1 J2 200 100 0.0015
[VALVES]
V1 J2 J1 100 TCV 2.5 0
[PATTERNS]
P 0.5 1.5
[EMITTERS]
J2 0.1
[TAGS]
PIPE P1 material=PE age_years=12
JUNCTION J1 zone=north
[OPTIONS]
Units LPS
Headloss D-W
[TIMES]
Duration 24:00
Hydraulic Timestep 0:15
Pattern Timestep 1:00
[END]
";

    #[test]
    fn parses_small_document() {
        let (m, diags) = parse_inp(SMALL).unwrap();
        assert!(diags.is_empty(), "{diags:?}");
        assert_eq!(m.title, "small test");
        assert_eq!(m.junctions.len(), 2);
        assert_eq!(m.junctions[0].pattern_id.as_deref(), Some("P"));
        assert_eq!(m.junctions[1].emitter_coeff, 0.1);
        assert_eq!(m.junctions[0].zone.as_deref(), Some("north"));
        assert_eq!(m.pipes[0].minor_loss_k, 0.5);
        assert_eq!(m.pipes[0].material.as_deref(), Some("PE"));
        assert_eq!(m.pipes[0].age_years, Some(12.0));
        assert_eq!(m.valves[0].loss_coeff_k, 2.5);
        assert_eq!(m.patterns["P"], vec![0.5, 1.5]);
        assert_eq!(m.options.duration, 86400);
        assert_eq!(m.options.hydraulic_step, 900);
        assert_eq!(m.options.pattern_step, 3600);
    }

    #[test]
    fn round_trip_is_semantic_fixpoint() {
        let (m, _) = parse_inp(SMALL).unwrap();
        let text = write_inp(&m);
        let (back, diags) = parse_inp(&text).unwrap();
        assert!(diags.is_empty());
        assert!(m.semantically_equal(&back, 12));
        assert_eq!(write_inp(&back), text);
    }

    #[test]
    fn pattern_rows_echo_values() {
        let (m, _) = parse_inp(SMALL).unwrap();
        let text = write_inp(&m);
        assert!(text.contains("P\t0.5\t1.5\n"));
    }

    #[test]
    fn minimal_reservoir_only() {
        let (m, _) = parse_inp("[TITLE]\nminimal\n[RESERVOIRS]\nR 50\n").unwrap();
        assert_eq!(m.reservoirs.len(), 1);
        assert!(m.junctions.is_empty());
    }

    #[test]
    fn dangling_reference_names_node() {
        let text = "[JUNCTIONS]\nJ1 10\n[RESERVOIRS]\nR1 50\n[PIPES]\nP1 R1 N99 10 100 0.1\n";
        match parse_inp(text).unwrap_err() {
            InpError::DanglingReference { node, link, line } => {
                assert_eq!(node, "N99");
                assert_eq!(link, "P1");
                assert_eq!(line, 6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "[JUNCTIONS]\nJ1 10\nJ1 11\n[RESERVOIRS]\nR1 50\n";
        assert!(matches!(
            parse_inp(text).unwrap_err(),
            InpError::DuplicateId { line: 3, .. }
        ));
    }

    #[test]
    fn unknown_section_rejected() {
        let text = "[RESERVOIRS]\nR1 50\n[WIDGETS]\nx\n";
        assert!(matches!(
            parse_inp(text).unwrap_err(),
            InpError::UnknownSection { line: 3, .. }
        ));
    }

    #[test]
    fn skipped_sections_reported() {
        let text = "[RESERVOIRS]\nR1 50\n[TANKS]\nT1 1 2 3 4 5 6\n[PUMPS]\n[QUALITY]\n";
        let (_, diags) = parse_inp(text).unwrap();
        let names: Vec<&str> = diags.iter().map(|d| d.element.as_str()).collect();
        assert_eq!(names, ["[TANKS]", "[PUMPS]", "[QUALITY]"]);
    }

    #[test]
    fn syntax_error_reports_line_and_column() {
        let text = "[JUNCTIONS]\nJ1 abc\n[RESERVOIRS]\nR1 50\n";
        match parse_inp(text).unwrap_err() {
            InpError::Syntax { line, column, .. } => assert_eq!((line, column), (2, 4)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_lps_units_rejected() {
        let text = "[RESERVOIRS]\nR1 50\n[OPTIONS]\nUnits GPM\n";
        assert!(matches!(parse_inp(text).unwrap_err(), InpError::Syntax { line: 4, .. }));
    }

    #[test]
    fn missing_pattern_rejected() {
        let text = "[JUNCTIONS]\nJ1 1 1 NOPE\n[RESERVOIRS]\nR1 50\n[PIPES]\nP1 R1 J1 1 1 1\n";
        assert!(matches!(parse_inp(text).unwrap_err(), InpError::MissingPattern { .. }));
    }
}
