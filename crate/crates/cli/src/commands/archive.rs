use std::fmt::Write as _;
use std::path::Path;

use aquacal::archive::{self, ArchiveError};
use aquacal::space::Group;

use super::Ctx;
use crate::failure::{self, Failure, Outcome};

pub fn inspect(ctx: &mut Ctx, path: &Path) -> Outcome {
    let text = ctx.read_input("archive", path)?;
    let a = archive::load(&text).map_err(|e| {
        let code = if matches!(e, ArchiveError::Version { .. }) {
            failure::SEED_SCHEMA
        } else {
            failure::INPUT
        };
        Failure::new(code, anyhow::Error::new(e).context(path.display().to_string()))
    })?;
    let mut out = String::new();
    let _ = writeln!(out, "format_version = {}", a.format_version);
    let _ = writeln!(out, "created_at = {}", a.created_at);
    let _ = writeln!(out, "model_fingerprint = {}", a.model_fingerprint);
    let _ = writeln!(out, "rules_fingerprint = {}", a.rules_fingerprint);
    let _ = writeln!(out, "schema_hash = {}", a.schema_hash);
    let _ = writeln!(out, "baseline_objective = {}", a.baseline_objective);
    let _ = writeln!(out, "best_objective = {}", a.best_objective);
    match a.validation_objective {
        Some(v) => {
            let _ = writeln!(out, "validation_objective = {v}");
        }
        None => out.push_str("validation_objective = none\n"),
    }
    let _ = writeln!(out, "simulations = {}", a.simulations);
    let _ = writeln!(out, "outer_iterations = {}", a.outer_iterations);
    let _ = writeln!(out, "stop_reason = {}", a.stop_reason);
    let _ = writeln!(out, "junction_features = {}", a.schema.junction.join(" "));
    let _ = writeln!(out, "link_features = {}", a.schema.link.join(" "));
    for group in [Group::Flow, Group::Pressure] {
        let kinds: Vec<&str> = a.kinds(group).iter().map(|k| k.as_str()).collect();
        let _ = writeln!(out, "{group}.outputs = {}", kinds.join(" "));
        match a.genome(group) {
            Some(g) => {
                let _ = writeln!(
                    out,
                    "{group}.genome = {} hidden nodes, {} enabled of {} connections",
                    g.hidden_count(),
                    g.enabled_count(),
                    g.connections.len()
                );
            }
            None => {
                let _ = writeln!(out, "{group}.genome = none");
            }
        }
        let gens = a.history.iter().filter(|h| h.phase == group).count();
        let _ = writeln!(out, "{group}.generations = {gens}");
    }
    print!("{out}");
    ctx.write("archive_inspect.txt", out)
}
