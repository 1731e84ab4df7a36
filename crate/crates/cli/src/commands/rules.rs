use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use aquacal::rules::parse_rules;

use super::{compile, load_model, rule_failure, Ctx};
use crate::failure::Outcome;

pub fn check(ctx: &mut Ctx, rules: &Path, inp: Option<&Path>) -> Outcome {
    let text = ctx.read_input("rules", rules)?;
    let parsed = parse_rules(&text).map_err(|e| rule_failure(rules, e))?;
    let mut report = format!("rules = {}\n", parsed.len());
    if let Some(inp) = inp {
        let model = load_model(ctx, "inp", inp)?;
        let space = compile(rules, &text, &model)?;
        let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
        for s in space.specs() {
            *counts.entry((s.group.as_str().to_string(), s.parameter.as_str().to_string())).or_default() += 1;
        }
        let _ = writeln!(report, "parameters = {}", space.len());
        for ((group, kind), n) in counts {
            let _ = writeln!(report, "{group}.{kind} = {n}");
        }
    }
    print!("{report}");
    ctx.write("rules_check.txt", report)
}
