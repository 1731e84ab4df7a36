//! Run manifests: what was run, with which inputs, so it can be run again.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::failure::{self, Failure, Outcome};

pub const FILE_NAME: &str = "manifest.txt";
const HEADER: &str = "# aquacal run manifest";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunManifest {
    pub command: String,
    /// (role, path as given on the command line).
    pub inputs: Vec<(String, String)>,
    pub seed: u64,
    pub threads: usize,
    pub config_file: Option<String>,
    /// `section.key=value` overrides in the order given.
    pub overrides: Vec<String>,
    pub out: String,
    /// Directory the command was started from; relative paths resolve here.
    pub cwd: String,
    pub started_at: String,
    pub finished_at: String,
    pub exit_code: u8,
    pub tool_version: String,
    /// Full argument list after the program name.
    pub args: Vec<String>,
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some(other) => out.push(other),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut out = format!("{HEADER}\n");
        let mut kv = |k: &str, v: &str| {
            let _ = writeln!(out, "{k} = {}", escape(v));
        };
        kv("command", &self.command);
        kv("tool_version", &self.tool_version);
        kv("seed", &self.seed.to_string());
        kv("threads", &self.threads.to_string());
        kv("config", self.config_file.as_deref().unwrap_or("-"));
        for o in &self.overrides {
            kv("override", o);
        }
        for (role, path) in &self.inputs {
            kv("input", &format!("{role} {path}"));
        }
        kv("out", &self.out);
        kv("cwd", &self.cwd);
        kv("started_at", &self.started_at);
        kv("finished_at", &self.finished_at);
        kv("exit_code", &self.exit_code.to_string());
        for a in &self.args {
            kv("arg", a);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut m = RunManifest::default();
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err("not an aquacal run manifest".into());
        }
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| format!("manifest line {}: expected `key = value`", i + 2))?;
            let v = unescape(v);
            let bad = |what: &str| format!("manifest line {}: bad {what}", i + 2);
            match k {
                "command" => m.command = v,
                "tool_version" => m.tool_version = v,
                "seed" => m.seed = v.parse().map_err(|_| bad("seed"))?,
                "threads" => m.threads = v.parse().map_err(|_| bad("thread count"))?,
                "config" => m.config_file = (v != "-").then_some(v),
                "override" => m.overrides.push(v),
                "input" => {
                    let (role, path) = v.split_once(' ').ok_or_else(|| bad("input"))?;
                    m.inputs.push((role.to_string(), path.to_string()));
                }
                "out" => m.out = v,
                "cwd" => m.cwd = v,
                "started_at" => m.started_at = v,
                "finished_at" => m.finished_at = v,
                "exit_code" => m.exit_code = v.parse().map_err(|_| bad("exit code"))?,
                "arg" => m.args.push(v),
                other => return Err(format!("manifest line {}: unknown key `{other}`", i + 2)),
            }
        }
        if m.args.is_empty() {
            return Err("manifest records no arguments".into());
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Outcome<Self> {
        let text = failure::read(path)?;
        Self::parse(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
    }

    /// Path of an input role, resolved against the recorded directory.
    pub fn input(&self, role: &str) -> Option<PathBuf> {
        self.inputs
            .iter()
            .find(|(r, _)| r == role)
            .map(|(_, p)| Path::new(&self.cwd).join(p))
    }
}
