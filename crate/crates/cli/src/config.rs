//! `key=value` config files for `mconvex run --config FILE`.
//!
//! Blank lines and lines starting with `#` are ignored. `command` names the
//! subcommand; every other key is one of its long options (`max-iter`,
//! `closed-form`, ...) or `seed`/`output`. Boolean options take `true` or
//! `false`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{CommandFactory, Parser};

use crate::{Cli, CliError, CliResult, RunConfig};

/// Key to `(line, column)` of its value, both 1-based.
pub type Origins = BTreeMap<String, (usize, usize)>;

struct Entry {
    key: String,
    value: String,
    line: usize,
    key_col: usize,
    value_col: usize,
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> CliError {
    CliError::Parse { line, column, message: message.into() }
}

fn entries(text: &str) -> CliResult<Vec<Entry>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let lead = raw.chars().take_while(|c| c.is_whitespace()).count();
        let body: String = raw.chars().skip(lead).collect();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let Some(eq) = body.chars().position(|c| c == '=') else {
            return Err(parse_error(line, lead + 1, "expected `key=value`"));
        };
        let key: String = body.chars().take(eq).collect::<String>().trim_end().to_string();
        if key.is_empty() {
            return Err(parse_error(line, lead + 1, "empty key"));
        }
        let rest: String = body.chars().skip(eq + 1).collect();
        let pad = rest.chars().take_while(|c| c.is_whitespace()).count();
        out.push(Entry {
            key,
            value: rest.trim().to_string(),
            line,
            key_col: lead + 1,
            value_col: lead + eq + 2 + pad,
        });
    }
    Ok(out)
}

/// Resolves a config file into a [`RunConfig`]. `seed` and `output` from the
/// command line apply unless the file sets them.
pub fn load(text: &str, seed: u64, output: Option<PathBuf>) -> CliResult<RunConfig> {
    let entries = entries(text)?;
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &entries {
        if let Some(first) = seen.insert(&e.key, e.line) {
            return Err(parse_error(e.line, e.key_col, format!("duplicate key `{}` (first on line {first})", e.key)));
        }
    }
    let command = entries.iter().find(|e| e.key == "command").ok_or_else(|| parse_error(1, 1, "missing `command`"))?;
    let root = Cli::command();
    let sub = root
        .find_subcommand(&command.value)
        .filter(|s| s.get_name() != "run")
        .ok_or_else(|| parse_error(command.line, command.value_col, format!("unknown command `{}`", command.value)))?;

    let mut argv = vec!["mconvex".to_string()];
    let mut tail = vec![command.value.clone()];
    let mut origins = Origins::new();
    for e in &entries {
        match e.key.as_str() {
            "command" => continue,
            "seed" | "output" => {
                argv.push(format!("--{}", e.key));
                argv.push(e.value.clone());
            }
            key => {
                let arg =
                    sub.get_arguments().find(|a| a.get_long() == Some(key) && key != "help").ok_or_else(|| {
                        parse_error(e.line, e.key_col, format!("unknown key `{key}` for `{}`", command.value))
                    })?;
                if arg.get_action().takes_values() {
                    tail.push(format!("--{key}"));
                    tail.push(e.value.clone());
                } else {
                    match e.value.as_str() {
                        "true" => tail.push(format!("--{key}")),
                        "false" => {}
                        _ => return Err(parse_error(e.line, e.value_col, format!("`{key}` takes true or false"))),
                    }
                }
            }
        }
        origins.insert(e.key.clone(), (e.line, e.value_col));
    }
    argv.extend(tail);
    let cli = Cli::try_parse_from(&argv).map_err(|err| {
        let msg = err.to_string();
        let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
        let hit =
            entries.iter().find(|e| msg.contains(&format!("--{} ", e.key)) || msg.contains(&format!("--{}\n", e.key)));
        match hit {
            Some(e) => parse_error(e.line, e.value_col, first),
            None => parse_error(command.line, command.value_col, first),
        }
    })?;
    Ok(RunConfig {
        seed: if origins.contains_key("seed") { cli.seed } else { seed },
        output: if origins.contains_key("output") { cli.output } else { output },
        command: cli.command,
        origins,
    })
}
