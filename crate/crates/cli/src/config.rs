//! Plain-text pipeline configuration.
//!
//! A config file holds one `key = value` pair per line; `#` starts a comment.
//! Keys are the long flag names of the subcommand being run (`p-target` and
//! `p_target` are the same key). A boolean flag is switched on with `true`
//! and left off with `false`. Values from the file are spliced into the
//! argument list ahead of the user's own flags, and any key that also appears
//! on the command line is dropped, so flags always override the file.

use std::collections::HashSet;
use std::fs;

use clap::{ArgAction, Command};

#[derive(Debug)]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected `key = value`", n + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError(format!("line {}: empty key or value", n + 1)));
        }
        out.push(Entry { line: n + 1, key, value });
    }
    Ok(out)
}

/// Flags whose relative order on the command line matters. If the user gives
/// any of them, the file's ones are all dropped instead of being merged.
const STAGE_FLAGS: [&str; 5] = ["ln", "center", "lda", "lda-diag", "projection"];

/// Returns `args` with the entries of `--config FILE` (if any) inserted after
/// the subcommand name. `args[0]` is the program name.
pub fn expand(cmd: &Command, args: Vec<String>) -> Result<Vec<String>, ConfigError> {
    let Some(sub_pos) = args.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Ok(args);
    };
    let Some(sub) = cmd.find_subcommand(&args[sub_pos]) else {
        return Ok(args);
    };

    let mut path = None;
    let mut given = HashSet::new();
    let mut rest = Vec::new();
    let mut i = sub_pos + 1;
    while i < args.len() {
        let a = &args[i];
        if a == "--" {
            rest.extend_from_slice(&args[i..]);
            break;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else if a == "--config" {
            path = Some(args.get(i + 1).cloned().ok_or_else(|| ConfigError("--config needs a path".into()))?);
            i += 1;
        } else {
            if let Some(name) = a.strip_prefix("--") {
                given.insert(name.split('=').next().unwrap_or(name).to_string());
            }
            rest.push(a.clone());
        }
        i += 1;
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| ConfigError(format!("cannot read config {path}: {e}")))?;
    let entries = parse(&text)?;
    let user_staged = STAGE_FLAGS.iter().any(|f| given.contains(*f));

    let mut injected = Vec::new();
    for e in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(e.key.as_str()) && e.key != "help" && e.key != "config")
            .ok_or_else(|| ConfigError(format!("line {}: unknown key `{}` for `{}`", e.line, e.key, sub.get_name())))?;
        if given.contains(&e.key) || (user_staged && STAGE_FLAGS.contains(&e.key.as_str())) {
            continue;
        }
        let takes_value = !matches!(arg.get_action(), ArgAction::SetTrue | ArgAction::Count)
            && arg.get_num_args().is_none_or(|r| r.max_values() > 0);
        if takes_value {
            injected.push(format!("--{}", e.key));
            injected.push(e.value);
        } else {
            match e.value.as_str() {
                "true" => injected.push(format!("--{}", e.key)),
                "false" => {}
                v => return Err(ConfigError(format!("line {}: `{}` expects true or false, got `{v}`", e.line, e.key))),
            }
        }
    }

    let mut out = args[..=sub_pos].to_vec();
    out.extend(injected);
    out.extend(rest);
    Ok(out)
}
