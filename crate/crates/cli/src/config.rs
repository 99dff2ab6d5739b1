//! `key = value` config files merged into argv ahead of the user's flags.

use std::ffi::OsString;
use std::path::Path;

/// Subcommands that take a nested action (`scheme bdf`, `barrier verify`, ..).
const NESTED: [&str; 3] = ["scheme", "barrier", "stability"];

#[derive(Debug, PartialEq)]
pub struct ConfigError(pub String);

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key=value, got {raw:?}", no + 1)))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(ConfigError(format!("line {}: empty key", no + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Removes `--config FILE` (or `--config=FILE`) from `args` and splices the
/// file's entries in right after the subcommand path, so that flags given on
/// the command line come later and win.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut file = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        match a.to_str() {
            Some("--config") => {
                let v = it.next().ok_or_else(|| ConfigError("--config needs a file".into()))?;
                file = Some(v);
            }
            Some(s) if s.starts_with("--config=") => file = Some(OsString::from(&s[9..])),
            _ => rest.push(a),
        }
    }
    let Some(file) = file else {
        return Ok(rest);
    };
    let path = Path::new(&file);
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    let mut injected = Vec::new();
    for (k, v) in parse(&text)? {
        match v.as_str() {
            "true" => injected.push(OsString::from(format!("--{k}"))),
            "false" => {}
            _ => {
                injected.push(OsString::from(format!("--{k}")));
                injected.push(OsString::from(v));
            }
        }
    }
    // argv[0], the subcommand, and the nested action if there is one.
    let mut split = 1;
    if let Some(sub) = rest.get(1).and_then(|s| s.to_str()) {
        if !sub.starts_with('-') {
            split = 2;
            if NESTED.contains(&sub) && rest.get(2).and_then(|s| s.to_str()).is_some_and(|s| !s.starts_with('-')) {
                split = 3;
            }
        }
    }
    let split = split.min(rest.len());
    let mut out: Vec<OsString> = rest[..split].to_vec();
    out.extend(injected);
    out.extend_from_slice(&rest[split..]);
    Ok(out)
}
