//! Sectioned `key=value` text used for configs and limiting-triple specs.
//!
//! ```text
//! # comment
//! [band] phase=A z0=0 z1=1
//!        grad_u=0,0,0,0
//! ```
//! A bare token following a `key=value` pair extends that value as a list element.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<(String, String)>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Parse { line: self.line, msg: format!("[{}] is missing `{key}`", self.name) })
    }

    pub fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { line: self.line, msg: format!("[{}]: {}", self.name, msg.into()) })
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_f64(v).or_else(|e| self.err(format!("`{key}`: {e}")))).transpose()
    }

    pub fn req_f64(&self, key: &str) -> Result<f64> {
        let v = self.require(key)?;
        parse_f64(v).or_else(|e| self.err(format!("`{key}`: {e}")))
    }

    pub fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|v| parse_f64_list(v).or_else(|e| self.err(format!("`{key}`: {e}")))).transpose()
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.trim().parse::<usize>().or_else(|_| self.err(format!("`{key}`: expected an integer, got `{v}`")))
            })
            .transpose()
    }

    /// Errors on any key not in `allowed`.
    pub fn only_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return self.err(format!("unknown key `{k}`"));
            }
        }
        Ok(())
    }
}

/// Parses a number, accepting fractions such as `1/2`.
pub fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let a: f64 = a.trim().parse().map_err(|_| format!("bad number `{s}`"))?;
        let b: f64 = b.trim().parse().map_err(|_| format!("bad number `{s}`"))?;
        return Ok(a / b);
    }
    s.parse().map_err(|_| format!("bad number `{s}`"))
}

pub fn parse_f64_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(parse_f64).collect()
}

pub fn parse(text: &str) -> Result<Vec<Section>> {
    let mut out: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("");
        let mut rest = line.trim();
        if rest.is_empty() {
            continue;
        }
        if rest.starts_with('[') {
            let close =
                rest.find(']').ok_or(Error::Parse { line: lineno, msg: "unterminated section header".into() })?;
            let name = rest[1..close].trim();
            if name.is_empty() {
                return Err(Error::Parse { line: lineno, msg: "empty section name".into() });
            }
            out.push(Section { name: name.to_string(), line: lineno, entries: Vec::new() });
            rest = rest[close + 1..].trim();
        }
        for tok in rest.split_whitespace() {
            let sec = out.last_mut().ok_or(Error::Parse { line: lineno, msg: "entry before any section".into() })?;
            match tok.split_once('=') {
                Some((k, v)) if !k.is_empty() => sec.entries.push((k.to_string(), v.to_string())),
                Some(_) => return Err(Error::Parse { line: lineno, msg: format!("bad token `{tok}`") }),
                None => match sec.entries.last_mut() {
                    Some((_, v)) => {
                        if !v.is_empty() && !v.ends_with(',') {
                            v.push(',');
                        }
                        v.push_str(tok);
                    }
                    None => return Err(Error::Parse { line: lineno, msg: format!("value `{tok}` without key") }),
                },
            }
        }
    }
    Ok(out)
}
