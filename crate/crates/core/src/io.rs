//! Reading and writing grid fields in the `TWG 1` text and `TWGB 1` binary formats.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridField, GridGeometry};

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

fn header_line(f: &GridField) -> String {
    let g = &f.geom;
    let join = |v: Vec<String>| v.join(" ");
    format!(
        "d {} dims {} spacing {} origin {}",
        g.dim(),
        join(g.dims.iter().map(|n| n.to_string()).collect()),
        join(g.spacing.iter().map(|h| h.to_string()).collect()),
        join(g.origin.iter().map(|o| o.to_string()).collect()),
    )
}

fn parse_header(line: &str, lineno: usize) -> Result<GridGeometry> {
    let tok: Vec<&str> = line.split_whitespace().collect();
    if tok.len() < 2 || tok[0] != "d" {
        return parse_err(lineno, "header must start with `d <dim>`");
    }
    let d: usize = tok[1].parse().or_else(|_| parse_err(lineno, "bad dimension"))?;
    if !(1..=3).contains(&d) || tok.len() != 2 + 3 * (d + 1) {
        return parse_err(lineno, format!("header has {} tokens, expected {}", tok.len(), 2 + 3 * (d + 1)));
    }
    let section = |name: &str, at: usize| -> Result<&[&str]> {
        if tok[at] != name {
            return parse_err(lineno, format!("expected `{name}`"));
        }
        Ok(&tok[at + 1..at + 1 + d])
    };
    let dims = section("dims", 2)?
        .iter()
        .map(|s| s.parse::<usize>().or_else(|_| parse_err(lineno, format!("bad cell count `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    let floats = |v: &[&str]| -> Result<Vec<f64>> {
        v.iter().map(|s| s.parse::<f64>().or_else(|_| parse_err(lineno, format!("bad number `{s}`")))).collect()
    };
    let spacing = floats(section("spacing", 3 + d)?)?;
    let origin = floats(section("origin", 4 + 2 * d)?)?;
    GridGeometry::new(dims, spacing, origin)
}

pub fn write_twg<W: Write>(f: &GridField, mut out: W) -> Result<()> {
    if f.ncomp != f.dim() {
        return Err(Error::InvalidInput("TWG stores d components per node".into()));
    }
    writeln!(out, "TWG 1")?;
    writeln!(out, "{}", header_line(f))?;
    let mut line = String::new();
    for n in 0..f.geom.node_count() {
        line.clear();
        for (k, v) in f.node(n).iter().enumerate() {
            if k > 0 {
                line.push(' ');
            }
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_twg<R: Read>(input: R) -> Result<GridField> {
    let mut lines = BufReader::new(input).lines();
    let magic = lines.next().transpose()?.unwrap_or_default();
    if magic.trim() != "TWG 1" {
        return parse_err(1, format!("expected `TWG 1`, found `{}`", magic.trim()));
    }
    let header = lines.next().transpose()?.unwrap_or_default();
    let geom = parse_header(&header, 2)?;
    let d = geom.dim();
    let n = geom.node_count();
    let mut values = Vec::with_capacity(n * d);
    let mut lineno = 2;
    for line in lines {
        lineno += 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().or_else(|_| parse_err(lineno, format!("bad number `{s}`"))))
            .collect::<Result<_>>()?;
        if row.len() != d {
            return parse_err(lineno, format!("expected {d} values, found {}", row.len()));
        }
        if values.len() >= n * d {
            return parse_err(lineno, "more node lines than the header declares");
        }
        values.extend(row);
    }
    if values.len() != n * d {
        return parse_err(lineno, format!("expected {n} nodes, found {}", values.len() / d));
    }
    GridField::new(geom, d, values)
}

pub fn write_twgb<W: Write>(f: &GridField, mut out: W) -> Result<()> {
    if f.ncomp != f.dim() {
        return Err(Error::InvalidInput("TWGB stores d components per node".into()));
    }
    writeln!(out, "TWGB 1")?;
    writeln!(out, "{}", header_line(f))?;
    for v in &f.values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_twgb<R: Read>(input: R) -> Result<GridField> {
    let mut r = BufReader::new(input);
    let mut magic = String::new();
    r.read_line(&mut magic)?;
    if magic.trim() != "TWGB 1" {
        return parse_err(1, format!("expected `TWGB 1`, found `{}`", magic.trim()));
    }
    let mut header = String::new();
    r.read_line(&mut header)?;
    let geom = parse_header(&header, 2)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let expect = geom.node_count() * geom.dim();
    if bytes.len() != 8 * expect {
        return parse_err(3, format!("expected {} bytes of data, found {}", 8 * expect, bytes.len()));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let d = geom.dim();
    GridField::new(geom, d, values)
}

/// Reads either format, detected from the first line.
pub fn load_field(path: &Path) -> Result<GridField> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"TWGB") {
        read_twgb(&bytes[..])
    } else {
        read_twg(&bytes[..])
    }
}

/// Writes binary when the extension is `twgb`, text otherwise.
pub fn save_field(f: &GridField, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    if path.extension().is_some_and(|e| e == "twgb") {
        write_twgb(f, &mut buf)?;
    } else {
        write_twg(f, &mut buf)?;
    }
    fs::write(path, buf)?;
    Ok(())
}
