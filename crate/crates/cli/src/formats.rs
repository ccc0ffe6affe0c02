//! File formats: grid fields (CSV or flat binary), contours and diagnostics.
//!
//! A field CSV starts with one header line of `key=value` pairs describing
//! the grid, optionally followed by profile metadata, then `i,j,value` rows:
//!
//! ```text
//! # origin_x1=-1.5 cell=0.0234375 nx=128 ny=64 mode=patch lambda=1 W=0.094 gamma=0
//! i,j,value
//! 0,0,0
//! ```
//!
//! The binary form is the magic `SADVFLD1`, `nx` and `ny` as little-endian
//! `u64`, `origin_x1` and `cell` as `f64`, then the `nx·ny` values row by
//! row. Floats are written in shortest round-trip form, so files are exact
//! and byte-identical for identical inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use sadovskii_core::evolution::DiagnosticsSeries;
use sadovskii_core::field::{ContourPolygon, GridField, GridGeometry};
use sadovskii_core::kernel::Point;
use sadovskii_core::solver::{DipoleProfile, Mode};

const MAGIC: &[u8; 8] = b"SADVFLD1";

/// Profile metadata carried in a field header.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileMeta {
    pub mode: Mode,
    pub lambda: f64,
    pub w: f64,
    pub gamma: f64,
}

impl ProfileMeta {
    pub fn of(profile: &DipoleProfile) -> Self {
        Self {
            mode: profile.mode,
            lambda: profile.lambda,
            w: profile.w,
            gamma: profile.gamma,
        }
    }
}

pub fn field_to_csv(field: &GridField, meta: Option<&ProfileMeta>) -> String {
    let g = field.geometry();
    let b = g.bounds();
    let mut out = format!(
        "# origin_x1={} cell={} nx={} ny={}",
        b.x0, g.cell, g.nx, g.ny
    );
    if let Some(m) = meta {
        match m.mode {
            Mode::Patch => out.push_str(" mode=patch"),
            Mode::Regular { p } => write!(out, " mode=regular p={p}").unwrap(),
        }
        write!(out, " lambda={} W={} gamma={}", m.lambda, m.w, m.gamma).unwrap();
    }
    out.push_str("\ni,j,value\n");
    for j in 0..g.ny {
        for i in 0..g.nx {
            writeln!(out, "{i},{j},{}", field.get(i, j)).unwrap();
        }
    }
    out
}

fn header_map(line: &str) -> Result<BTreeMap<&str, &str>> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| anyhow!("field header must start with `#`"))?;
    body.split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .ok_or_else(|| anyhow!("bad header entry `{kv}`"))
        })
        .collect()
}

fn header_value<T: std::str::FromStr>(h: &BTreeMap<&str, &str>, key: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    let v = h
        .get(key)
        .ok_or_else(|| anyhow!("field header lacks `{key}`"))?;
    v.parse()
        .with_context(|| format!("bad header value `{key}={v}`"))
}

/// Parses a field CSV and, when present, its profile metadata.
pub fn field_from_csv(text: &str) -> Result<(GridField, Option<ProfileMeta>)> {
    let mut lines = text.lines();
    let h = header_map(lines.next().ok_or_else(|| anyhow!("empty field file"))?)?;
    let geom = GridGeometry::new(
        header_value(&h, "origin_x1")?,
        header_value(&h, "cell")?,
        header_value(&h, "nx")?,
        header_value(&h, "ny")?,
    )?;
    let meta = match h.get("mode").copied() {
        None => None,
        Some(m) => {
            let mode = match m {
                "patch" => Mode::Patch,
                "regular" => Mode::Regular {
                    p: header_value(&h, "p")?,
                },
                other => bail!("unknown mode `{other}` in field header"),
            };
            Some(ProfileMeta {
                mode,
                lambda: header_value(&h, "lambda")?,
                w: header_value(&h, "W")?,
                gamma: header_value(&h, "gamma")?,
            })
        }
    };
    if lines.next().map(str::trim) != Some("i,j,value") {
        bail!("expected column header `i,j,value` on line 2");
    }
    let mut values = vec![0.0; geom.len()];
    let mut seen = vec![false; geom.len()];
    for (n, line) in lines.enumerate() {
        let row = n + 3;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let [i, j, v] = cols[..] else {
            bail!("line {row}: expected 3 columns");
        };
        let i: usize = i.parse().with_context(|| format!("line {row}: bad i"))?;
        let j: usize = j.parse().with_context(|| format!("line {row}: bad j"))?;
        let v: f64 = v
            .parse()
            .with_context(|| format!("line {row}: bad value"))?;
        if i >= geom.nx || j >= geom.ny {
            bail!(
                "line {row}: index ({i}, {j}) outside the {}x{} grid",
                geom.nx,
                geom.ny
            );
        }
        let k = geom.index(i, j);
        if seen[k] {
            bail!("line {row}: duplicate cell ({i}, {j})");
        }
        seen[k] = true;
        values[k] = v;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        bail!("cell ({}, {}) missing", k % geom.nx, k / geom.nx);
    }
    let field = GridField::from_values(geom, values).context("field values")?;
    Ok((field, meta))
}

pub fn field_to_binary(field: &GridField) -> Vec<u8> {
    let g = field.geometry();
    let mut out = Vec::with_capacity(40 + 8 * g.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.nx as u64).to_le_bytes());
    out.extend_from_slice(&(g.ny as u64).to_le_bytes());
    out.extend_from_slice(&g.bounds().x0.to_le_bytes());
    out.extend_from_slice(&g.cell.to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn field_from_binary(bytes: &[u8]) -> Result<GridField> {
    if bytes.len() < 40 || &bytes[..8] != MAGIC {
        bail!("not a binary field file");
    }
    let word = |k: usize| -> [u8; 8] { bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap() };
    let nx = usize::try_from(u64::from_le_bytes(word(0)))?;
    let ny = usize::try_from(u64::from_le_bytes(word(1)))?;
    let geom = GridGeometry::new(
        f64::from_le_bytes(word(2)),
        f64::from_le_bytes(word(3)),
        nx,
        ny,
    )?;
    let n = geom.len();
    if bytes.len() != 40 + 8 * n {
        bail!(
            "binary field has {} bytes, expected {}",
            bytes.len(),
            40 + 8 * n
        );
    }
    let values = (0..n).map(|k| f64::from_le_bytes(word(4 + k))).collect();
    Ok(GridField::from_values(geom, values)?)
}

/// Reads a field in either format, chosen by content.
pub fn read_field(path: &Path) -> Result<(GridField, Option<ProfileMeta>)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(MAGIC) {
        return Ok((field_from_binary(&bytes)?, None));
    }
    let text =
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
    field_from_csv(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn contour_to_csv(contour: &ContourPolygon) -> String {
    let mut out = String::from("x1,x2\n");
    for v in contour.vertices() {
        writeln!(out, "{},{}", v.x1, v.x2).unwrap();
    }
    out
}

pub fn contour_from_csv(text: &str) -> Result<ContourPolygon> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("x1,x2") {
        bail!("expected column header `x1,x2`");
    }
    let mut vertices = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| anyhow!("line {}: expected 2 columns", n + 2))?;
        let x1: f64 = a
            .trim()
            .parse()
            .with_context(|| format!("line {}: bad x1", n + 2))?;
        let x2: f64 = b
            .trim()
            .parse()
            .with_context(|| format!("line {}: bad x2", n + 2))?;
        vertices.push(Point::new(x1, x2));
    }
    Ok(ContourPolygon::new(vertices))
}

pub const DIAGNOSTICS_HEADER: &str = "time,mass,impulse,lp,energy,center_x1,tau,perimeter,diameter";

pub fn diagnostics_to_csv(series: &DiagnosticsSeries) -> String {
    let mut out = format!("{DIAGNOSTICS_HEADER}\n");
    for r in &series.records {
        let perimeter = r.perimeter.map(|p| p.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.time,
            r.mass,
            r.impulse,
            r.lp_norm,
            r.energy,
            r.center_x1,
            r.shift_tau,
            perimeter,
            r.support_diameter
        )
        .unwrap();
    }
    out
}
