//! ASCII PLY and whitespace-separated XYZ cloud files.
//!
//! Only vertex positions are read; every other property and element is
//! skipped. Coordinates are written with 9 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::cloud::Point3;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    Xyz,
}

impl CloudFormat {
    /// Format implied by a file extension; anything but `.ply` is XYZ.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ply") => CloudFormat::PlyAscii,
            _ => CloudFormat::Xyz,
        }
    }
}

fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_cloud(path: &Path) -> Result<Vec<Point3>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match CloudFormat::from_path(path) {
        CloudFormat::PlyAscii => parse_ply(&text).map_err(|m| parse_error(path, m)),
        CloudFormat::Xyz => parse_xyz(&text).map_err(|m| parse_error(path, m)),
    }
}

pub fn write_cloud(path: &Path, points: &[Point3]) -> Result<()> {
    let text = match CloudFormat::from_path(path) {
        CloudFormat::PlyAscii => format_ply(points),
        CloudFormat::Xyz => format_xyz(points),
    };
    fs::write(path, text).map_err(|source| Error::Io {
        path: PathBuf::from(path),
        source,
    })
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Property {
    name: String,
    /// List properties occupy a count token followed by that many values.
    is_list: bool,
}

pub fn parse_ply(text: &str) -> std::result::Result<Vec<Point3>, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing 'ply' magic line".into());
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_ok = false;
    loop {
        let line = lines.next().ok_or("header ended without 'end_header'")?.trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                let kind = tok.next().unwrap_or("");
                if kind != "ascii" {
                    return Err(format!("unsupported PLY format '{kind}', only ascii is read"));
                }
                format_ok = true;
            }
            Some("element") => {
                let name = tok.next().ok_or("element without a name")?.to_string();
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| format!("element '{name}' without a valid count"))?;
                elements.push(Element {
                    name,
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or("property before any element")?;
                let rest: Vec<&str> = tok.collect();
                let (is_list, name) = match rest.as_slice() {
                    ["list", _, _, name] => (true, *name),
                    [_, name] => (false, *name),
                    _ => return Err(format!("malformed property line '{line}'")),
                };
                el.properties.push(Property {
                    name: name.to_string(),
                    is_list,
                });
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => return Err(format!("unexpected header keyword '{other}'")),
        }
    }
    if !format_ok {
        return Err("missing format line".into());
    }

    let mut points = Vec::new();
    let mut body = lines.filter(|l| !l.trim().is_empty());
    for el in &elements {
        let position = |axis: &str| el.properties.iter().position(|p| p.name == axis && !p.is_list);
        let axes = match (position("x"), position("y"), position("z")) {
            (Some(x), Some(y), Some(z)) if el.name == "vertex" => Some([x, y, z]),
            _ => None,
        };
        for row in 0..el.count {
            let line = body
                .next()
                .ok_or_else(|| format!("element '{}' ends early at row {row}", el.name))?;
            let Some(axes) = axes else { continue };
            if el.properties.iter().any(|p| p.is_list) {
                return Err("list properties on the vertex element are not supported".into());
            }
            let values: Vec<&str> = line.split_whitespace().collect();
            if values.len() < el.properties.len() {
                return Err(format!("vertex row {row} has {} values, expected {}", values.len(), el.properties.len()));
            }
            let mut p = [0.0; 3];
            for (a, &col) in axes.iter().enumerate() {
                p[a] = values[col]
                    .parse()
                    .map_err(|_| format!("vertex row {row}: bad number '{}'", values[col]))?;
            }
            points.push(Point3::new(p[0], p[1], p[2]));
        }
    }
    if !elements.iter().any(|e| e.name == "vertex") {
        return Err("no vertex element".into());
    }
    Ok(points)
}

pub fn parse_xyz(text: &str) -> std::result::Result<Vec<Point3>, String> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .take(3)
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| format!("line {}: bad number", lineno + 1))?;
        if values.len() < 3 {
            return Err(format!("line {}: expected 3 coordinates", lineno + 1));
        }
        points.push(Point3::new(values[0], values[1], values[2]));
    }
    Ok(points)
}

/// Decimal with at most 9 significant digits, trailing zeros trimmed.
pub fn format_coord(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs().log10().floor() as i32;
    let mut s = if (-5..9).contains(&mag) {
        let decimals = (8 - mag).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.8e}")
    };
    // Rounding can carry into a tenth digit (9.9999999996 -> 10.0000000).
    if let Some(epos) = s.find('e') {
        let (mant, exp) = s.split_at(epos);
        let mant = trim_zeros(mant);
        s = format!("{mant}{exp}");
    } else {
        s = trim_zeros(&s).to_string();
    }
    s
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn format_ply(points: &[Point3]) -> String {
    let mut out = String::with_capacity(points.len() * 32 + 128);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", points.len());
    out.push_str("property float x\nproperty float y\nproperty float z\nend_header\n");
    for p in points {
        let _ = writeln!(out, "{} {} {}", format_coord(p.x), format_coord(p.y), format_coord(p.z));
    }
    out
}

pub fn format_xyz(points: &[Point3]) -> String {
    let mut out = String::with_capacity(points.len() * 32);
    for p in points {
        let _ = writeln!(out, "{} {} {}", format_coord(p.x), format_coord(p.y), format_coord(p.z));
    }
    out
}
