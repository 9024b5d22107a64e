//! File formats: spin-system spec (TOML), pulse-sequence text, plain-text
//! complex matrices, and atomic file writes.
//!
//! The sequence and matrix emitters print floats with Rust's shortest
//! round-trip formatting, so `parse(emit(x)) == x` holds exactly; parsers
//! report the offending line on malformed input.

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix};
use crate::propagator::{BBSequence, Event, Phase};
use crate::spinsys::{Species, SpinSystem};
use nalgebra::DMatrix;
use serde::Deserialize;
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Write via a temporary file in the same directory plus rename, so readers
/// never observe a half-written file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = dir.join(
        Path::new(&tmp)
            .file_name()
            .ok_or_else(|| Error::InvalidConfig(format!("not a file path: {}", path.display())))?,
    );
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// spin-system spec file (TOML)

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    spins: usize,
    #[serde(default = "default_true")]
    weak_coupling: bool,
    offsets_hz: Vec<f64>,
    #[serde(default)]
    j_hz: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    d_hz: Option<Vec<Vec<f64>>>,
    species: Vec<SpeciesFile>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpeciesFile {
    label: String,
    /// maximum RF amplitude as a frequency; converted as Ω = 2π·value
    max_amplitude_hz: f64,
    /// 1-based spin indices driven by this channel
    spins: Vec<usize>,
}

fn table_from_rows(name: &str, n: usize, rows: Option<Vec<Vec<f64>>>) -> Result<DMatrix<f64>> {
    let Some(rows) = rows else {
        return Ok(DMatrix::zeros(n, n));
    };
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidSystem(format!(
            "{name} must be a {n}×{n} table"
        )));
    }
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

fn toml_error(text: &str, err: toml::de::Error) -> Error {
    let line = err
        .span()
        .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
        .unwrap_or(0);
    parse_err(line, err.message().to_string())
}

/// Parse a spin-system spec. Frequencies are given in Hz; offsets and
/// amplitudes are converted to angular units (2π·value), coupling tables
/// stay in Hz. Asymmetric tables are rejected.
pub fn parse_system(text: &str) -> Result<SpinSystem> {
    let file: SystemFile = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    if file.offsets_hz.len() != file.spins {
        return Err(Error::InvalidSystem(format!(
            "{} offsets for {} spins",
            file.offsets_hz.len(),
            file.spins
        )));
    }
    let species = file
        .species
        .into_iter()
        .map(|s| Species {
            label: s.label,
            max_amplitude: TAU * s.max_amplitude_hz,
            spins: s.spins,
        })
        .collect();
    let offsets = file.offsets_hz.iter().map(|&f| TAU * f).collect();
    let j = table_from_rows("j_hz", file.spins, file.j_hz)?;
    let d = table_from_rows("d_hz", file.spins, file.d_hz)?;
    SpinSystem::new(species, offsets, j, d, file.weak_coupling)
}

pub fn read_system(path: &Path) -> Result<SpinSystem> {
    parse_system(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------------------
// pulse-sequence text format

/// Emit a sequence:
/// ```text
/// dt 0.000005
/// segments 2
/// species H C
/// D P:90
/// P:12.5 D
/// twirls 1 2
/// ```
/// One row per segment, one token per species (`D` or `P:<degrees>`); the
/// `twirls` line is present only when boundaries exist.
pub fn emit_sequence(seq: &BBSequence) -> String {
    let mut out = String::new();
    out.push_str(&format!("dt {}\n", seq.dt()));
    out.push_str(&format!("segments {}\n", seq.n_segments()));
    out.push_str(&format!("species {}\n", seq.species_labels().join(" ")));
    for row in seq.events() {
        let tokens: Vec<String> = row
            .iter()
            .map(|e| match e {
                Event::Delay => "D".to_string(),
                Event::Pulse(p) => format!("P:{}", p.degrees()),
            })
            .collect();
        out.push_str(&tokens.join(" "));
        out.push('\n');
    }
    if !seq.twirl_boundaries().is_empty() {
        let ts: Vec<String> = seq
            .twirl_boundaries()
            .iter()
            .map(|t| t.to_string())
            .collect();
        out.push_str(&format!("twirls {}\n", ts.join(" ")));
    }
    out
}

/// Parse the sequence format; blank lines and `#` comments are skipped.
pub fn parse_sequence(text: &str) -> Result<BBSequence> {
    // (line number, content) with comments/blanks removed
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let mut expect = |key: &str| -> Result<(usize, String)> {
        let (n, line) = lines
            .next()
            .ok_or_else(|| parse_err(0, format!("missing `{key}` line")))?;
        let rest = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| parse_err(n, format!("expected `{key} ...`, found `{line}`")))?;
        Ok((n, rest.trim().to_string()))
    };

    let (n, dt_str) = expect("dt")?;
    let dt: f64 = dt_str
        .parse()
        .map_err(|_| parse_err(n, format!("invalid dt `{dt_str}`")))?;
    let (n, seg_str) = expect("segments")?;
    let n_segments: usize = seg_str
        .parse()
        .map_err(|_| parse_err(n, format!("invalid segment count `{seg_str}`")))?;
    let (_, species_str) = expect("species")?;
    let labels: Vec<String> = species_str.split_whitespace().map(String::from).collect();
    if labels.is_empty() {
        return Err(parse_err(n, "species line names no channels"));
    }

    let mut events = Vec::with_capacity(n_segments);
    let mut twirls = Vec::new();
    for (n, line) in lines {
        if let Some(rest) = line.strip_prefix("twirls") {
            if events.len() != n_segments {
                return Err(parse_err(
                    n,
                    format!("twirls line after {} of {} segments", events.len(), n_segments),
                ));
            }
            twirls = rest
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| parse_err(n, format!("invalid twirl boundary `{t}`")))
                })
                .collect::<Result<Vec<usize>>>()?;
            continue;
        }
        if events.len() == n_segments {
            return Err(parse_err(n, "more segment rows than declared"));
        }
        let row = line
            .split_whitespace()
            .map(|tok| parse_event(n, tok))
            .collect::<Result<Vec<Event>>>()?;
        if row.len() != labels.len() {
            return Err(parse_err(
                n,
                format!("{} tokens for {} species", row.len(), labels.len()),
            ));
        }
        events.push(row);
    }
    if events.len() != n_segments {
        return Err(parse_err(
            0,
            format!("declared {} segments, found {}", n_segments, events.len()),
        ));
    }
    BBSequence::new(dt, labels, events, twirls)
        .map_err(|e| parse_err(0, format!("invalid sequence: {e}")))
}

fn parse_event(line: usize, tok: &str) -> Result<Event> {
    if tok == "D" {
        return Ok(Event::Delay);
    }
    let deg = tok
        .strip_prefix("P:")
        .ok_or_else(|| parse_err(line, format!("expected `D` or `P:<degrees>`, found `{tok}`")))?;
    let deg: f64 = deg
        .parse()
        .map_err(|_| parse_err(line, format!("invalid phase `{deg}`")))?;
    if !deg.is_finite() {
        return Err(parse_err(line, format!("non-finite phase `{deg}`")));
    }
    Ok(Event::Pulse(Phase::from_degrees(deg)))
}

pub fn read_sequence(path: &Path) -> Result<BBSequence> {
    parse_sequence(&fs::read_to_string(path)?)
}

pub fn write_sequence(path: &Path, seq: &BBSequence) -> Result<()> {
    write_atomic(path, &emit_sequence(seq))
}

// ---------------------------------------------------------------------------
// plain-text complex matrices (row-major, `re,im` pairs)

/// Emit a complex matrix:
/// ```text
/// 2 2
/// 1,0 0,-1
/// 0,1 1,0
/// ```
pub fn emit_matrix(m: &CMatrix) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{},{}", m[(i, j)].re, m[(i, j)].im))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<CMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (n, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty matrix file"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(parse_err(n, "header must be `rows cols`"));
    }
    let rows: usize = dims[0]
        .parse()
        .map_err(|_| parse_err(n, format!("invalid row count `{}`", dims[0])))?;
    let cols: usize = dims[1]
        .parse()
        .map_err(|_| parse_err(n, format!("invalid column count `{}`", dims[1])))?;

    let mut m = CMatrix::zeros(rows, cols);
    let mut next_row = 0usize;
    for (n, line) in lines {
        if next_row == rows {
            return Err(parse_err(n, "more rows than declared"));
        }
        let entries: Vec<&str> = line.split_whitespace().collect();
        if entries.len() != cols {
            return Err(parse_err(
                n,
                format!("{} entries for {} columns", entries.len(), cols),
            ));
        }
        for (j, e) in entries.iter().enumerate() {
            let (re, im) = e
                .split_once(',')
                .ok_or_else(|| parse_err(n, format!("expected `re,im`, found `{e}`")))?;
            let re: f64 = re
                .parse()
                .map_err(|_| parse_err(n, format!("invalid real part `{re}`")))?;
            let im: f64 = im
                .parse()
                .map_err(|_| parse_err(n, format!("invalid imaginary part `{im}`")))?;
            m[(next_row, j)] = c64(re, im);
        }
        next_row += 1;
    }
    if next_row != rows {
        return Err(parse_err(
            0,
            format!("declared {rows} rows, found {next_row}"),
        ));
    }
    Ok(m)
}

pub fn read_matrix(path: &Path) -> Result<CMatrix> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn write_matrix(path: &Path, m: &CMatrix) -> Result<()> {
    write_atomic(path, &emit_matrix(m))
}
