//! Line-oriented sparse-code files.
//!
//! ```text
//! # shiftdict-code/1
//! # dict_digest=3f2a...
//! # variant=emp
//! # p=0.05
//! # window_start=0
//! # window_len=220500
//! atom_index,offset,coefficient
//! 3,120,0.1234567890123
//! ...
//! ```
//!
//! A file holds one or more windows, each opened by its own `window_start`
//! and `window_len` lines. Coefficients use Rust's shortest round-trip
//! decimal form, so reading back is exact. Residuals go to an optional
//! companion file of raw little-endian float64 values.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

use super::{SparseCode, SparseEvent, Variant};

pub const CODE_FORMAT_VERSION: &str = "shiftdict-code/1";

/// Windowed sparse codes as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeFile {
    pub windows: Vec<(usize, SparseCode)>,
}

pub fn write_code_file(path: impl AsRef<Path>, windows: &[(usize, SparseCode)]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&format!("# {CODE_FORMAT_VERSION}\n"));
    if let Some((_, first)) = windows.first() {
        out.push_str(&format!("# dict_digest={}\n", first.dict_digest));
        out.push_str(&format!("# variant={}\n", first.variant));
        out.push_str(&format!("# p={}\n", first.p));
    }
    for (start, code) in windows {
        out.push_str(&format!("# window_start={start}\n# window_len={}\n", code.window_len));
        out.push_str("atom_index,offset,coefficient\n");
        for e in &code.events {
            out.push_str(&format!("{},{},{}\n", e.atom, e.offset, e.coefficient));
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

fn header_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: bad value for {key}: {value:?}")))
}

/// Parses a code file. Residuals are left empty.
pub fn read_code_file(path: impl AsRef<Path>) -> Result<CodeFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_code_file(&text)
}

pub(crate) fn parse_code_file(text: &str) -> Result<CodeFile> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == format!("# {CODE_FORMAT_VERSION}") => {}
        Some((_, l)) => {
            return Err(Error::Version {
                found: l.trim_start_matches('#').trim().to_string(),
                expected: CODE_FORMAT_VERSION.to_string(),
            })
        }
        None => return Err(Error::Format("empty code file".into())),
    }
    let mut digest = String::new();
    let mut variant = Variant::Mp;
    let mut p = f64::NAN;
    let mut windows: Vec<(usize, SparseCode)> = Vec::new();
    let mut pending_start: Option<usize> = None;

    for (i, raw) in lines {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let (key, value) = rest
                .trim()
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {n}: expected key=value")))?;
            match key {
                "dict_digest" => digest = value.to_string(),
                "variant" => variant = value.parse().map_err(|_| Error::Format(format!("line {n}: bad variant")))?,
                "p" => p = header_value("p", value, n)?,
                "window_start" => pending_start = Some(header_value("window_start", value, n)?),
                "window_len" => {
                    let start = pending_start
                        .take()
                        .ok_or_else(|| Error::Format(format!("line {n}: window_len without window_start")))?;
                    windows.push((
                        start,
                        SparseCode {
                            events: Vec::new(),
                            residual: Vec::new(),
                            window_len: header_value("window_len", value, n)?,
                            dict_digest: digest.clone(),
                            variant,
                            p,
                            ridge_events: Vec::new(),
                        },
                    ));
                }
                _ => {}
            }
            continue;
        }
        if line == "atom_index,offset,coefficient" {
            continue;
        }
        let code = &mut windows
            .last_mut()
            .ok_or_else(|| Error::Format(format!("line {n}: record before any window header")))?
            .1;
        let mut fields = line.split(',');
        let (Some(a), Some(o), Some(c), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Format(format!("line {n}: expected 3 fields")));
        };
        let event = SparseEvent {
            atom: header_value("atom_index", a.trim(), n)?,
            offset: header_value("offset", o.trim(), n)?,
            coefficient: header_value("coefficient", c.trim(), n)?,
        };
        if !event.coefficient.is_finite() {
            return Err(Error::Format(format!("line {n}: non-finite coefficient")));
        }
        code.events.push(event);
    }
    if windows.is_empty() {
        return Err(Error::Format("no window header".into()));
    }
    Ok(CodeFile { windows })
}

pub fn write_residual(path: impl AsRef<Path>, residual: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = residual.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_residual(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!("residual file length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}
