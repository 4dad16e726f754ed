//! Plain-text shot files.
//!
//! ```text
//! #format=povm-shots/1
//! #povm=pauli6
//! #n_qubits=3
//! #n_shots=2
//! #seed=7
//! #generator=chacha20-stream-per-shot/rand_chacha-0.3.1/rand-0.8.7
//! #state=zero:n=3
//! 024
//! 513
//! ```
//!
//! Character `q` of a body line is the outcome on qubit `q`. Lines end in LF.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::estimation::{ShotDataset, ShotMeta};
use crate::sampler::PAULI6_OUTCOMES;

pub const SHOT_FORMAT: &str = "povm-shots/1";

const KNOWN_KEYS: [&str; 7] = [
    "format",
    "povm",
    "n_qubits",
    "n_shots",
    "seed",
    "generator",
    "state",
];

/// Renders the whole file; identical datasets give identical bytes.
pub fn render_shot_file(data: &ShotDataset) -> String {
    let n = data.n_qubits();
    let mut out = String::with_capacity(256 + data.n_shots() * (n + 1));
    let povm = if data.meta.povm.is_empty() {
        "pauli6"
    } else {
        data.meta.povm.as_str()
    };
    let _ = writeln!(out, "#format={SHOT_FORMAT}");
    let _ = writeln!(out, "#povm={povm}");
    let _ = writeln!(out, "#n_qubits={n}");
    let _ = writeln!(out, "#n_shots={}", data.n_shots());
    if let Some(seed) = data.meta.seed {
        let _ = writeln!(out, "#seed={seed}");
    }
    if let Some(g) = &data.meta.generator {
        let _ = writeln!(out, "#generator={g}");
    }
    if let Some(p) = &data.meta.provenance {
        let _ = writeln!(out, "#state={p}");
    }
    for shot in data.shots() {
        out.extend(shot.iter().map(|&o| char::from(b'0' + o)));
        out.push('\n');
    }
    out
}

pub fn write_shot_file<W: Write>(mut w: W, data: &ShotDataset) -> Result<()> {
    w.write_all(render_shot_file(data).as_bytes())?;
    w.flush()?;
    Ok(())
}

fn header_err(line: usize, msg: impl Into<String>) -> Error {
    Error::ShotFile {
        line,
        msg: msg.into(),
    }
}

/// Parses a shot file. Errors carry the 1-based line number.
pub fn read_shot_file<R: BufRead>(r: R) -> Result<ShotDataset> {
    let mut meta = ShotMeta::default();
    let mut format = None;
    let mut n_qubits: Option<(usize, usize)> = None;
    let mut n_shots: Option<(usize, usize)> = None;
    let mut outcomes = Vec::new();
    let mut body_lines = 0usize;
    let mut last_line = 0usize;

    for (idx, line) in r.split(b'\n').enumerate() {
        let lineno = idx + 1;
        let raw = line?;
        let line = std::str::from_utf8(&raw).map_err(|_| header_err(lineno, "not valid UTF-8"))?;
        last_line = lineno;
        if line.ends_with('\r') {
            return Err(header_err(lineno, "CR line ending; expected LF"));
        }
        if let Some(kv) = line.strip_prefix('#') {
            if body_lines > 0 {
                return Err(header_err(lineno, "header line after shot data"));
            }
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| header_err(lineno, format!("expected #key=value, got '{line}'")))?;
            if !KNOWN_KEYS.contains(&key) {
                return Err(header_err(lineno, format!("unknown header key '{key}'")));
            }
            let num = |v: &str| -> Result<usize> {
                v.parse()
                    .map_err(|_| header_err(lineno, format!("{key}: '{v}' is not a count")))
            };
            match key {
                "format" => {
                    if value != SHOT_FORMAT {
                        return Err(header_err(lineno, format!("unsupported format '{value}'")));
                    }
                    format = Some(value.to_string());
                }
                "povm" => {
                    if value != "pauli6" {
                        return Err(header_err(lineno, format!("unsupported POVM '{value}'")));
                    }
                    meta.povm = value.to_string();
                }
                "n_qubits" => n_qubits = Some((num(value)?, lineno)),
                "n_shots" => n_shots = Some((num(value)?, lineno)),
                "seed" => {
                    meta.seed =
                        Some(value.parse().map_err(|_| {
                            header_err(lineno, format!("seed: '{value}' is not a u64"))
                        })?)
                }
                "generator" => meta.generator = Some(value.to_string()),
                "state" => meta.provenance = Some(value.to_string()),
                _ => unreachable!(),
            }
            continue;
        }
        if line.is_empty() {
            // only a trailing empty segment after the final LF is allowed
            continue;
        }
        let n = match n_qubits {
            Some((n, _)) if format.is_some() && !meta.povm.is_empty() => n,
            _ => {
                return Err(header_err(
                    lineno,
                    "shot data before #format, #povm and #n_qubits",
                ))
            }
        };
        if line.len() != n {
            return Err(header_err(
                lineno,
                format!(
                    "expected {n} outcome digits, found {}",
                    line.chars().count()
                ),
            ));
        }
        for (q, b) in line.bytes().enumerate() {
            match b {
                b'0'..=b'5' => outcomes.push(b - b'0'),
                _ => {
                    let c = line[q..].chars().next().unwrap_or('?');
                    return Err(header_err(
                        lineno,
                        format!("invalid outcome '{c}' for qubit {q}"),
                    ));
                }
            }
        }
        body_lines += 1;
    }

    if format.is_none() {
        return Err(header_err(1, "missing #format header"));
    }
    let (n, _) =
        n_qubits.ok_or_else(|| header_err(last_line.max(1), "missing #n_qubits header"))?;
    let (s, s_line) =
        n_shots.ok_or_else(|| header_err(last_line.max(1), "missing #n_shots header"))?;
    if n == 0 {
        return Err(header_err(1, "n_qubits must be positive"));
    }
    if body_lines != s {
        return Err(header_err(
            s_line,
            format!("header says {s} shots, body has {body_lines}"),
        ));
    }
    ShotDataset::new(n, PAULI6_OUTCOMES, outcomes, meta)
        .map_err(|e| header_err(last_line, e.to_string()))
}

pub fn load_shot_file(path: &std::path::Path) -> Result<ShotDataset> {
    let f = std::fs::File::open(path)?;
    read_shot_file(std::io::BufReader::new(f))
}
