//! Text snapshot tables and census CSV rows.
//!
//! Ion snapshots: a header line `# zigzag ion-snapshot v1 n=<N>` followed by
//! one whitespace-separated row per snapshot with `4N + 1` columns
//! `t x_1..x_N y_1..y_N vx_1..vx_N vy_1..vy_N`.
//!
//! Field snapshots: header `# zigzag field-snapshot v1 m=<M> dx=<dx>` and rows
//! `t psi_1..psi_M`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::defects::DefectCensus;
use crate::field::{Boundary, FieldState};
use crate::model::IonState;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad snapshot header: {0}")]
    Header(String),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

fn header_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
}

fn parse_header(line: &str, kind: &str) -> Result<(), IoError> {
    let mut toks = line.split_whitespace();
    let ok = toks.next() == Some("#")
        && toks.next() == Some("zigzag")
        && toks.next() == Some(kind)
        && toks.next() == Some(&format!("v{SNAPSHOT_VERSION}")[..]);
    if ok {
        Ok(())
    } else {
        Err(IoError::Header(line.to_string()))
    }
}

fn write_row<W: Write>(w: &mut W, t: f64, cols: &[&[f64]]) -> std::io::Result<()> {
    write!(w, "{t:e}")?;
    for col in cols {
        for v in *col {
            write!(w, " {v:e}")?;
        }
    }
    writeln!(w)
}

fn parse_row(line: &str, lineno: usize, expected: usize) -> Result<Vec<f64>, IoError> {
    let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
    let vals = vals.map_err(|e| IoError::Row {
        line: lineno,
        message: format!("{e}"),
    })?;
    if vals.len() != expected {
        return Err(IoError::Row {
            line: lineno,
            message: format!("expected {expected} columns, found {}", vals.len()),
        });
    }
    Ok(vals)
}

pub fn write_ion_snapshots<W: Write>(mut w: W, states: &[IonState]) -> Result<(), IoError> {
    let n = states.first().map_or(0, |s| s.len());
    writeln!(w, "# zigzag ion-snapshot v{SNAPSHOT_VERSION} n={n}")?;
    for s in states {
        if s.len() != n {
            return Err(IoError::Header(format!("snapshot of {} ions in a table of {n}", s.len())));
        }
        write_row(&mut w, s.t, &[&s.x, &s.y, &s.vx, &s.vy])?;
    }
    Ok(())
}

pub fn read_ion_snapshots<R: BufRead>(r: R) -> Result<Vec<IonState>, IoError> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| IoError::Header("empty input".into()))??;
    parse_header(&header, "ion-snapshot")?;
    let n: usize = header_value(&header, "n")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| IoError::Header(header.clone()))?;
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let v = parse_row(&line, k + 2, 4 * n + 1)?;
        out.push(IonState {
            t: v[0],
            x: v[1..=n].to_vec(),
            y: v[n + 1..=2 * n].to_vec(),
            vx: v[2 * n + 1..=3 * n].to_vec(),
            vy: v[3 * n + 1..].to_vec(),
        });
    }
    Ok(out)
}

pub fn write_field_snapshots<W: Write>(mut w: W, states: &[FieldState], dx: f64) -> Result<(), IoError> {
    let m = states.first().map_or(0, |s| s.len());
    let boundary = states.first().map_or(Boundary::Periodic, |s| s.boundary);
    let b = match boundary {
        Boundary::Periodic => "periodic",
        Boundary::Clamped => "clamped",
    };
    writeln!(w, "# zigzag field-snapshot v{SNAPSHOT_VERSION} m={m} dx={dx:e} boundary={b}")?;
    for s in states {
        if s.len() != m {
            return Err(IoError::Header(format!("snapshot of {} nodes in a table of {m}", s.len())));
        }
        write_row(&mut w, s.t, &[&s.psi])?;
    }
    Ok(())
}

/// Field rows and the grid spacing. Velocities are not stored and read back
/// as zero.
pub fn read_field_snapshots<R: BufRead>(r: R) -> Result<(Vec<FieldState>, f64), IoError> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| IoError::Header("empty input".into()))??;
    parse_header(&header, "field-snapshot")?;
    let bad = || IoError::Header(header.clone());
    let m: usize = header_value(&header, "m").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    let dx: f64 = header_value(&header, "dx").and_then(|v| v.parse().ok()).ok_or_else(bad)?;
    let boundary = match header_value(&header, "boundary") {
        Some("clamped") => Boundary::Clamped,
        Some("periodic") | None => Boundary::Periodic,
        Some(_) => return Err(bad()),
    };
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let v = parse_row(&line, k + 2, m + 1)?;
        out.push(FieldState {
            t: v[0],
            psi: v[1..].to_vec(),
            dpsi: vec![0.0; m],
            boundary,
        });
    }
    Ok((out, dx))
}

/// One row of the per-realization census table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub realization_id: String,
    #[serde(rename = "tau_Q")]
    pub tau_q: f64,
    pub eta: f64,
    pub n_defects: usize,
    pub density: f64,
    /// Charges left to right as `+`/`-`.
    pub charges: String,
}

impl CensusRow {
    pub fn new(realization_id: String, tau_q: f64, eta: f64, census: &DefectCensus) -> CensusRow {
        CensusRow {
            realization_id,
            tau_q,
            eta,
            n_defects: census.count(),
            density: census.density,
            charges: census.charge_string(),
        }
    }
}

pub fn write_census<W: Write>(w: W, rows: &[CensusRow]) -> Result<(), IoError> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defects::{Defect, Window};

    #[test]
    fn ion_snapshot_round_trip() {
        let a = IonState {
            t: -1.5,
            x: vec![-1.0, 0.25, 1.0 / 3.0],
            y: vec![1e-9, -2e-3, 0.0],
            vx: vec![0.1, 0.2, 0.3],
            vy: vec![-0.1, 1e300, 5e-324],
        };
        let mut b = a.clone();
        b.t = 0.5;
        let mut buf = Vec::new();
        write_ion_snapshots(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# zigzag ion-snapshot v1 n=3\n"));
        assert_eq!(text.lines().nth(1).unwrap().split_whitespace().count(), 13);
        let back = read_ion_snapshots(&buf[..]).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn field_snapshot_round_trip() {
        let s = FieldState {
            t: 2.0,
            psi: vec![0.1, -0.2, 0.3, 0.0],
            dpsi: vec![0.0; 4],
            boundary: Boundary::Clamped,
        };
        let mut buf = Vec::new();
        write_field_snapshots(&mut buf, std::slice::from_ref(&s), 0.125).unwrap();
        let (back, dx) = read_field_snapshots(&buf[..]).unwrap();
        assert_eq!(dx, 0.125);
        assert_eq!(back, vec![s]);
    }

    #[test]
    fn snapshot_errors() {
        assert!(matches!(
            read_ion_snapshots(&b"# zigzag ion-snapshot v2 n=3\n"[..]),
            Err(IoError::Header(_))
        ));
        assert!(matches!(
            read_ion_snapshots(&b"# zigzag ion-snapshot v1 n=1\n1 2 3\n"[..]),
            Err(IoError::Row { line: 2, .. })
        ));
    }

    #[test]
    fn census_csv_columns() {
        let census = DefectCensus {
            window: Window::new(10, 40),
            defects: vec![Defect { bond: 12, charge: 1 }, Defect { bond: 20, charge: -1 }],
            density: 2.0 / 30.0,
        };
        let row = CensusRow::new("3-17".into(), 12.5, 100.0, &census);
        let mut buf = Vec::new();
        write_census(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "realization_id,tau_Q,eta,n_defects,density,charges");
        assert!(lines.next().unwrap().starts_with("3-17,12.5,100.0,2,0.0666"));
    }
}
