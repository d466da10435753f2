//! Step traces as JSON lines: `{step, cube, direction, outcome, coords_after}`.
//!
//! Record 0 carries the initial configuration with `cube` and `direction`
//! null and outcome `"initial"`.

use crate::geometry::{CellCoord, Direction};
use crate::sim::MoveOutcome;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("malformed trace: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub cube: Option<usize>,
    pub direction: Option<Direction>,
    pub outcome: String,
    pub coords_after: Vec<[i32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<usize>,
}

impl TraceRecord {
    pub fn initial(coords: &[CellCoord]) -> Self {
        Self {
            step: 0,
            cube: None,
            direction: None,
            outcome: "initial".into(),
            coords_after: pack(coords),
            phase: None,
        }
    }

    pub fn step(
        step: usize,
        cube: usize,
        direction: Direction,
        outcome: &MoveOutcome,
        coords: &[CellCoord],
    ) -> Self {
        Self {
            step,
            cube: Some(cube),
            direction: Some(direction),
            outcome: outcome.label().into(),
            coords_after: pack(coords),
            phase: None,
        }
    }

    pub fn coords(&self) -> Vec<CellCoord> {
        self.coords_after
            .iter()
            .map(|&[x, y]| CellCoord::new(x, y))
            .collect()
    }
}

fn pack(coords: &[CellCoord]) -> Vec<[i32; 2]> {
    coords.iter().map(|c| [c.x, c.y]).collect()
}

pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> Result<(), TraceError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| TraceError::Malformed(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parse and sanity-check a trace: non-empty, steps consecutive from 0,
/// constant cube count.
pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|source| TraceError::Parse {
            line: i + 1,
            source,
        })?;
        records.push(rec);
    }
    let first = records
        .first()
        .ok_or_else(|| TraceError::Malformed("trace has no records".into()))?;
    let n = first.coords_after.len();
    for (i, r) in records.iter().enumerate() {
        if r.step != i {
            return Err(TraceError::Malformed(format!(
                "record {i} has step {}",
                r.step
            )));
        }
        if r.coords_after.len() != n {
            return Err(TraceError::Malformed(format!(
                "record {i} has {} cubes, expected {n}",
                r.coords_after.len()
            )));
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Connectivity, Ensemble, MoveCommand};

    #[test]
    fn round_trip_and_validation() {
        let mut e = Ensemble::from_pairs(&[(0, 0), (1, 0), (2, 0)]).unwrap();
        let mut recs = vec![TraceRecord::initial(e.coords())];
        let out = e.apply_move(MoveCommand::new(2, Direction::Cw), Connectivity::Full);
        recs.push(TraceRecord::step(1, 2, Direction::Cw, &out, e.coords()));
        let mut buf = Vec::new();
        write_trace(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .contains("\"direction\":\"cw\""));
        assert_eq!(read_trace(&buf[..]).unwrap(), recs);

        assert!(read_trace(&b""[..]).is_err());
        assert!(read_trace(&b"{not json}\n"[..]).is_err());
        let mut bad = recs.clone();
        bad[1].step = 5;
        let mut buf = Vec::new();
        write_trace(&mut buf, &bad).unwrap();
        assert!(matches!(
            read_trace(&buf[..]),
            Err(TraceError::Malformed(_))
        ));
    }
}
