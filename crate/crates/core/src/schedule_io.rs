//! Plain-text schedule files.
//!
//! ```text
//! consensus-schedule v1          (or "consensus-schedule v1 signed")
//! N T M
//! i j                            M lines, canonical edge order
//! w_0 ... w_{M-1}                T lines
//! ```
//!
//! Weights use Rust's shortest round-trip formatting, so a parse of a
//! serialized schedule reproduces every bit.

use std::fmt::Write as _;

use crate::dynamics::WeightSchedule;
use crate::error::{ConsensusError, Result};
use crate::graph::Graph;

const MAGIC: &str = "consensus-schedule v1";
const SIGNED_MAGIC: &str = "consensus-schedule v1 signed";

pub fn serialize_schedule(g: &Graph, s: &WeightSchedule) -> Result<String> {
    s.check_graph(g)?;
    let mut out = String::new();
    out.push_str(if s.is_signed() { SIGNED_MAGIC } else { MAGIC });
    out.push('\n');
    let _ = writeln!(out, "{} {} {}", g.n(), s.horizon(), g.edge_count());
    for &(i, j) in g.edges() {
        let _ = writeln!(out, "{i} {j}");
    }
    for row in s.rows() {
        let line: Vec<String> = row.iter().map(|w| format!("{w:?}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok(out)
}

fn malformed(msg: impl Into<String>) -> ConsensusError {
    ConsensusError::MalformedSchedule(msg.into())
}

fn parse_fields<T: std::str::FromStr>(line: &str, expected: usize, what: &str) -> Result<Vec<T>> {
    let fields: Vec<T> = line
        .split_whitespace()
        .map(|f| f.parse::<T>().map_err(|_| malformed(format!("bad {what} field `{f}`"))))
        .collect::<Result<_>>()?;
    if fields.len() != expected {
        return Err(malformed(format!("{what} line has {} fields, expected {expected}", fields.len())));
    }
    Ok(fields)
}

/// Parses a schedule file back into its graph and weights.
pub fn parse_schedule(text: &str) -> Result<(Graph, WeightSchedule)> {
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| malformed(format!("truncated before {what}")));
    let signed = match next("header")?.trim_end() {
        MAGIC => false,
        SIGNED_MAGIC => true,
        other => return Err(malformed(format!("unrecognised header `{other}`"))),
    };
    let dims: Vec<usize> = parse_fields(next("dimensions")?, 3, "dimension")?;
    let (n, horizon, m) = (dims[0], dims[1], dims[2]);
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let pair: Vec<usize> = parse_fields(next("edge list end")?, 2, "edge")?;
        edges.push((pair[0], pair[1]));
    }
    let g = Graph::from_edge_list(n, &edges)?;
    if g.edges() != edges.as_slice() {
        return Err(malformed("edges not in canonical order"));
    }
    let mut rows = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        rows.push(parse_fields::<f64>(next("weight rows end")?, m, "weight")?);
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(malformed("trailing content after weight rows"));
    }
    let schedule = if signed { WeightSchedule::signed(rows)? } else { WeightSchedule::new(rows)? };
    Ok((g, schedule))
}
