//! Text and JSON formats.
//!
//! Graph files: first line `n m`, then `m` lines `src dst out_port in_port`
//! with 0-based nodes and 1-based ports. Blank lines and `#` comments are
//! ignored.

use std::fmt::Write as _;

use anonq_core::graph::{Edge, GraphError, PortDigraph};
use anonq_core::qsim::SparseQuantumState;
use anonq_core::runtime::Transcript;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("expected {expected} edges, found {found}")]
    EdgeCount { expected: usize, found: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn numbers(line: usize, text: &str, want: usize) -> Result<Vec<usize>, FormatError> {
    let v: Vec<usize> = text
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<Result<_, _>>()
        .map_err(|e| FormatError::Syntax {
            line,
            msg: format!("{e}"),
        })?;
    if v.len() != want {
        return Err(FormatError::Syntax {
            line,
            msg: format!("expected {want} integers, found {}", v.len()),
        });
    }
    Ok(v)
}

pub fn parse_graph(text: &str) -> Result<PortDigraph, FormatError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (line, header) = lines.next().ok_or(FormatError::Syntax {
        line: 1,
        msg: "missing header".into(),
    })?;
    let h = numbers(line, header, 2)?;
    let (n, m) = (h[0], h[1]);
    let mut edges = Vec::with_capacity(m);
    for (line, l) in lines {
        let v = numbers(line, l, 4)?;
        edges.push(Edge {
            src: v[0],
            dst: v[1],
            out_port: v[2],
            in_port: v[3],
        });
    }
    if edges.len() != m {
        return Err(FormatError::EdgeCount {
            expected: m,
            found: edges.len(),
        });
    }
    Ok(PortDigraph::new(n, edges)?)
}

pub fn serialize_graph(g: &PortDigraph) -> String {
    let mut s = format!("{} {}\n", g.n(), g.edges().len());
    for e in g.edges() {
        let _ = writeln!(s, "{} {} {} {}", e.src, e.dst, e.out_port, e.in_port);
    }
    s
}

/// `[[basis, re, im], ...]` in lexicographic basis order; symbols are
/// written `0`, `1`, `e` (empty) and `x`.
pub fn state_dump(s: &SparseQuantumState) -> Value {
    let mut rows: Vec<(String, f64, f64)> = s
        .entries()
        .map(|(basis, a)| (basis.iter().map(|b| symbol_char(b.bits())).collect(), a.re, a.im))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    Value::Array(rows.into_iter().map(|(b, re, im)| json!([b, re, im])).collect())
}

fn symbol_char(bits: u8) -> char {
    match bits {
        0 => '0',
        1 => '1',
        2 => 'e',
        _ => 'x',
    }
}

/// `{rounds, cbits, qubits, outputs, probability}`.
pub fn transcript_json<O: Serialize>(t: &Transcript<O>) -> Value {
    json!({
        "rounds": t.rounds,
        "cbits": t.cbits,
        "qubits": t.qubits,
        "outputs": t.outputs,
        "probability": t.probability,
    })
}

pub fn bits_string(x: &[bool]) -> String {
    x.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn parse_bits(s: &str) -> Option<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use anonq_core::graph::example1a;

    #[test]
    fn round_trip() {
        let g = example1a();
        let text = serialize_graph(&g);
        assert_eq!(parse_graph(&text).unwrap(), g);
    }
}
