//! File formats: JSON graphs and headerless numeric CSV.

use std::fs;
use std::path::Path;

use gtot_core::GraphTopology;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// On-disk graph description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_loops: Option<bool>,
}

impl GraphFile {
    pub fn into_topology(self) -> Result<GraphTopology, CliError> {
        let g = GraphTopology {
            n: self.n,
            edges: self.edges.into_iter().map(|[u, v]| (u, v)).collect(),
            edge_weights: self.weights,
            self_loops_added: self.self_loops.unwrap_or(false),
        };
        g.validate().map_err(|e| CliError::Input(format!("graph file: {e}")))?;
        Ok(g)
    }
}

pub fn read_graph(path: &Path) -> Result<GraphTopology, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let file: GraphFile =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    file.into_topology().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Reads a rectangular matrix of finite decimals. `header` skips the first
/// line. Diagnostics use 1-based file line and column numbers.
pub fn read_matrix(path: &Path, header: bool) -> Result<Array2<f64>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_matrix(&bytes, header).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn parse_matrix(bytes: &[u8], header: bool) -> Result<Array2<f64>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(format!("row at line {line} has {} columns, expected {w}", record.len()));
            }
            _ => {}
        }
        for (col, cell) in record.iter().enumerate() {
            let x: f64 = cell
                .parse()
                .map_err(|_| format!("line {line}, column {}: cannot parse {cell:?} as a number", col + 1))?;
            if !x.is_finite() {
                return Err(format!("line {line}, column {}: value {cell:?} is not finite", col + 1));
            }
            values.push(x);
        }
        rows += 1;
    }
    let cols = width.ok_or_else(|| "no data rows".to_string())?;
    Ok(Array2::from_shape_vec((rows, cols), values).expect("rectangular by construction"))
}

/// Comma-separated weights such as `0.5,0.5`.
pub fn parse_weights(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Input(format!("cannot parse marginal entry {:?}", s.trim())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn parses_plain_and_headed_csv() {
        assert_eq!(parse_matrix(b"1,2\n3,4\n", false).unwrap(), array![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(parse_matrix(b"a,b\n1, 2\n", true).unwrap(), array![[1.0, 2.0]]);
        assert_eq!(parse_matrix(b"1e-3,-2.5\n", false).unwrap(), array![[1e-3, -2.5]]);
    }

    #[test]
    fn reports_bad_cells_by_position() {
        let err = parse_matrix(b"1,2\n3,abc\n", false).unwrap_err();
        assert!(err.contains("line 2") && err.contains("column 2") && err.contains("abc"), "{err}");
        let err = parse_matrix(b"1,2\n3\n", false).unwrap_err();
        assert!(err.contains("line 2"), "{err}");
        assert!(parse_matrix(b"1,inf\n", false).is_err());
        assert!(parse_matrix(b"", false).is_err());
    }

    #[test]
    fn graph_file_validation() {
        let ok: GraphFile = serde_json::from_str(r#"{"n": 3, "edges": [[0, 1], [1, 2]]}"#).unwrap();
        assert_eq!(ok.into_topology().unwrap(), GraphTopology::path(3));
        let bad: GraphFile = serde_json::from_str(r#"{"n": 2, "edges": [[0, 2]]}"#).unwrap();
        assert!(bad.into_topology().is_err());
        let w: GraphFile = serde_json::from_str(r#"{"n": 2, "edges": [[0, 1]], "weights": [1, 2]}"#).unwrap();
        assert!(w.into_topology().is_err());
    }
}
