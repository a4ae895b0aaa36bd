//! Text formats for channels, Q-graphs, test distributions, encoders and MDP
//! dumps.
//!
//! Channel files and MDP dumps are JSON. Q-graphs, test distributions and
//! encoders are whitespace-separated tables; blank lines and `#` comments are
//! skipped. Q-graph successor indices in files are 1-based.

use std::fs;
use std::path::Path;

use fscap_core::channel::{builtin, BuiltinName, BuiltinSpec, ChannelKernel};
use fscap_core::lowerbound::GraphEncoder;
use fscap_core::mdp::FiniteMdp;
use fscap_core::qgraph::QGraph;
use fscap_core::testdist::GraphTestDist;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] fscap_core::Error),
}

pub type Result<T> = std::result::Result<T, FormatError>;

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| FormatError::Io { path: path.display().to_string(), source })
}

/// On-disk channel description: either a full kernel or a built-in name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    #[serde(rename = "nX", default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(rename = "nY", default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    #[serde(rename = "nS", default, skip_serializing_if = "Option::is_none")]
    pub ns: Option<usize>,
    /// `[s][x][y][s+]`, row-major.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl ChannelFile {
    pub fn from_kernel(ch: &ChannelKernel) -> Self {
        Self {
            nx: Some(ch.nx()),
            ny: Some(ch.ny()),
            ns: Some(ch.ns()),
            kernel: Some(ch.as_slice().to_vec()),
            builtin: None,
            epsilon: None,
        }
    }

    pub fn to_kernel(&self) -> Result<ChannelKernel> {
        match (&self.builtin, &self.kernel) {
            (Some(_), Some(_)) => Err(FormatError::Invalid("give either `builtin` or `kernel`, not both".into())),
            (Some(name), None) => builtin_channel(name, self.epsilon),
            (None, Some(kernel)) => {
                if self.epsilon.is_some() {
                    return Err(FormatError::Invalid("`epsilon` only applies to built-in channels".into()));
                }
                let need = |v: Option<usize>, f: &str| v.ok_or_else(|| FormatError::Invalid(format!("missing `{f}`")));
                let (nx, ny, ns) = (need(self.nx, "nX")?, need(self.ny, "nY")?, need(self.ns, "nS")?);
                Ok(ChannelKernel::new(kernel.clone(), nx, ny, ns)?)
            }
            (None, None) => Err(FormatError::Invalid("channel needs `kernel` or `builtin`".into())),
        }
    }
}

/// A built-in channel; `ising` and `post` take no parameter.
pub fn builtin_channel(name: &str, epsilon: Option<f64>) -> Result<ChannelKernel> {
    let name: BuiltinName = name.parse()?;
    let eps = match (name, epsilon) {
        (BuiltinName::Ising | BuiltinName::Post, None) => 0.0,
        (BuiltinName::Ising | BuiltinName::Post, Some(_)) => {
            return Err(FormatError::Invalid(format!("`{name}` takes no epsilon")));
        }
        (_, Some(e)) => e,
        (_, None) => return Err(FormatError::Invalid(format!("`{name}` needs an epsilon"))),
    };
    Ok(builtin(BuiltinSpec::new(name, eps))?)
}

pub fn parse_channel(text: &str) -> Result<ChannelKernel> {
    serde_json::from_str::<ChannelFile>(text)?.to_kernel()
}

pub fn write_channel(ch: &ChannelKernel) -> String {
    serde_json::to_string_pretty(&ChannelFile::from_kernel(ch)).expect("channel serializes")
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("");
        let fields: Vec<&str> = line.split_whitespace().collect();
        (!fields.is_empty()).then_some((i + 1, fields))
    })
}

fn parse_field<T: std::str::FromStr>(line: usize, field: &str) -> Result<T> {
    field.parse().map_err(|_| FormatError::Parse { line, msg: format!("cannot parse `{field}`") })
}

fn parse_rows(text: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows * cols);
    let mut count = 0;
    for (line, fields) in content_lines(text) {
        if count == rows {
            return Err(FormatError::Parse { line, msg: format!("expected {rows} rows") });
        }
        if fields.len() != cols {
            return Err(FormatError::Parse { line, msg: format!("expected {cols} values, found {}", fields.len()) });
        }
        for f in fields {
            out.push(parse_field::<f64>(line, f)?);
        }
        count += 1;
    }
    if count != rows {
        return Err(FormatError::Invalid(format!("expected {rows} rows, found {count}")));
    }
    Ok(out)
}

/// `nQ nY` on the first line, then one row of `nY` successors per node.
pub fn parse_qgraph(text: &str) -> Result<QGraph> {
    let mut lines = content_lines(text);
    let (line, header) = lines.next().ok_or_else(|| FormatError::Invalid("empty Q-graph file".into()))?;
    if header.len() != 2 {
        return Err(FormatError::Parse { line, msg: "header must be `nQ nY`".into() });
    }
    let nq: usize = parse_field(line, header[0])?;
    let ny: usize = parse_field(line, header[1])?;
    let mut phi = Vec::with_capacity(nq * ny);
    let mut rows = 0;
    for (line, fields) in lines {
        if rows == nq {
            return Err(FormatError::Parse { line, msg: format!("expected {nq} rows") });
        }
        if fields.len() != ny {
            return Err(FormatError::Parse { line, msg: format!("expected {ny} successors, found {}", fields.len()) });
        }
        for f in fields {
            let q: usize = parse_field(line, f)?;
            if q == 0 || q > nq {
                return Err(FormatError::Parse { line, msg: format!("successor {q} outside 1..={nq}") });
            }
            phi.push(q - 1);
        }
        rows += 1;
    }
    if rows != nq {
        return Err(FormatError::Invalid(format!("expected {nq} rows, found {rows}")));
    }
    Ok(QGraph::new(nq, ny, phi)?)
}

pub fn write_qgraph(g: &QGraph) -> String {
    let mut out = format!("{} {}\n", g.nq(), g.ny());
    for row in g.table().chunks(g.ny()) {
        let cells: Vec<String> = row.iter().map(|q| (q + 1).to_string()).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

/// `nQ` rows of `nY` probabilities.
pub fn parse_testdist(text: &str, graph: &QGraph) -> Result<GraphTestDist> {
    let t = parse_rows(text, graph.nq(), graph.ny())?;
    Ok(GraphTestDist::new(graph.clone(), t)?)
}

fn write_table(values: &[f64], cols: usize) -> String {
    let mut out = String::new();
    for row in values.chunks(cols) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_testdist(t: &GraphTestDist) -> String {
    write_table(t.table(), t.graph().ny())
}

/// One row of `nX` probabilities per `(s, q)`, `s` major.
pub fn parse_encoder(text: &str, graph: &QGraph, ns: usize, nx: usize) -> Result<GraphEncoder> {
    let p = parse_rows(text, ns * graph.nq(), nx)?;
    Ok(GraphEncoder::new(graph.clone(), ns, nx, p)?)
}

pub fn write_encoder(enc: &GraphEncoder) -> String {
    write_table(enc.table(), enc.nx())
}

/// Serialized [`FiniteMdp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDump {
    pub nz: usize,
    pub nu: usize,
    pub nw: usize,
    /// `[z][u][w]`.
    pub pw: Vec<f64>,
    /// `[z][u][w]`.
    pub next: Vec<usize>,
    /// `[z][u]`.
    pub g: Vec<f64>,
}

impl MdpDump {
    pub fn from_mdp(m: &FiniteMdp) -> Self {
        Self {
            nz: m.nz(),
            nu: m.nu(),
            nw: m.nw(),
            pw: m.pw().to_vec(),
            next: m.next_table().to_vec(),
            g: m.rewards().to_vec(),
        }
    }

    pub fn to_mdp(&self) -> Result<FiniteMdp> {
        Ok(FiniteMdp::new(self.nz, self.nu, self.nw, self.pw.clone(), self.next.clone(), self.g.clone())?)
    }
}

pub fn parse_mdp(text: &str) -> Result<FiniteMdp> {
    serde_json::from_str::<MdpDump>(text)?.to_mdp()
}

pub fn write_mdp(m: &FiniteMdp) -> String {
    serde_json::to_string(&MdpDump::from_mdp(m)).expect("mdp serializes")
}

/// Numbers separated by commas and/or whitespace.
pub fn parse_numbers(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| FormatError::Invalid(format!("cannot parse `{s}`"))))
        .collect()
}
