//! Named Q-graphs.

use std::path::Path;

use fscap_core::qgraph::{markov_qgraph, nising_q4, QGraph};

use crate::format::{parse_qgraph, read_file, FormatError, Result};

/// Names accepted wherever a Q-graph is expected.
pub const NAMES: &[&str] = &["markov-K (K >= 1)", "appendix-d4", "q4"];

/// Looks up a built-in graph for output alphabet `ny`. `None` if `id` is
/// not a registry name.
pub fn lookup(id: &str, ny: usize) -> Option<Result<QGraph>> {
    if let Some(k) = id.strip_prefix("markov-") {
        let k = match k.parse::<usize>() {
            Ok(k) => k,
            Err(_) => return Some(Err(FormatError::Invalid(format!("bad Markov order in `{id}`")))),
        };
        return Some(markov_qgraph(k, ny).map_err(FormatError::from));
    }
    match id {
        "appendix-d4" | "q4" => Some(if ny == 2 {
            Ok(nising_q4())
        } else {
            Err(FormatError::Invalid(format!("`{id}` is a binary-output graph, channel has {ny} outputs")))
        }),
        _ => None,
    }
}

/// A registry name or a path to a Q-graph file.
pub fn resolve(id: &str, ny: usize) -> Result<QGraph> {
    if let Some(g) = lookup(id, ny) {
        return g;
    }
    let g = parse_qgraph(&read_file(Path::new(id))?)?;
    if g.ny() != ny {
        return Err(FormatError::Invalid(format!("Q-graph has {} outputs, channel has {ny}", g.ny())));
    }
    Ok(g)
}
