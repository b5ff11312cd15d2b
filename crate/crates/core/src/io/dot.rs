//! Graphviz rendering of a branching family.

use std::fmt::Write as _;

use crate::chain::{weight_table, ChainError};
use crate::structure::BranchingFamily;

use super::format_weight;

/// A `digraph` with one node per moment labelled by id, time and projector
/// rank, and one edge per parent link. With `annotate` leaves also carry
/// their history weight. Output depends only on the family.
pub fn export_dot(family: &BranchingFamily, annotate: bool) -> Result<String, ChainError> {
    family.ensure_valid()?;
    let weights = if annotate { Some(weight_table(family)?) } else { None };
    let mut out = String::from("digraph family {\n  rankdir=BT;\n  node [shape=box];\n");
    for m in family.moments() {
        let mut label = format!("{}\\nτ={}", m.id, m.time);
        match &m.projector {
            None => label.push_str("\\nroot"),
            Some(p) => {
                let _ = write!(label, "\\nrank {}", p.rank());
            }
        }
        if let Some(table) = &weights {
            if let Some(w) = table.weight_of(m.id) {
                let _ = write!(label, "\\nW={}", format_weight(w));
            }
        }
        let _ = writeln!(out, "  {} [label=\"{label}\"];", m.id);
    }
    for m in family.moments() {
        if let Some(parent) = m.parent {
            let _ = writeln!(out, "  {parent} -> {};", m.id);
        }
    }
    out.push_str("}\n");
    Ok(out)
}
