//! The JSON family document.
//!
//! ```text
//! {
//!   "dim": 2,
//!   "dynamics": {"kind": "trivial"}
//!             | {"kind": "hamiltonian", "payload": <matrix>}
//!             | {"kind": "unitary_table", "payload": {"breakpoints": [..], "unitaries": [<matrix>, ..]}},
//!   "initial_state": "maximally_mixed" | <matrix>,
//!   "nodes": [{"id": 0, "time": t}, {"id": 1, "parent": 0, "projector": <matrix>, "time": t}, ..]
//! }
//! ```
//!
//! Matrices are row-major nested arrays of `[re, im]` pairs. Instead of
//! `nodes` a document may carry `histories`, a list of histories each given as
//! a list of `{"projector": <matrix>, "time": t}` steps; such a history set
//! need not form a branching family.
//!
//! Canonical output sorts keys, keeps nodes in insertion order and writes
//! every float with 17 significant digits, so it round-trips bit for bit.

use std::fmt::{self, Write as _};

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::Deserialize;
use thiserror::Error;

use crate::dynamics::{DynamicsError, Evolution};
use crate::linalg::{ComplexMatrix, DensityMatrix, Projector, Unitary, C64, DEFAULT_TOL};
use crate::structure::{BranchingFamily, HistorySequence, InitialState, Moment, NodeId, StructureError, Violation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error at line {line}, column {column}: {message}")]
    Schema {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{location}: {message}")]
    Semantic { location: String, message: String },
    #[error("invalid family:\n{}", format_violations(.0))]
    Validation(Vec<PositionedViolation>),
    #[error("not a branching family: {0}")]
    NotABranchingFamily(StructureError),
}

/// A family violation with the document location of the nodes involved.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionedViolation {
    pub violation: Violation,
    pub location: String,
}

fn format_violations(vs: &[PositionedViolation]) -> String {
    let mut out = String::new();
    for v in vs {
        let _ = writeln!(out, "  - {}: {}", v.location, v.violation);
    }
    out
}

impl From<serde_json::Error> for FormatError {
    fn from(e: serde_json::Error) -> Self {
        use serde_json::error::Category;
        let (line, column) = (e.line(), e.column());
        let message = e.to_string();
        // serde_json appends " at line L column C"; keep only the message.
        let message = match message.rfind(" at line ") {
            Some(i) => message[..i].to_string(),
            None => message,
        };
        match e.classify() {
            Category::Data => FormatError::Schema { line, column, message },
            _ => FormatError::Syntax { line, column, message },
        }
    }
}

/// Largest system dimension a document may declare.
pub const MAX_DIM: usize = 1024;

type RawMatrix = Vec<Vec<[f64; 2]>>;

#[derive(Debug)]
enum RawInitial {
    MaximallyMixed,
    Explicit(RawMatrix),
}

impl<'de> Deserialize<'de> for RawInitial {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct InitialVisitor;

        impl<'de> Visitor<'de> for InitialVisitor {
            type Value = RawInitial;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"maximally_mixed\" or a matrix of [re, im] pairs")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<RawInitial, E> {
                if v == "maximally_mixed" {
                    Ok(RawInitial::MaximallyMixed)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }

            fn visit_seq<A: SeqAccess<'de>>(self, seq: A) -> Result<RawInitial, A::Error> {
                let m = RawMatrix::deserialize(de::value::SeqAccessDeserializer::new(seq))?;
                Ok(RawInitial::Explicit(m))
            }
        }

        deserializer.deserialize_any(InitialVisitor)
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", content = "payload", deny_unknown_fields)]
enum RawDynamics {
    #[serde(rename = "trivial")]
    Trivial,
    #[serde(rename = "hamiltonian")]
    Hamiltonian(RawMatrix),
    #[serde(rename = "unitary_table")]
    UnitaryTable(RawTable),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    breakpoints: Vec<f64>,
    unitaries: Vec<RawMatrix>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: u64,
    #[serde(default)]
    parent: Option<u64>,
    time: f64,
    #[serde(default)]
    projector: Option<RawMatrix>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    projector: RawMatrix,
    time: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    dim: usize,
    dynamics: RawDynamics,
    initial_state: RawInitial,
    #[serde(default)]
    nodes: Option<Vec<RawNode>>,
    #[serde(default)]
    histories: Option<Vec<Vec<RawStep>>>,
}

/// A set of histories sharing a system, initial state and dynamics, not
/// necessarily forming a branching family.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySet {
    pub dim: usize,
    pub initial: InitialState,
    pub rho: DensityMatrix,
    pub evolution: Evolution,
    pub histories: Vec<HistorySequence>,
}

impl HistorySet {
    pub fn new(
        dim: usize,
        initial: InitialState,
        evolution: Evolution,
        histories: Vec<HistorySequence>,
    ) -> Result<Self, StructureError> {
        let rho = initial.resolve(dim).map_err(StructureError::InitialState)?;
        Ok(Self {
            dim,
            initial,
            rho,
            evolution,
            histories,
        })
    }

    /// The branching family these histories form, if they form one.
    pub fn to_branching_family(&self, tol: f64) -> Result<BranchingFamily, StructureError> {
        BranchingFamily::from_histories(
            self.dim,
            &self.histories,
            self.initial.clone(),
            self.evolution.clone(),
            tol,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Document {
    Family(BranchingFamily),
    Histories(HistorySet),
}

fn semantic(location: impl Into<String>, message: impl fmt::Display) -> FormatError {
    FormatError::Semantic {
        location: location.into(),
        message: message.to_string(),
    }
}

fn to_matrix(raw: &RawMatrix, location: &str) -> Result<ComplexMatrix, FormatError> {
    let rows: Vec<Vec<C64>> = raw
        .iter()
        .map(|r| r.iter().map(|&[re, im]| C64::new(re, im)).collect())
        .collect();
    ComplexMatrix::from_rows(&rows).map_err(|e| semantic(location, e))
}

fn to_square(raw: &RawMatrix, dim: usize, location: &str) -> Result<ComplexMatrix, FormatError> {
    let m = to_matrix(raw, location)?;
    if m.nrows() != dim || m.ncols() != dim {
        return Err(semantic(
            location,
            format!("expected a {dim}x{dim} matrix, found {}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(m)
}

fn to_evolution(raw: &RawDynamics, dim: usize) -> Result<Evolution, FormatError> {
    let evo = match raw {
        RawDynamics::Trivial => Ok(Evolution::trivial(dim)),
        RawDynamics::Hamiltonian(h) => Evolution::hamiltonian(to_square(h, dim, "dynamics.payload")?),
        RawDynamics::UnitaryTable(t) => {
            let unitaries = t
                .unitaries
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    let location = format!("dynamics.payload.unitaries[{i}]");
                    Unitary::new(to_square(u, dim, &location)?, DEFAULT_TOL).map_err(|e| semantic(location, e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Evolution::unitary_table(t.breakpoints.clone(), unitaries)
        }
    };
    evo.map_err(|e: DynamicsError| semantic("dynamics", e))
}

fn to_initial(raw: &RawInitial, dim: usize) -> Result<InitialState, FormatError> {
    let initial = match raw {
        RawInitial::MaximallyMixed => InitialState::MaximallyMixed,
        RawInitial::Explicit(m) => InitialState::Explicit(to_square(m, dim, "initial_state")?),
    };
    initial.resolve(dim).map_err(|e| semantic("initial_state", e))?;
    Ok(initial)
}

/// Parses either kind of document from UTF-8 JSON.
pub fn parse_document(text: impl AsRef<[u8]>) -> Result<Document, FormatError> {
    let raw: RawDocument = serde_json::from_slice(text.as_ref())?;
    if raw.dim == 0 || raw.dim > MAX_DIM {
        return Err(semantic("dim", format!("dimension must be between 1 and {MAX_DIM}")));
    }
    let dim = raw.dim;
    let evolution = to_evolution(&raw.dynamics, dim)?;
    let initial = to_initial(&raw.initial_state, dim)?;
    match (raw.nodes, raw.histories) {
        (Some(nodes), None) => build_family(dim, initial, evolution, &nodes).map(Document::Family),
        (None, Some(histories)) => {
            let histories = histories
                .iter()
                .enumerate()
                .map(|(h, steps)| {
                    let steps = steps
                        .iter()
                        .enumerate()
                        .map(|(i, s)| {
                            let location = format!("histories[{h}][{i}].projector");
                            let m = to_square(&s.projector, dim, &location)?;
                            let p = Projector::new(m, DEFAULT_TOL).map_err(|e| semantic(location, e))?;
                            Ok((s.time, p))
                        })
                        .collect::<Result<Vec<_>, FormatError>>()?;
                    HistorySequence::from_pairs(steps).map_err(|e| semantic(format!("histories[{h}]"), e))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let set = HistorySet::new(dim, initial, evolution, histories).map_err(|e| semantic("initial_state", e))?;
            Ok(Document::Histories(set))
        }
        _ => Err(semantic(
            "document",
            "exactly one of \"nodes\" and \"histories\" is required",
        )),
    }
}

fn build_family(
    dim: usize,
    initial: InitialState,
    evolution: Evolution,
    nodes: &[RawNode],
) -> Result<BranchingFamily, FormatError> {
    let mut moments = Vec::with_capacity(nodes.len());
    for (i, n) in nodes.iter().enumerate() {
        let projector = match &n.projector {
            None => None,
            Some(raw) => {
                let location = format!("nodes[{i}].projector");
                // Projector properties are checked by validation, which names
                // the offending node.
                Some(Projector::new_unchecked(to_square(raw, dim, &location)?))
            }
        };
        moments.push(Moment {
            id: NodeId(n.id),
            parent: n.parent.map(NodeId),
            time: n.time,
            projector,
        });
    }
    let family = BranchingFamily::assemble(dim, initial, evolution, moments).map_err(|e| semantic("document", e))?;
    let report = family.validate(DEFAULT_TOL);
    if !report.is_valid() {
        let position = |id: NodeId| {
            nodes
                .iter()
                .position(|n| n.id == id.0)
                .map(|i| format!("nodes[{i}]"))
                .unwrap_or_else(|| id.to_string())
        };
        let positioned = report
            .violations
            .into_iter()
            .map(|violation| {
                let location = match violation.nodes().as_slice() {
                    [] => "document".to_string(),
                    ids => ids.iter().map(|&id| position(id)).collect::<Vec<_>>().join(", "),
                };
                PositionedViolation { violation, location }
            })
            .collect();
        return Err(FormatError::Validation(positioned));
    }
    Ok(family.into_verified())
}

/// Parses a family document. A history-set document is accepted when its
/// histories form a branching family.
pub fn parse_family(text: impl AsRef<[u8]>) -> Result<BranchingFamily, FormatError> {
    match parse_document(text)? {
        Document::Family(f) => Ok(f),
        Document::Histories(set) => set
            .to_branching_family(DEFAULT_TOL)
            .map_err(FormatError::NotABranchingFamily),
    }
}

/// 17 significant digits in exponent form, e.g. `2.5000000000000000e-1`.
fn number(x: f64) -> String {
    format!("{x:.16e}")
}

fn matrix(m: &ComplexMatrix) -> String {
    let rows: Vec<String> = m
        .to_rows()
        .iter()
        .map(|r| {
            let entries: Vec<String> = r
                .iter()
                .map(|z| format!("[{}, {}]", number(z.re), number(z.im)))
                .collect();
            format!("[{}]", entries.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn header(out: &mut String, dim: usize, evolution: &Evolution) {
    let _ = writeln!(out, "{{");
    let _ = writeln!(out, "  \"dim\": {dim},");
    let dynamics = match evolution {
        Evolution::Trivial { .. } => "{\"kind\": \"trivial\"}".to_string(),
        Evolution::ConstantHamiltonian(h) => {
            format!(
                "{{\"kind\": \"hamiltonian\", \"payload\": {}}}",
                matrix(h.hamiltonian())
            )
        }
        Evolution::PiecewiseUnitary(p) => {
            let bps: Vec<String> = p.breakpoints().iter().map(|&t| number(t)).collect();
            let us: Vec<String> = p.unitaries().iter().map(|u| matrix(u.matrix())).collect();
            format!(
                "{{\"kind\": \"unitary_table\", \"payload\": {{\"breakpoints\": [{}], \"unitaries\": [{}]}}}}",
                bps.join(", "),
                us.join(", ")
            )
        }
    };
    let _ = writeln!(out, "  \"dynamics\": {dynamics},");
}

fn initial_state(initial: &InitialState) -> String {
    match initial {
        InitialState::MaximallyMixed => "\"maximally_mixed\"".to_string(),
        InitialState::Explicit(m) => matrix(m),
    }
}

/// Canonical family document.
pub fn serialize_family(family: &BranchingFamily) -> String {
    let mut out = String::new();
    header(&mut out, family.dim(), family.evolution());
    let _ = writeln!(out, "  \"initial_state\": {},", initial_state(family.initial()));
    let _ = writeln!(out, "  \"nodes\": [");
    let moments = family.moments();
    for (i, m) in moments.iter().enumerate() {
        let mut fields = vec![format!("\"id\": {}", m.id.0)];
        if let Some(p) = m.parent {
            fields.push(format!("\"parent\": {}", p.0));
        }
        if let Some(p) = &m.projector {
            fields.push(format!("\"projector\": {}", matrix(p.matrix())));
        }
        fields.push(format!("\"time\": {}", number(m.time)));
        let comma = if i + 1 < moments.len() { "," } else { "" };
        let _ = writeln!(out, "    {{{}}}{comma}", fields.join(", "));
    }
    let _ = writeln!(out, "  ]");
    let _ = writeln!(out, "}}");
    out
}

/// Canonical history-set document.
pub fn serialize_history_set(set: &HistorySet) -> String {
    let mut out = String::new();
    header(&mut out, set.dim, &set.evolution);
    let _ = writeln!(out, "  \"histories\": [");
    for (h, seq) in set.histories.iter().enumerate() {
        let steps: Vec<String> = seq
            .steps()
            .iter()
            .map(|s| {
                format!(
                    "{{\"projector\": {}, \"time\": {}}}",
                    matrix(s.projector.matrix()),
                    number(s.time)
                )
            })
            .collect();
        let comma = if h + 1 < set.histories.len() { "," } else { "" };
        let _ = writeln!(out, "    [{}]{comma}", steps.join(", "));
    }
    let _ = writeln!(out, "  ],");
    let _ = writeln!(out, "  \"initial_state\": {}", initial_state(&set.initial));
    let _ = writeln!(out, "}}");
    out
}

pub fn serialize_document(doc: &Document) -> String {
    match doc {
        Document::Family(f) => serialize_family(f),
        Document::Histories(s) => serialize_history_set(s),
    }
}
