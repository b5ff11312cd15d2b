//! The `histories` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::chain::{
    decoherence_matrix, family_decoherence_matrix, is_consistent, is_weakly_consistent, weight, weight_table,
    DecoherenceMatrix,
};
use crate::coarse::{intra_branch_sum, CoarseError};
use crate::demos::Demo;
use crate::dynamics::Evolution;
use crate::hpo::{embed_all, factorize, is_hpo_family, sum_hpo, HistoryProjector, HpoFamily};
use crate::io::{export_dot, format_weight, parse_document, serialize_document, Document, FormatError};
use crate::linalg::{DensityMatrix, DEFAULT_TOL};
use crate::structure::{BranchingFamily, HistorySequence, NodeId};

pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const INCONSISTENT: i32 = 2;
    pub const TRANS_BRANCH: i32 = 3;
    pub const USAGE: i32 = 64;
    pub const DATA: i32 = 65;
    pub const NO_INPUT: i32 = 66;
}

#[derive(Debug, Parser)]
#[command(name = "histories", version, about = "Branching families of quantum histories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that a document describes a valid branching family.
    Validate { file: PathBuf },
    /// Leaf-ordered history weights and their sum.
    Weights {
        file: PathBuf,
        #[arg(long)]
        csv: bool,
    },
    /// Decoherence matrix and consistency verdict.
    Consistency {
        file: PathBuf,
        /// Only require the real parts of off-diagonal entries to vanish.
        #[arg(long)]
        weak: bool,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Sum two sibling leaves and check weight additivity.
    Coarse {
        file: PathBuf,
        /// Two leaf ids, e.g. `m3,m4` or `3,4`.
        #[arg(long, value_delimiter = ',', required = true)]
        leaves: Vec<String>,
    },
    /// Embed histories as history projectors and test their homogeneity.
    HpoCheck { file: PathBuf },
    /// Graphviz rendering of the family tree.
    ExportDot {
        file: PathBuf,
        /// Label leaves with their weights.
        #[arg(long)]
        weights: bool,
    },
    /// Print a built-in example: fig2, branch-no-prod, isham-hpo, isham-reversed.
    Demo {
        name: String,
        /// Print only the document.
        #[arg(long)]
        document: bool,
    },
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl std::fmt::Display) -> Self {
        Self {
            code,
            message: message.to_string().trim_end().to_string(),
        }
    }
}

type Outcome = Result<i32, Failure>;

/// Runs the command line and returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    exit::OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    exit::USAGE
                }
            };
        }
    };
    let mut buf = String::new();
    let outcome = dispatch(cli.command, &mut buf);
    let _ = out.write_all(buf.as_bytes());
    match outcome {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, out: &mut String) -> Outcome {
    match command {
        Command::Validate { file } => validate(&file, out),
        Command::Weights { file, csv } => {
            let doc = load(&file)?;
            weights(&Analysis::of(&doc)?, csv, out);
            Ok(exit::OK)
        }
        Command::Consistency { file, weak, tol } => {
            if !(tol >= 0.0 && tol.is_finite()) {
                return Err(Failure::new(exit::USAGE, format!("invalid tolerance {tol}")));
            }
            consistency(&Analysis::of(&load(&file)?)?, weak, tol, out)
        }
        Command::Coarse { file, leaves } => coarse(&load(&file)?, &leaves, out),
        Command::HpoCheck { file } => hpo_check(&Analysis::of(&load(&file)?)?, out),
        Command::ExportDot { file, weights } => {
            let family = as_family(load(&file)?)?;
            out.push_str(&export_dot(&family, weights).map_err(|e| Failure::new(exit::DATA, e))?);
            Ok(exit::OK)
        }
        Command::Demo { name, document } => demo(&name, document, out),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::new(exit::NO_INPUT, format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Document, Failure> {
    let bytes = read(path)?;
    parse_document(bytes).map_err(|e| Failure::new(exit::DATA, format!("{}: {e}", path.display())))
}

fn as_family(doc: Document) -> Result<BranchingFamily, Failure> {
    match doc {
        Document::Family(f) => Ok(f),
        Document::Histories(set) => set
            .to_branching_family(DEFAULT_TOL)
            .map_err(|e| Failure::new(exit::DATA, FormatError::NotABranchingFamily(e))),
    }
}

fn validate(path: &Path, out: &mut String) -> Outcome {
    let bytes = read(path)?;
    let result = parse_document(bytes).and_then(|doc| match doc {
        Document::Family(f) => Ok(f),
        Document::Histories(set) => set
            .to_branching_family(DEFAULT_TOL)
            .map_err(FormatError::NotABranchingFamily),
    });
    match result {
        Ok(_) => {
            out.push_str("OK\n");
            Ok(exit::OK)
        }
        Err(e) => {
            out.push_str(&format!("{e}\n"));
            Ok(exit::FAILURE)
        }
    }
}

/// Histories of a document with their labels, weights and shared context.
struct Analysis<'a> {
    labels: Vec<String>,
    histories: Vec<HistorySequence>,
    weights: Vec<f64>,
    evolution: &'a Evolution,
    rho: &'a DensityMatrix,
    family: Option<BranchingFamily>,
}

impl<'a> Analysis<'a> {
    fn of(doc: &'a Document) -> Result<Self, Failure> {
        let data = |e: &dyn std::fmt::Display| Failure::new(exit::DATA, e);
        match doc {
            Document::Family(f) => {
                let table = weight_table(f).map_err(|e| data(&e))?;
                Ok(Self {
                    labels: table.leaves().iter().map(NodeId::to_string).collect(),
                    histories: f.histories().map_err(|e| data(&e))?,
                    weights: table.weights().to_vec(),
                    evolution: f.evolution(),
                    rho: f.initial_state(),
                    family: Some(f.clone()),
                })
            }
            Document::Histories(set) => {
                let weights = set
                    .histories
                    .iter()
                    .map(|h| weight(h, &set.evolution, &set.rho))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| data(&e))?;
                Ok(Self {
                    labels: (1..=set.histories.len()).map(|i| format!("h{i}")).collect(),
                    histories: set.histories.clone(),
                    weights,
                    evolution: &set.evolution,
                    rho: &set.rho,
                    family: set.to_branching_family(DEFAULT_TOL).ok(),
                })
            }
        }
    }

    fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn sum_line(&self) -> String {
        let verdict = if self.family.is_some() {
            "branching family"
        } else {
            "NOT a branching family"
        };
        format!("sum = {}; {verdict}", format_weight(self.sum()))
    }

    fn decoherence(&self) -> Result<DecoherenceMatrix, Failure> {
        match &self.family {
            Some(f) if f.histories().ok().as_ref() == Some(&self.histories) => family_decoherence_matrix(f),
            _ => decoherence_matrix(&self.histories, self.evolution, self.rho),
        }
        .map_err(|e| Failure::new(exit::DATA, e))
    }
}

fn weights(a: &Analysis, csv: bool, out: &mut String) {
    if csv {
        out.push_str("history,weight\n");
        for (label, w) in a.labels.iter().zip(&a.weights) {
            out.push_str(&format!("{label},{}\n", format_weight(*w)));
        }
        out.push_str(&format!("sum,{}\n", format_weight(a.sum())));
    } else {
        let width = a.labels.iter().map(String::len).max().unwrap_or(0).max(7);
        out.push_str(&format!("{:<width$}  weight\n", "history"));
        for (label, w) in a.labels.iter().zip(&a.weights) {
            out.push_str(&format!("{label:<width$}  {}\n", format_weight(*w)));
        }
        out.push_str(&a.sum_line());
        out.push('\n');
    }
}

fn consistency(a: &Analysis, weak: bool, tol: f64, out: &mut String) -> Outcome {
    let d = a.decoherence()?;
    out.push_str(&format!("|D_ab| over {}\n", a.labels.join(" ")));
    out.push_str(&d.to_string());
    let (modulus, real) = d.off_diagonal_max();
    out.push_str(&format!("max off-diagonal |D_ab| = {modulus:.3e}\n"));
    out.push_str(&format!("max off-diagonal |Re D_ab| = {real:.3e}\n"));
    let (kind, ok) = if weak {
        ("weakly consistent", is_weakly_consistent(&d, tol))
    } else {
        ("consistent", is_consistent(&d, tol))
    };
    if ok {
        out.push_str(&format!("{kind} (tol {tol:e})\n"));
        Ok(exit::OK)
    } else {
        out.push_str(&format!("not {kind} (tol {tol:e})\n"));
        Ok(exit::INCONSISTENT)
    }
}

fn parse_leaf(s: &str) -> Result<NodeId, Failure> {
    let digits = s.trim().strip_prefix('m').unwrap_or(s.trim());
    digits
        .parse()
        .map(NodeId)
        .map_err(|_| Failure::new(exit::USAGE, format!("invalid leaf id {s:?}")))
}

fn coarse(doc: &Document, leaves: &[String], out: &mut String) -> Outcome {
    let [a, b] = leaves else {
        return Err(Failure::new(exit::USAGE, "--leaves takes exactly two leaf ids"));
    };
    let (a, b) = (parse_leaf(a)?, parse_leaf(b)?);
    let family = as_family(doc.clone())?;
    let sum = match intra_branch_sum(&family, a, b) {
        Ok(sum) => sum,
        Err(e @ CoarseError::TransBranch(..)) => return Err(Failure::new(exit::TRANS_BRANCH, e)),
        Err(e) => return Err(Failure::new(exit::DATA, e)),
    };
    let data = |e: &dyn std::fmt::Display| Failure::new(exit::DATA, e);
    let table = weight_table(&family).map_err(|e| data(&e))?;
    let parent = family.moment(a).and_then(|m| m.parent).expect("leaves have parents");
    let rank = sum.steps().last().map_or(0, |s| s.projector.rank());
    let wa = table.weight_of(a).expect("leaf");
    let wb = table.weight_of(b).expect("leaf");
    let ws = weight(&sum, family.evolution(), family.initial_state()).map_err(|e| data(&e))?;
    let defect = (ws - wa - wb).abs();
    out.push_str(&format!("intra-branch sum of {a} and {b} below {parent}\n"));
    out.push_str(&format!(
        "summed history: {} steps, final projector rank {rank}\n",
        sum.len()
    ));
    out.push_str(&format!("W({a}) = {}\n", format_weight(wa)));
    out.push_str(&format!("W({b}) = {}\n", format_weight(wb)));
    out.push_str(&format!("W(sum) = {}\n", format_weight(ws)));
    let verdict = if defect <= DEFAULT_TOL { "yes" } else { "no" };
    out.push_str(&format!("additive: {verdict} (defect {defect:.3e})\n"));
    Ok(exit::OK)
}

fn homogeneity(y: &HistoryProjector) -> String {
    match factorize(y, DEFAULT_TOL) {
        Some(factors) => {
            let ranks: Vec<String> = factors.iter().map(|p| p.rank().to_string()).collect();
            format!("homogeneous (slot ranks {})", ranks.join(" "))
        }
        None => "inhomogeneous".to_string(),
    }
}

fn hpo_check(a: &Analysis, out: &mut String) -> Outcome {
    let members = match embed_all(&a.histories) {
        Ok(m) => m,
        Err(e) => {
            out.push_str(&format!("not embeddable: {e}\n"));
            return Ok(exit::FAILURE);
        }
    };
    let first = &members[0];
    let times: Vec<String> = first.slot_times().iter().map(|t| t.to_string()).collect();
    out.push_str(&format!(
        "{} histories at times {}; history space C^{}^{} (dim {})\n",
        members.len(),
        times.join(", "),
        first.slot_dim(),
        first.slots(),
        first.matrix().nrows()
    ));
    let family = is_hpo_family(&members, DEFAULT_TOL).map_err(|e| Failure::new(exit::DATA, e))?;
    out.push_str(if family {
        "HPO family: yes\n"
    } else {
        "HPO family: no\n"
    });
    out.push_str("homogeneity:\n");
    for (label, y) in a.labels.iter().zip(&members) {
        out.push_str(&format!("  {label}: {}\n", homogeneity(y)));
    }
    if family {
        let hpo = HpoFamily::new(members.clone(), DEFAULT_TOL).map_err(|e| Failure::new(exit::DATA, e))?;
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let selector: Vec<bool> = (0..members.len()).map(|k| k == i || k == j).collect();
                let y = sum_hpo(&hpo, &selector).map_err(|e| Failure::new(exit::DATA, e))?;
                out.push_str(&format!("  {}+{}: {}\n", a.labels[i], a.labels[j], homogeneity(&y)));
            }
        }
    }
    Ok(if family { exit::OK } else { exit::FAILURE })
}

fn demo(name: &str, document_only: bool, out: &mut String) -> Outcome {
    let demo = Demo::from_name(name).ok_or_else(|| {
        let names: Vec<&str> = Demo::ALL.iter().map(|d| d.name()).collect();
        Failure::new(
            exit::USAGE,
            format!("unknown demo {name:?}; expected one of {}", names.join(", ")),
        )
    })?;
    let doc = demo.document();
    let text = serialize_document(&doc);
    if document_only {
        out.push_str(&text);
        return Ok(exit::OK);
    }
    out.push_str(&format!("# demo {}\n", demo.name()));
    for line in demo.description() {
        out.push_str(&format!("# {line}\n"));
    }
    out.push_str(&text);
    let a = Analysis::of(&doc)?;
    let ws: Vec<String> = a.weights.iter().map(|&w| format_weight(w)).collect();
    out.push_str(&format!("histories {}\n", a.labels.join(" ")));
    out.push_str(&format!("weights {}\n", ws.join(" ")));
    out.push_str(&a.sum_line());
    out.push('\n');
    let d = a.decoherence()?;
    let (modulus, real) = d.off_diagonal_max();
    out.push_str(&format!(
        "max off-diagonal |D_ab| = {modulus:.3e}, |Re D_ab| = {real:.3e}; {}\n",
        if is_consistent(&d, DEFAULT_TOL) {
            "consistent"
        } else {
            "not consistent"
        }
    ));
    if let Some(f) = &a.family {
        let product = f
            .is_product_shaped(DEFAULT_TOL)
            .map_err(|e| Failure::new(exit::DATA, e))?;
        out.push_str(if product {
            "product family: yes\n"
        } else {
            "product family: no\n"
        });
    }
    Ok(exit::OK)
}
