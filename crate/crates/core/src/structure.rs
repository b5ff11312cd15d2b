//! Branching structures and branching families of histories.
//!
//! A family is a finite tree of moments. Every moment has a time, strictly
//! later than its parent's, and every non-root moment carries a projector.
//! The projectors on the children of a moment form a decomposition of the
//! identity and describe the system at the *parent's* time. Families built
//! with [`BranchingFamily::new_family`], [`BranchingFamily::extend`] and
//! [`BranchingFamily::from_product`] are valid by construction; families put
//! together by hand with [`BranchingFamily::assemble`] must pass
//! [`BranchingFamily::validate`] before any chain computation will accept them.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::dynamics::{DynamicsError, Evolution, EvolutionProvider};
use crate::linalg::{ComplexMatrix, Decomposition, DensityMatrix, LinalgError, Projector, DEFAULT_TOL};

/// Identifier of a moment, unique within a family. The root is always
/// [`NodeId::ROOT`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u64);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moment {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub time: f64,
    /// Property of the system at the parent's time; `None` only for the root.
    pub projector: Option<Projector>,
}

impl Moment {
    pub fn root(time: f64) -> Self {
        Self {
            id: NodeId::ROOT,
            parent: None,
            time,
            projector: None,
        }
    }

    pub fn child(id: NodeId, parent: NodeId, time: f64, projector: Projector) -> Self {
        Self {
            id,
            parent: Some(parent),
            time,
            projector: Some(projector),
        }
    }
}

/// How the initial density matrix was specified.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// `I / dim`.
    MaximallyMixed,
    Explicit(ComplexMatrix),
}

impl InitialState {
    pub fn resolve(&self, dim: usize) -> Result<DensityMatrix, LinalgError> {
        match self {
            InitialState::MaximallyMixed => Ok(DensityMatrix::maximally_mixed(dim)),
            InitialState::Explicit(m) => {
                if m.nrows() != dim || m.ncols() != dim {
                    return Err(LinalgError::DimensionMismatch {
                        expected: dim,
                        found: m.nrows(),
                    });
                }
                DensityMatrix::new(m.clone(), DEFAULT_TOL)
            }
        }
    }
}

/// A time-ordered list of `(time, projector)` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySequence {
    steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub time: f64,
    pub projector: Projector,
}

impl HistorySequence {
    pub fn new(steps: Vec<Step>) -> Result<Self, StructureError> {
        if steps.iter().any(|s| !s.time.is_finite()) {
            return Err(StructureError::NonFiniteTime);
        }
        if steps.windows(2).any(|w| w[0].time >= w[1].time) {
            return Err(StructureError::UnorderedTimes);
        }
        if let Some(first) = steps.first() {
            let dim = first.projector.dim();
            if let Some(s) = steps.iter().find(|s| s.projector.dim() != dim) {
                return Err(StructureError::DimensionMismatch {
                    expected: dim,
                    found: s.projector.dim(),
                });
            }
        }
        Ok(Self { steps })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, Projector)>) -> Result<Self, StructureError> {
        Self::new(
            pairs
                .into_iter()
                .map(|(time, projector)| Step { time, projector })
                .collect(),
        )
    }

    pub fn empty() -> Self {
        Self { steps: Vec::new() }
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.time).collect()
    }

    /// Dimension of the step projectors; `None` for the empty sequence.
    pub fn dim(&self) -> Option<usize> {
        self.steps.first().map(|s| s.projector.dim())
    }

    /// Same times and projectors equal within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.len() == other.len()
            && self
                .steps
                .iter()
                .zip(&other.steps)
                .all(|(a, b)| a.time == b.time && a.projector.approx_eq(&b.projector, tol))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructureError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("invalid initial state: {0}")]
    InitialState(LinalgError),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not a leaf")]
    NotALeaf(NodeId),
    #[error("{children} child times given for {projectors} projectors")]
    ChildCount { children: usize, projectors: usize },
    #[error("child time {child_time} is not later than time {parent_time} of {parent}")]
    TimeOrder {
        parent: NodeId,
        parent_time: f64,
        child_time: f64,
    },
    #[error("times must be finite")]
    NonFiniteTime,
    #[error("times must be strictly increasing")]
    UnorderedTimes,
    #[error("a product family needs at least one decomposition")]
    EmptyProduct,
    #[error("{times} times given for {decompositions} decompositions")]
    ProductArity { times: usize, decompositions: usize },
    #[error("histories do not assemble into a tree: {0}")]
    NotATree(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("family is invalid:\n{0}")]
    Invalid(ValidationReport),
}

/// One violated family invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoRoot,
    MultipleRoots(Vec<NodeId>),
    RootId(NodeId),
    DuplicateId(NodeId),
    UnknownParent {
        node: NodeId,
        parent: NodeId,
    },
    Unreachable(NodeId),
    RootProjector,
    MissingProjector(NodeId),
    NotProjector(NodeId),
    ProjectorDimension {
        node: NodeId,
        found: usize,
    },
    NonFiniteTime(NodeId),
    TimeOrder {
        parent: NodeId,
        child: NodeId,
        parent_time: f64,
        child_time: f64,
    },
    ZeroProjector {
        parent: NodeId,
        child: NodeId,
    },
    NotOrthogonal {
        parent: NodeId,
        first: NodeId,
        second: NodeId,
        overlap: f64,
    },
    Incomplete {
        parent: NodeId,
        defect: f64,
    },
    InitialState(String),
    DynamicsDimension {
        found: usize,
    },
    DynamicsTime {
        node: NodeId,
        reason: String,
    },
}

impl Violation {
    /// Nodes the violation refers to.
    pub fn nodes(&self) -> Vec<NodeId> {
        use Violation::*;
        match self {
            MultipleRoots(ids) => ids.clone(),
            RootId(n) | DuplicateId(n) | Unreachable(n) | MissingProjector(n) | NotProjector(n) | NonFiniteTime(n) => {
                vec![*n]
            }
            UnknownParent { node, .. } | ProjectorDimension { node, .. } | DynamicsTime { node, .. } => {
                vec![*node]
            }
            TimeOrder { parent, child, .. } | ZeroProjector { parent, child } => vec![*parent, *child],
            NotOrthogonal {
                parent, first, second, ..
            } => vec![*parent, *first, *second],
            Incomplete { parent, .. } => vec![*parent],
            NoRoot | RootProjector | InitialState(_) | DynamicsDimension { .. } => vec![],
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NoRoot => write!(f, "no root moment"),
            MultipleRoots(ids) => {
                let ids: Vec<String> = ids.iter().map(ToString::to_string).collect();
                write!(f, "multiple root moments: {}", ids.join(", "))
            }
            RootId(n) => write!(f, "{n}: id 0 is reserved for the root"),
            DuplicateId(n) => write!(f, "{n}: duplicate id"),
            UnknownParent { node, parent } => write!(f, "{node}: parent {parent} does not exist"),
            Unreachable(n) => write!(f, "{n}: not connected to the root (cycle?)"),
            RootProjector => write!(f, "{}: the root must not carry a projector", NodeId::ROOT),
            MissingProjector(n) => write!(f, "{n}: non-root moment without a projector"),
            NotProjector(n) => write!(f, "{n}: assigned operator is not a projector"),
            ProjectorDimension { node, found } => write!(f, "{node}: projector has dimension {found}"),
            NonFiniteTime(n) => write!(f, "{n}: time is not finite"),
            TimeOrder {
                parent,
                child,
                parent_time,
                child_time,
            } => write!(
                f,
                "ordering: {child} at time {child_time} is not later than its parent {parent} at {parent_time}"
            ),
            ZeroProjector { parent, child } => {
                write!(f, "decomposition at {parent}: child {child} carries the zero projector")
            }
            NotOrthogonal {
                parent,
                first,
                second,
                overlap,
            } => write!(
                f,
                "decomposition at {parent}: projectors of {first} and {second} are not orthogonal (|PQ| = {overlap:.3e})"
            ),
            Incomplete { parent, defect } => write!(
                f,
                "completeness at {parent}: child projectors do not sum to I (|sum - I| = {defect:.3e})"
            ),
            InitialState(reason) => write!(f, "initial state: {reason}"),
            DynamicsDimension { found } => write!(f, "dynamics act on dimension {found}"),
            DynamicsTime { node, reason } => write!(f, "{node}: dynamics unavailable at its time: {reason}"),
        }
    }
}

/// Every violated invariant of a family; empty iff the family is valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub tol: f64,
    /// Admit zero projectors inside sibling decompositions.
    pub allow_zero_projectors: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            allow_zero_projectors: false,
        }
    }
}

/// A branching family of histories: a tree of moments with times and
/// projectors, an initial state and the system dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchingFamily {
    dim: usize,
    moments: Vec<Moment>,
    initial: InitialState,
    rho: DensityMatrix,
    evolution: Evolution,
    // Built only through invariant-preserving constructors.
    verified: bool,
}

impl BranchingFamily {
    /// The one-moment family `{m0}`.
    pub fn new_family(
        dim: usize,
        root_time: f64,
        initial: InitialState,
        evolution: Evolution,
    ) -> Result<Self, StructureError> {
        if dim == 0 {
            return Err(StructureError::ZeroDimension);
        }
        if !root_time.is_finite() {
            return Err(StructureError::NonFiniteTime);
        }
        let rho = initial.resolve(dim).map_err(StructureError::InitialState)?;
        if evolution.dim() != dim {
            return Err(StructureError::DimensionMismatch {
                expected: dim,
                found: evolution.dim(),
            });
        }
        Ok(Self {
            dim,
            moments: vec![Moment::root(root_time)],
            initial,
            rho,
            evolution,
            verified: true,
        })
    }

    /// Puts a family together from raw moments without checking the family
    /// invariants. The initial state must still be a density matrix of the
    /// right size.
    pub fn assemble(
        dim: usize,
        initial: InitialState,
        evolution: Evolution,
        moments: Vec<Moment>,
    ) -> Result<Self, StructureError> {
        if dim == 0 {
            return Err(StructureError::ZeroDimension);
        }
        let rho = initial.resolve(dim).map_err(StructureError::InitialState)?;
        Ok(Self {
            dim,
            moments,
            initial,
            rho,
            evolution,
            verified: false,
        })
    }

    /// Adds one child per member of `decomposition` below the leaf `leaf`.
    /// Child `i` carries projector `i` and time `child_times[i]`; sibling
    /// times may differ.
    pub fn extend(
        &self,
        leaf: NodeId,
        decomposition: &Decomposition,
        child_times: &[f64],
    ) -> Result<Self, StructureError> {
        let parent = self.moment(leaf).ok_or(StructureError::UnknownNode(leaf))?;
        if !self.is_leaf(leaf) {
            return Err(StructureError::NotALeaf(leaf));
        }
        if child_times.len() != decomposition.len() {
            return Err(StructureError::ChildCount {
                children: child_times.len(),
                projectors: decomposition.len(),
            });
        }
        if decomposition.dim() != self.dim {
            return Err(StructureError::DimensionMismatch {
                expected: self.dim,
                found: decomposition.dim(),
            });
        }
        for &t in child_times {
            if !t.is_finite() {
                return Err(StructureError::NonFiniteTime);
            }
            if t <= parent.time {
                return Err(StructureError::TimeOrder {
                    parent: leaf,
                    parent_time: parent.time,
                    child_time: t,
                });
            }
        }
        // The leaf's time now enters chain operators.
        self.evolution.supports_time(parent.time)?;

        let first = self.moments.iter().map(|m| m.id.0).max().unwrap_or(0) + 1;
        let mut moments = self.moments.clone();
        for (id, (p, &t)) in (first..).zip(decomposition.projectors().iter().zip(child_times)) {
            moments.push(Moment::child(NodeId(id), leaf, t, p.clone()));
        }
        Ok(Self {
            moments,
            ..self.clone()
        })
    }

    /// The branching family equivalent to the product family of
    /// `decompositions[i]` at `times[i]`. Leaves get time `t_n + 1`.
    pub fn from_product(
        dim: usize,
        times: &[f64],
        decompositions: &[Decomposition],
        initial: InitialState,
        evolution: Evolution,
    ) -> Result<Self, StructureError> {
        if decompositions.is_empty() {
            return Err(StructureError::EmptyProduct);
        }
        if times.len() != decompositions.len() {
            return Err(StructureError::ProductArity {
                times: times.len(),
                decompositions: decompositions.len(),
            });
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(StructureError::NonFiniteTime);
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(StructureError::UnorderedTimes);
        }
        let leaf_time = times[times.len() - 1] + 1.0;
        let mut family = Self::new_family(dim, times[0], initial, evolution)?;
        for (stage, decomposition) in decompositions.iter().enumerate() {
            let child_time = times.get(stage + 1).copied().unwrap_or(leaf_time);
            let child_times = vec![child_time; decomposition.len()];
            for leaf in family.leaf_ids() {
                family = family.extend(leaf, decomposition, &child_times)?;
            }
        }
        Ok(family)
    }

    /// Builds the prefix tree of a set of sequences and accepts it only if it
    /// is a valid branching family. Leaf moments get time `t_last + 1`.
    pub fn from_histories(
        dim: usize,
        histories: &[HistorySequence],
        initial: InitialState,
        evolution: Evolution,
        tol: f64,
    ) -> Result<Self, StructureError> {
        let first = histories
            .first()
            .ok_or_else(|| StructureError::NotATree("no histories".into()))?;
        if first.is_empty() {
            if histories.len() > 1 {
                return Err(StructureError::NotATree("empty history alongside others".into()));
            }
            return Self::new_family(dim, 0.0, initial, evolution);
        }
        let root_time = first.steps()[0].time;
        let mut moments = vec![Moment::root(root_time)];
        let mut next = 1u64;
        for (h, seq) in histories.iter().enumerate() {
            if seq.is_empty() {
                return Err(StructureError::NotATree(format!("history {h} is empty")));
            }
            if seq.steps()[0].time != root_time {
                return Err(StructureError::NotATree(format!(
                    "history {h} starts at {} rather than {root_time}",
                    seq.steps()[0].time
                )));
            }
            let mut at = NodeId::ROOT;
            for (i, step) in seq.steps().iter().enumerate() {
                let child_time = seq.steps().get(i + 1).map(|s| s.time).unwrap_or(step.time + 1.0);
                let existing = moments.iter().find(|m| {
                    m.parent == Some(at) && m.projector.as_ref().is_some_and(|p| p.approx_eq(&step.projector, tol))
                });
                match existing {
                    Some(m) => {
                        let is_last = i + 1 == seq.len();
                        let has_children = moments.iter().any(|c| c.parent == Some(m.id));
                        if is_last || !has_children || m.time != child_time {
                            return Err(StructureError::NotATree(format!(
                                "history {h} overlaps another history up to step {i} inconsistently"
                            )));
                        }
                        at = m.id;
                    }
                    None => {
                        let id = NodeId(next);
                        next += 1;
                        moments.push(Moment::child(id, at, child_time, step.projector.clone()));
                        at = id;
                    }
                }
            }
        }
        let family = Self::assemble(dim, initial, evolution, moments)?;
        let report = family.validate(tol);
        if !report.is_valid() {
            return Err(StructureError::Invalid(report));
        }
        Ok(Self {
            verified: true,
            ..family
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn moments(&self) -> &[Moment] {
        &self.moments
    }

    pub fn moment(&self, id: NodeId) -> Option<&Moment> {
        self.moments.iter().find(|m| m.id == id)
    }

    pub fn initial(&self) -> &InitialState {
        &self.initial
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn evolution(&self) -> &Evolution {
        &self.evolution
    }

    pub fn root_time(&self) -> Option<f64> {
        self.moment(NodeId::ROOT).map(|m| m.time)
    }

    /// Children of `id` in insertion order.
    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.moments
            .iter()
            .filter(|m| m.parent == Some(id))
            .map(|m| m.id)
            .collect()
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.moment(id).is_some() && !self.moments.iter().any(|m| m.parent == Some(id))
    }

    /// Leaves in insertion order (not the depth-first history order).
    fn leaf_ids(&self) -> Vec<NodeId> {
        self.moments
            .iter()
            .filter(|m| self.is_leaf(m.id))
            .map(|m| m.id)
            .collect()
    }

    /// Checks every family invariant.
    pub fn validate(&self, tol: f64) -> ValidationReport {
        self.validate_with(ValidationOptions {
            tol,
            ..Default::default()
        })
    }

    pub fn validate_with(&self, options: ValidationOptions) -> ValidationReport {
        let tol = options.tol;
        let mut out = Vec::new();

        if self.rho.dim() != self.dim {
            out.push(Violation::InitialState(format!("dimension {}", self.rho.dim())));
        }
        if self.evolution.dim() != self.dim {
            out.push(Violation::DynamicsDimension {
                found: self.evolution.dim(),
            });
        }

        let mut seen = HashSet::new();
        for m in &self.moments {
            if !seen.insert(m.id) {
                out.push(Violation::DuplicateId(m.id));
            }
        }
        let roots: Vec<NodeId> = self
            .moments
            .iter()
            .filter(|m| m.parent.is_none())
            .map(|m| m.id)
            .collect();
        match roots.as_slice() {
            [] => out.push(Violation::NoRoot),
            [r] if *r != NodeId::ROOT => out.push(Violation::RootId(*r)),
            [_] => {}
            _ => out.push(Violation::MultipleRoots(roots.clone())),
        }

        let by_id: HashMap<NodeId, &Moment> = self.moments.iter().map(|m| (m.id, m)).collect();
        for m in &self.moments {
            if !m.time.is_finite() {
                out.push(Violation::NonFiniteTime(m.id));
            }
            match (&m.parent, &m.projector) {
                (None, Some(_)) => out.push(Violation::RootProjector),
                (Some(_), None) => out.push(Violation::MissingProjector(m.id)),
                (Some(_), Some(p)) => {
                    if p.dim() != self.dim {
                        out.push(Violation::ProjectorDimension {
                            node: m.id,
                            found: p.dim(),
                        });
                    } else if !crate::linalg::is_projector(p.matrix(), tol).unwrap_or(false) {
                        out.push(Violation::NotProjector(m.id));
                    }
                }
                (None, None) => {}
            }
            if let Some(parent) = m.parent {
                if m.id == NodeId::ROOT {
                    out.push(Violation::RootId(m.id));
                }
                match by_id.get(&parent) {
                    None => out.push(Violation::UnknownParent { node: m.id, parent }),
                    Some(pm) if pm.time.is_finite() && m.time.is_finite() && m.time <= pm.time => {
                        out.push(Violation::TimeOrder {
                            parent,
                            child: m.id,
                            parent_time: pm.time,
                            child_time: m.time,
                        })
                    }
                    Some(_) => {}
                }
            }
        }

        // Connectivity: everything must hang off the root.
        if by_id.contains_key(&NodeId::ROOT) {
            let mut reached = HashSet::from([NodeId::ROOT]);
            let mut frontier = vec![NodeId::ROOT];
            while let Some(n) = frontier.pop() {
                for m in &self.moments {
                    if m.parent == Some(n) && reached.insert(m.id) {
                        frontier.push(m.id);
                    }
                }
            }
            for m in &self.moments {
                if !reached.contains(&m.id) && m.parent.is_some_and(|p| by_id.contains_key(&p)) {
                    out.push(Violation::Unreachable(m.id));
                }
            }
        }

        // Sibling decompositions and dynamics coverage of branching times.
        let mut parents: Vec<NodeId> = Vec::new();
        for m in &self.moments {
            if let Some(p) = m.parent {
                if !parents.contains(&p) && by_id.contains_key(&p) {
                    parents.push(p);
                }
            }
        }
        for parent in parents {
            if let Err(e) = self.evolution.supports_time(by_id[&parent].time) {
                out.push(Violation::DynamicsTime {
                    node: parent,
                    reason: e.to_string(),
                });
            }
            let kids: Vec<(&NodeId, &Projector)> = self
                .moments
                .iter()
                .filter(|m| m.parent == Some(parent))
                .filter_map(|m| m.projector.as_ref().map(|p| (&m.id, p)))
                .filter(|(_, p)| p.dim() == self.dim)
                .collect();
            if kids.is_empty() {
                continue;
            }
            if !options.allow_zero_projectors {
                for (id, p) in &kids {
                    if p.is_zero(tol) {
                        out.push(Violation::ZeroProjector { parent, child: **id });
                    }
                }
            }
            for i in 0..kids.len() {
                for j in i + 1..kids.len() {
                    let overlap = (kids[i].1.matrix() * kids[j].1.matrix()).max_norm();
                    if overlap > tol {
                        out.push(Violation::NotOrthogonal {
                            parent,
                            first: *kids[i].0,
                            second: *kids[j].0,
                            overlap,
                        });
                    }
                }
            }
            let mut sum = ComplexMatrix::zeros(self.dim, self.dim);
            for (_, p) in &kids {
                sum = &sum + p.matrix();
            }
            let defect = sum.max_dist(&ComplexMatrix::identity(self.dim));
            if defect > tol {
                out.push(Violation::Incomplete { parent, defect });
            }
        }

        ValidationReport { violations: out }
    }

    /// Ok if the family was built by the checked constructors or passes
    /// validation at the default tolerance.
    pub fn ensure_valid(&self) -> Result<(), StructureError> {
        if self.verified {
            return Ok(());
        }
        let report = self.validate(DEFAULT_TOL);
        if report.is_valid() {
            Ok(())
        } else {
            Err(StructureError::Invalid(report))
        }
    }

    /// Marks a family that has just passed validation.
    pub(crate) fn into_verified(mut self) -> Self {
        self.verified = true;
        self
    }

    /// Leaves in history order: depth-first, children in insertion order.
    pub fn leaves(&self) -> Result<Vec<NodeId>, StructureError> {
        self.ensure_valid()?;
        let mut out = Vec::new();
        let mut stack = vec![NodeId::ROOT];
        while let Some(n) = stack.pop() {
            let kids = self.children(n);
            if kids.is_empty() {
                out.push(n);
            }
            stack.extend(kids.into_iter().rev());
        }
        Ok(out)
    }

    /// One history per leaf, in [`BranchingFamily::leaves`] order. The path
    /// `m0 ≺ m1 ≺ … ≺ mk` becomes `[(τ(m0), P(m1)), …, (τ(m(k-1)), P(mk))]`.
    pub fn histories(&self) -> Result<Vec<HistorySequence>, StructureError> {
        self.leaves()?.into_iter().map(|leaf| self.history_of(leaf)).collect()
    }

    /// The history ending in `leaf`.
    pub fn history_of(&self, leaf: NodeId) -> Result<HistorySequence, StructureError> {
        self.ensure_valid()?;
        if !self.is_leaf(leaf) {
            return Err(match self.moment(leaf) {
                None => StructureError::UnknownNode(leaf),
                Some(_) => StructureError::NotALeaf(leaf),
            });
        }
        let mut steps = Vec::new();
        let mut at = self.moment(leaf).expect("checked");
        while let Some(parent_id) = at.parent {
            let parent = self.moment(parent_id).expect("valid family");
            steps.push(Step {
                time: parent.time,
                projector: at.projector.clone().expect("valid family"),
            });
            at = parent;
        }
        steps.reverse();
        Ok(HistorySequence { steps })
    }

    fn depth_levels(&self) -> Vec<Vec<NodeId>> {
        let mut levels = vec![vec![NodeId::ROOT]];
        loop {
            let next: Vec<NodeId> = levels
                .last()
                .expect("nonempty")
                .iter()
                .flat_map(|&n| self.children(n))
                .collect();
            if next.is_empty() {
                return levels;
            }
            levels.push(next);
        }
    }

    /// Whether the tree has product shape: every level shares one time and
    /// all nodes of a level carry the same list of child projectors.
    pub fn is_product_shaped(&self, tol: f64) -> Result<bool, StructureError> {
        self.ensure_valid()?;
        for level in self.depth_levels() {
            let time = self.moment(level[0]).expect("exists").time;
            if level.iter().any(|&n| self.moment(n).expect("exists").time != time) {
                return Ok(false);
            }
            let child_projectors = |n: NodeId| -> Vec<Projector> {
                self.children(n)
                    .into_iter()
                    .filter_map(|c| self.moment(c).and_then(|m| m.projector.clone()))
                    .collect()
            };
            let reference = child_projectors(level[0]);
            for &n in &level[1..] {
                let other = child_projectors(n);
                if other.len() != reference.len() || other.iter().zip(&reference).any(|(a, b)| !a.approx_eq(b, tol)) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Unitary, C64};

    fn basis2() -> Decomposition {
        Decomposition::computational(2)
    }

    fn hadamard2() -> Decomposition {
        Decomposition::from_basis(&Unitary::hadamard())
    }

    fn root2() -> BranchingFamily {
        BranchingFamily::new_family(2, 0.0, InitialState::MaximallyMixed, Evolution::trivial(2)).unwrap()
    }

    #[test]
    fn new_family_examples() {
        let f = root2();
        assert_eq!(f.moments().len(), 1);
        assert_eq!(f.histories().unwrap(), vec![HistorySequence::empty()]);
        assert!(f.validate(1e-9).is_valid());

        let rho = ComplexMatrix::diag(&[C64::new(0.25, 0.0); 4]);
        let f = BranchingFamily::new_family(4, -3.5, InitialState::Explicit(rho), Evolution::trivial(4)).unwrap();
        assert_eq!(f.moments().len(), 1);
        assert_eq!(f.root_time(), Some(-3.5));

        let bad = ComplexMatrix::diag(&[C64::new(0.45, 0.0); 2]);
        assert!(matches!(
            BranchingFamily::new_family(2, 0.0, InitialState::Explicit(bad), Evolution::trivial(2)),
            Err(StructureError::InitialState(_))
        ));
        assert_eq!(
            BranchingFamily::new_family(0, 0.0, InitialState::MaximallyMixed, Evolution::trivial(0)),
            Err(StructureError::ZeroDimension)
        );
    }

    #[test]
    fn extend_examples() {
        let f = root2().extend(NodeId::ROOT, &basis2(), &[1.0, 2.0]).unwrap();
        assert_eq!(f.histories().unwrap().len(), 2);
        assert_eq!(f.moment(NodeId(2)).unwrap().time, 2.0);

        let err = root2().extend(NodeId::ROOT, &basis2(), &[0.0, 1.0]).unwrap_err();
        assert!(matches!(err, StructureError::TimeOrder { .. }));
        let err = f.extend(NodeId::ROOT, &basis2(), &[3.0, 3.0]).unwrap_err();
        assert_eq!(err, StructureError::NotALeaf(NodeId::ROOT));
        let err = f.extend(NodeId(9), &basis2(), &[3.0, 3.0]).unwrap_err();
        assert_eq!(err, StructureError::UnknownNode(NodeId(9)));
        let err = f.extend(NodeId(1), &basis2(), &[3.0]).unwrap_err();
        assert!(matches!(err, StructureError::ChildCount { .. }));
        let err = f
            .extend(NodeId(1), &Decomposition::computational(3), &[3.0; 3])
            .unwrap_err();
        assert!(matches!(err, StructureError::DimensionMismatch { .. }));
    }

    #[test]
    fn extend_is_persistent() {
        let base = root2();
        let grown = base.extend(NodeId::ROOT, &basis2(), &[1.0, 1.0]).unwrap();
        assert_eq!(base.moments().len(), 1);
        assert_eq!(grown.moments().len(), 3);
    }

    #[test]
    fn fig2_shape_has_five_histories() {
        let d3 = Decomposition::computational(3);
        let split = Decomposition::from_basis_groups(&Unitary::identity(3), &[vec![0], vec![1, 2]], 1e-9).unwrap();
        let f = BranchingFamily::new_family(3, 0.0, InitialState::MaximallyMixed, Evolution::trivial(3))
            .unwrap()
            .extend(NodeId::ROOT, &split, &[1.0, 2.0])
            .unwrap();
        let f = f.extend(NodeId(1), &d3, &[3.0; 3]).unwrap();
        let f = f.extend(NodeId(2), &split, &[4.0, 4.5]).unwrap();
        let hs = f.histories().unwrap();
        assert_eq!(hs.len(), 5);
        assert_eq!(hs[0].times(), vec![0.0, 1.0]);
        assert_eq!(hs[4].times(), vec![0.0, 2.0]);
        assert!(!f.is_product_shaped(1e-9).unwrap());
    }

    fn branch_no_prod() -> BranchingFamily {
        let f = root2().extend(NodeId::ROOT, &basis2(), &[1.0, 1.0]).unwrap();
        let f = f.extend(NodeId(1), &basis2(), &[2.0, 2.0]).unwrap();
        f.extend(NodeId(2), &hadamard2(), &[2.0, 2.0]).unwrap()
    }

    #[test]
    fn counterexample_family_is_branching_not_product() {
        let f = branch_no_prod();
        let hs = f.histories().unwrap();
        assert_eq!(hs.len(), 4);
        for h in &hs {
            assert_eq!(h.times(), vec![0.0, 1.0]);
        }
        assert!(f.validate(1e-9).is_valid());
        assert!(!f.is_product_shaped(1e-9).unwrap());
    }

    #[test]
    fn history_steps_use_predecessor_times() {
        let f = branch_no_prod();
        let h = f.history_of(NodeId(5)).unwrap();
        assert!(h.steps()[0].projector.approx_eq(&basis2().projectors()[1], 0.0));
        assert!(h.steps()[1].projector.approx_eq(&hadamard2().projectors()[0], 0.0));
        assert_eq!(f.leaves().unwrap(), vec![NodeId(3), NodeId(4), NodeId(5), NodeId(6)]);
    }

    #[test]
    fn from_product_examples() {
        let f = BranchingFamily::from_product(
            2,
            &[0.0, 1.0],
            &[basis2(), hadamard2()],
            InitialState::MaximallyMixed,
            Evolution::trivial(2),
        )
        .unwrap();
        assert_eq!(f.histories().unwrap().len(), 4);
        assert!(f.is_product_shaped(1e-9).unwrap());
        assert_eq!(f.moment(NodeId(6)).unwrap().time, 2.0);

        let f = BranchingFamily::from_product(
            2,
            &[0.0],
            &[Decomposition::trivial(2)],
            InitialState::MaximallyMixed,
            Evolution::trivial(2),
        )
        .unwrap();
        assert_eq!(f.histories().unwrap().len(), 1);

        let split = Decomposition::from_basis_groups(&Unitary::identity(3), &[vec![0], vec![1, 2]], 1e-9).unwrap();
        let f = BranchingFamily::from_product(
            3,
            &[0.0, 1.0],
            &[Decomposition::computational(3), split],
            InitialState::MaximallyMixed,
            Evolution::trivial(3),
        )
        .unwrap();
        assert_eq!(f.histories().unwrap().len(), 6);
        assert!(f.is_product_shaped(1e-9).unwrap());

        let err = BranchingFamily::from_product(
            2,
            &[1.0, 1.0],
            &[basis2(), basis2()],
            InitialState::MaximallyMixed,
            Evolution::trivial(2),
        )
        .unwrap_err();
        assert_eq!(err, StructureError::UnorderedTimes);
    }

    #[test]
    fn single_root_is_product_shaped() {
        assert!(root2().is_product_shaped(1e-9).unwrap());
    }

    #[test]
    fn validate_reports_incomplete_siblings() {
        let half = Projector::new(
            ComplexMatrix::from_real_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap(),
            1e-9,
        )
        .unwrap();
        let moments = vec![Moment::root(0.0), Moment::child(NodeId(1), NodeId::ROOT, 1.0, half)];
        let f = BranchingFamily::assemble(2, InitialState::MaximallyMixed, Evolution::trivial(2), moments).unwrap();
        let report = f.validate(1e-9);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(
            report.violations[0],
            Violation::Incomplete {
                parent: NodeId::ROOT,
                ..
            }
        ));
        assert!(matches!(f.histories(), Err(StructureError::Invalid(_))));
    }

    #[test]
    fn validate_reports_ordering_and_structure() {
        let p = basis2().into_projectors();
        let moments = vec![
            Moment::root(1.0),
            Moment::child(NodeId(1), NodeId::ROOT, 0.5, p[0].clone()),
            Moment::child(NodeId(2), NodeId::ROOT, 2.0, p[1].clone()),
            Moment::child(NodeId(3), NodeId(7), 3.0, p[1].clone()),
            Moment {
                id: NodeId(4),
                parent: Some(NodeId(2)),
                time: 3.0,
                projector: None,
            },
        ];
        let f = BranchingFamily::assemble(2, InitialState::MaximallyMixed, Evolution::trivial(2), moments).unwrap();
        let report = f.validate(1e-9);
        let v = &report.violations;
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::TimeOrder { child: NodeId(1), .. })));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::UnknownParent { node: NodeId(3), .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::MissingProjector(NodeId(4)))));
    }

    #[test]
    fn validate_reports_cycles_and_roots() {
        let p = Projector::identity(2);
        let moments = vec![
            Moment::root(0.0),
            Moment::child(NodeId(1), NodeId(2), 1.0, p.clone()),
            Moment::child(NodeId(2), NodeId(1), 2.0, p.clone()),
            Moment::child(NodeId(3), NodeId::ROOT, 1.0, p.clone()),
        ];
        let f = BranchingFamily::assemble(2, InitialState::MaximallyMixed, Evolution::trivial(2), moments).unwrap();
        let v = f.validate(1e-9).violations;
        assert!(v.iter().any(|x| matches!(x, Violation::Unreachable(NodeId(1)))));
        assert!(v.iter().any(|x| matches!(x, Violation::Unreachable(NodeId(2)))));

        let f = BranchingFamily::assemble(2, InitialState::MaximallyMixed, Evolution::trivial(2), vec![]).unwrap();
        assert_eq!(f.validate(1e-9).violations, vec![Violation::NoRoot]);
    }

    #[test]
    fn zero_projectors_need_relaxed_validation() {
        let moments = vec![
            Moment::root(0.0),
            Moment::child(NodeId(1), NodeId::ROOT, 1.0, Projector::identity(2)),
            Moment::child(NodeId(2), NodeId::ROOT, 1.0, Projector::zero(2)),
        ];
        let f = BranchingFamily::assemble(2, InitialState::MaximallyMixed, Evolution::trivial(2), moments).unwrap();
        assert!(!f.validate(1e-9).is_valid());
        let relaxed = ValidationOptions {
            tol: 1e-9,
            allow_zero_projectors: true,
        };
        assert!(f.validate_with(relaxed).is_valid());
    }

    #[test]
    fn piecewise_dynamics_must_cover_branching_times() {
        let evo = Evolution::unitary_table(vec![0.0, 1.0], vec![Unitary::hadamard()]).unwrap();
        let f = BranchingFamily::new_family(2, 0.0, InitialState::MaximallyMixed, evo).unwrap();
        let f = f.extend(NodeId::ROOT, &basis2(), &[0.5, 1.0]).unwrap();
        assert!(matches!(
            f.extend(NodeId(1), &basis2(), &[2.0, 2.0]),
            Err(StructureError::Dynamics(_))
        ));
        assert!(f.extend(NodeId(2), &basis2(), &[2.0, 2.0]).is_ok());
    }

    #[test]
    fn from_histories_recovers_branching_families() {
        let f = branch_no_prod();
        let hs = f.histories().unwrap();
        let g =
            BranchingFamily::from_histories(2, &hs, InitialState::MaximallyMixed, Evolution::trivial(2), 1e-9).unwrap();
        assert_eq!(g.histories().unwrap(), hs);

        // Two histories that disagree with a tree: the first step projectors
        // are not orthogonal.
        let plus = hadamard2().projectors()[0].clone();
        let zero = basis2().projectors()[0].clone();
        let seqs = vec![
            HistorySequence::from_pairs([(0.0, plus.clone()), (1.0, zero.clone())]).unwrap(),
            HistorySequence::from_pairs([(0.0, zero.clone()), (1.0, zero)]).unwrap(),
        ];
        assert!(matches!(
            BranchingFamily::from_histories(2, &seqs, InitialState::MaximallyMixed, Evolution::trivial(2), 1e-9),
            Err(StructureError::Invalid(_))
        ));
    }

    #[test]
    fn sequences_reject_unordered_times() {
        let p = Projector::identity(2);
        assert_eq!(
            HistorySequence::from_pairs([(1.0, p.clone()), (1.0, p)]),
            Err(StructureError::UnorderedTimes)
        );
    }
}
