//! The symbolic interpreter.
//!
//! [`run`] executes an entry method under search semantics and collects
//! every leaf of the execution tree: returned values and thrown guest
//! exceptions become [`Solution`]s, while `fail()` and inconsistent
//! branches are pruned silently. Branching happens only when a symbolic
//! value is inspected: a condition on a logic variable, a call on a free
//! object, a cast or `instanceof` on a free object, or `#=`.

mod code;
mod machine;
mod render;
mod structeq;
mod tree;

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value as Json};
use thiserror::Error;

use crate::classes::{MethodImpl, MethodKey, TypeId};
use crate::constraints::{Assignment, Constraint};
use crate::frontend::{compile, CheckedProgram, FrontendError};
use crate::sym::{Addr, Heap};

pub use code::{compile_program, Code, CodeMap, Instr};
pub use tree::{ExecTree, TreeNode, TreeNodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    #[default]
    All,
    /// Stop at the first solution.
    One,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelMode {
    #[default]
    Off,
    First,
    All,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Inclusive bounds for integer logic variables during labeling and
    /// consistency checks.
    pub domain: (i64, i64),
    /// Interpreter steps allowed along one path from the root.
    pub max_steps: u64,
    pub max_structeq_depth: usize,
    pub mode: SearchMode,
    pub labeling: LabelMode,
    /// Upper bound on labelings listed per solution.
    pub max_labelings: usize,
    pub record_tree: bool,
    pub record_choices: bool,
    /// Fingerprint the machine state at every choice point and compare it
    /// after each backtrack.
    pub verify_restoration: bool,
    /// Attach a copy of the heap to each solution.
    pub capture_heap: bool,
    pub solver_budget: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            domain: (-128, 127),
            max_steps: 10_000,
            max_structeq_depth: 64,
            mode: SearchMode::All,
            labeling: LabelMode::Off,
            max_labelings: 10_000,
            record_tree: false,
            record_choices: false,
            verify_restoration: false,
            capture_heap: false,
            solver_budget: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("no method `{0}` without parameters to use as entry point")]
    NoEntry(String),
    #[error("entry `{name}` is ambiguous; qualify it as one of: {}", candidates.join(", "))]
    AmbiguousEntry {
        name: String,
        candidates: Vec<String>,
    },
    #[error("entry class `{0}` cannot be instantiated")]
    EntryNotInstantiable(String),
    #[error("invalid domain {0}..{1}")]
    InvalidDomain(i64, i64),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Return(String),
    Exception(String),
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Return(v) => write!(f, "RETURN {v}"),
            Outcome::Exception(e) => write!(f, "EXCEPTION {e}"),
        }
    }
}

/// One concrete instance of a symbolic solution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSolution {
    pub assignment: Assignment,
    /// `name=value` pairs: objects first, then variables.
    pub bindings: Vec<(String, String)>,
    pub outcome: Outcome,
    pub output: Vec<String>,
}

/// A `#=` evaluation on the path to a solution and the branch taken.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructEqAssertion {
    pub lhs: Option<Addr>,
    pub rhs: Option<Addr>,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub outcome: Outcome,
    /// Residual store in dump form.
    pub constraints: Vec<String>,
    pub residual: Vec<Constraint>,
    pub output: Vec<String>,
    pub labelings: Vec<LabeledSolution>,
    pub labelings_truncated: bool,
    pub struct_eq: Vec<StructEqAssertion>,
    pub heap: Option<Heap>,
}

impl Solution {
    pub fn to_json(&self) -> Json {
        let mut obj = match &self.outcome {
            Outcome::Return(v) => json!({"kind": "RETURN", "value": v}),
            Outcome::Exception(e) => json!({"kind": "EXCEPTION", "exception": e}),
        };
        obj["constraints"] = json!(self.constraints);
        obj["output"] = json!(self.output);
        if !self.labelings.is_empty() {
            let labelings: Vec<Json> = self
                .labelings
                .iter()
                .map(|l| {
                    let bindings: serde_json::Map<String, Json> = l
                        .bindings
                        .iter()
                        .map(|(k, v)| (k.clone(), json!(v)))
                        .collect();
                    json!({
                        "assignment": bindings,
                        "result": l.outcome.to_string(),
                        "output": l.output,
                    })
                })
                .collect();
            obj["labelings"] = json!(labelings);
        }
        obj
    }

    pub fn to_json_line(&self) -> String {
        self.to_json().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChoiceKind {
    Cond,
    Dispatch,
    TypeOp,
    StructEq,
}

impl ChoiceKind {
    pub fn name(self) -> &'static str {
        match self {
            ChoiceKind::Cond => "COND",
            ChoiceKind::Dispatch => "DISPATCH",
            ChoiceKind::TypeOp => "TYPEOP",
            ChoiceKind::StructEq => "STRUCTEQ",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AltRecord {
    pub label: String,
    /// Dispatch target for DISPATCH alternatives.
    pub owner: Option<TypeId>,
    /// Imposed applicable-type set for DISPATCH and TYPEOP alternatives.
    pub type_set: Option<BTreeSet<TypeId>>,
    pub constraints: Vec<Constraint>,
    /// Survived the consistency pre-check.
    pub viable: bool,
}

/// A branching decision as it was met during the run. Decisions with a
/// single viable alternative are recorded too, even though they create no
/// choice point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceRecord {
    pub kind: ChoiceKind,
    pub subject: Option<Addr>,
    pub method: Option<MethodKey>,
    /// Effective set of the subject before the decision.
    pub prior_set: Option<BTreeSet<TypeId>>,
    pub cast_target: Option<TypeId>,
    pub alternatives: Vec<AltRecord>,
}

impl ChoiceRecord {
    pub fn viable(&self) -> usize {
        self.alternatives.iter().filter(|a| a.viable).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub choice_points: usize,
    pub backtracks: usize,
    pub steps: u64,
    pub restoration_checks: usize,
    pub restoration_mismatches: usize,
    pub ref_eq_evals: usize,
    pub ref_eq_store_changes: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunResult {
    pub solutions: Vec<Solution>,
    /// Some branch was cut short by a limit, so solutions may be missing.
    pub incomplete: bool,
    pub stats: RunStats,
    pub tree: Option<ExecTree>,
    pub choices: Vec<ChoiceRecord>,
    pub diagnostics: Vec<String>,
}

/// Locate the entry method: `Class.name` or a bare name that only one
/// class declares with a body and no parameters.
pub fn resolve_entry(program: &CheckedProgram, entry: &str) -> Result<(TypeId, MethodKey), EngineError> {
    let (class, name) = match entry.split_once('.') {
        Some((c, n)) => (Some(c), n),
        None => (None, entry),
    };
    let key = MethodKey::new(name, 0);
    let table = &program.table;
    let mut found: BTreeMap<TypeId, ()> = BTreeMap::new();
    for def in table.classes() {
        if class.is_some_and(|c| c != def.name) {
            continue;
        }
        if def.method(&key).is_some_and(|m| m.imp == MethodImpl::Source) {
            found.insert(def.id, ());
        }
    }
    let owners: Vec<TypeId> = found.into_keys().collect();
    let owner = match owners.as_slice() {
        [] => return Err(EngineError::NoEntry(entry.to_string())),
        [one] => *one,
        many => {
            return Err(EngineError::AmbiguousEntry {
                name: entry.to_string(),
                candidates: many
                    .iter()
                    .map(|t| format!("{}.{name}", table.name(*t)))
                    .collect(),
            })
        }
    };
    if !table.is_instantiable(owner) {
        return Err(EngineError::EntryNotInstantiable(table.name(owner).to_string()));
    }
    Ok((owner, key))
}

/// Run `entry` of an already checked program.
pub fn run(program: &CheckedProgram, entry: &str, options: &RunOptions) -> Result<RunResult, EngineError> {
    if options.domain.0 > options.domain.1 {
        return Err(EngineError::InvalidDomain(options.domain.0, options.domain.1));
    }
    let (owner, key) = resolve_entry(program, entry)?;
    let code = compile_program(program);
    Ok(machine::Machine::new(program, &code, options).run(owner, &key))
}

/// Compile and run in one step.
pub fn run_source(source: &str, entry: &str, options: &RunOptions) -> Result<RunResult, RunError> {
    let program = compile(source)?;
    Ok(run(&program, entry, options)?)
}
