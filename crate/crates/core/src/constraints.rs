//! Constraint store with arithmetic, applicable-type and type-equality
//! constraints, mark/undo, consistency checking and labeling.
//!
//! Satisfiability is decided by bounded enumeration. Every integer variable
//! ranges over a finite domain and every free object over its effective
//! type set, so a depth-first search over those slots is a complete
//! decision procedure. The store is split into independent components
//! first, which keeps the search small for typical guest programs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

use crate::classes::TypeId;
use crate::sym::{relation_holds, Addr, Rel, SymInt, VarId};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Constraint {
    Arith { rel: Rel, lhs: SymInt, rhs: SymInt },
    /// The object's concrete type is one of `allowed`.
    TypeSet { obj: Addr, allowed: BTreeSet<TypeId> },
    /// The two objects have the same concrete type, or different ones when
    /// `negated` is set.
    TypeEq { a: Addr, b: Addr, negated: bool },
}

impl Constraint {
    pub fn arith(rel: Rel, lhs: SymInt, rhs: SymInt) -> Constraint {
        Constraint::Arith { rel, lhs, rhs }
    }

    /// `Some(b)` when the constraint has no variables or objects to decide.
    pub fn ground_truth(&self) -> Option<bool> {
        match self {
            Constraint::Arith { rel, lhs, rhs } => {
                let mut vars = BTreeSet::new();
                lhs.collect_vars(&mut vars);
                rhs.collect_vars(&mut vars);
                if vars.is_empty() {
                    relation_holds(*rel, lhs, rhs, &|_| None).ok()
                } else {
                    None
                }
            }
            Constraint::TypeSet { allowed, .. } if allowed.is_empty() => Some(false),
            Constraint::TypeEq { a, b, negated } if a == b => Some(!negated),
            _ => None,
        }
    }

    /// Logical negation. Negating a type set needs the object's current
    /// effective set, because the complement is taken within it.
    pub fn negated(&self, effective: &BTreeSet<TypeId>) -> Constraint {
        match self {
            Constraint::Arith { rel, lhs, rhs } => Constraint::Arith {
                rel: rel.negate(),
                lhs: lhs.clone(),
                rhs: rhs.clone(),
            },
            Constraint::TypeSet { obj, allowed } => Constraint::TypeSet {
                obj: *obj,
                allowed: effective.difference(allowed).copied().collect(),
            },
            Constraint::TypeEq { a, b, negated } => Constraint::TypeEq {
                a: *a,
                b: *b,
                negated: !negated,
            },
        }
    }

    pub fn objects(&self) -> Vec<Addr> {
        match self {
            Constraint::Arith { .. } => vec![],
            Constraint::TypeSet { obj, .. } => vec![*obj],
            Constraint::TypeEq { a, b, .. } => vec![*a, *b],
        }
    }

    pub fn vars(&self, out: &mut BTreeSet<VarId>) {
        if let Constraint::Arith { lhs, rhs, .. } = self {
            lhs.collect_vars(out);
            rhs.collect_vars(out);
        }
    }

    /// One-line debug form; `names` renders type ids.
    pub fn dump(&self, names: &dyn Fn(TypeId) -> String) -> String {
        match self {
            Constraint::Arith { rel, lhs, rhs } => {
                format!("ARITH {lhs} {} {rhs}", rel.symbol())
            }
            Constraint::TypeSet { obj, allowed } => {
                let list: Vec<String> = allowed.iter().map(|t| names(*t)).collect();
                format!("TYPESET {obj}∈{{{}}}", list.join(","))
            }
            Constraint::TypeEq { a, b, negated: false } => format!("TYPEEQ {a} {b}"),
            Constraint::TypeEq { a, b, negated: true } => format!("TYPENEQ {a} {b}"),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump(&|t| format!("#{}", t.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Consistent,
    Inconsistent,
    /// The search budget ran out before a decision was reached.
    Unknown,
}

impl Verdict {
    /// `Unknown` counts as possibly consistent.
    pub fn may_hold(self) -> bool {
        !matches!(self, Verdict::Inconsistent)
    }
}

/// How an object referenced by a constraint relates to the heap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectKind {
    Concrete(TypeId),
    Free,
}

/// Facts about variables and objects that live outside the store.
pub trait SolverContext {
    /// Inclusive bounds of a variable's domain.
    fn var_domain(&self, v: VarId) -> (i128, i128);
    fn object_kind(&self, obj: Addr) -> ObjectKind;
    /// Instantiable types, used for free objects without type-set constraints.
    fn universe(&self) -> &BTreeSet<TypeId>;
}

/// A self-contained context, convenient for tests and tools.
#[derive(Debug, Clone, Default)]
pub struct SimpleContext {
    pub domain: (i128, i128),
    pub var_domains: BTreeMap<VarId, (i128, i128)>,
    pub concrete: BTreeMap<Addr, TypeId>,
    pub universe: BTreeSet<TypeId>,
}

impl SolverContext for SimpleContext {
    fn var_domain(&self, v: VarId) -> (i128, i128) {
        self.var_domains.get(&v).copied().unwrap_or(self.domain)
    }

    fn object_kind(&self, obj: Addr) -> ObjectKind {
        match self.concrete.get(&obj) {
            Some(t) => ObjectKind::Concrete(*t),
            None => ObjectKind::Free,
        }
    }

    fn universe(&self) -> &BTreeSet<TypeId> {
        &self.universe
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("mark belongs to a different constraint store")]
    ForeignMark,
    #[error("mark was already popped")]
    StaleMark,
}

/// Backtracking token returned by [`ConstraintStore::mark`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreMark {
    store: u64,
    depth: usize,
    serial: u64,
}

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

/// One concrete choice for every requested slot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment {
    pub types: BTreeMap<Addr, TypeId>,
    pub ints: BTreeMap<VarId, i128>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    pub assignments: Vec<Assignment>,
    /// Enumeration stopped at the requested maximum.
    pub truncated: bool,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct ConstraintStore {
    id: u64,
    items: Vec<Constraint>,
    /// (length at mark time, serial)
    marks: Vec<(usize, u64)>,
    next_serial: u64,
    /// Search nodes allowed per component before giving up with `Unknown`.
    pub node_budget: u64,
}

impl Default for ConstraintStore {
    fn default() -> Self {
        ConstraintStore::new()
    }
}

impl PartialEq for ConstraintStore {
    fn eq(&self, other: &Self) -> bool {
        self.items == other.items
    }
}

impl ConstraintStore {
    pub fn new() -> Self {
        ConstraintStore {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            items: Vec::new(),
            marks: Vec::new(),
            next_serial: 0,
            node_budget: 5_000_000,
        }
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Append without checking.
    pub fn add(&mut self, c: Constraint) {
        self.items.push(c);
    }

    /// Append and report whether the store is still satisfiable. On
    /// `Inconsistent` the constraint stays until the caller pops it.
    pub fn impose(&mut self, c: Constraint, ctx: &dyn SolverContext) -> Verdict {
        self.items.push(c);
        self.check(ctx)
    }

    pub fn mark(&mut self) -> StoreMark {
        let serial = self.next_serial;
        self.next_serial += 1;
        self.marks.push((self.items.len(), serial));
        StoreMark {
            store: self.id,
            depth: self.marks.len(),
            serial,
        }
    }

    fn validate(&self, mark: &StoreMark) -> Result<usize, StoreError> {
        if mark.store != self.id {
            return Err(StoreError::ForeignMark);
        }
        match self.marks.get(mark.depth.wrapping_sub(1)) {
            Some(&(len, serial)) if serial == mark.serial => Ok(len),
            _ => Err(StoreError::StaleMark),
        }
    }

    /// Remove everything imposed since `mark`, together with the mark and
    /// any marks taken after it.
    pub fn pop_to_mark(&mut self, mark: &StoreMark) -> Result<(), StoreError> {
        let len = self.validate(mark)?;
        self.items.truncate(len);
        self.marks.truncate(mark.depth - 1);
        Ok(())
    }

    /// Like [`pop_to_mark`](Self::pop_to_mark) but keeps `mark` usable.
    pub fn reset_to_mark(&mut self, mark: &StoreMark) -> Result<(), StoreError> {
        let len = self.validate(mark)?;
        self.items.truncate(len);
        self.marks.truncate(mark.depth);
        Ok(())
    }

    /// Intersection of the object's type sets, or its concrete type.
    pub fn effective_set(&self, obj: Addr, ctx: &dyn SolverContext) -> BTreeSet<TypeId> {
        if let ObjectKind::Concrete(t) = ctx.object_kind(obj) {
            return [t].into();
        }
        let mut set = ctx.universe().clone();
        for c in &self.items {
            if let Constraint::TypeSet { obj: o, allowed } = c {
                if *o == obj {
                    set.retain(|t| allowed.contains(t));
                }
            }
        }
        set
    }

    pub fn dump(&self, names: &dyn Fn(TypeId) -> String) -> Vec<String> {
        self.items.iter().map(|c| c.dump(names)).collect()
    }

    pub fn check(&self, ctx: &dyn SolverContext) -> Verdict {
        check_constraints(&self.items, ctx, self.node_budget)
    }

    /// Enumerate assignments to `objects` and `vars` that extend to a
    /// solution of the whole store. Types vary slowest: objects in the
    /// given order with types in declaration order, then integers
    /// ascending. Slots outside the targets are only checked for existence.
    pub fn label(
        &self,
        ctx: &dyn SolverContext,
        objects: &[Addr],
        vars: &[VarId],
        max: usize,
    ) -> Labeling {
        label_constraints(&self.items, ctx, objects, vars, max, self.node_budget)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Slot {
    Obj(Addr),
    Var(VarId),
}

struct Problem<'c> {
    slots: Vec<Slot>,
    domains: Vec<Vec<i128>>,
    /// Each check with the slot indices it reads.
    checks: Vec<(&'c Constraint, Vec<usize>)>,
}

struct Search<'p, 'c> {
    p: &'p Problem<'c>,
    var_index: HashMap<VarId, usize>,
    obj_index: HashMap<Addr, usize>,
    /// Checks to run once the slot at each depth is assigned.
    trigger: Vec<Vec<usize>>,
    values: Vec<i128>,
    nodes: u64,
    budget: u64,
}

enum Stop {
    Budget,
    Enough,
}

impl<'p, 'c> Search<'p, 'c> {
    fn new(p: &'p Problem<'c>, order: &[usize], budget: u64) -> Self {
        let position: HashMap<usize, usize> =
            order.iter().enumerate().map(|(pos, &s)| (s, pos)).collect();
        let mut trigger = vec![Vec::new(); order.len()];
        for (ci, (_, deps)) in p.checks.iter().enumerate() {
            let at = deps.iter().map(|d| position[d]).max().unwrap_or(0);
            trigger[at].push(ci);
        }
        let mut var_index = HashMap::new();
        let mut obj_index = HashMap::new();
        for (pos, &s) in order.iter().enumerate() {
            match p.slots[s] {
                Slot::Var(v) => var_index.insert(v, pos),
                Slot::Obj(o) => obj_index.insert(o, pos),
            };
        }
        Search {
            p,
            var_index,
            obj_index,
            trigger,
            values: vec![0; order.len()],
            nodes: 0,
            budget,
        }
    }

    fn holds(&self, check: usize) -> bool {
        let env = |v: VarId| self.var_index.get(&v).map(|&i| self.values[i]);
        match self.p.checks[check].0 {
            Constraint::Arith { rel, lhs, rhs } => relation_holds(*rel, lhs, rhs, &env).unwrap_or(false),
            Constraint::TypeSet { obj, allowed } => {
                allowed.contains(&TypeId(self.values[self.obj_index[obj]] as u32))
            }
            Constraint::TypeEq { a, b, negated } => {
                let same = self.values[self.obj_index[a]] == self.values[self.obj_index[b]];
                same != *negated
            }
        }
    }

    /// Depth-first search from `depth`; `visit` is called on each complete
    /// assignment (at `limit`) and returns whether to keep going.
    fn run(
        &mut self,
        depth: usize,
        order: &[usize],
        limit: usize,
        visit: &mut dyn FnMut(&mut Self) -> Result<bool, Stop>,
    ) -> Result<(), Stop> {
        if depth == limit {
            return if visit(self)? { Ok(()) } else { Err(Stop::Enough) };
        }
        let slot = order[depth];
        for &value in &self.p.domains[slot] {
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(Stop::Budget);
            }
            self.values[depth] = value;
            if self.trigger[depth].iter().all(|&c| self.holds(c)) {
                self.run(depth + 1, order, limit, visit)?;
            }
        }
        Ok(())
    }

    /// Whether the slots from `depth` on can be completed.
    fn exists(&mut self, depth: usize, order: &[usize]) -> Result<bool, Stop> {
        let mut found = false;
        match self.run(depth, order, order.len(), &mut |_| {
            found = true;
            Ok(false)
        }) {
            Ok(()) | Err(Stop::Enough) => Ok(found),
            Err(Stop::Budget) => Err(Stop::Budget),
        }
    }
}

fn build_problem<'c>(items: &'c [Constraint], ctx: &dyn SolverContext) -> Result<Problem<'c>, ()> {
    let mut index: BTreeMap<Slot, usize> = BTreeMap::new();
    let mut slots = Vec::new();
    let mut checks = Vec::new();
    let mut intern = |s: Slot, slots: &mut Vec<Slot>| {
        *index.entry(s).or_insert_with(|| {
            slots.push(s);
            slots.len() - 1
        })
    };
    for c in items {
        match c.ground_truth() {
            Some(true) => continue,
            Some(false) => return Err(()),
            None => {}
        }
        let mut deps = Vec::new();
        let mut vars = BTreeSet::new();
        c.vars(&mut vars);
        for v in vars {
            deps.push(intern(Slot::Var(v), &mut slots));
        }
        for o in c.objects() {
            deps.push(intern(Slot::Obj(o), &mut slots));
        }
        deps.sort_unstable();
        deps.dedup();
        checks.push((c, deps));
    }
    let domains = slots
        .iter()
        .map(|s| slot_domain(*s, items, ctx))
        .collect();
    Ok(Problem {
        slots,
        domains,
        checks,
    })
}

fn slot_domain(slot: Slot, items: &[Constraint], ctx: &dyn SolverContext) -> Vec<i128> {
    match slot {
        Slot::Var(v) => {
            let (lo, hi) = ctx.var_domain(v);
            (lo..=hi).collect()
        }
        Slot::Obj(o) => {
            // type sets are also kept as checks, so the plain universe would
            // be correct too; pre-filtering just shrinks the search
            let set = match ctx.object_kind(o) {
                ObjectKind::Concrete(t) => [t].into(),
                ObjectKind::Free => {
                    let mut set = ctx.universe().clone();
                    for c in items {
                        if let Constraint::TypeSet { obj, allowed } = c {
                            if *obj == o {
                                set.retain(|t| allowed.contains(t));
                            }
                        }
                    }
                    set
                }
            };
            set.into_iter().map(|t| t.0 as i128).collect()
        }
    }
}

/// Connected components of slots linked by shared checks, each listed in
/// ascending slot order.
fn components(p: &Problem) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..p.slots.len()).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut y = x;
        while parent[y] != r {
            let next = parent[y];
            parent[y] = r;
            y = next;
        }
        r
    }
    for (_, deps) in &p.checks {
        for w in deps.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for s in 0..p.slots.len() {
        let root = find(&mut parent, s);
        groups.entry(root).or_default().push(s);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

fn sub_problem<'c>(p: &Problem<'c>, comp: &[usize]) -> Problem<'c> {
    let remap: HashMap<usize, usize> = comp.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    Problem {
        slots: comp.iter().map(|&s| p.slots[s]).collect(),
        domains: comp.iter().map(|&s| p.domains[s].clone()).collect(),
        checks: p
            .checks
            .iter()
            .filter(|(_, deps)| deps.first().is_some_and(|d| remap.contains_key(d)))
            .map(|(c, deps)| (*c, deps.iter().map(|d| remap[d]).collect()))
            .collect(),
    }
}

/// Free objects must have a non-empty effective set even when no other
/// constraint mentions them.
fn free_objects_nonempty(items: &[Constraint], ctx: &dyn SolverContext) -> bool {
    let objs: BTreeSet<Addr> = items.iter().flat_map(|c| c.objects()).collect();
    objs.into_iter()
        .all(|o| !slot_domain(Slot::Obj(o), items, ctx).is_empty())
}

pub fn check_constraints(items: &[Constraint], ctx: &dyn SolverContext, budget: u64) -> Verdict {
    if !free_objects_nonempty(items, ctx) {
        return Verdict::Inconsistent;
    }
    let Ok(problem) = build_problem(items, ctx) else {
        return Verdict::Inconsistent;
    };
    let mut verdict = Verdict::Consistent;
    for comp in components(&problem) {
        let sub = sub_problem(&problem, &comp);
        let order: Vec<usize> = (0..sub.slots.len()).collect();
        let mut search = Search::new(&sub, &order, budget);
        match search.exists(0, &order) {
            Ok(true) => {}
            Ok(false) => return Verdict::Inconsistent,
            Err(_) => verdict = Verdict::Unknown,
        }
    }
    verdict
}

pub fn label_constraints(
    items: &[Constraint],
    ctx: &dyn SolverContext,
    objects: &[Addr],
    vars: &[VarId],
    max: usize,
    budget: u64,
) -> Labeling {
    let empty = |verdict| Labeling {
        assignments: vec![],
        truncated: false,
        verdict,
    };
    let verdict = check_constraints(items, ctx, budget);
    if verdict == Verdict::Inconsistent {
        return empty(verdict);
    }
    let Ok(mut problem) = build_problem(items, ctx) else {
        return empty(Verdict::Inconsistent);
    };
    // targets that no constraint mentions still need a slot
    let mut targets: Vec<usize> = Vec::new();
    let mut add_target = |s: Slot, problem: &mut Problem| {
        let idx = match problem.slots.iter().position(|x| *x == s) {
            Some(i) => i,
            None => {
                problem.slots.push(s);
                problem.domains.push(slot_domain(s, items, ctx));
                problem.slots.len() - 1
            }
        };
        if !targets.contains(&idx) {
            targets.push(idx);
        }
    };
    for &o in objects {
        add_target(Slot::Obj(o), &mut problem);
    }
    for &v in vars {
        add_target(Slot::Var(v), &mut problem);
    }
    // components without targets were already decided by the consistency
    // check, so only the ones touching a target take part
    let comps = components(&problem);
    let mut involved: Vec<usize> = comps
        .into_iter()
        .filter(|c| c.iter().any(|s| targets.contains(s)))
        .flatten()
        .collect();
    involved.sort_unstable();
    let sub = sub_problem(&problem, &involved);
    let remap: HashMap<usize, usize> = involved.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut order: Vec<usize> = targets.iter().map(|t| remap[t]).collect();
    let n_targets = order.len();
    for i in 0..sub.slots.len() {
        if !order.contains(&i) {
            order.push(i);
        }
    }

    let mut search = Search::new(&sub, &order, budget);
    let mut assignments = Vec::new();
    let mut truncated = false;
    let outcome = search.run(0, &order.clone(), n_targets, &mut |s: &mut Search| {
        if !s.exists(n_targets, &order)? {
            return Ok(true);
        }
        if assignments.len() >= max {
            truncated = true;
            return Ok(false);
        }
        let mut a = Assignment::default();
        for (&slot, &value) in order.iter().zip(&s.values).take(n_targets) {
            match sub.slots[slot] {
                Slot::Obj(o) => {
                    a.types.insert(o, TypeId(value as u32));
                }
                Slot::Var(v) => {
                    a.ints.insert(v, value);
                }
            }
        }
        assignments.push(a);
        Ok(true)
    });
    let verdict = match outcome {
        Err(Stop::Budget) => Verdict::Unknown,
        _ => verdict,
    };
    Labeling {
        assignments,
        truncated,
        verdict,
    }
}
