//! Stack machine with choice points and trail-based backtracking.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};
use std::rc::Rc;

use super::code::{Code, CodeMap, Instr};
use super::render::View;
use super::tree::{ExecTree, TreeNodeKind};
use super::{
    AltRecord, ChoiceKind, ChoiceRecord, LabelMode, LabeledSolution, Outcome, RunOptions,
    RunResult, SearchMode, Solution, StructEqAssertion,
};
use crate::classes::{ClassTable, FieldId, MethodImpl, MethodKey, Ty, TypeId};
use crate::constraints::{Constraint, ConstraintStore, ObjectKind, SolverContext, StoreMark, Verdict};
use crate::frontend::CheckedProgram;
use crate::sym::{
    fresh_free_object, materialize_field, Addr, Heap, Part, SymBool, SymInt, TrailMark, Value, VarId,
    VarKind,
};

const NPE: &str = "NullPointerException";
const CCE: &str = "ClassCastException";

#[derive(Debug, Clone)]
pub(crate) struct Frame {
    code: Rc<Code>,
    pc: usize,
    locals: Vec<Value>,
    stack: Vec<Value>,
}

impl Hash for Frame {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.code.name.hash(state);
        self.pc.hash(state);
        self.locals.hash(state);
        self.stack.hash(state);
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Resume {
    Nothing,
    Push(Value),
    Jump(usize),
    Call {
        owner: TypeId,
        key: Rc<MethodKey>,
        receiver: Value,
        args: Vec<Value>,
    },
    Throw(&'static str),
}

#[derive(Debug, Clone)]
pub(crate) struct Alternative {
    pub constraints: Vec<Constraint>,
    pub resume: Resume,
    pub label: String,
    pub struct_eq: Option<StructEqAssertion>,
    pub owner: Option<TypeId>,
    pub type_set: Option<BTreeSet<TypeId>>,
}

impl Alternative {
    pub fn new(label: impl Into<String>, constraints: Vec<Constraint>, resume: Resume) -> Self {
        Alternative {
            constraints,
            resume,
            label: label.into(),
            struct_eq: None,
            owner: None,
            type_set: None,
        }
    }
}

/// What the decision is about, for the choice log.
#[derive(Debug, Clone, Default)]
pub(crate) struct Subject {
    pub obj: Option<Addr>,
    pub method: Option<MethodKey>,
    pub prior_set: Option<BTreeSet<TypeId>>,
    pub cast_target: Option<TypeId>,
}

struct ChoicePoint {
    frames: Vec<Frame>,
    heap_mark: TrailMark,
    store_mark: StoreMark,
    output_len: usize,
    steps: u64,
    struct_eq_len: usize,
    /// Untried alternatives, last one next.
    pending: Vec<Alternative>,
    node: usize,
    fingerprint: Option<u64>,
}

pub(crate) enum Leaf {
    Return(Value),
    Exception(&'static str),
}

pub(crate) enum Flow {
    Continue,
    Leaf(Leaf),
    Fail(String),
}

struct Ctx<'a> {
    heap: &'a Heap,
    universe: &'a BTreeSet<TypeId>,
    domain: (i128, i128),
}

impl SolverContext for Ctx<'_> {
    fn var_domain(&self, v: VarId) -> (i128, i128) {
        match self.heap.var(v).map(|i| i.kind) {
            Some(VarKind::Bool) => (0, 1),
            _ => self.domain,
        }
    }

    fn object_kind(&self, obj: Addr) -> ObjectKind {
        match self.heap.try_get(obj).and_then(|o| o.concrete) {
            Some(t) => ObjectKind::Concrete(t),
            None => ObjectKind::Free,
        }
    }

    fn universe(&self) -> &BTreeSet<TypeId> {
        self.universe
    }
}

pub(crate) struct Machine<'p> {
    pub(crate) table: &'p ClassTable,
    code: &'p CodeMap,
    opts: &'p RunOptions,
    universe: BTreeSet<TypeId>,
    frames: Vec<Frame>,
    pub(crate) heap: Heap,
    pub(crate) store: ConstraintStore,
    output: Vec<Rc<[Part]>>,
    steps: u64,
    struct_eq_log: Vec<StructEqAssertion>,
    choices: Vec<ChoicePoint>,
    tree: ExecTree,
    /// Where the next tree node hangs: parent node and edge label.
    edge: (usize, String),
    result: RunResult,
}

macro_rules! ctx {
    ($m:expr) => {
        Ctx {
            heap: &$m.heap,
            universe: &$m.universe,
            domain: ($m.opts.domain.0 as i128, $m.opts.domain.1 as i128),
        }
    };
}

impl<'p> Machine<'p> {
    pub fn new(program: &'p CheckedProgram, code: &'p CodeMap, opts: &'p RunOptions) -> Self {
        let table = &program.table;
        let universe = table
            .classes()
            .iter()
            .filter(|c| c.is_instantiable())
            .map(|c| c.id)
            .collect();
        let mut store = ConstraintStore::new();
        store.node_budget = opts.solver_budget;
        let mut tree = ExecTree::default();
        tree.add_node(TreeNodeKind::Root, "root");
        Machine {
            table,
            code,
            opts,
            universe,
            frames: Vec::new(),
            heap: Heap::new(),
            store,
            output: Vec::new(),
            steps: 0,
            struct_eq_log: Vec::new(),
            choices: Vec::new(),
            tree,
            edge: (0, String::new()),
            result: RunResult::default(),
        }
    }

    pub fn run(mut self, owner: TypeId, key: &MethodKey) -> RunResult {
        let fields = self
            .table
            .all_fields(owner)
            .into_iter()
            .map(|f| (f, Value::default_for(self.table.field(f).ty)))
            .collect();
        let receiver = self.heap.alloc_concrete(owner, fields);
        let mut flow = self.call(owner, key, Value::Ref(receiver), vec![]);
        loop {
            flow = match flow {
                Flow::Continue => self.step(),
                Flow::Leaf(leaf) => {
                    self.emit(leaf);
                    if self.opts.mode == SearchMode::One {
                        break;
                    }
                    match self.backtrack() {
                        Some(f) => f,
                        None => break,
                    }
                }
                Flow::Fail(reason) => {
                    if self.opts.record_tree {
                        let n = self.tree.add_node(TreeNodeKind::Fail, format!("FAIL: {reason}"));
                        self.link(n);
                    }
                    match self.backtrack() {
                        Some(f) => f,
                        None => break,
                    }
                }
            };
        }
        if self.opts.record_tree {
            self.result.tree = Some(std::mem::take(&mut self.tree));
        }
        self.result
    }

    fn link(&mut self, node: usize) {
        let (parent, label) = std::mem::take(&mut self.edge);
        self.tree.add_edge(parent, node, label);
    }

    fn note_incomplete(&mut self, message: String) {
        self.result.incomplete = true;
        if !self.result.diagnostics.contains(&message) {
            self.result.diagnostics.push(message);
        }
    }

    fn frame(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("active frame")
    }

    fn push(&mut self, v: Value) {
        self.frame().stack.push(v);
    }

    fn pop(&mut self) -> Value {
        self.frame().stack.pop().expect("operand")
    }

    fn pop_n(&mut self, n: usize) -> Vec<Value> {
        let stack = &mut self.frame().stack;
        stack.split_off(stack.len() - n)
    }

    fn pop_int(&mut self) -> SymInt {
        match self.pop() {
            Value::Int(i) => i,
            other => unreachable!("expected int operand, got {other:?}"),
        }
    }

    fn pop_bool(&mut self) -> SymBool {
        match self.pop() {
            Value::Bool(b) => b,
            other => unreachable!("expected boolean operand, got {other:?}"),
        }
    }

    fn step(&mut self) -> Flow {
        if self.steps >= self.opts.max_steps {
            self.note_incomplete(format!(
                "step limit of {} reached; branch abandoned",
                self.opts.max_steps
            ));
            return Flow::Fail("step limit".into());
        }
        self.steps += 1;
        self.result.stats.steps += 1;
        let frame = self.frames.last_mut().expect("active frame");
        let code = frame.code.clone();
        let instr = &code.instrs[frame.pc];
        frame.pc += 1;
        self.exec(instr, &code)
    }

    fn exec(&mut self, instr: &Instr, code: &Code) -> Flow {
        match instr {
            Instr::PushInt(v) => self.push(Value::int(*v as i128)),
            Instr::PushBool(b) => self.push(Value::bool(*b)),
            Instr::PushStr(s) => self.push(Value::Str(Rc::from(vec![Part::Text(s.clone())]))),
            Instr::PushNull => self.push(Value::Null),
            Instr::Load(slot) => {
                let v = self.frame().locals[*slot as usize].clone();
                self.push(v);
            }
            Instr::Store(slot) => {
                let v = self.pop();
                self.frame().locals[*slot as usize] = v;
            }
            Instr::Free(slot, ty) => {
                let v = match ty {
                    Ty::Int | Ty::Bool => self.heap.fresh_value(*ty, &code.local_names[*slot as usize]),
                    Ty::Ref(t) => {
                        match fresh_free_object(&mut self.heap, &mut self.store, self.table, *t) {
                            Some(a) => Value::Ref(a),
                            None => {
                                return Flow::Fail(format!(
                                    "no instantiable type for free {}",
                                    self.table.name(*t)
                                ))
                            }
                        }
                    }
                    Ty::Str | Ty::Null | Ty::Void => Value::Null,
                };
                self.frame().locals[*slot as usize] = v;
            }
            Instr::Default(slot, ty) => {
                self.frame().locals[*slot as usize] = Value::default_for(*ty);
            }
            Instr::GetField(field) => {
                let Value::Ref(addr) = self.pop() else {
                    return Flow::Leaf(Leaf::Exception(NPE));
                };
                match self.read_field(addr, *field) {
                    Some(v) => self.push(v),
                    None => return Flow::Fail("field materialization failed".into()),
                }
            }
            Instr::PutField(field) => {
                let value = self.pop();
                let Value::Ref(addr) = self.pop() else {
                    return Flow::Leaf(Leaf::Exception(NPE));
                };
                self.heap.write_field(addr, *field, value);
            }
            Instr::New(class, n) => {
                let args = self.pop_n(*n);
                let fields: BTreeMap<FieldId, Value> =
                    self.table.all_fields(*class).into_iter().zip(args).collect();
                let a = self.heap.alloc_concrete(*class, fields);
                self.push(Value::Ref(a));
            }
            Instr::Arith(op) => {
                let rhs = self.pop_int();
                let lhs = self.pop_int();
                self.push(Value::Int(SymInt::apply(*op, lhs, rhs)));
            }
            Instr::Neg => {
                let v = self.pop_int();
                self.push(Value::Int(SymInt::negation(v)));
            }
            Instr::Not => {
                let b = self.pop_bool();
                self.push(Value::Bool(b.not()));
            }
            Instr::Concat => {
                let rhs = self.pop();
                let lhs = self.pop();
                let mut parts = lhs.to_parts();
                parts.extend(rhs.to_parts());
                self.push(Value::Str(Rc::from(parts)));
            }
            Instr::Compare(rel) => {
                let rhs = self.pop_int();
                let lhs = self.pop_int();
                self.push(Value::Bool(SymBool::compare(*rel, lhs, rhs)));
            }
            Instr::RefEq { negated } => {
                let before = self.store.len();
                let rhs = self.pop();
                let lhs = self.pop();
                let same = match (&lhs, &rhs) {
                    (Value::Ref(a), Value::Ref(b)) => a == b,
                    (Value::Null, Value::Null) => true,
                    _ => false,
                };
                self.push(Value::bool(same != *negated));
                self.result.stats.ref_eq_evals += 1;
                if self.store.len() != before {
                    self.result.stats.ref_eq_store_changes += 1;
                }
            }
            Instr::StructEq => {
                let rhs = self.pop();
                let lhs = self.pop();
                return self.struct_eq(lhs, rhs);
            }
            Instr::Cast { target, valid } => return self.type_op(*target, *valid, true),
            Instr::InstanceOf { target, valid } => return self.type_op(*target, *valid, false),
            Instr::Invoke(key, n) => {
                let args = self.pop_n(*n);
                let receiver = self.pop();
                return self.invoke(key, receiver, args);
            }
            Instr::JumpIfFalse(target) => {
                let cond = self.pop_bool();
                return self.branch(cond, *target);
            }
            Instr::Jump(target) => self.frame().pc = *target,
            Instr::Return => {
                let v = self.pop();
                self.frames.pop();
                match self.frames.last_mut() {
                    Some(caller) => caller.stack.push(v),
                    None => return Flow::Leaf(Leaf::Return(v)),
                }
            }
            Instr::ReturnVoid => {
                self.frames.pop();
                if self.frames.is_empty() {
                    return Flow::Leaf(Leaf::Return(Value::Void));
                }
            }
            Instr::Fail => return Flow::Fail("fail()".into()),
            Instr::Println => {
                let v = self.pop();
                self.output.push(Rc::from(v.to_parts()));
            }
            Instr::Pop => {
                self.pop();
            }
        }
        Flow::Continue
    }

    pub(crate) fn read_field(&mut self, addr: Addr, field: FieldId) -> Option<Value> {
        materialize_field(&mut self.heap, &mut self.store, self.table, addr, field)
    }

    pub(crate) fn opts_structeq_depth(&self) -> usize {
        self.opts.max_structeq_depth
    }

    pub(crate) fn effective_set(&self, addr: Addr) -> BTreeSet<TypeId> {
        self.store.effective_set(addr, &ctx!(self))
    }

    fn call(&mut self, owner: TypeId, key: &MethodKey, receiver: Value, args: Vec<Value>) -> Flow {
        let sig = self
            .table
            .class(owner)
            .method(key)
            .expect("dispatch lands on a declared method");
        match sig.imp {
            MethodImpl::Source => {
                let code = self.code[&(owner, key.clone())].clone();
                let mut locals = vec![Value::Void; code.num_locals.max(1)];
                locals[0] = receiver;
                for (i, a) in args.into_iter().enumerate() {
                    locals[i + 1] = a;
                }
                self.frames.push(Frame {
                    code,
                    pc: 0,
                    locals,
                    stack: Vec::new(),
                });
            }
            MethodImpl::BuiltinToString => {
                let Value::Ref(addr) = receiver else {
                    return Flow::Leaf(Leaf::Exception(NPE));
                };
                let mut parts = vec![Part::Text(Rc::from(format!("{}{{", self.table.name(owner))))];
                for (i, f) in self.table.all_fields(owner).into_iter().enumerate() {
                    let Some(v) = self.read_field(addr, f) else {
                        return Flow::Fail("field materialization failed".into());
                    };
                    let sep = if i == 0 { "" } else { "," };
                    parts.push(Part::Text(Rc::from(format!("{sep}{}=", self.table.field(f).name))));
                    parts.extend(v.to_parts());
                }
                parts.push(Part::Text(Rc::from("}")));
                self.push(Value::Str(Rc::from(parts)));
            }
            MethodImpl::BuiltinEquals => {
                let same = matches!((&receiver, &args[0]), (Value::Ref(a), Value::Ref(b)) if a == b);
                self.push(Value::bool(same));
            }
            MethodImpl::Abstract => unreachable!("abstract method selected for execution"),
        }
        Flow::Continue
    }

    fn invoke(&mut self, key: &Rc<MethodKey>, receiver: Value, args: Vec<Value>) -> Flow {
        let Value::Ref(addr) = receiver else {
            return Flow::Leaf(Leaf::Exception(NPE));
        };
        if let Some(t) = self.heap.get(addr).concrete {
            let owner = self
                .table
                .dispatch_target(t, key)
                .expect("typecheck guarantees an implementation");
            return self.call(owner, key, receiver, args);
        }
        let candidates = self.effective_set(addr);
        let owners = self
            .table
            .implementations(&candidates, key)
            .expect("typecheck guarantees an implementation");
        let alternatives = owners
            .into_iter()
            .map(|owner| {
                let set = self
                    .table
                    .instance_types_for(owner, key, &candidates)
                    .expect("owner has a body");
                let mut alt = Alternative::new(
                    format!("{}.{}", self.table.name(owner), key.name),
                    vec![Constraint::TypeSet {
                        obj: addr,
                        allowed: set.clone(),
                    }],
                    Resume::Call {
                        owner,
                        key: key.clone(),
                        receiver: receiver.clone(),
                        args: args.clone(),
                    },
                );
                alt.owner = Some(owner);
                alt.type_set = Some(set);
                alt
            })
            .collect();
        let subject = Subject {
            obj: Some(addr),
            method: Some((**key).clone()),
            prior_set: Some(candidates),
            cast_target: None,
        };
        self.decide(ChoiceKind::Dispatch, subject, alternatives)
    }

    fn branch(&mut self, cond: SymBool, else_pc: usize) -> Flow {
        match cond {
            SymBool::Const(true) => Flow::Continue,
            SymBool::Const(false) => {
                self.frame().pc = else_pc;
                Flow::Continue
            }
            rel => {
                let yes = rel.as_constraint().expect("relation");
                let no = rel.not().as_constraint().expect("relation");
                let alternatives = vec![
                    Alternative::new("TRUE", vec![yes], Resume::Nothing),
                    Alternative::new("FALSE", vec![no], Resume::Jump(else_pc)),
                ];
                self.decide(ChoiceKind::Cond, Subject::default(), alternatives)
            }
        }
    }

    fn type_op(&mut self, target: TypeId, valid: bool, is_cast: bool) -> Flow {
        let v = self.pop();
        let fail_resume = || {
            if is_cast {
                Resume::Throw(CCE)
            } else {
                Resume::Push(Value::bool(false))
            }
        };
        let ok_resume = |v: &Value| {
            if is_cast {
                Resume::Push(v.clone())
            } else {
                Resume::Push(Value::bool(true))
            }
        };
        let resolved = |r: Resume, m: &mut Self| match r {
            Resume::Throw(e) => Flow::Leaf(Leaf::Exception(e)),
            Resume::Push(v) => {
                m.push(v);
                Flow::Continue
            }
            _ => unreachable!(),
        };
        if !valid {
            return resolved(fail_resume(), self);
        }
        let addr = match v {
            Value::Ref(a) => a,
            // a null reference passes every cast and is never an instance
            _ => {
                let r = if is_cast { Resume::Push(Value::Null) } else { fail_resume() };
                return resolved(r, self);
            }
        };
        if let Some(t) = self.heap.get(addr).concrete {
            let r = if self.table.is_subtype(t, target) {
                ok_resume(&v)
            } else {
                fail_resume()
            };
            return resolved(r, self);
        }
        let s = self.effective_set(addr);
        let u = self.table.relevant_types(target).expect("known type");
        let inside: BTreeSet<TypeId> = s.intersection(&u).copied().collect();
        let outside: BTreeSet<TypeId> = s.difference(&u).copied().collect();
        let mut ok = Alternative::new(
            format!("{} ok", self.table.name(target)),
            vec![Constraint::TypeSet {
                obj: addr,
                allowed: inside.clone(),
            }],
            ok_resume(&v),
        );
        ok.type_set = Some(inside);
        let mut bad = Alternative::new(
            format!("not {}", self.table.name(target)),
            vec![Constraint::TypeSet {
                obj: addr,
                allowed: outside.clone(),
            }],
            fail_resume(),
        );
        bad.type_set = Some(outside);
        let subject = Subject {
            obj: Some(addr),
            method: None,
            prior_set: Some(s),
            cast_target: Some(target),
        };
        self.decide(ChoiceKind::TypeOp, subject, vec![ok, bad])
    }

    fn struct_eq(&mut self, lhs: Value, rhs: Value) -> Flow {
        let (pos, neg) = match self.struct_eq_expand(&lhs, &rhs) {
            Ok(dnf) => dnf,
            Err(reason) => {
                self.note_incomplete(reason.clone());
                return Flow::Fail(reason);
            }
        };
        let as_addr = |v: &Value| match v {
            Value::Ref(a) => Some(*a),
            _ => None,
        };
        let assertion = |holds| StructEqAssertion {
            lhs: as_addr(&lhs),
            rhs: as_addr(&rhs),
            holds,
        };
        let mut alternatives = Vec::new();
        for (i, conj) in pos.into_iter().enumerate() {
            let mut alt = Alternative::new(format!("TRUE#{i}"), conj, Resume::Push(Value::bool(true)));
            alt.struct_eq = Some(assertion(true));
            alternatives.push(alt);
        }
        for (i, conj) in neg.into_iter().enumerate() {
            let mut alt = Alternative::new(format!("FALSE#{i}"), conj, Resume::Push(Value::bool(false)));
            alt.struct_eq = Some(assertion(false));
            alternatives.push(alt);
        }
        self.decide(ChoiceKind::StructEq, Subject::default(), alternatives)
    }

    /// Filter alternatives by consistency, then either fail, continue
    /// deterministically, or open a choice point.
    fn decide(&mut self, kind: ChoiceKind, subject: Subject, alternatives: Vec<Alternative>) -> Flow {
        let mut viable = Vec::new();
        let mut records = Vec::new();
        for alt in alternatives {
            let ok = if alt.constraints.is_empty() {
                true
            } else {
                let mark = self.store.mark();
                for c in &alt.constraints {
                    self.store.add(c.clone());
                }
                let verdict = self.store.check(&ctx!(self));
                self.store.pop_to_mark(&mark).expect("fresh mark");
                if verdict == Verdict::Unknown {
                    self.note_incomplete("solver budget exhausted; branch kept unverified".into());
                }
                verdict.may_hold()
            };
            if self.opts.record_choices {
                records.push(AltRecord {
                    label: alt.label.clone(),
                    owner: alt.owner,
                    type_set: alt.type_set.clone(),
                    constraints: alt.constraints.clone(),
                    viable: ok,
                });
            }
            if ok {
                viable.push(alt);
            }
        }
        if self.opts.record_choices {
            self.result.choices.push(ChoiceRecord {
                kind,
                subject: subject.obj,
                method: subject.method.clone(),
                prior_set: subject.prior_set.clone(),
                cast_target: subject.cast_target,
                alternatives: records,
            });
        }
        match viable.len() {
            0 => Flow::Fail(format!("{} has no consistent alternative", kind.name())),
            1 => {
                let alt = viable.pop().unwrap();
                self.apply(alt)
            }
            _ => {
                self.result.stats.choice_points += 1;
                let node = if self.opts.record_tree {
                    let label = match (&subject.obj, &subject.method) {
                        (Some(o), Some(m)) => format!("{} {o}.{}", kind.name(), m.name),
                        (Some(o), None) => format!("{} {o}", kind.name()),
                        _ => kind.name().to_string(),
                    };
                    let n = self.tree.add_node(TreeNodeKind::Choice, label);
                    self.link(n);
                    n
                } else {
                    0
                };
                let first = viable.remove(0);
                viable.reverse();
                let store_mark = self.store.mark();
                let mut cp = ChoicePoint {
                    frames: self.frames.clone(),
                    heap_mark: self.heap.mark(),
                    store_mark,
                    output_len: self.output.len(),
                    steps: self.steps,
                    struct_eq_len: self.struct_eq_log.len(),
                    pending: viable,
                    node,
                    fingerprint: None,
                };
                if self.opts.verify_restoration {
                    cp.fingerprint = Some(self.fingerprint());
                }
                self.choices.push(cp);
                self.enter(node, &first);
                self.apply(first)
            }
        }
    }

    fn enter(&mut self, node: usize, alt: &Alternative) {
        if self.opts.record_tree {
            let names = |t: TypeId| self.table.name(t).to_string();
            let dumped: Vec<String> = alt.constraints.iter().map(|c| c.dump(&names)).collect();
            let label = if dumped.is_empty() {
                alt.label.clone()
            } else {
                format!("{}: {}", alt.label, dumped.join(" ∧ "))
            };
            self.edge = (node, label);
        }
    }

    /// Install an alternative that is known to be consistent.
    fn apply(&mut self, alt: Alternative) -> Flow {
        for c in alt.constraints {
            // a type set that does not narrow anything adds nothing
            if let Constraint::TypeSet { obj, allowed } = &c {
                if self.effective_set(*obj).is_subset(allowed) {
                    continue;
                }
            }
            self.store.add(c);
        }
        if let Some(a) = alt.struct_eq {
            self.struct_eq_log.push(a);
        }
        match alt.resume {
            Resume::Nothing => Flow::Continue,
            Resume::Push(v) => {
                self.push(v);
                Flow::Continue
            }
            Resume::Jump(pc) => {
                self.frame().pc = pc;
                Flow::Continue
            }
            Resume::Call {
                owner,
                key,
                receiver,
                args,
            } => self.call(owner, &key, receiver, args),
            Resume::Throw(e) => Flow::Leaf(Leaf::Exception(e)),
        }
    }

    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.frames.hash(&mut h);
        self.heap.hash_contents(&mut h);
        self.store.constraints().hash(&mut h);
        self.output.hash(&mut h);
        self.steps.hash(&mut h);
        self.struct_eq_log.len().hash(&mut h);
        h.finish()
    }

    /// Restore the newest choice point and take its next alternative.
    /// `None` once the whole tree is explored.
    fn backtrack(&mut self) -> Option<Flow> {
        let cp = self.choices.last_mut()?;
        let alt = cp.pending.pop().expect("choice points keep an untried alternative");
        self.heap.undo_to(cp.heap_mark);
        self.store.reset_to_mark(&cp.store_mark).expect("live mark");
        self.output.truncate(cp.output_len);
        self.steps = cp.steps;
        self.struct_eq_log.truncate(cp.struct_eq_len);
        let node = cp.node;
        let expected = cp.fingerprint;
        if cp.pending.is_empty() {
            let cp = self.choices.pop().unwrap();
            self.store.pop_to_mark(&cp.store_mark).expect("live mark");
            self.frames = cp.frames;
        } else {
            self.frames = cp.frames.clone();
        }
        if let Some(expected) = expected {
            self.result.stats.restoration_checks += 1;
            if self.fingerprint() != expected {
                self.result.stats.restoration_mismatches += 1;
            }
        }
        self.result.stats.backtracks += 1;
        self.enter(node, &alt);
        Some(self.apply(alt))
    }

    fn emit(&mut self, leaf: Leaf) {
        let ctx = ctx!(self);
        let view = View {
            table: self.table,
            heap: &self.heap,
            store: &self.store,
            ctx: &ctx,
            assignment: None,
        };
        let outcome_of = |view: &View, leaf: &Leaf| match leaf {
            Leaf::Return(v) => Outcome::Return(view.value(v)),
            Leaf::Exception(e) => Outcome::Exception(e.to_string()),
        };
        let outcome = outcome_of(&view, &leaf);
        let output: Vec<String> = self.output.iter().map(|p| view.parts(p)).collect();
        let names = |t: TypeId| self.table.name(t).to_string();

        let mut labelings = Vec::new();
        let mut truncated = false;
        if self.opts.labeling != LabelMode::Off {
            let objects: Vec<Addr> = self
                .heap
                .objects()
                .filter(|o| o.is_free())
                .map(|o| o.addr)
                .collect();
            let mut vars = BTreeSet::new();
            for c in self.store.constraints() {
                c.vars(&mut vars);
            }
            if let Leaf::Return(v) = &leaf {
                v.collect_vars(&mut vars);
            }
            for line in &self.output {
                Value::Str(line.clone()).collect_vars(&mut vars);
            }
            let vars: Vec<VarId> = vars.into_iter().collect();
            let max = match self.opts.labeling {
                LabelMode::First => 1,
                _ => self.opts.max_labelings,
            };
            let labeling = self.store.label(&ctx, &objects, &vars, max);
            truncated = labeling.truncated;
            if labeling.verdict == Verdict::Unknown {
                self.result.incomplete = true;
                self.result
                    .diagnostics
                    .push("solver budget exhausted while labeling".into());
            }
            for a in labeling.assignments {
                let lv = View {
                    assignment: Some(&a),
                    ..view
                };
                labelings.push(LabeledSolution {
                    bindings: lv.bindings(&a),
                    outcome: outcome_of(&lv, &leaf),
                    output: self.output.iter().map(|p| lv.parts(p)).collect(),
                    assignment: a.clone(),
                });
            }
        }
        let solution = Solution {
            constraints: self.store.dump(&names),
            residual: self.store.constraints().to_vec(),
            outcome,
            output,
            labelings,
            labelings_truncated: truncated,
            struct_eq: self.struct_eq_log.clone(),
            heap: self.opts.capture_heap.then(|| self.heap.clone()),
        };
        if self.opts.record_tree {
            let n = self
                .tree
                .add_node(TreeNodeKind::Solution, solution.outcome.to_string());
            self.link(n);
        }
        self.result.solutions.push(solution);
    }
}
