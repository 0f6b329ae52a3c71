//! Runtime value model: symbolic integers, values, and the heap of concrete
//! and free objects.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::rc::Rc;

use num_bigint::BigInt;

use crate::classes::{ClassTable, FieldId, Ty, TypeId};
use crate::constraints::{Constraint, ConstraintStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Addr(pub u32);

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
        }
    }

    pub fn checked(self, a: i128, b: i128) -> Option<i128> {
        match self {
            ArithOp::Add => a.checked_add(b),
            ArithOp::Sub => a.checked_sub(b),
            ArithOp::Mul => a.checked_mul(b),
        }
    }

    pub fn big(self, a: BigInt, b: BigInt) -> BigInt {
        match self {
            ArithOp::Add => a + b,
            ArithOp::Sub => a - b,
            ArithOp::Mul => a * b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rel {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Eq => "==",
            Rel::Ne => "!=",
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Gt => ">",
            Rel::Ge => ">=",
        }
    }

    pub fn negate(self) -> Rel {
        match self {
            Rel::Eq => Rel::Ne,
            Rel::Ne => Rel::Eq,
            Rel::Lt => Rel::Ge,
            Rel::Le => Rel::Gt,
            Rel::Gt => Rel::Le,
            Rel::Ge => Rel::Lt,
        }
    }

    pub fn holds<T: Ord>(self, a: T, b: T) -> bool {
        match self {
            Rel::Eq => a == b,
            Rel::Ne => a != b,
            Rel::Lt => a < b,
            Rel::Le => a <= b,
            Rel::Gt => a > b,
            Rel::Ge => a >= b,
        }
    }
}

/// Symbolic integer expression.
///
/// Construction through [`SymInt::apply`] folds constant operands; a
/// subtree containing a variable is never simplified, so `0 * x` stays as
/// written. A constant fold that would overflow `i128` keeps the node
/// unfolded and is evaluated exactly by the solver.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SymInt {
    Const(i128),
    Var { id: VarId, name: Rc<str> },
    Bin(ArithOp, Rc<SymInt>, Rc<SymInt>),
}

/// Integer evaluation failed because a variable had no value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Unbound(pub VarId);

impl SymInt {
    pub fn constant(v: i128) -> SymInt {
        SymInt::Const(v)
    }

    pub fn apply(op: ArithOp, lhs: SymInt, rhs: SymInt) -> SymInt {
        if let (SymInt::Const(a), SymInt::Const(b)) = (&lhs, &rhs) {
            if let Some(v) = op.checked(*a, *b) {
                return SymInt::Const(v);
            }
        }
        SymInt::Bin(op, Rc::new(lhs), Rc::new(rhs))
    }

    pub fn negation(e: SymInt) -> SymInt {
        SymInt::apply(ArithOp::Sub, SymInt::Const(0), e)
    }

    pub fn as_const(&self) -> Option<i128> {
        match self {
            SymInt::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<VarId>) {
        match self {
            SymInt::Const(_) => {}
            SymInt::Var { id, .. } => {
                out.insert(*id);
            }
            SymInt::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Fast path: `Ok(None)` signals i128 overflow somewhere in the tree.
    pub fn eval_i128(&self, env: &impl Fn(VarId) -> Option<i128>) -> Result<Option<i128>, Unbound> {
        Ok(match self {
            SymInt::Const(v) => Some(*v),
            SymInt::Var { id, .. } => Some(env(*id).ok_or(Unbound(*id))?),
            SymInt::Bin(op, a, b) => {
                let (Some(x), Some(y)) = (a.eval_i128(env)?, b.eval_i128(env)?) else {
                    return Ok(None);
                };
                op.checked(x, y)
            }
        })
    }

    pub fn eval_big(&self, env: &impl Fn(VarId) -> Option<i128>) -> Result<BigInt, Unbound> {
        Ok(match self {
            SymInt::Const(v) => BigInt::from(*v),
            SymInt::Var { id, .. } => BigInt::from(env(*id).ok_or(Unbound(*id))?),
            SymInt::Bin(op, a, b) => op.big(a.eval_big(env)?, b.eval_big(env)?),
        })
    }

    /// Exact value as a big integer.
    pub fn eval(&self, env: &impl Fn(VarId) -> Option<i128>) -> Result<BigInt, Unbound> {
        match self.eval_i128(env)? {
            Some(v) => Ok(BigInt::from(v)),
            None => self.eval_big(env),
        }
    }
}

impl fmt::Display for SymInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymInt::Const(v) => write!(f, "{v}"),
            SymInt::Var { name, .. } => f.write_str(name),
            SymInt::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

/// Decide `lhs rel rhs` exactly, falling back to big integers on overflow.
pub fn relation_holds(
    rel: Rel,
    lhs: &SymInt,
    rhs: &SymInt,
    env: &impl Fn(VarId) -> Option<i128>,
) -> Result<bool, Unbound> {
    match (lhs.eval_i128(env)?, rhs.eval_i128(env)?) {
        (Some(a), Some(b)) => Ok(rel.holds(a, b)),
        _ => Ok(rel.holds(lhs.eval_big(env)?, rhs.eval_big(env)?)),
    }
}

/// Symbolic boolean: a constant or a single relation over integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SymBool {
    Const(bool),
    Rel(Rel, SymInt, SymInt),
}

impl SymBool {
    pub fn compare(rel: Rel, lhs: SymInt, rhs: SymInt) -> SymBool {
        match (&lhs, &rhs) {
            (SymInt::Const(a), SymInt::Const(b)) => SymBool::Const(rel.holds(a, b)),
            // identical terms denote the same number under every assignment
            _ if lhs == rhs => SymBool::Const(rel.holds(0, 0)),
            _ => SymBool::Rel(rel, lhs, rhs),
        }
    }

    pub fn not(&self) -> SymBool {
        match self {
            SymBool::Const(b) => SymBool::Const(!b),
            SymBool::Rel(r, a, b) => SymBool::Rel(r.negate(), a.clone(), b.clone()),
        }
    }

    /// The arithmetic constraint asserting this boolean; `None` when constant.
    pub fn as_constraint(&self) -> Option<Constraint> {
        match self {
            SymBool::Const(_) => None,
            SymBool::Rel(rel, lhs, rhs) => Some(Constraint::Arith {
                rel: *rel,
                lhs: lhs.clone(),
                rhs: rhs.clone(),
            }),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<VarId>) {
        if let SymBool::Rel(_, a, b) = self {
            a.collect_vars(out);
            b.collect_vars(out);
        }
    }

    pub fn eval(&self, env: &impl Fn(VarId) -> Option<i128>) -> Result<bool, Unbound> {
        match self {
            SymBool::Const(b) => Ok(*b),
            SymBool::Rel(rel, a, b) => relation_holds(*rel, a, b, env),
        }
    }
}

impl fmt::Display for SymBool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymBool::Const(b) => write!(f, "{b}"),
            SymBool::Rel(rel, a, b) => write!(f, "({a} {} {b})", rel.symbol()),
        }
    }
}

/// One piece of a guest string. Strings only exist for printing, so they
/// keep their symbolic parts until rendered.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Part {
    Text(Rc<str>),
    Int(SymInt),
    Bool(SymBool),
    Ref(Addr),
    Null,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Int(SymInt),
    Bool(SymBool),
    Ref(Addr),
    Null,
    Str(Rc<[Part]>),
    Void,
}

impl Value {
    pub fn int(v: i128) -> Value {
        Value::Int(SymInt::Const(v))
    }

    pub fn bool(b: bool) -> Value {
        Value::Bool(SymBool::Const(b))
    }

    pub fn text(s: &str) -> Value {
        Value::Str(Rc::from(vec![Part::Text(Rc::from(s))]))
    }

    pub fn default_for(ty: Ty) -> Value {
        match ty {
            Ty::Int => Value::int(0),
            Ty::Bool => Value::bool(false),
            Ty::Void => Value::Void,
            Ty::Str | Ty::Ref(_) | Ty::Null => Value::Null,
        }
    }

    pub fn to_parts(&self) -> Vec<Part> {
        match self {
            Value::Int(i) => vec![Part::Int(i.clone())],
            Value::Bool(b) => vec![Part::Bool(b.clone())],
            Value::Ref(a) => vec![Part::Ref(*a)],
            Value::Null => vec![Part::Null],
            Value::Str(parts) => parts.to_vec(),
            Value::Void => vec![],
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<VarId>) {
        match self {
            Value::Int(i) => i.collect_vars(out),
            Value::Bool(b) => b.collect_vars(out),
            Value::Str(parts) => {
                for p in parts.iter() {
                    match p {
                        Part::Int(i) => i.collect_vars(out),
                        Part::Bool(b) => b.collect_vars(out),
                        _ => {}
                    }
                }
            }
            Value::Ref(_) | Value::Null | Value::Void => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Int,
    /// Booleans are 0/1 integers to the solver.
    Bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarInfo {
    pub kind: VarKind,
    pub name: Rc<str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HeapObject {
    pub addr: Addr,
    /// Static type at creation or declaration.
    pub declared: TypeId,
    /// `None` while the object is free.
    pub concrete: Option<TypeId>,
    pub fields: BTreeMap<FieldId, Value>,
}

impl HeapObject {
    pub fn is_free(&self) -> bool {
        self.concrete.is_none()
    }
}

#[derive(Debug, Clone)]
enum TrailEntry {
    Alloc(Addr),
    NewVar(VarId),
    FieldWrite {
        addr: Addr,
        field: FieldId,
        old: Option<Value>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrailMark(usize);

/// Heap with an undo trail. Addresses and variable ids are never reused
/// within a run, even after the allocation that produced them is undone.
#[derive(Debug, Clone, Default)]
pub struct Heap {
    slots: Vec<Option<HeapObject>>,
    vars: Vec<Option<VarInfo>>,
    trail: Vec<TrailEntry>,
}

impl Heap {
    pub fn new() -> Self {
        Heap::default()
    }

    pub fn alloc_concrete(&mut self, ty: TypeId, fields: BTreeMap<FieldId, Value>) -> Addr {
        self.alloc(HeapObject {
            addr: Addr(0),
            declared: ty,
            concrete: Some(ty),
            fields,
        })
    }

    /// Allocates a free object without imposing anything; see
    /// [`fresh_free_object`] for the full operation.
    pub fn alloc_free(&mut self, declared: TypeId) -> Addr {
        self.alloc(HeapObject {
            addr: Addr(0),
            declared,
            concrete: None,
            fields: BTreeMap::new(),
        })
    }

    fn alloc(&mut self, mut obj: HeapObject) -> Addr {
        let addr = Addr(self.slots.len() as u32);
        obj.addr = addr;
        self.slots.push(Some(obj));
        self.trail.push(TrailEntry::Alloc(addr));
        addr
    }

    pub fn fresh_var(&mut self, kind: VarKind, hint: &str) -> (VarId, Rc<str>) {
        let id = VarId(self.vars.len() as u32);
        let name: Rc<str> = Rc::from(format!("_{hint}{}", id.0));
        self.vars.push(Some(VarInfo {
            kind,
            name: name.clone(),
        }));
        self.trail.push(TrailEntry::NewVar(id));
        (id, name)
    }

    /// A fresh logic variable as a guest value of type `ty` (int or boolean).
    pub fn fresh_value(&mut self, ty: Ty, hint: &str) -> Value {
        match ty {
            Ty::Bool => {
                let (id, name) = self.fresh_var(VarKind::Bool, hint);
                Value::Bool(SymBool::Rel(Rel::Eq, SymInt::Var { id, name }, SymInt::Const(1)))
            }
            _ => {
                let (id, name) = self.fresh_var(VarKind::Int, hint);
                Value::Int(SymInt::Var { id, name })
            }
        }
    }

    pub fn get(&self, addr: Addr) -> &HeapObject {
        self.slots[addr.0 as usize]
            .as_ref()
            .expect("reference to a live heap slot")
    }

    pub fn try_get(&self, addr: Addr) -> Option<&HeapObject> {
        self.slots.get(addr.0 as usize).and_then(|s| s.as_ref())
    }

    pub fn var(&self, id: VarId) -> Option<&VarInfo> {
        self.vars.get(id.0 as usize).and_then(|v| v.as_ref())
    }

    pub fn objects(&self) -> impl Iterator<Item = &HeapObject> {
        self.slots.iter().flatten()
    }

    pub fn vars(&self) -> impl Iterator<Item = (VarId, &VarInfo)> {
        self.vars
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.as_ref().map(|v| (VarId(i as u32), v)))
    }

    pub fn read_field(&self, addr: Addr, field: FieldId) -> Option<&Value> {
        self.get(addr).fields.get(&field)
    }

    pub fn write_field(&mut self, addr: Addr, field: FieldId, value: Value) {
        let obj = self.slots[addr.0 as usize].as_mut().expect("live slot");
        let old = obj.fields.insert(field, value);
        self.trail.push(TrailEntry::FieldWrite { addr, field, old });
    }

    pub fn mark(&self) -> TrailMark {
        TrailMark(self.trail.len())
    }

    /// Undo every heap mutation recorded after `mark`, newest first.
    pub fn undo_to(&mut self, mark: TrailMark) {
        while self.trail.len() > mark.0 {
            match self.trail.pop().unwrap() {
                TrailEntry::Alloc(addr) => self.slots[addr.0 as usize] = None,
                TrailEntry::NewVar(id) => self.vars[id.0 as usize] = None,
                TrailEntry::FieldWrite { addr, field, old } => {
                    let obj = self.slots[addr.0 as usize].as_mut().expect("live slot");
                    match old {
                        Some(v) => obj.fields.insert(field, v),
                        None => obj.fields.remove(&field),
                    };
                }
            }
        }
    }

    /// Hash of the live contents, independent of allocation counters.
    pub fn hash_contents<H: Hasher>(&self, state: &mut H) {
        for obj in self.objects() {
            obj.hash(state);
        }
        for (id, v) in self.vars() {
            id.hash(state);
            v.hash(state);
        }
    }
}

/// Allocates a free object of static type `declared` and imposes its
/// initial applicable-type set: the instantiable members of the declared
/// type's cone. Returns `None` when that set is empty, in which case no
/// object can exist and the branch fails.
pub fn fresh_free_object(
    heap: &mut Heap,
    store: &mut ConstraintStore,
    table: &ClassTable,
    declared: TypeId,
) -> Option<Addr> {
    let allowed = table.relevant_types(declared).ok()?;
    if allowed.is_empty() {
        return None;
    }
    let addr = heap.alloc_free(declared);
    store.add(Constraint::TypeSet { obj: addr, allowed });
    Some(addr)
}

/// Reads `field` of the object at `addr`. On a free object the first read
/// creates a fresh logic variable (or, for a reference field, a fresh free
/// object) and caches it; later reads return the same value.
///
/// `None` means a nested free object could not be created.
pub fn materialize_field(
    heap: &mut Heap,
    store: &mut ConstraintStore,
    table: &ClassTable,
    addr: Addr,
    field: FieldId,
) -> Option<Value> {
    if let Some(v) = heap.read_field(addr, field) {
        return Some(v.clone());
    }
    let obj = heap.get(addr);
    if !obj.is_free() {
        // concrete objects have every field from construction
        return None;
    }
    let def = table.field(field);
    let value = match def.ty {
        Ty::Int | Ty::Bool => heap.fresh_value(def.ty, &def.name),
        Ty::Ref(t) => Value::Ref(fresh_free_object(heap, store, table, t)?),
        Ty::Str | Ty::Null | Ty::Void => Value::Null,
    };
    heap.write_field(addr, field, value.clone());
    Some(value)
}
