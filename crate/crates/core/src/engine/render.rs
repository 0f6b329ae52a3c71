//! Text rendering of runtime values, symbolically or under a labeling.

use std::collections::BTreeSet;

use crate::classes::{ClassTable, TypeId};
use crate::constraints::{Assignment, ConstraintStore, SolverContext};
use crate::sym::{Addr, Heap, Part, SymBool, SymInt, Value};

pub(crate) struct View<'a> {
    pub table: &'a ClassTable,
    pub heap: &'a Heap,
    pub store: &'a ConstraintStore,
    pub ctx: &'a dyn SolverContext,
    pub assignment: Option<&'a Assignment>,
}

impl View<'_> {
    fn lookup(&self, v: crate::sym::VarId) -> Option<i128> {
        self.assignment.and_then(|a| a.ints.get(&v).copied())
    }

    pub fn int(&self, i: &SymInt) -> String {
        if self.assignment.is_some() {
            if let Ok(v) = i.eval(&|v| self.lookup(v)) {
                return v.to_string();
            }
        }
        i.to_string()
    }

    pub fn boolean(&self, b: &SymBool) -> String {
        if self.assignment.is_some() {
            if let Ok(v) = b.eval(&|v| self.lookup(v)) {
                return v.to_string();
            }
        }
        b.to_string()
    }

    pub fn type_of(&self, addr: Addr) -> BTreeSet<TypeId> {
        if let Some(t) = self.assignment.and_then(|a| a.types.get(&addr)) {
            return [*t].into();
        }
        self.store.effective_set(addr, self.ctx)
    }

    pub fn reference(&self, addr: Addr) -> String {
        let set = self.type_of(addr);
        if set.len() == 1 {
            format!("{}@{}", self.table.name(*set.first().unwrap()), addr.0)
        } else {
            format!("{}@{}", self.table.set_names(&set), addr.0)
        }
    }

    pub fn parts(&self, parts: &[Part]) -> String {
        let mut out = String::new();
        for p in parts {
            match p {
                Part::Text(t) => out.push_str(t),
                Part::Int(i) => out.push_str(&self.int(i)),
                Part::Bool(b) => out.push_str(&self.boolean(b)),
                Part::Ref(a) => out.push_str(&self.reference(*a)),
                Part::Null => out.push_str("null"),
            }
        }
        out
    }

    pub fn value(&self, v: &Value) -> String {
        match v {
            Value::Int(i) => self.int(i),
            Value::Bool(b) => self.boolean(b),
            Value::Ref(a) => self.reference(*a),
            Value::Null => "null".into(),
            Value::Str(parts) => self.parts(parts),
            Value::Void => "void".into(),
        }
    }

    /// `name=value` pairs for an assignment: objects, then variables.
    pub fn bindings(&self, a: &Assignment) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (addr, t) in &a.types {
            out.push((addr.to_string(), self.table.name(*t).to_string()));
        }
        for (v, value) in &a.ints {
            let name = self
                .heap
                .var(*v)
                .map(|info| info.name.to_string())
                .unwrap_or_else(|| format!("_{}", v.0));
            let shown = match self.heap.var(*v).map(|i| i.kind) {
                Some(crate::sym::VarKind::Bool) => (*value == 1).to_string(),
                _ => value.to_string(),
            };
            out.push((name, shown));
        }
        out
    }
}
