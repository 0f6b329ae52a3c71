//! Expansion of `a #= b` into two disjunctions of constraint conjunctions,
//! one for each outcome.
//!
//! Structural equality holds when both objects have the same concrete type
//! and every field agrees, primitive fields by value and reference fields
//! recursively. Candidate types are grouped by field layout, and each
//! group contributes one TRUE disjunct. The FALSE side is the negation
//! spelled out disjointly: either the types differ, or they agree on a
//! group and some field is the first one to differ. Disjoint alternatives
//! keep labeled solutions from being counted twice.

use std::collections::{BTreeMap, BTreeSet};

use super::machine::Machine;
use crate::classes::{FieldId, TypeId};
use crate::constraints::Constraint;
use crate::sym::{Addr, SymBool, Value};

pub(crate) type Conj = Vec<Constraint>;
pub(crate) type Dnf = Vec<Conj>;

fn truth() -> Dnf {
    vec![vec![]]
}

fn falsity() -> Dnf {
    vec![]
}

/// A single constraint, simplified when it is ground.
fn atom(c: Constraint) -> Dnf {
    match c.ground_truth() {
        Some(true) => truth(),
        Some(false) => falsity(),
        None => vec![vec![c]],
    }
}

fn and(a: &Dnf, b: &Dnf) -> Dnf {
    let mut out = Vec::new();
    for x in a {
        for y in b {
            let mut conj = x.clone();
            conj.extend(y.iter().cloned());
            out.push(conj);
        }
    }
    out
}

fn bool_atom(b: &SymBool, holds: bool) -> Dnf {
    let b = if holds { b.clone() } else { b.not() };
    match b {
        SymBool::Const(true) => truth(),
        SymBool::Const(false) => falsity(),
        rel => atom(rel.as_constraint().expect("relation")),
    }
}

struct Expander<'m, 'p> {
    m: &'m mut Machine<'p>,
    limit: usize,
    /// Pairs currently being compared further up; meeting one again means
    /// a cycle, which is treated as equal.
    active: BTreeSet<(Addr, Addr)>,
}

impl Machine<'_> {
    pub(crate) fn struct_eq_expand(&mut self, a: &Value, b: &Value) -> Result<(Dnf, Dnf), String> {
        let limit = self.opts_structeq_depth();
        let mut e = Expander {
            m: self,
            limit,
            active: BTreeSet::new(),
        };
        let pos = e.values(a, b, true, 0)?;
        let neg = e.values(a, b, false, 0)?;
        Ok((pos, neg))
    }
}

impl Expander<'_, '_> {
    /// Condition for `a #= b` to evaluate to `holds`.
    fn values(&mut self, a: &Value, b: &Value, holds: bool, depth: usize) -> Result<Dnf, String> {
        let yes = |c: bool| if c == holds { truth() } else { falsity() };
        Ok(match (a, b) {
            (Value::Null, Value::Null) => yes(true),
            (Value::Null, _) | (_, Value::Null) => yes(false),
            (Value::Ref(x), Value::Ref(y)) => self.objects(*x, *y, holds, depth)?,
            (Value::Int(x), Value::Int(y)) => {
                let c = Constraint::arith(crate::sym::Rel::Eq, x.clone(), y.clone());
                if holds {
                    atom(c)
                } else {
                    atom(c.negated(&BTreeSet::new()))
                }
            }
            (Value::Bool(x), Value::Bool(y)) => {
                // x == y  is  (x ∧ y) ∨ (¬x ∧ ¬y)
                let mut out = and(&bool_atom(x, true), &bool_atom(y, holds));
                out.extend(and(&bool_atom(x, false), &bool_atom(y, !holds)));
                out
            }
            (Value::Str(x), Value::Str(y)) => yes(x == y),
            _ => yes(false),
        })
    }

    fn objects(&mut self, a: Addr, b: Addr, holds: bool, depth: usize) -> Result<Dnf, String> {
        let yes = |c: bool| if c == holds { truth() } else { falsity() };
        if a == b {
            return Ok(yes(true));
        }
        let key = (a.min(b), a.max(b));
        if self.active.contains(&key) {
            return Ok(yes(true));
        }
        if depth >= self.limit {
            return Err(format!(
                "structural equality exceeded depth {}; branch abandoned",
                self.limit
            ));
        }
        let sa = self.m.effective_set(a);
        let sb = self.m.effective_set(b);
        let common: BTreeSet<TypeId> = sa.intersection(&sb).copied().collect();
        if common.is_empty() {
            return Ok(yes(false));
        }
        // group candidate types by layout, groups ordered by first member
        let mut groups: Vec<(Vec<FieldId>, BTreeSet<TypeId>)> = Vec::new();
        let mut by_layout: BTreeMap<Vec<FieldId>, usize> = BTreeMap::new();
        for &t in &common {
            let layout = self.m.table.all_fields(t);
            match by_layout.get(&layout) {
                Some(&i) => {
                    groups[i].1.insert(t);
                }
                None => {
                    by_layout.insert(layout.clone(), groups.len());
                    groups.push((layout, [t].into()));
                }
            }
        }
        let free_a = self.m.heap.get(a).is_free();
        let free_b = self.m.heap.get(b).is_free();
        let same_type = if free_a || free_b {
            Some(Constraint::TypeEq {
                a,
                b,
                negated: false,
            })
        } else {
            None
        };
        let multi = groups.len() > 1;

        self.active.insert(key);
        let mut out: Dnf = Vec::new();
        if !holds {
            if let Some(c) = &same_type {
                out.extend(atom(c.negated(&BTreeSet::new())));
            }
        }
        for (layout, members) in &groups {
            let mut base: Conj = Vec::new();
            base.extend(same_type.iter().cloned());
            if multi {
                for (obj, free) in [(a, free_a), (b, free_b)] {
                    if free {
                        base.push(Constraint::TypeSet {
                            obj,
                            allowed: members.clone(),
                        });
                    }
                }
            }
            let base = vec![base];
            let mut equal_so_far: Dnf = truth();
            let mut differ: Dnf = Vec::new();
            for &f in layout {
                let (Some(va), Some(vb)) = (self.field(a, f), self.field(b, f)) else {
                    self.active.remove(&key);
                    return Err("field materialization failed".into());
                };
                let eq = self.values(&va, &vb, true, depth + 1)?;
                if !holds {
                    let ne = self.values(&va, &vb, false, depth + 1)?;
                    differ.extend(and(&equal_so_far, &ne));
                }
                equal_so_far = and(&equal_so_far, &eq);
                if equal_so_far.is_empty() && holds {
                    break;
                }
            }
            let tail = if holds { equal_so_far } else { differ };
            out.extend(and(&base, &tail));
        }
        self.active.remove(&key);
        Ok(out)
    }

    fn field(&mut self, obj: Addr, f: FieldId) -> Option<Value> {
        self.m.read_field(obj, f)
    }
}
